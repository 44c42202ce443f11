#include "csgm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "csgm/systems.hpp"

namespace csgm {

using nlohmann::json;

std::string to_string(ScoreBackend b) { return b == ScoreBackend::Nn ? "nn" : "mcs"; }

ScoreBackend backend_from_string(const std::string& s) {
  if (s == "nn") return ScoreBackend::Nn;
  if (s == "mcs") return ScoreBackend::Mcs;
  throw std::invalid_argument("unknown score backend \"" + s + "\" (expected nn or mcs)");
}

namespace {

Eigen::VectorXd get_column(const SampleSet& s, const std::string& name) {
  for (size_t i = 0; i < s.state_names.size(); ++i)
    if (s.state_names[i] == name) return s.states.col(static_cast<Eigen::Index>(i));
  for (size_t i = 0; i < s.label_names.size(); ++i)
    if (s.label_names[i] == name) return s.labels->col(static_cast<Eigen::Index>(i));
  throw std::invalid_argument("unknown column \"" + name + "\"");
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Eigen::MatrixXd GeneratedEnsemble::columns(const std::vector<std::string>& names) const {
  Eigen::MatrixXd out(samples.rows(), static_cast<Eigen::Index>(names.size()));
  for (size_t j = 0; j < names.size(); ++j)
    out.col(static_cast<Eigen::Index>(j)) = get_column(samples, names[j]);
  return out;
}

SampleSet resolve_labels(const SampleSet& data, const PipelineConfig& cfg) {
  if (data.labels) return data;
  if (cfg.dmaps_labels > 0) {
    const double eps = median_epsilon(data.states, cfg.dmaps_epsilon_factor);
    DmapEmbedding emb = dmaps(data.states, eps, cfg.dmaps_k);
    std::vector<int> sel = select_nonharmonic(emb, cfg.nonharmonic);
    if (static_cast<int>(sel.size()) < cfg.dmaps_labels)
      throw std::runtime_error("resolve_labels: only " + std::to_string(sel.size()) +
                               " non-harmonic coordinates found, need " +
                               std::to_string(cfg.dmaps_labels));
    SampleSet out = data;
    Eigen::MatrixXd lab(data.rows(), cfg.dmaps_labels);
    out.label_names.clear();
    for (int j = 0; j < cfg.dmaps_labels; ++j) {
      lab.col(j) = emb.eigenvectors.col(sel[j]);
      out.label_names.push_back("phi" + std::to_string(j + 1));
    }
    out.labels = lab;
    return out;
  }
  if (cfg.label_columns.empty())
    throw std::invalid_argument("resolve_labels: no label columns configured");
  return data.with_labels(cfg.label_columns);
}

GeneratedEnsemble run_algorithm1(const SampleSet& data, const PipelineConfig& cfg) {
  if (cfg.conditions.empty())
    throw std::invalid_argument("run_algorithm1: at least one condition value required");
  if (cfg.n_samples < 1) throw std::invalid_argument("run_algorithm1: n_samples >= 1");

  SampleSet labeled = resolve_labels(data, cfg);
  labeled.validate();
  const Eigen::Index label_dim = labeled.label_dim();
  if (label_dim == 0) throw std::invalid_argument("run_algorithm1: no labels resolved");
  for (const auto& y : cfg.conditions)
    if (y.size() != label_dim)
      throw std::invalid_argument("run_algorithm1: condition dimension mismatch");

  // Optional truncation to reduced coordinates plus a GH lift back to the
  // remaining ambient columns.
  SampleSet working = labeled;
  std::optional<GhInterpolant> lift;
  std::vector<std::string> lifted_names;
  if (cfg.reduce) {
    if (cfg.reduced_columns.empty())
      throw std::invalid_argument("run_algorithm1: reduce requested without reduced columns");
    std::vector<Eigen::Index> keep;
    std::vector<std::string> keep_names;
    for (size_t i = 0; i < labeled.state_names.size(); ++i) {
      if (contains(cfg.reduced_columns, labeled.state_names[i])) {
        keep.push_back(static_cast<Eigen::Index>(i));
        keep_names.push_back(labeled.state_names[i]);
      } else {
        lifted_names.push_back(labeled.state_names[i]);
      }
    }
    if (lifted_names.empty())
      throw std::invalid_argument("run_algorithm1: reduced columns cover the whole state");

    Eigen::MatrixXd gh_in(labeled.rows(), static_cast<Eigen::Index>(cfg.reduced_columns.size()));
    for (size_t j = 0; j < cfg.reduced_columns.size(); ++j)
      gh_in.col(static_cast<Eigen::Index>(j)) = get_column(labeled, cfg.reduced_columns[j]);
    Eigen::MatrixXd gh_targets(labeled.rows(), static_cast<Eigen::Index>(lifted_names.size()));
    for (size_t j = 0; j < lifted_names.size(); ++j)
      gh_targets.col(static_cast<Eigen::Index>(j)) = get_column(labeled, lifted_names[j]);
    lift = gh_fit(gh_in, gh_targets, median_epsilon(gh_in, cfg.gh_epsilon_factor), cfg.gh_delta);

    Eigen::MatrixXd kept(labeled.rows(), static_cast<Eigen::Index>(keep.size()));
    for (size_t j = 0; j < keep.size(); ++j) kept.col(static_cast<Eigen::Index>(j)) = labeled.states.col(keep[j]);
    working.states = kept;
    working.state_names = keep_names;
  }

  // Fit the NN backend once; it is shared across conditions.
  std::optional<ScoreNet> net;
  if (cfg.backend == ScoreBackend::Nn) {
    net = ScoreNet::make(static_cast<int>(working.dim()), static_cast<int>(label_dim), cfg.sched,
                         mix_seed(cfg.seed, 0));
    TrainConfig tc = cfg.train;
    tc.seed = mix_seed(cfg.seed, 1);
    tc.t_min = cfg.sde.t_min;
    tc.t_max = cfg.sde.t_max;
    train(*net, working, tc);
  }

  const Eigen::VectorXd label_min = labeled.labels->colwise().minCoeff();
  const Eigen::VectorXd label_max = labeled.labels->colwise().maxCoeff();

  GeneratedEnsemble ens;
  ens.backend = to_string(cfg.backend);
  ens.conditions = cfg.conditions;
  ens.lift = lift;
  ens.reduced_names = cfg.reduce ? cfg.reduced_columns : std::vector<std::string>{};

  const Eigen::Index n_cond = static_cast<Eigen::Index>(cfg.conditions.size());
  const Eigen::Index total = n_cond * cfg.n_samples;
  Eigen::MatrixXd gen(total, working.dim());
  Eigen::MatrixXd labels_out(total, label_dim);
  Eigen::MatrixXd lifted_all;
  if (cfg.reduce) {
    ens.reduced.resize(total, static_cast<Eigen::Index>(cfg.reduced_columns.size()));
    lifted_all.resize(total, static_cast<Eigen::Index>(lifted_names.size()));
  }

  for (Eigen::Index ci = 0; ci < n_cond; ++ci) {
    const Eigen::VectorXd& y = cfg.conditions[ci];
    bool outside = false;
    for (Eigen::Index j = 0; j < label_dim; ++j)
      if (y[j] < label_min[j] || y[j] > label_max[j]) outside = true;
    ens.extrapolated.push_back(outside);
    if (outside)
      std::fprintf(stderr, "warning: condition %ld lies outside the training label range\n",
                   static_cast<long>(ci));

    SdeConfig sde = cfg.sde;
    sde.seed = mix_seed(cfg.seed, 100 + static_cast<std::uint64_t>(ci));
    Eigen::MatrixXd xs;
    if (cfg.backend == ScoreBackend::Nn) {
      xs = nn_sample(*net, y, cfg.n_samples, sde, working.state_names, labeled.label_names)
               .states;
    } else {
      McsScoreModel model(working, y, cfg.mcs, cfg.sched);
      xs = reverse_sde_sample(model, cfg.n_samples, sde, cfg.sched);
    }

    const Eigen::Index row0 = ci * cfg.n_samples;
    gen.middleRows(row0, cfg.n_samples) = xs;
    labels_out.middleRows(row0, cfg.n_samples) = y.transpose().replicate(cfg.n_samples, 1);
    for (int r = 0; r < cfg.n_samples; ++r)
      ens.condition_of_row.push_back(static_cast<int>(ci));

    if (cfg.reduce) {
      Eigen::MatrixXd red(cfg.n_samples, static_cast<Eigen::Index>(cfg.reduced_columns.size()));
      for (size_t j = 0; j < cfg.reduced_columns.size(); ++j) {
        const std::string& name = cfg.reduced_columns[j];
        auto lit = std::find(labeled.label_names.begin(), labeled.label_names.end(), name);
        if (lit != labeled.label_names.end()) {
          red.col(static_cast<Eigen::Index>(j)).setConstant(
              y[lit - labeled.label_names.begin()]);
        } else {
          auto sit = std::find(working.state_names.begin(), working.state_names.end(), name);
          red.col(static_cast<Eigen::Index>(j)) = xs.col(sit - working.state_names.begin());
        }
      }
      ens.reduced.middleRows(row0, cfg.n_samples) = red;
      lifted_all.middleRows(row0, cfg.n_samples) = gh_extend(*lift, red);
    }
  }

  ens.samples.state_names = working.state_names;
  if (cfg.reduce) {
    ens.samples.states.resize(total, gen.cols() + lifted_all.cols());
    ens.samples.states << gen, lifted_all;
    ens.samples.state_names.insert(ens.samples.state_names.end(), lifted_names.begin(),
                                   lifted_names.end());
  } else {
    ens.samples.states = gen;
  }
  ens.samples.labels = labels_out;
  ens.samples.label_names = labeled.label_names;
  return ens;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

ResidualStats residual_stats(Eigen::VectorXd r) {
  if (r.size() == 0) throw std::invalid_argument("residual_stats: empty input");
  std::sort(r.data(), r.data() + r.size());
  auto at = [&](double q) {
    const Eigen::Index i = std::min<Eigen::Index>(
        r.size() - 1, static_cast<Eigen::Index>(std::ceil(q * r.size())) - 1);
    return r[std::max<Eigen::Index>(i, 0)];
  };
  return {at(0.5), at(0.95)};
}

Eigen::VectorXd cusp_residuals(const Eigen::MatrixXd& xlm) {
  if (xlm.cols() != 3) throw std::invalid_argument("cusp_residuals: expected (x, lambda, mu)");
  const auto x = xlm.col(0).array();
  return (x.cube() - xlm.col(1).array() * x - xlm.col(2).array()).abs();
}

Eigen::VectorXd lift_residuals(const Eigen::MatrixXd& modes, const GhInterpolant& lift,
                               int in_dim) {
  Eigen::MatrixXd pred = gh_extend(lift, Eigen::MatrixXd(modes.leftCols(in_dim)));
  return (modes.rightCols(modes.cols() - in_dim) - pred).rowwise().norm();
}

namespace {

struct Kmeans1d {
  Eigen::VectorXd centers;
  std::vector<Eigen::Index> bounds;  // k+1 segment boundaries into the sorted values
};

Kmeans1d kmeans_1d(const std::vector<double>& v, int k) {
  const Eigen::Index n = static_cast<Eigen::Index>(v.size());
  Kmeans1d km;
  km.centers.resize(k);
  for (int j = 0; j < k; ++j)
    km.centers[j] = v[std::min<Eigen::Index>(n - 1, ((2 * j + 1) * n) / (2 * k))];
  km.bounds.assign(k + 1, 0);
  for (int it = 0; it < 200; ++it) {
    std::sort(km.centers.data(), km.centers.data() + k);
    km.bounds[0] = 0;
    km.bounds[k] = n;
    for (int j = 1; j < k; ++j) {
      const double cut = 0.5 * (km.centers[j - 1] + km.centers[j]);
      km.bounds[j] = std::lower_bound(v.begin(), v.end(), cut) - v.begin();
      km.bounds[j] = std::max(km.bounds[j], km.bounds[j - 1]);
    }
    Eigen::VectorXd next = km.centers;
    for (int j = 0; j < k; ++j) {
      const Eigen::Index s = km.bounds[j], e = km.bounds[j + 1];
      if (e > s) next[j] = std::accumulate(v.begin() + s, v.begin() + e, 0.0) / (e - s);
    }
    // Reseed an empty cluster at the value farthest from every center.
    for (int j = 0; j < k; ++j) {
      if (km.bounds[j + 1] > km.bounds[j]) continue;
      double best_d = -1, best_v = next[j];
      for (double x : v) {
        double d = 1e300;
        for (int jj = 0; jj < k; ++jj) d = std::min(d, std::abs(x - next[jj]));
        if (d > best_d) {
          best_d = d;
          best_v = x;
        }
      }
      next[j] = best_v;
    }
    if ((next - km.centers).lpNorm<Eigen::Infinity>() < 1e-12) break;
    km.centers = next;
  }
  return km;
}

double mean_silhouette(const std::vector<double>& v, const Kmeans1d& km) {
  const Eigen::Index n = static_cast<Eigen::Index>(v.size());
  const int k = static_cast<int>(km.centers.size());
  std::vector<double> pre(n + 1, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) pre[i + 1] = pre[i] + v[i];
  // Sum of |x - v_i| over the sorted segment [s, e).
  auto seg_abs_sum = [&](Eigen::Index s, Eigen::Index e, double x) {
    const Eigen::Index p = std::lower_bound(v.begin() + s, v.begin() + e, x) - v.begin();
    const double left = x * (p - s) - (pre[p] - pre[s]);
    const double right = (pre[e] - pre[p]) - x * (e - p);
    return left + right;
  };
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    const Eigen::Index s = km.bounds[j], e = km.bounds[j + 1];
    const Eigen::Index m = e - s;
    for (Eigen::Index i = s; i < e; ++i) {
      const double x = v[i];
      const double a = (m > 1) ? seg_abs_sum(s, e, x) / (m - 1) : 0.0;
      double b = 1e300;
      for (int jj = 0; jj < k; ++jj) {
        if (jj == j || km.bounds[jj + 1] == km.bounds[jj]) continue;
        b = std::min(b, seg_abs_sum(km.bounds[jj], km.bounds[jj + 1], x) /
                            (km.bounds[jj + 1] - km.bounds[jj]));
      }
      if (m > 1 && b < 1e300) total += (b - a) / std::max(a, b);
    }
  }
  return total / n;
}

}  // namespace

ClusterResult cluster_modes(const Eigen::VectorXd& values, int k_max) {
  if (values.size() == 0) throw std::invalid_argument("cluster_modes: empty input");
  std::vector<double> v(values.data(), values.data() + values.size());
  std::sort(v.begin(), v.end());

  ClusterResult best;
  best.k = 1;
  best.centers = Eigen::VectorXd::Constant(1, values.mean());
  best.counts = {static_cast<int>(values.size())};
  best.silhouette = 0.0;

  double best_sil = -1.0;
  Kmeans1d best_km;
  int best_k = 0;
  for (int k = 2; k <= std::min<int>(k_max, static_cast<int>(v.size())); ++k) {
    Kmeans1d km = kmeans_1d(v, k);
    const double sil = mean_silhouette(v, km);
    if (sil > best_sil) {
      best_sil = sil;
      best_km = km;
      best_k = k;
    }
  }
  // A poor best split means the data is effectively unimodal; a single 1-D
  // Gaussian already reaches a silhouette of about 0.55 at k = 2.
  if (best_k == 0 || best_sil < 0.6) return best;

  best.k = best_k;
  best.silhouette = best_sil;
  best.centers = best_km.centers;
  best.counts.clear();
  for (int j = 0; j < best_k; ++j)
    best.counts.push_back(static_cast<int>(best_km.bounds[j + 1] - best_km.bounds[j]));
  return best;
}

std::vector<double> histogram_modes(const Eigen::VectorXd& v, double bin_width, double lo,
                                    double hi) {
  if (bin_width <= 0) throw std::invalid_argument("histogram_modes: bin width > 0 required");
  const long i0 = static_cast<long>(std::floor(lo / bin_width));
  const long i1 = static_cast<long>(std::floor(hi / bin_width)) + 1;
  const long nb = std::max(1L, i1 - i0);
  std::vector<long> counts(nb, 0);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    long b = static_cast<long>(std::floor(v[i] / bin_width)) - i0;
    counts[std::clamp(b, 0L, nb - 1)]++;
  }
  const long peak = *std::max_element(counts.begin(), counts.end());
  std::vector<double> modes;
  for (long b = 0; b < nb; ++b) {
    const long left = (b > 0) ? counts[b - 1] : 0;
    const long right = (b + 1 < nb) ? counts[b + 1] : 0;
    if (counts[b] > left && counts[b] > right && 10 * counts[b] >= peak)
      modes.push_back((i0 + b + 0.5) * bin_width);
  }
  return modes;
}

double ks_distance(Eigen::VectorXd a, Eigen::VectorXd b) {
  if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("ks_distance: empty sample");
  std::sort(a.data(), a.data() + a.size());
  std::sort(b.data(), b.data() + b.size());
  double d = 0.0;
  Eigen::Index i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    // Step both CDFs past the smaller value (and past ties on both sides)
    // before comparing, so tied values contribute no spurious gap.
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() -
                             static_cast<double>(j) / b.size()));
  }
  return d;
}

HistogramSummary histogram_compare(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                   double bin_width) {
  const double lo = std::min(a.minCoeff(), b.minCoeff());
  const double hi = std::max(a.maxCoeff(), b.maxCoeff());
  HistogramSummary out;
  out.ks = ks_distance(a, b);
  out.modes_a = histogram_modes(a, bin_width, lo, hi);
  out.modes_b = histogram_modes(b, bin_width, lo, hi);
  return out;
}

Eigen::VectorXd smoothness_metric(const Eigen::MatrixXd& profiles, int first_high_mode) {
  if (first_high_mode < 1 || first_high_mode > profiles.cols())
    throw std::invalid_argument("smoothness_metric: first_high_mode out of range");
  Eigen::VectorXd total = profiles.array().square().rowwise().sum();
  Eigen::VectorXd high =
      profiles.rightCols(profiles.cols() - (first_high_mode - 1)).array().square().rowwise().sum();
  Eigen::VectorXd out(profiles.rows());
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out[i] = (total[i] > 0) ? high[i] / total[i] : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Experiment registry
// ---------------------------------------------------------------------------

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file_hash: cannot open " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

json config_json(const PipelineConfig& c) {
  json j;
  j["backend"] = to_string(c.backend);
  j["label_columns"] = c.label_columns;
  j["dmaps_labels"] = c.dmaps_labels;
  j["reduce"] = c.reduce;
  j["reduced_columns"] = c.reduced_columns;
  j["n_samples"] = c.n_samples;
  j["seed"] = c.seed;
  j["schedule"] = c.sched.kind == ScheduleKind::Linear ? "linear" : "vp";
  j["sde"] = {{"num_steps", c.sde.num_steps}, {"t_min", c.sde.t_min}, {"t_max", c.sde.t_max}};
  if (c.backend == ScoreBackend::Nn)
    j["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"learning_rate", c.train.learning_rate}};
  else
    j["mcs"] = {{"minibatch_size", c.mcs.minibatch_size},
                {"bandwidth", std::vector<double>(c.mcs.bandwidth.data(),
                                                  c.mcs.bandwidth.data() + c.mcs.bandwidth.size())}};
  std::vector<std::vector<double>> conds;
  for (const auto& y : c.conditions)
    conds.emplace_back(y.data(), y.data() + y.size());
  j["conditions"] = conds;
  return j;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

struct ExperimentResult {
  json metrics;
  json configs;  // per-run config echoes
  SampleSet primary;
  std::vector<std::pair<std::string, SampleSet>> extra_csvs;
  std::vector<std::string> summary;
  std::vector<std::string> failures;  // metric thresholds that did not hold

  void require(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

PipelineConfig base_config(ScoreBackend b, std::uint64_t seed, int label_dim) {
  PipelineConfig c;
  c.backend = b;
  c.seed = seed;
  c.n_samples = 1000;
  if (b == ScoreBackend::Nn) {
    c.sched = NoiseSchedule::variance_preserving();
    c.train.epochs = 60;
  } else {
    c.sched = NoiseSchedule::linear();
    c.mcs.bandwidth = Eigen::VectorXd::Constant(label_dim, 0.1);
  }
  return c;
}

ExperimentResult exp_cusp_case1(std::uint64_t seed) {
  CuspSpec spec;
  SampleSet data = cusp_sample(spec, seed);
  ExperimentResult res;
  for (ScoreBackend b : {ScoreBackend::Mcs, ScoreBackend::Nn}) {
    PipelineConfig cfg = base_config(b, seed, 1);
    cfg.label_columns = {"mu"};
    cfg.conditions = {Eigen::VectorXd::Zero(1)};
    GeneratedEnsemble ens = run_algorithm1(data, cfg);
    Eigen::VectorXd r = cusp_residuals(ens.columns({"x", "lambda", "mu"}));
    Eigen::VectorXd lam = ens.columns({"lambda"});
    ResidualStats rs = residual_stats(r);
    json m;
    m["residual_median"] = rs.median;
    m["residual_p95"] = rs.p95;
    m["residual_frac_below_0.25"] =
        static_cast<double>((r.array() < 0.25).count()) / r.size();
    m["lambda_span"] = lam.maxCoeff() - lam.minCoeff();
    m["lambda_span_coverage"] = (lam.maxCoeff() - lam.minCoeff()) / 5.0;
    res.metrics[to_string(b)] = m;
    res.configs[to_string(b)] = config_json(cfg);
    res.summary.push_back(to_string(b) + ": " +
                          std::to_string(100.0 * m["residual_frac_below_0.25"].get<double>()) +
                          "% of samples within 0.25 of the mu=0 slice, lambda span " +
                          std::to_string(m["lambda_span"].get<double>()));
    if (b == ScoreBackend::Mcs) {
      res.require(m["residual_frac_below_0.25"].get<double>() >= 0.9,
                  "mcs residual fraction below 0.25 under 90%");
      res.require(m["lambda_span"].get<double>() >= 4.0, "mcs lambda span under 80% of [-2.5, 2.5]");
    }
    if (b == ScoreBackend::Mcs)
      res.primary = ens.samples;
    else
      res.extra_csvs.emplace_back("samples_nn.csv", ens.samples);
  }
  return res;
}

ExperimentResult exp_cusp_case2(std::uint64_t seed) {
  CuspSpec spec;
  SampleSet data = cusp_sample(spec, seed);
  std::vector<double> roots = cusp_roots(2.0, 0.0);
  ExperimentResult res;
  res.metrics["roots"] = roots;
  for (ScoreBackend b : {ScoreBackend::Mcs, ScoreBackend::Nn}) {
    PipelineConfig cfg = base_config(b, seed, 2);
    cfg.label_columns = {"mu", "lambda"};
    cfg.conditions = {Eigen::Vector2d(0.0, 2.0)};
    GeneratedEnsemble ens = run_algorithm1(data, cfg);
    ClusterResult cl = cluster_modes(ens.columns({"x"}), 5);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < cl.centers.size(); ++j) {
      double d = 1e300;
      for (double rt : roots) d = std::min(d, std::abs(cl.centers[j] - rt));
      worst = std::max(worst, d);
    }
    json m;
    m["n_clusters"] = cl.k;
    m["centers"] = to_vec(cl.centers);
    m["counts"] = cl.counts;
    m["silhouette"] = cl.silhouette;
    m["max_center_error"] = worst;
    res.metrics[to_string(b)] = m;
    res.configs[to_string(b)] = config_json(cfg);
    res.summary.push_back(to_string(b) + ": " + std::to_string(cl.k) +
                          " clusters, max center error " + std::to_string(worst));
    res.require(cl.k == 3, to_string(b) + " cluster count != 3");
    res.require(worst <= 0.15, to_string(b) + " cluster center error above 0.15");
    for (int c : cl.counts)
      res.require(10 * c >= static_cast<int>(ens.samples.rows()),
                  to_string(b) + " cluster holds under 10% of samples");
    if (b == ScoreBackend::Mcs)
      res.primary = ens.samples;
    else
      res.extra_csvs.emplace_back("samples_nn.csv", ens.samples);
  }
  return res;
}

ExperimentResult exp_cusp_bimodal(std::uint64_t seed) {
  CuspSpec spec;
  spec.lambda_dist = LambdaDistribution::GaussianMixture;
  SampleSet data = cusp_sample(spec, seed);

  // Empirical conditional reference: lambda over the thin mu ~ 0 slice.
  std::vector<double> ref_v;
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    if (std::abs(data.states(i, 2)) <= 0.1) ref_v.push_back(data.states(i, 1));
  Eigen::VectorXd ref = Eigen::Map<Eigen::VectorXd>(ref_v.data(), ref_v.size());

  ExperimentResult res;
  res.metrics["reference_rows"] = static_cast<int>(ref.size());
  for (ScoreBackend b : {ScoreBackend::Mcs, ScoreBackend::Nn}) {
    PipelineConfig cfg = base_config(b, seed, 1);
    cfg.label_columns = {"mu"};
    cfg.conditions = {Eigen::VectorXd::Zero(1)};
    cfg.n_samples = 4000;  // stabilizes the 0.25-wide histogram bins
    GeneratedEnsemble ens = run_algorithm1(data, cfg);
    Eigen::VectorXd lam = ens.columns({"lambda"});
    HistogramSummary hc = histogram_compare(lam, ref);
    json m;
    m["ks_to_reference"] = hc.ks;
    m["modes"] = hc.modes_a;
    m["reference_modes"] = hc.modes_b;
    res.metrics[to_string(b)] = m;
    res.configs[to_string(b)] = config_json(cfg);
    res.summary.push_back(to_string(b) + ": " + std::to_string(hc.modes_a.size()) +
                          " lambda modes, KS to conditional reference " + std::to_string(hc.ks));
    res.require(hc.modes_a.size() == 2, to_string(b) + " lambda histogram mode count != 2");
    for (double mode : hc.modes_a)
      res.require(std::min(std::abs(mode - 1.0), std::abs(mode + 1.0)) <= 0.25,
                  to_string(b) + " lambda mode further than 0.25 from +-1");
    if (b == ScoreBackend::Mcs)
      res.primary = ens.samples;
    else
      res.extra_csvs.emplace_back("samples_nn.csv", ens.samples);
  }
  const bool noninferior = res.metrics["mcs"]["ks_to_reference"].get<double>() <=
                           res.metrics["nn"]["ks_to_reference"].get<double>() + 0.05;
  res.metrics["mcs_noninferior"] = noninferior;
  res.require(noninferior, "mcs KS distance exceeds nn KS distance + 0.05");
  return res;
}

std::vector<std::string> mode_names(int n) {
  std::vector<std::string> v;
  for (int k = 1; k <= n; ++k) v.push_back("a" + std::to_string(k));
  return v;
}

ExperimentResult exp_ci_10d(std::uint64_t seed) {
  SampleSet data = ci_dataset(500, seed);
  PipelineConfig cfg = base_config(ScoreBackend::Nn, seed, 1);
  cfg.label_columns = {"a1"};
  cfg.conditions = {Eigen::VectorXd::Zero(1)};
  cfg.train.epochs = 80;
  GeneratedEnsemble ens = run_algorithm1(data, cfg);
  Eigen::VectorXd sm = smoothness_metric(ens.columns(mode_names(10)));
  ExperimentResult res;
  res.metrics["snapshots"] = static_cast<int>(data.rows());
  res.metrics["nn"]["smoothness_mean"] = sm.mean();
  res.configs["nn"] = config_json(cfg);
  res.primary = ens.samples;
  res.summary.push_back("nn 10-d: mean high-mode energy fraction " + std::to_string(sm.mean()));
  return res;
}

ExperimentResult exp_ci_2d_gh(std::uint64_t seed) {
  SampleSet data = ci_dataset(500, seed);
  PipelineConfig cfg = base_config(ScoreBackend::Nn, seed, 1);
  cfg.label_columns = {"a1"};
  cfg.conditions = {Eigen::VectorXd::Zero(1)};
  cfg.train.epochs = 80;
  cfg.reduce = true;
  cfg.reduced_columns = {"a1", "a2"};
  GeneratedEnsemble ens = run_algorithm1(data, cfg);
  Eigen::VectorXd sm = smoothness_metric(ens.columns(mode_names(10)));
  ExperimentResult res;
  res.metrics["snapshots"] = static_cast<int>(data.rows());
  res.metrics["nn"]["smoothness_mean"] = sm.mean();
  res.metrics["nn"]["gh_eigenvalues_kept"] = static_cast<int>(ens.lift->sigma.size());
  res.configs["nn"] = config_json(cfg);
  res.primary = ens.samples;
  res.summary.push_back("nn 2-d + GH lift: mean high-mode energy fraction " +
                        std::to_string(sm.mean()));
  return res;
}

ExperimentResult exp_ci_dmaps_label(std::uint64_t seed) {
  SampleSet data = ci_dataset(500, seed);
  const double eps = median_epsilon(data.states);
  DmapEmbedding emb = dmaps(data.states, eps, 8);
  NonharmonicConfig nh;
  std::vector<double> residuals;
  std::vector<int> sel = select_nonharmonic(emb, nh, &residuals);

  SampleSet labeled = data;
  Eigen::MatrixXd lab = emb.eigenvectors.col(sel[0]);
  labeled.labels = lab;
  labeled.label_names = {"phi1"};

  std::vector<double> phi_sorted(lab.data(), lab.data() + lab.rows());
  std::sort(phi_sorted.begin(), phi_sorted.end());
  const double cond = phi_sorted[phi_sorted.size() / 2];

  PipelineConfig cfg = base_config(ScoreBackend::Mcs, seed, 1);
  cfg.mcs.bandwidth.resize(0);  // default: 2% of the phi1 range
  cfg.conditions = {Eigen::VectorXd::Constant(1, cond)};
  GeneratedEnsemble ens = run_algorithm1(labeled, cfg);

  Eigen::MatrixXd phi(data.rows(), static_cast<Eigen::Index>(sel.size()));
  for (size_t j = 0; j < sel.size(); ++j) phi.col(static_cast<Eigen::Index>(j)) = emb.eigenvectors.col(sel[j]);
  ExperimentResult res;
  res.metrics["snapshots"] = static_cast<int>(data.rows());
  res.metrics["nonharmonic_selected"] = sel;
  res.metrics["nonharmonic_residuals"] = residuals;
  if (sel.size() == 2) {
    JacobianCheck jc = local_jacobian_check(phi, data.states.leftCols(2));
    res.metrics["jacobian_fraction_nonzero"] = jc.fraction_nonzero;
  }
  res.metrics["condition_phi1"] = cond;
  Eigen::VectorXd sm = smoothness_metric(ens.columns(mode_names(10)));
  res.metrics["mcs"]["smoothness_mean"] = sm.mean();
  res.configs["mcs"] = config_json(cfg);
  res.primary = ens.samples;
  res.summary.push_back("diffusion maps selected " + std::to_string(sel.size()) +
                        " non-harmonic coordinates; conditioned on phi1 = " +
                        std::to_string(cond));
  res.require(sel.size() == 2, "non-harmonic coordinate count != 2");
  return res;
}

ExperimentResult exp_pfr_da(std::uint64_t seed) {
  PfrSpec spec;
  std::vector<double> grid;
  for (double da = 0.02; da <= 0.075 + 1e-9; da += 0.0025) grid.push_back(da);
  PfrDataset ds = pfr_dataset(grid, spec);

  PipelineConfig cfg = base_config(ScoreBackend::Mcs, seed, 1);
  cfg.mcs.bandwidth.resize(0);  // default: 2% of the Da range
  cfg.conditions = {Eigen::VectorXd::Constant(1, 0.06)};
  GeneratedEnsemble ens = run_algorithm1(ds.set, cfg);

  std::vector<double> branch_vals;
  for (Eigen::Index i = 0; i < ds.set.rows(); ++i)
    if (std::abs((*ds.set.labels)(i, 0) - 0.06) < 1e-9)
      branch_vals.push_back(ds.set.states(i, 0));
  std::sort(branch_vals.begin(), branch_vals.end());

  ClusterResult cl = cluster_modes(ens.columns({"x1_0"}), 4);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < cl.centers.size(); ++j) {
    double d = 1e300;
    for (double bv : branch_vals) d = std::min(d, std::abs(cl.centers[j] - bv));
    worst = std::max(worst, d);
  }
  const double fold = pfr_fold_location(spec);

  ExperimentResult res;
  res.metrics["dataset_rows"] = static_cast<int>(ds.set.rows());
  res.metrics["branches_at_0.06"] = branch_vals;
  res.metrics["fold_da"] = fold;
  json m;
  m["n_clusters"] = cl.k;
  m["centers"] = to_vec(cl.centers);
  m["counts"] = cl.counts;
  m["max_center_error"] = worst;
  res.metrics["mcs"] = m;
  res.configs["mcs"] = config_json(cfg);
  res.primary = ens.samples;
  res.summary.push_back(std::to_string(branch_vals.size()) +
                        " steady branches at Da = 0.06; extinction fold near Da = " +
                        std::to_string(fold) + "; sample cluster center error " +
                        std::to_string(worst));
  res.require(branch_vals.size() == 3, "steady-branch count at Da = 0.06 != 3");
  res.require(std::abs(fold - 0.045) <= 0.005, "extinction fold outside 0.045 +- 0.005");
  res.require(worst <= 0.05, "cluster center further than 0.05 from a branch value");
  return res;
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"cusp-case1",     "cusp-case2", "cusp-bimodal",
                                                 "ci-10d",         "ci-2d-gh",   "ci-dmaps-label",
                                                 "pfr-da"};
  return names;
}

json run_experiment(const std::string& name, const std::string& out_dir, std::uint64_t seed) {
  ExperimentResult res;
  if (name == "cusp-case1")
    res = exp_cusp_case1(seed);
  else if (name == "cusp-case2")
    res = exp_cusp_case2(seed);
  else if (name == "cusp-bimodal")
    res = exp_cusp_bimodal(seed);
  else if (name == "ci-10d")
    res = exp_ci_10d(seed);
  else if (name == "ci-2d-gh")
    res = exp_ci_2d_gh(seed);
  else if (name == "ci-dmaps-label")
    res = exp_ci_dmaps_label(seed);
  else if (name == "pfr-da")
    res = exp_pfr_da(seed);
  else {
    std::string known;
    for (const auto& n : experiment_names()) known += " " + n;
    throw std::invalid_argument("unknown experiment \"" + name + "\"; known:" + known);
  }

  namespace fs = std::filesystem;
  const fs::path dir = fs::path(out_dir) / name;
  fs::create_directories(dir);

  write_sample_csv(res.primary, (dir / "samples.csv").string());
  json outputs;
  outputs["samples.csv"] = {{"rows", static_cast<int>(res.primary.rows())},
                            {"hash", file_hash((dir / "samples.csv").string())}};
  for (const auto& [fname, set] : res.extra_csvs) {
    write_sample_csv(set, (dir / fname).string());
    outputs[fname] = {{"rows", static_cast<int>(set.rows())},
                      {"hash", file_hash((dir / fname).string())}};
  }

  json metrics = res.metrics;
  metrics["schema"] = "csgm-metrics v1";
  metrics["experiment"] = name;
  metrics["seed"] = seed;
  metrics["summary"] = res.summary;
  metrics["failures"] = res.failures;
  std::ofstream(dir / "metrics.json") << metrics.dump(2) << "\n";

  json prov;
  prov["schema"] = "csgm-provenance v1";
  prov["experiment"] = name;
  prov["seed"] = seed;
  prov["config"] = res.configs;
  prov["outputs"] = outputs;
  std::ofstream(dir / "provenance.json") << prov.dump(2) << "\n";

  std::ofstream summary(dir / "summary.txt");
  summary << name << " (seed " << seed << ")\n";
  for (const auto& line : res.summary) summary << "  " << line << "\n";
  return metrics;
}

}  // namespace csgm
