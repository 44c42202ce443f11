#include "csgm/score_mcs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace csgm {

Eigen::VectorXd mcs_score(const Eigen::VectorXd& x_t, double t, const Eigen::MatrixXd& batch,
                          const NoiseSchedule& sched) {
  const Eigen::Index nb = batch.rows();
  if (nb < 1) throw std::invalid_argument("mcs_score: empty batch");
  if (batch.cols() != x_t.size()) throw std::invalid_argument("mcs_score: dimension mismatch");
  const double a = sched.alpha(t);
  const double b2 = sched.beta2(t);

  // diff_n = x_t - alpha_t x_n; log weight -||diff||^2 / (2 beta^2).
  Eigen::MatrixXd diff = (-a * batch).rowwise() + x_t.transpose();
  Eigen::VectorXd logw = -diff.rowwise().squaredNorm() / (2.0 * b2);
  const double m = logw.maxCoeff();
  Eigen::VectorXd w = (logw.array() - m).exp();
  w /= w.sum();
  return -(diff.transpose() * w) / b2;
}

Eigen::VectorXd default_bandwidth(const Eigen::MatrixXd& labels) {
  Eigen::VectorXd h(labels.cols());
  for (Eigen::Index c = 0; c < labels.cols(); ++c) {
    const double range = labels.col(c).maxCoeff() - labels.col(c).minCoeff();
    h[c] = 0.02 * range;
    if (h[c] <= 0) h[c] = 1.0;  // constant label column
  }
  return h;
}

std::vector<int> conditional_eligible(const Eigen::MatrixXd& labels, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& h) {
  if (labels.cols() != y.size() || h.size() != y.size())
    throw std::invalid_argument("conditional_eligible: label dimension mismatch");
  if ((h.array() <= 0).any())
    throw std::invalid_argument("conditional_eligible: bandwidth must be positive");
  std::vector<int> eligible;
  double best_d2 = std::numeric_limits<double>::infinity();
  Eigen::Index best_row = 0;
  for (Eigen::Index r = 0; r < labels.rows(); ++r) {
    const double d2 =
        ((labels.row(r).transpose() - y).cwiseQuotient(h)).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best_row = r;
    }
    if (d2 <= 36.0) eligible.push_back(static_cast<int>(r));
  }
  if (eligible.empty()) {
    std::string nearest = "(";
    for (Eigen::Index c = 0; c < labels.cols(); ++c)
      nearest += (c ? ", " : "") + format_double(labels(best_row, c));
    nearest += ")";
    throw std::runtime_error("label out of sampled range; nearest label is " + nearest);
  }
  return eligible;
}

// Vose alias table for O(1) weighted draws.
static void build_alias(const Eigen::VectorXd& prob, std::vector<double>& alias_prob,
                        std::vector<int>& alias_idx) {
  const int n = static_cast<int>(prob.size());
  alias_prob.assign(n, 0.0);
  alias_idx.assign(n, 0);
  std::vector<double> scaled(n);
  std::vector<int> small, large;
  for (int i = 0; i < n; ++i) {
    scaled[i] = prob[i] * n;
    (scaled[i] < 1.0 ? small : large).push_back(i);
  }
  while (!small.empty() && !large.empty()) {
    int s = small.back(), l = large.back();
    small.pop_back();
    large.pop_back();
    alias_prob[s] = scaled[s];
    alias_idx[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    (scaled[l] < 1.0 ? small : large).push_back(l);
  }
  for (int i : small) alias_prob[i] = 1.0;
  for (int i : large) alias_prob[i] = 1.0;
}

static Eigen::VectorXd conditional_weights(const Eigen::MatrixXd& labels,
                                           const std::vector<int>& eligible,
                                           const Eigen::VectorXd& y, const Eigen::VectorXd& h) {
  Eigen::VectorXd logw(eligible.size());
  for (size_t i = 0; i < eligible.size(); ++i)
    logw[i] = -0.5 * ((labels.row(eligible[i]).transpose() - y).cwiseQuotient(h)).squaredNorm();
  Eigen::VectorXd w = (logw.array() - logw.maxCoeff()).exp();
  return w / w.sum();
}

std::vector<int> conditional_batch(const SampleSet& data, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& h, int n_m, std::mt19937_64& rng) {
  if (!data.labels) throw std::invalid_argument("conditional_batch: data has no labels");
  if (n_m < 1) throw std::invalid_argument("conditional_batch: need N_m >= 1");
  n_m = std::min<int>(n_m, static_cast<int>(data.rows()));
  auto eligible = conditional_eligible(*data.labels, y, h);
  if (static_cast<int>(eligible.size()) <= n_m) return eligible;
  Eigen::VectorXd p = conditional_weights(*data.labels, eligible, y, h);
  std::vector<double> ap;
  std::vector<int> ai;
  build_alias(p, ap, ai);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> batch(n_m);
  for (int i = 0; i < n_m; ++i) {
    const int k = std::min<int>(static_cast<int>(unif(rng) * ap.size()),
                                static_cast<int>(ap.size()) - 1);
    batch[i] = eligible[unif(rng) < ap[k] ? k : ai[k]];
  }
  return batch;
}

McsScoreModel::McsScoreModel(const SampleSet& data, std::optional<Eigen::VectorXd> y,
                             const McsConfig& cfg, const NoiseSchedule& sched)
    : data_(data), cfg_(cfg), sched_(sched) {
  data_.validate();
  if (cfg_.minibatch_size < 1)
    throw std::invalid_argument("McsScoreModel: need N_m >= 1");
  cfg_.minibatch_size =
      std::min<int>(cfg_.minibatch_size, static_cast<int>(data_.rows()));
  if (y) {
    if (!data_.labels) throw std::invalid_argument("McsScoreModel: conditioning needs labels");
    if (cfg_.bandwidth.size() == 0) cfg_.bandwidth = default_bandwidth(*data_.labels);
    eligible_ = conditional_eligible(*data_.labels, *y, cfg_.bandwidth);
    Eigen::VectorXd p = conditional_weights(*data_.labels, eligible_, *y, cfg_.bandwidth);
    build_alias(p, alias_prob_, alias_idx_);
  } else {
    eligible_.resize(data_.rows());
    std::iota(eligible_.begin(), eligible_.end(), 0);
    Eigen::VectorXd p = Eigen::VectorXd::Constant(data_.rows(), 1.0 / data_.rows());
    build_alias(p, alias_prob_, alias_idx_);
  }
}

int McsScoreModel::draw_row(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int k = std::min<int>(static_cast<int>(unif(rng) * alias_prob_.size()),
                              static_cast<int>(alias_prob_.size()) - 1);
  return eligible_[unif(rng) < alias_prob_[k] ? k : alias_idx_[k]];
}

Eigen::MatrixXd McsScoreModel::score(const Eigen::MatrixXd& states, double t,
                                     std::span<std::mt19937_64> rngs) const {
  const int n = static_cast<int>(states.rows());
  if (static_cast<int>(rngs.size()) < n)
    throw std::invalid_argument("McsScoreModel: need one rng per chain");
  const int nm = std::min<int>(cfg_.minibatch_size, static_cast<int>(eligible_.size()));
  const bool per_chain = cfg_.resample == BatchResample::PerChain;
  if (per_chain && per_chain_batch_.size() != static_cast<size_t>(n)) per_chain_batch_.clear();

  Eigen::MatrixXd out(n, data_.dim());
  Eigen::MatrixXd batch(nm, data_.dim());

  // The whole eligible set fits in one mini-batch: use it verbatim, no
  // resampling noise.
  if (nm == static_cast<int>(eligible_.size())) {
    for (int i = 0; i < nm; ++i) batch.row(i) = data_.states.row(eligible_[i]);
    for (int c = 0; c < n; ++c)
      out.row(c) = mcs_score(states.row(c).transpose(), t, batch, sched_).transpose();
    return out;
  }

  for (int c = 0; c < n; ++c) {
    if (per_chain) {
      if (per_chain_batch_.size() <= static_cast<size_t>(c)) {
        std::vector<int> rows(nm);
        for (int i = 0; i < nm; ++i) rows[i] = draw_row(rngs[c]);
        per_chain_batch_.push_back(std::move(rows));
      }
      for (int i = 0; i < nm; ++i) batch.row(i) = data_.states.row(per_chain_batch_[c][i]);
    } else {
      for (int i = 0; i < nm; ++i) batch.row(i) = data_.states.row(draw_row(rngs[c]));
    }
    out.row(c) = mcs_score(states.row(c).transpose(), t, batch, sched_).transpose();
  }
  return out;
}

Eigen::MatrixXd SurrogateMap::map(const Eigen::MatrixXd& z) const {
  return out_scaler.invert(net.forward(z));
}

void SurrogateMap::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("SurrogateMap: cannot write " + path);
  out << "csgm-surrogate v1\n";
  out << dim << ' ' << pairs_used << ' ' << pairs_discarded << ' '
      << format_double(holdout_rmse) << '\n';
  out << out_scaler.mean.size() << '\n';
  for (Eigen::Index i = 0; i < out_scaler.mean.size(); ++i)
    out << format_double(out_scaler.mean[i]) << ' ' << format_double(out_scaler.std[i]) << '\n';
  net.save(out);
}

SurrogateMap SurrogateMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("SurrogateMap: cannot open " + path);
  std::string tag, ver;
  in >> tag >> ver;
  if (tag != "csgm-surrogate" || ver != "v1")
    throw std::runtime_error("SurrogateMap: unrecognized file " + path);
  SurrogateMap s;
  in >> s.dim >> s.pairs_used >> s.pairs_discarded >> s.holdout_rmse;
  Eigen::Index n;
  in >> n;
  s.out_scaler.mean.resize(n);
  s.out_scaler.std.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) in >> s.out_scaler.mean[i] >> s.out_scaler.std[i];
  s.net = Mlp::load(in);
  if (!in) throw std::runtime_error("SurrogateMap: truncated file " + path);
  return s;
}

SurrogateMap fit_surrogate(const ScoreModel& score, int n_pairs, const SdeConfig& ode_config,
                           const NoiseSchedule& sched, const TrainConfig& train_cfg) {
  if (n_pairs < 100) throw std::invalid_argument("fit_surrogate: n_pairs >= 100");
  const Eigen::Index d = score.dim();
  std::mt19937_64 rng(ode_config.seed ^ 0x5u);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd z(n_pairs, d);
  for (int i = 0; i < n_pairs; ++i)
    for (Eigen::Index j = 0; j < d; ++j) z(i, j) = normal(rng);
  Eigen::MatrixXd x = probability_flow_map(score, z, ode_config, sched);

  // Drop pairs whose ODE endpoint is non-finite.
  std::vector<int> keep;
  for (int i = 0; i < n_pairs; ++i)
    if (x.row(i).allFinite()) keep.push_back(i);
  SurrogateMap sm;
  sm.dim = static_cast<int>(d);
  sm.pairs_used = static_cast<int>(keep.size());
  sm.pairs_discarded = n_pairs - sm.pairs_used;
  if (sm.pairs_used < 100)
    throw std::runtime_error("fit_surrogate: too many non-finite ODE endpoints");
  Eigen::MatrixXd zi(sm.pairs_used, d), xi(sm.pairs_used, d);
  for (int i = 0; i < sm.pairs_used; ++i) {
    zi.row(i) = z.row(keep[i]);
    xi.row(i) = x.row(keep[i]);
  }
  sm.out_scaler = Scaler::fit(xi);
  Eigen::MatrixXd xs = sm.out_scaler.apply(xi);

  const int n_hold = std::max(1, sm.pairs_used / 10);
  const int n_train = sm.pairs_used - n_hold;

  sm.net = Mlp::make({static_cast<int>(d), 64, 128, 64, static_cast<int>(d)}, train_cfg.seed);
  Adam opt(sm.net, train_cfg.learning_rate);
  std::mt19937_64 trng(train_cfg.seed);
  std::vector<int> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), trng);
    for (int start = 0; start < n_train; start += train_cfg.batch_size) {
      const int bs = std::min(train_cfg.batch_size, n_train - start);
      Eigen::MatrixXd bz(bs, d), bx(bs, d);
      for (int i = 0; i < bs; ++i) {
        bz.row(i) = zi.row(order[start + i]);
        bx.row(i) = xs.row(order[start + i]);
      }
      Mlp::Cache cache;
      Eigen::MatrixXd pred = sm.net.forward(bz, cache);
      MlpGrads grads;
      sm.net.backward(cache, 2.0 * (pred - bx) / bs, grads);
      opt.step(sm.net, grads);
    }
  }
  Eigen::MatrixXd hold_pred = sm.net.forward(zi.bottomRows(n_hold));
  sm.holdout_rmse = std::sqrt(
      (sm.out_scaler.invert(hold_pred) - xi.bottomRows(n_hold)).array().square().mean());
  return sm;
}

}  // namespace csgm
