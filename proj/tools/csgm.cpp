// csgm: conditional score-based samplers for slow manifolds and bifurcation
// surfaces. Subcommands: generate | train | sample | lift | experiment |
// evaluate.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "csgm/manifold.hpp"
#include "csgm/pipeline.hpp"
#include "csgm/sample_set.hpp"
#include "csgm/score_mcs.hpp"
#include "csgm/score_nn.hpp"
#include "csgm/systems.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string default_out_root() {
  const char* env = std::getenv("CSGM_OUT_ROOT");
  return env ? env : "out";
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

std::vector<Eigen::VectorXd> parse_conditions(const std::vector<std::string>& conds,
                                              size_t label_dim) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& c : conds) {
    auto parts = split(c, ',');
    if (parts.size() != label_dim)
      throw std::invalid_argument("condition \"" + c + "\" has " +
                                  std::to_string(parts.size()) + " values, expected " +
                                  std::to_string(label_dim));
    Eigen::VectorXd y(label_dim);
    for (size_t j = 0; j < parts.size(); ++j) y[j] = std::stod(parts[j]);
    out.push_back(y);
  }
  return out;
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_provenance(const std::string& out_path, const json& config) {
  json prov;
  prov["schema"] = "csgm-provenance v1";
  prov["config"] = config;
  prov["outputs"][fs::path(out_path).filename().string()] = {
      {"hash", csgm::file_hash(out_path)}};
  std::ofstream(out_path + ".provenance.json") << prov.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

struct GenerateOpts {
  std::string system = "cusp";
  int n = 20000;
  int n_init = 500;
  double da_min = 0.02, da_max = 0.075, da_step = 0.0025;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_generate(const GenerateOpts& o) {
  csgm::SampleSet set;
  if (o.system == "cusp" || o.system == "cusp-bimodal") {
    csgm::CuspSpec spec;
    spec.n_samples = o.n;
    if (o.system == "cusp-bimodal") spec.lambda_dist = csgm::LambdaDistribution::GaussianMixture;
    set = csgm::cusp_sample(spec, o.seed);
  } else if (o.system == "ci") {
    set = csgm::ci_dataset(o.n_init, o.seed);
  } else if (o.system == "pfr") {
    std::vector<double> grid;
    for (double da = o.da_min; da <= o.da_max + 1e-12; da += o.da_step) grid.push_back(da);
    set = csgm::pfr_dataset(grid, csgm::PfrSpec{}).set;
  } else {
    throw std::invalid_argument("unknown system \"" + o.system +
                                "\"; known: cusp cusp-bimodal ci pfr");
  }
  ensure_parent(o.out);
  csgm::write_sample_csv(set, o.out);
  write_provenance(o.out, json{{"subcommand", "generate"},
                               {"system", o.system},
                               {"seed", o.seed},
                               {"rows", static_cast<int>(set.rows())}});
  std::cout << "wrote " << set.rows() << " rows to " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainOpts {
  std::string backend = "nn";
  std::string data;
  std::vector<std::string> labels;
  std::vector<std::string> inputs;  // gh: input column names
  std::string schedule = "vp";
  int epochs = 60;
  int steps = 1000;
  int n_pairs = 2000;
  double eps_factor = 0.05;
  std::uint64_t seed = 0;
  std::string out;
};

csgm::NoiseSchedule make_schedule(const std::string& name) {
  if (name == "linear") return csgm::NoiseSchedule::linear();
  if (name == "vp") return csgm::NoiseSchedule::variance_preserving();
  throw std::invalid_argument("unknown schedule \"" + name + "\" (expected linear or vp)");
}

int cmd_train(const TrainOpts& o) {
  ensure_parent(o.out);
  if (o.backend == "nn") {
    csgm::SampleSet data = csgm::read_sample_csv(o.data, o.labels);
    csgm::NoiseSchedule sched = make_schedule(o.schedule);
    csgm::ScoreNet net = csgm::ScoreNet::make(static_cast<int>(data.dim()),
                                              static_cast<int>(data.label_dim()), sched, o.seed);
    csgm::TrainConfig tc;
    tc.epochs = o.epochs;
    tc.seed = o.seed;
    std::vector<double> losses = csgm::train(net, data, tc);
    net.save(o.out);
    write_provenance(o.out, json{{"subcommand", "train"},
                                 {"backend", "nn"},
                                 {"data", o.data},
                                 {"labels", o.labels},
                                 {"epochs", o.epochs},
                                 {"schedule", o.schedule},
                                 {"seed", o.seed},
                                 {"final_loss", losses.back()}});
    std::cout << "trained " << o.epochs << " epochs, final loss " << losses.back() << "\n";
  } else if (o.backend == "gh") {
    if (o.inputs.empty()) throw std::invalid_argument("gh training requires --input columns");
    csgm::SampleSet data = csgm::read_sample_csv(o.data);
    std::vector<std::string> target_names;
    std::vector<Eigen::Index> in_idx, out_idx;
    for (size_t i = 0; i < data.state_names.size(); ++i) {
      if (std::find(o.inputs.begin(), o.inputs.end(), data.state_names[i]) != o.inputs.end())
        in_idx.push_back(static_cast<Eigen::Index>(i));
      else
        out_idx.push_back(static_cast<Eigen::Index>(i));
    }
    if (in_idx.size() != o.inputs.size())
      throw std::invalid_argument("gh training: some --input columns not found in the data");
    Eigen::MatrixXd xin(data.rows(), static_cast<Eigen::Index>(in_idx.size()));
    Eigen::MatrixXd tgt(data.rows(), static_cast<Eigen::Index>(out_idx.size()));
    for (size_t j = 0; j < in_idx.size(); ++j) xin.col(j) = data.states.col(in_idx[j]);
    for (size_t j = 0; j < out_idx.size(); ++j) tgt.col(j) = data.states.col(out_idx[j]);
    csgm::GhInterpolant gh =
        csgm::gh_fit(xin, tgt, csgm::median_epsilon(xin, o.eps_factor));
    gh.save(o.out);
    write_provenance(o.out, json{{"subcommand", "train"},
                                 {"backend", "gh"},
                                 {"data", o.data},
                                 {"inputs", o.inputs},
                                 {"eps_factor", o.eps_factor}});
    std::cout << "fitted GH lift with " << gh.sigma.size() << " retained eigenvalues\n";
  } else if (o.backend == "mcs") {
    // A smooth surrogate of the probability-flow map driven by the
    // training-free score.
    csgm::SampleSet data = csgm::read_sample_csv(o.data, o.labels);
    csgm::NoiseSchedule sched = make_schedule(o.schedule);
    csgm::McsScoreModel model(data, std::nullopt, {}, sched);
    csgm::SdeConfig sde;
    sde.num_steps = o.steps;
    sde.seed = o.seed;
    csgm::TrainConfig tc;
    tc.epochs = o.epochs;
    tc.seed = o.seed;
    csgm::SurrogateMap sur = csgm::fit_surrogate(model, o.n_pairs, sde, sched, tc);
    sur.save(o.out);
    write_provenance(o.out, json{{"subcommand", "train"},
                                 {"backend", "mcs"},
                                 {"data", o.data},
                                 {"n_pairs", o.n_pairs},
                                 {"holdout_rmse", sur.holdout_rmse}});
    std::cout << "fitted surrogate, holdout RMSE " << sur.holdout_rmse << "\n";
  } else {
    throw std::invalid_argument("unknown train backend \"" + o.backend +
                                "\"; known: nn gh mcs");
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SampleOpts {
  std::string backend = "mcs";
  std::string model;
  std::string data;
  std::vector<std::string> labels;
  std::vector<std::string> conds;
  std::vector<double> bandwidth;
  std::string schedule = "linear";
  int n = 1000;
  int steps = 1000;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_sample(const SampleOpts& o) {
  csgm::SampleSet out_set;
  if (o.backend == "nn") {
    if (o.model.empty()) throw std::invalid_argument("nn sampling requires --model");
    csgm::ScoreNet net = csgm::ScoreNet::load(o.model);
    auto conds = parse_conditions(o.conds, static_cast<size_t>(net.label_dim));
    if (conds.empty() && net.label_dim > 0)
      throw std::invalid_argument("model is conditional; provide --cond");
    csgm::SdeConfig sde;
    sde.num_steps = o.steps;
    std::vector<csgm::SampleSet> parts;
    if (conds.empty()) conds.push_back(Eigen::VectorXd());
    for (size_t ci = 0; ci < conds.size(); ++ci) {
      sde.seed = o.seed + 1000003 * ci;
      std::optional<Eigen::VectorXd> y;
      if (net.label_dim > 0) y = conds[ci];
      parts.push_back(csgm::nn_sample(net, y, o.n, sde));
    }
    out_set = parts[0];
    for (size_t ci = 1; ci < parts.size(); ++ci) {
      Eigen::Index r0 = out_set.rows();
      out_set.states.conservativeResize(r0 + parts[ci].rows(), Eigen::NoChange);
      out_set.states.bottomRows(parts[ci].rows()) = parts[ci].states;
      if (out_set.labels) {
        out_set.labels->conservativeResize(r0 + parts[ci].rows(), Eigen::NoChange);
        out_set.labels->bottomRows(parts[ci].rows()) = *parts[ci].labels;
      }
    }
  } else if (o.backend == "mcs") {
    if (o.data.empty()) throw std::invalid_argument("mcs sampling requires --data");
    if (o.labels.empty()) throw std::invalid_argument("mcs sampling requires --label");
    csgm::SampleSet data = csgm::read_sample_csv(o.data, o.labels);
    csgm::PipelineConfig cfg;
    cfg.backend = csgm::ScoreBackend::Mcs;
    cfg.label_columns = o.labels;
    cfg.n_samples = o.n;
    cfg.seed = o.seed;
    cfg.sched = make_schedule(o.schedule);
    cfg.sde.num_steps = o.steps;
    if (!o.bandwidth.empty())
      cfg.mcs.bandwidth =
          Eigen::Map<const Eigen::VectorXd>(o.bandwidth.data(), o.bandwidth.size());
    cfg.conditions = parse_conditions(o.conds, o.labels.size());
    if (cfg.conditions.empty()) throw std::invalid_argument("provide at least one --cond");
    out_set = csgm::run_algorithm1(data, cfg).samples;
  } else {
    throw std::invalid_argument("unknown sample backend \"" + o.backend + "\"");
  }
  ensure_parent(o.out);
  csgm::write_sample_csv(out_set, o.out);
  write_provenance(o.out, json{{"subcommand", "sample"},
                               {"backend", o.backend},
                               {"n", o.n},
                               {"seed", o.seed},
                               {"conditions", o.conds}});
  std::cout << "wrote " << out_set.rows() << " samples to " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct LiftOpts {
  std::string model;
  std::string in;
  std::string out;
};

int cmd_lift(const LiftOpts& o) {
  csgm::GhInterpolant gh = csgm::GhInterpolant::load(o.model);
  csgm::SampleSet in = csgm::read_sample_csv(o.in);
  if (in.dim() != gh.training_inputs.cols())
    throw std::invalid_argument("lift: input has " + std::to_string(in.dim()) +
                                " columns, model expects " +
                                std::to_string(gh.training_inputs.cols()));
  Eigen::MatrixXd lifted = csgm::gh_extend(gh, in.states);
  csgm::SampleSet out_set;
  out_set.states.resize(in.rows(), in.dim() + lifted.cols());
  out_set.states << in.states, lifted;
  out_set.state_names = in.state_names;
  for (Eigen::Index j = 0; j < lifted.cols(); ++j)
    out_set.state_names.push_back("lift" + std::to_string(j + 1));
  ensure_parent(o.out);
  csgm::write_sample_csv(out_set, o.out);
  write_provenance(o.out, json{{"subcommand", "lift"}, {"model", o.model}, {"input", o.in}});
  std::cout << "lifted " << in.rows() << " rows to " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateOpts {
  std::string data;
  std::string system;
  std::string cluster_col;
  int k_max = 5;
  std::string out;
};

int cmd_evaluate(const EvaluateOpts& o) {
  csgm::SampleSet set = csgm::read_sample_csv(o.data);
  json m;
  m["rows"] = static_cast<int>(set.rows());
  if (o.system == "cusp") {
    std::vector<Eigen::Index> idx;
    for (const std::string& name : {"x", "lambda", "mu"}) {
      auto it = std::find(set.state_names.begin(), set.state_names.end(), name);
      if (it == set.state_names.end())
        throw std::invalid_argument("evaluate cusp: column \"" + name + "\" missing");
      idx.push_back(it - set.state_names.begin());
    }
    Eigen::MatrixXd xlm(set.rows(), 3);
    for (int j = 0; j < 3; ++j) xlm.col(j) = set.states.col(idx[j]);
    Eigen::VectorXd r = csgm::cusp_residuals(xlm);
    auto rs = csgm::residual_stats(r);
    m["cusp_residual_median"] = rs.median;
    m["cusp_residual_p95"] = rs.p95;
    m["cusp_residual_frac_below_0.25"] =
        static_cast<double>((r.array() < 0.25).count()) / r.size();
  }
  if (!o.cluster_col.empty()) {
    auto it = std::find(set.state_names.begin(), set.state_names.end(), o.cluster_col);
    if (it == set.state_names.end())
      throw std::invalid_argument("evaluate: column \"" + o.cluster_col + "\" missing");
    csgm::ClusterResult cl =
        csgm::cluster_modes(set.states.col(it - set.state_names.begin()), o.k_max);
    m["clusters"] = {{"k", cl.k},
                     {"centers", std::vector<double>(cl.centers.data(),
                                                     cl.centers.data() + cl.centers.size())},
                     {"counts", cl.counts},
                     {"silhouette", cl.silhouette}};
  }
  const std::string text = m.dump(2);
  if (o.out.empty()) {
    std::cout << text << "\n";
  } else {
    ensure_parent(o.out);
    std::ofstream(o.out) << text << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional score-based samplers for slow manifolds and bifurcation surfaces"};
  app.require_subcommand(1);

  int threads = static_cast<int>(std::thread::hardware_concurrency());
  app.add_option("--threads", threads, "internal parallelism (Eigen)");

  GenerateOpts g;
  auto* cg = app.add_subcommand("generate", "generate a training dataset");
  cg->add_option("--system", g.system, "cusp | cusp-bimodal | ci | pfr")->required();
  cg->add_option("--n", g.n, "sample count (cusp)");
  cg->add_option("--n-init", g.n_init, "initial conditions (ci)");
  cg->add_option("--da-min", g.da_min, "Da grid start (pfr)");
  cg->add_option("--da-max", g.da_max, "Da grid end (pfr)");
  cg->add_option("--da-step", g.da_step, "Da grid step (pfr)");
  cg->add_option("--seed", g.seed, "RNG seed");
  cg->add_option("--out", g.out, "output CSV")->required();

  TrainOpts t;
  auto* ct = app.add_subcommand("train", "fit a score network, GH lift, or MCS surrogate");
  ct->add_option("--backend", t.backend, "nn | gh | mcs");
  ct->add_option("--data", t.data, "training CSV")->required();
  ct->add_option("--label", t.labels, "label column (repeatable)");
  ct->add_option("--input", t.inputs, "gh input column (repeatable)");
  ct->add_option("--schedule", t.schedule, "linear | vp");
  ct->add_option("--epochs", t.epochs, "training epochs");
  ct->add_option("--steps", t.steps, "SDE/ODE steps");
  ct->add_option("--n-pairs", t.n_pairs, "surrogate training pairs (mcs)");
  ct->add_option("--eps-factor", t.eps_factor, "GH kernel scale factor");
  ct->add_option("--seed", t.seed, "RNG seed");
  ct->add_option("--out", t.out, "model output path")->required();

  SampleOpts s;
  auto* cs = app.add_subcommand("sample", "draw conditional samples");
  cs->add_option("--backend", s.backend, "nn | mcs");
  cs->add_option("--model", s.model, "trained nn model (nn backend)");
  cs->add_option("--data", s.data, "training CSV (mcs backend)");
  cs->add_option("--label", s.labels, "label column (repeatable, mcs backend)");
  cs->add_option("--cond", s.conds, "condition value, comma-separated per label (repeatable)");
  cs->add_option("--bandwidth", s.bandwidth, "label kernel bandwidth per label (mcs)");
  cs->add_option("--schedule", s.schedule, "linear | vp (mcs)");
  cs->add_option("--n", s.n, "samples per condition");
  cs->add_option("--steps", s.steps, "reverse-SDE steps");
  cs->add_option("--seed", s.seed, "RNG seed");
  cs->add_option("--out", s.out, "output CSV")->required();

  LiftOpts l;
  auto* cl = app.add_subcommand("lift", "lift reduced samples through a GH model");
  cl->add_option("--model", l.model, "GH model file")->required();
  cl->add_option("--in", l.in, "reduced-coordinate CSV")->required();
  cl->add_option("--out", l.out, "ambient output CSV")->required();

  std::string exp_name;
  std::string exp_out = default_out_root();
  std::uint64_t exp_seed = 0;
  auto* ce = app.add_subcommand("experiment", "run a registered experiment");
  ce->add_option("name", exp_name, "experiment name, or 'all'")->required();
  ce->add_option("--out", exp_out, "output root (default $CSGM_OUT_ROOT or ./out)");
  ce->add_option("--seed", exp_seed, "RNG seed");

  EvaluateOpts e;
  auto* cv = app.add_subcommand("evaluate", "compute metrics on a samples CSV");
  cv->add_option("--data", e.data, "samples CSV")->required();
  cv->add_option("--system", e.system, "system oracle (cusp)");
  cv->add_option("--cluster", e.cluster_col, "column to cluster");
  cv->add_option("--k-max", e.k_max, "maximum cluster count");
  cv->add_option("--out", e.out, "metrics output path (default stdout)");

  CLI11_PARSE(app, argc, argv);
  Eigen::setNbThreads(std::max(1, threads));

  try {
    if (*cg) return cmd_generate(g);
    if (*ct) return cmd_train(t);
    if (*cs) return cmd_sample(s);
    if (*cl) return cmd_lift(l);
    if (*ce) {
      std::vector<std::string> names =
          exp_name == "all" ? csgm::experiment_names() : std::vector<std::string>{exp_name};
      std::vector<std::string> failures;
      for (const auto& name : names) {
        json metrics = csgm::run_experiment(name, exp_out, exp_seed);
        for (const auto& line : metrics.value("summary", std::vector<std::string>{}))
          std::cout << name << ": " << line << "\n";
        for (const auto& f : metrics.value("failures", std::vector<std::string>{}))
          failures.push_back(name + ": " + f);
      }
      if (!failures.empty()) {
        std::cout << json{{"failures", failures}}.dump(2) << "\n";
        return 2;
      }
      return 0;
    }
    if (*cv) return cmd_evaluate(e);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
