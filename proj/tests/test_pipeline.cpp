#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <random>

#include "csgm/pipeline.hpp"
#include "csgm/systems.hpp"
#include "doctest.h"

using namespace csgm;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("residual stats and cusp residuals") {
  Eigen::VectorXd r(5);
  r << 0.1, 0.2, 0.3, 0.4, 10.0;
  ResidualStats s = residual_stats(r);
  CHECK(s.median == doctest::Approx(0.3));
  CHECK(s.p95 == doctest::Approx(10.0));

  Eigen::MatrixXd xlm(2, 3);
  xlm << 1.0, 2.0, -1.0, 2.0, 1.0, 0.0;  // x^3-lx-mu: 1-2+1=0; 8-2-0=6
  Eigen::VectorXd cr = cusp_residuals(xlm);
  CHECK(cr[0] == doctest::Approx(0.0));
  CHECK(cr[1] == doctest::Approx(6.0));
}

TEST_CASE("cluster detection finds separated modes and rejects unimodal data") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(900);
  const double centers[3] = {-2.0, 0.0, 2.0};
  for (int i = 0; i < 900; ++i) v[i] = centers[i % 3] + 0.15 * normal(rng);
  ClusterResult cl = cluster_modes(v, 5);
  REQUIRE(cl.k == 3);
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(cl.centers[j] - centers[j]) < 0.1);
    CHECK(cl.counts[j] > 250);
  }

  Eigen::VectorXd g(1000);
  for (int i = 0; i < 1000; ++i) g[i] = normal(rng);
  CHECK(cluster_modes(g, 5).k == 1);
}

TEST_CASE("histogram modes and KS distance") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  Eigen::VectorXd bimodal(4000), same(4000), shifted(4000);
  for (int i = 0; i < 4000; ++i) {
    bimodal[i] = (i % 2 ? 1.0 : -1.0) + 0.3 * normal(rng);
    same[i] = normal(rng);
    shifted[i] = normal(rng) + 3.0;
  }
  auto modes = histogram_modes(bimodal, 0.25, bimodal.minCoeff(), bimodal.maxCoeff());
  REQUIRE(modes.size() == 2);
  CHECK(std::abs(modes[0] + 1.0) <= 0.25);
  CHECK(std::abs(modes[1] - 1.0) <= 0.25);

  Eigen::VectorXd same2 = same;
  CHECK(ks_distance(same, same2) == doctest::Approx(0.0));
  CHECK(ks_distance(same, shifted) > 0.8);
  HistogramSummary hs = histogram_compare(same, shifted);
  CHECK(hs.ks == ks_distance(same, shifted));
}

TEST_CASE("smoothness metric on hand-built profiles") {
  Eigen::MatrixXd p(2, 10);
  p.setZero();
  p(0, 0) = 2.0;                  // all energy in mode 1
  p(1, 0) = 1.0;
  p(1, 8) = 1.0;                  // half the energy in mode 9
  Eigen::VectorXd sm = smoothness_metric(p);
  CHECK(sm[0] == doctest::Approx(0.0));
  CHECK(sm[1] == doctest::Approx(0.5));
}

TEST_CASE("run_algorithm1 re-attaches the condition and is deterministic") {
  CuspSpec spec;
  spec.n_samples = 3000;
  SampleSet data = cusp_sample(spec, 5);
  PipelineConfig cfg;
  cfg.label_columns = {"mu"};
  cfg.conditions = {Eigen::VectorXd::Zero(1)};
  cfg.backend = ScoreBackend::Mcs;
  cfg.mcs.bandwidth = Eigen::VectorXd::Constant(1, 0.1);
  cfg.n_samples = 100;
  cfg.sde.num_steps = 200;
  cfg.seed = 6;

  GeneratedEnsemble a = run_algorithm1(data, cfg);
  GeneratedEnsemble b = run_algorithm1(data, cfg);
  CHECK((a.samples.states - b.samples.states).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.samples.state_names == std::vector<std::string>{"x", "lambda"});
  CHECK(a.samples.label_names == std::vector<std::string>{"mu"});
  CHECK(a.samples.labels->cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.extrapolated == std::vector<bool>{false});

  namespace fs = std::filesystem;
  const std::string p1 = (fs::temp_directory_path() / "csgm_ens_a.csv").string();
  const std::string p2 = (fs::temp_directory_path() / "csgm_ens_b.csv").string();
  write_sample_csv(a.samples, p1);
  write_sample_csv(b.samples, p2);
  CHECK(slurp(p1) == slurp(p2));
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("two conditions stack with per-condition labels") {
  CuspSpec spec;
  spec.n_samples = 3000;
  SampleSet data = cusp_sample(spec, 7);
  PipelineConfig cfg;
  cfg.label_columns = {"mu"};
  cfg.conditions = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 1.0)};
  cfg.mcs.bandwidth = Eigen::VectorXd::Constant(1, 0.1);
  cfg.n_samples = 50;
  cfg.sde.num_steps = 150;
  GeneratedEnsemble ens = run_algorithm1(data, cfg);
  REQUIRE(ens.samples.rows() == 100);
  CHECK((*ens.samples.labels)(0, 0) == 0.0);
  CHECK((*ens.samples.labels)(99, 0) == 1.0);
  CHECK(ens.condition_of_row[0] == 0);
  CHECK(ens.condition_of_row[99] == 1);
}

TEST_CASE("out-of-range conditions are flagged, not rejected") {
  SampleSet data;
  const int n = 400;
  data.states.resize(n, 1);
  Eigen::MatrixXd lab(n, 1);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    lab(i, 0) = u(rng);
    data.states(i, 0) = lab(i, 0) + 0.01;
  }
  data.state_names = {"x"};
  data.labels = lab;
  data.label_names = {"y"};
  PipelineConfig cfg;
  cfg.conditions = {Eigen::VectorXd::Constant(1, 1.01)};  // just past the max
  cfg.mcs.bandwidth = Eigen::VectorXd::Constant(1, 0.02);
  cfg.n_samples = 20;
  cfg.sde.num_steps = 100;
  GeneratedEnsemble ens = run_algorithm1(data, cfg);
  CHECK(ens.extrapolated == std::vector<bool>{true});
  CHECK(ens.samples.states.allFinite());
}

TEST_CASE("reduced path lifts through geometric harmonics consistently") {
  // Ambient (a, b, c) with c = a^2 + b on a sampled 2-D sheet.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int n = 600;
  SampleSet data;
  data.states.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    const double a = u(rng), b = u(rng);
    data.states.row(i) << a, b, a * a + b;
  }
  data.state_names = {"a", "b", "c"};

  PipelineConfig cfg;
  cfg.label_columns = {"a"};
  cfg.reduce = true;
  cfg.reduced_columns = {"a", "b"};
  cfg.conditions = {Eigen::VectorXd::Constant(1, 0.25)};
  cfg.mcs.bandwidth = Eigen::VectorXd::Constant(1, 0.05);
  cfg.n_samples = 100;
  cfg.sde.num_steps = 200;
  GeneratedEnsemble ens = run_algorithm1(data, cfg);

  REQUIRE(ens.lift.has_value());
  CHECK(ens.samples.state_names == std::vector<std::string>{"b", "c"});
  CHECK(ens.reduced_names == std::vector<std::string>{"a", "b"});

  // Lift consistency on the training rows themselves.
  Eigen::MatrixXd back = gh_extend(*ens.lift, Eigen::MatrixXd(data.states.leftCols(2)));
  const double range = data.states.col(2).maxCoeff() - data.states.col(2).minCoeff();
  CHECK((back - data.states.col(2)).cwiseAbs().maxCoeff() < 0.05 * range);

  // Generated samples respect the sheet: c close to a^2 + b with a = 0.25.
  Eigen::MatrixXd cols = ens.columns({"b", "c", "a"});
  for (Eigen::Index i = 0; i < cols.rows(); ++i) {
    CHECK(cols(i, 2) == 0.25);
    CHECK(std::abs(cols(i, 1) - (0.0625 + cols(i, 0))) < 0.15 * range);
  }
}

TEST_CASE("resolve_labels passes through pre-attached labels") {
  SampleSet data;
  data.states.resize(3, 1);
  data.states << 1, 2, 3;
  data.state_names = {"x"};
  Eigen::MatrixXd lab(3, 1);
  lab << 0, 0, 1;
  data.labels = lab;
  data.label_names = {"y"};
  PipelineConfig cfg;
  cfg.label_columns = {"ignored"};
  SampleSet out = resolve_labels(data, cfg);
  CHECK(out.label_names == std::vector<std::string>{"y"});
}

TEST_CASE("unknown experiment names the registry") {
  CHECK(experiment_names().size() == 7);
  CHECK_THROWS_WITH_AS(run_experiment("nope", "/tmp"), doctest::Contains("cusp-case1"),
                       std::invalid_argument);
}

TEST_CASE("file hash is order-sensitive and stable") {
  namespace fs = std::filesystem;
  const std::string p = (fs::temp_directory_path() / "csgm_hash.txt").string();
  std::ofstream(p) << "abc";
  const std::string h1 = file_hash(p);
  CHECK(file_hash(p) == h1);
  std::ofstream(p) << "acb";
  CHECK(file_hash(p) != h1);
  fs::remove(p);
}
