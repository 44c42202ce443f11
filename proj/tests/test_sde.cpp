#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "csgm/sample_set.hpp"
#include "csgm/schedule.hpp"
#include "csgm/score_mcs.hpp"
#include "csgm/sde.hpp"
#include "doctest.h"

using namespace csgm;

namespace {

// Analytic score of the marginal p_t when the data are N(mu0, sigma0^2 I):
// s(x, t) = -(x - alpha_t mu0) / (alpha_t^2 sigma0^2 + beta_t^2).
struct GaussianScore : ScoreModel {
  double mu0, sigma0;
  Eigen::Index d;
  NoiseSchedule sched;
  Eigen::Index dim() const override { return d; }
  Eigen::MatrixXd score(const Eigen::MatrixXd& states, double t,
                        std::span<std::mt19937_64>) const override {
    const double a = sched.alpha(t);
    const double var = a * a * sigma0 * sigma0 + sched.beta2(t);
    return -(states.array() - a * mu0) / var;
  }
};

struct RecordingScore : ScoreModel {
  mutable std::vector<double> times;
  Eigen::Index dim() const override { return 1; }
  Eigen::MatrixXd score(const Eigen::MatrixXd& states, double t,
                        std::span<std::mt19937_64>) const override {
    times.push_back(t);
    return Eigen::MatrixXd::Zero(states.rows(), states.cols());
  }
};

struct NanScore : ScoreModel {
  Eigen::Index dim() const override { return 1; }
  Eigen::MatrixXd score(const Eigen::MatrixXd& states, double,
                        std::span<std::mt19937_64>) const override {
    return Eigen::MatrixXd::Constant(states.rows(), states.cols(),
                                     std::numeric_limits<double>::quiet_NaN());
  }
};

}  // namespace

TEST_CASE("linear schedule identities") {
  NoiseSchedule s = NoiseSchedule::linear();
  CHECK(s.alpha(0.0) == doctest::Approx(1.0));
  CHECK(s.beta2(0.0) == doctest::Approx(0.0));
  CHECK(s.alpha(1.0) == doctest::Approx(0.0));
  CHECK(s.beta2(1.0) == doctest::Approx(1.0));
  // g^2(t) = 1 + 2t/(1-t) away from the clamp at t = 1.
  for (double t : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
    CHECK(s.g2(t) == doctest::Approx(1.0 + 2.0 * t / (1.0 - t)).epsilon(1e-12));
    CHECK(s.drift_coef(t) == doctest::Approx(-1.0 / (1.0 - t)).epsilon(1e-12));
    CHECK(s.g2(t) >= 0.0);
  }
  double prev = -1.0;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    CHECK(s.beta2(t) > prev);
    prev = s.beta2(t);
  }
}

TEST_CASE("variance-preserving schedule identities") {
  NoiseSchedule s = NoiseSchedule::variance_preserving();
  CHECK(s.alpha(0.0) == doctest::Approx(1.0));
  CHECK(s.beta2(0.0) == doctest::Approx(0.0));
  for (double t : {0.1, 0.4, 0.8, 1.0}) {
    const double rate = 0.001 + 3.0 * t;
    CHECK(s.g2(t) == doctest::Approx(rate).epsilon(1e-12));
    CHECK(s.drift_coef(t) == doctest::Approx(-0.5 * rate).epsilon(1e-12));
    // alpha^2 + beta^2 = 1 (variance preservation).
    CHECK(s.alpha(t) * s.alpha(t) + s.beta2(t) == doctest::Approx(1.0).epsilon(1e-12));
  }
  // beta^2 strictly increasing, alpha(1) close to the noise end.
  CHECK(s.beta2(0.5) < s.beta2(1.0));
  CHECK(s.alpha(1.0) < 0.5);
}

TEST_CASE("perturb endpoint and scaling examples") {
  NoiseSchedule s = NoiseSchedule::linear();
  Eigen::VectorXd x0(2), z(2);
  x0 << 2.0, 0.0;
  z << -0.3, 1.7;
  CHECK((perturb(x0, 0.0, z, s) - x0).norm() == doctest::Approx(0.0));
  CHECK((perturb(x0, 1.0, z, s) - z).norm() == doctest::Approx(0.0));
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd p = perturb(x0, 0.25, zero, s);
  CHECK(p[0] == doctest::Approx(1.5));
  CHECK(p[1] == doctest::Approx(0.0));
  Eigen::VectorXd bad(3);
  bad.setZero();
  CHECK_THROWS_AS(perturb(x0, 0.5, bad, s), std::invalid_argument);
}

TEST_CASE("perturbation mean and covariance match the kernel") {
  NoiseSchedule s = NoiseSchedule::linear();
  const double t = 0.3;
  Eigen::VectorXd x0(2);
  x0 << 1.0, -2.0;
  const int n = 100000;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd draws(n, 2);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd z(2);
    z << normal(rng), normal(rng);
    draws.row(i) = perturb(x0, t, z, s).transpose();
  }
  Eigen::VectorXd mean = draws.colwise().mean();
  const double b2 = s.beta2(t);
  const double tol_mean = 3.0 * std::sqrt(b2 / n);
  CHECK(std::abs(mean[0] - s.alpha(t) * x0[0]) < tol_mean);
  CHECK(std::abs(mean[1] - s.alpha(t) * x0[1]) < tol_mean);
  Eigen::MatrixXd centered = draws.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / (n - 1);
  const double tol_var = 3.0 * b2 * std::sqrt(2.0 / n);
  CHECK(std::abs(cov(0, 0) - b2) < tol_var);
  CHECK(std::abs(cov(1, 1) - b2) < tol_var);
  CHECK(std::abs(cov(0, 1)) < tol_var);
}

TEST_CASE("reverse SDE step hand evaluation and contracts") {
  NoiseSchedule s = NoiseSchedule::linear();
  Eigen::VectorXd x(1), score(1), z(1);
  x << 1.0;
  score << 0.0;
  z << 0.0;
  // dt = -0.1, b(0.5) = -2: x + dt * b * x = 1 + (-0.1)(-2)(1) = 1.2.
  Eigen::VectorXd out = reverse_sde_step_with_noise(x, 0.5, 0.4, score, s, z);
  CHECK(out[0] == doctest::Approx(1.2).epsilon(1e-12));
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(reverse_sde_step(x, 0.4, 0.5, score, s, rng), std::invalid_argument);
}

TEST_CASE("probability flow: single-point and symmetric datasets") {
  NoiseSchedule s = NoiseSchedule::linear();
  SdeConfig cfg;
  cfg.num_steps = 500;

  SampleSet one;
  one.states.resize(1, 2);
  one.states << 0.7, -1.1;
  one.state_names = {"u", "v"};
  McsScoreModel single(one, std::nullopt, {}, s);
  Eigen::MatrixXd z0(1, 2);
  z0 << 1.3, 0.4;
  // For one data point the score is exact and the flow preserves the
  // standardized coordinate: x(t) = alpha(t) x0 + beta(t) z0.
  cfg.num_steps = 4000;
  Eigen::MatrixXd end = probability_flow_map(single, z0, cfg, s);
  const double a = s.alpha(cfg.t_min), b = s.beta(cfg.t_min);
  Eigen::VectorXd want = a * one.states.row(0).transpose() + b * z0.row(0).transpose();
  CHECK((end.row(0).transpose() - want).norm() < 0.1 * b);
  cfg.num_steps = 500;

  SampleSet two;
  two.states.resize(2, 1);
  two.states << -1.5, 1.5;
  two.state_names = {"u"};
  McsScoreModel sym(two, std::nullopt, {}, s);
  Eigen::MatrixXd zz = Eigen::MatrixXd::Zero(1, 1);
  Eigen::MatrixXd mid = probability_flow_map(sym, zz, cfg, s);
  CHECK(std::abs(mid(0, 0)) < 1e-10);
}

TEST_CASE("reverse-time grid is strictly decreasing from t_max") {
  RecordingScore rec;
  SdeConfig cfg;
  cfg.num_steps = 50;
  reverse_sde_sample(rec, 3, cfg, NoiseSchedule::linear());
  REQUIRE(rec.times.size() == 50);
  CHECK(rec.times.front() == doctest::Approx(cfg.t_max));
  for (size_t i = 1; i < rec.times.size(); ++i) CHECK(rec.times[i] < rec.times[i - 1]);
  CHECK(rec.times.back() >= cfg.t_min);
}

TEST_CASE("non-finite state aborts with a step diagnostic") {
  NanScore bad;
  SdeConfig cfg;
  cfg.num_steps = 10;
  CHECK_THROWS_WITH_AS(reverse_sde_sample(bad, 2, cfg, NoiseSchedule::linear()),
                       doctest::Contains("step"), std::runtime_error);
}

TEST_CASE("chain RNG streams are deterministic and distinct") {
  auto a = chain_rng(42, 0);
  auto b = chain_rng(42, 0);
  auto c = chain_rng(42, 1);
  CHECK(a() == b());
  CHECK(a() != c());
}

TEST_CASE("Gaussian round-trip through the reverse SDE") {
  // The linear schedule has an exact N(0, I) terminal marginal for any data;
  // the variance-preserving one only once the data are standardized, which is
  // how the NN backend uses it.
  struct Case {
    NoiseSchedule sched;
    double mu0, sigma0;
  };
  for (const auto& [sched, mu0, sigma0] :
       {Case{NoiseSchedule::linear(), 2.0, 0.5},
        Case{NoiseSchedule::variance_preserving(), 0.0, 1.0}}) {
    GaussianScore gs;
    gs.mu0 = mu0;
    gs.sigma0 = sigma0;
    gs.d = 1;
    gs.sched = sched;
    SdeConfig cfg;
    cfg.seed = 11;
    Eigen::MatrixXd xs = reverse_sde_sample(gs, 50000, cfg, sched);
    const double mean = xs.col(0).mean();
    const double var = (xs.col(0).array() - mean).square().sum() / (xs.rows() - 1);
    CHECK(std::abs(mean - mu0) < 0.05 * sigma0);
    CHECK(std::abs(var - sigma0 * sigma0) < 0.05 * sigma0 * sigma0);
  }
}

TEST_CASE("SdeConfig validation") {
  SdeConfig cfg;
  cfg.t_min = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.num_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.t_max = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("SampleSet CSV round-trip is bit-stable") {
  SampleSet set;
  set.states.resize(3, 2);
  set.states << 0.1, -1.0 / 3.0, 1e-17, 12345.678901234567, -0.0, 2.5;
  set.state_names = {"x", "lambda"};
  Eigen::MatrixXd lab(3, 1);
  lab << 0.25, -0.1, 1.0 / 7.0;
  set.labels = lab;
  set.label_names = {"mu"};

  const std::string path = (std::filesystem::temp_directory_path() / "csgm_roundtrip.csv").string();
  write_sample_csv(set, path);
  SampleSet back = read_sample_csv(path, {"mu"});
  CHECK(back.state_names == set.state_names);
  CHECK(back.label_names == set.label_names);
  CHECK((back.states - set.states).cwiseAbs().maxCoeff() == 0.0);
  CHECK((*back.labels - *set.labels).cwiseAbs().maxCoeff() == 0.0);

  // Writing the re-read set reproduces the file byte for byte.
  const std::string path2 = path + ".2";
  write_sample_csv(back, path2);
  std::ifstream f1(path), f2(path2);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("missing label column names the available columns") {
  SampleSet set;
  set.states.resize(2, 2);
  set.states.setZero();
  set.state_names = {"x", "lambda"};
  CHECK_THROWS_WITH_AS(set.with_labels({"mu"}), doctest::Contains("lambda"),
                       std::invalid_argument);
}

TEST_CASE("SampleSet validation rejects non-finite and mismatched data") {
  SampleSet set;
  set.states.resize(2, 1);
  set.states << 1.0, std::numeric_limits<double>::infinity();
  set.state_names = {"x"};
  CHECK_THROWS_AS(set.validate(), std::invalid_argument);
  set.states << 1.0, 2.0;
  Eigen::MatrixXd lab(1, 1);
  lab.setZero();
  set.labels = lab;
  set.label_names = {"y"};
  CHECK_THROWS_AS(set.validate(), std::invalid_argument);
}
