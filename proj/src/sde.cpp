#include "csgm/sde.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace csgm {

void SdeConfig::validate() const {
  if (!(0.0 < t_min && t_min < t_max && t_max <= 1.0))
    throw std::invalid_argument("SdeConfig: need 0 < t_min < t_max <= 1");
  if (num_steps < 1) throw std::invalid_argument("SdeConfig: num_steps >= 1");
}

std::mt19937_64 chain_rng(std::uint64_t seed, std::uint64_t chain) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chain), static_cast<std::uint32_t>(chain >> 32),
                    0x9e3779b9u};
  return std::mt19937_64(seq);
}

Eigen::VectorXd perturb(const Eigen::VectorXd& x0, double t, const Eigen::VectorXd& noise,
                        const NoiseSchedule& sched) {
  if (noise.size() != x0.size())
    throw std::invalid_argument("perturb: noise dimension does not match state");
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("perturb: t outside [0, 1]");
  return sched.alpha(t) * x0 + sched.beta(t) * noise;
}

static void check_reverse_args(const Eigen::VectorXd& x, double t_i, double t_next,
                               const Eigen::VectorXd& score) {
  if (t_next >= t_i) throw std::invalid_argument("reverse step: t_next must be < t_i");
  if (score.size() != x.size())
    throw std::invalid_argument("reverse step: score dimension does not match state");
}

Eigen::VectorXd reverse_sde_step_with_noise(const Eigen::VectorXd& x, double t_i, double t_next,
                                            const Eigen::VectorXd& score,
                                            const NoiseSchedule& sched, const Eigen::VectorXd& z) {
  check_reverse_args(x, t_i, t_next, score);
  const double dt = t_next - t_i;  // negative
  const double g2 = sched.g2(t_i);
  return x + dt * (sched.drift_coef(t_i) * x - g2 * score) +
         std::sqrt(-dt) * std::sqrt(g2) * z;
}

Eigen::VectorXd reverse_sde_step(const Eigen::VectorXd& x, double t_i, double t_next,
                                 const Eigen::VectorXd& score, const NoiseSchedule& sched,
                                 std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(x.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  return reverse_sde_step_with_noise(x, t_i, t_next, score, sched, z);
}

Eigen::VectorXd probability_flow_step(const Eigen::VectorXd& x, double t_i, double t_next,
                                      const Eigen::VectorXd& score, const NoiseSchedule& sched) {
  check_reverse_args(x, t_i, t_next, score);
  const double dt = t_next - t_i;
  return x + dt * (sched.drift_coef(t_i) * x - 0.5 * sched.g2(t_i) * score);
}


// Uniform time grid with exact endpoints.
static double time_at(const SdeConfig& c, int i) {
  if (i <= 0) return c.t_max;
  if (i >= c.num_steps) return c.t_min;
  return c.t_max - (c.t_max - c.t_min) * i / c.num_steps;
}

Eigen::MatrixXd reverse_sde_sample(const ScoreModel& model, int n, const SdeConfig& config,
                                   const NoiseSchedule& sched) {
  config.validate();
  if (n < 1) throw std::invalid_argument("reverse_sde_sample: n >= 1");
  const Eigen::Index d = model.dim();

  std::vector<std::mt19937_64> rngs;
  rngs.reserve(n);
  for (int c = 0; c < n; ++c) rngs.push_back(chain_rng(config.seed, c));

  Eigen::MatrixXd X(n, d);
  std::normal_distribution<double> normal;
  for (int c = 0; c < n; ++c)
    for (Eigen::Index j = 0; j < d; ++j) X(c, j) = normal(rngs[c]);

  for (int i = 0; i < config.num_steps; ++i) {
    const double t = time_at(config, i);
    const double t_next = time_at(config, i + 1);
    const double dt = t_next - t;
    const double b = sched.drift_coef(t);
    const double g2 = sched.g2(t);
    const double noise_scale = std::sqrt(-dt) * std::sqrt(g2);

    Eigen::MatrixXd s = model.score(X, t, std::span<std::mt19937_64>(rngs));
    X += dt * (b * X - g2 * s);
    for (int c = 0; c < n; ++c)
      for (Eigen::Index j = 0; j < d; ++j) X(c, j) += noise_scale * normal(rngs[c]);

    if (!X.allFinite())
      throw std::runtime_error("reverse_sde_sample: non-finite state at step " +
                               std::to_string(i) + " (t = " + std::to_string(t) + ")");
  }
  return X;
}

Eigen::MatrixXd probability_flow_map(const ScoreModel& model, const Eigen::MatrixXd& z0,
                                     const SdeConfig& config, const NoiseSchedule& sched) {
  config.validate();
  if (z0.cols() != model.dim())
    throw std::invalid_argument("probability_flow_map: dimension mismatch");
  const int n = static_cast<int>(z0.rows());

  std::vector<std::mt19937_64> rngs;
  rngs.reserve(n);
  for (int c = 0; c < n; ++c) rngs.push_back(chain_rng(config.seed, c));

  Eigen::MatrixXd X = z0;
  for (int i = 0; i < config.num_steps; ++i) {
    const double t = time_at(config, i);
    const double t_next = time_at(config, i + 1);
    const double dt = t_next - t;
    Eigen::MatrixXd s = model.score(X, t, std::span<std::mt19937_64>(rngs));
    X += dt * (sched.drift_coef(t) * X - 0.5 * sched.g2(t) * s);
  }
  return X;
}

}  // namespace csgm
