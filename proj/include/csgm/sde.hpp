#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <span>

#include "csgm/sample_set.hpp"
#include "csgm/schedule.hpp"

namespace csgm {

struct SdeConfig {
  int num_steps = 1000;
  double t_min = 1e-3;
  double t_max = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// RNG stream for one sampling chain, derived from (seed, chain index).
std::mt19937_64 chain_rng(std::uint64_t seed, std::uint64_t chain);

/// Conditional score evaluator s(x, t, y). Conditioning, if any, is bound at
/// construction. Evaluation is batched: `states` holds one chain per row and
/// `rngs` one generator per row (stochastic estimators draw from them,
/// deterministic models ignore them). Implementations must be safe for
/// concurrent read-only use.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Eigen::MatrixXd score(const Eigen::MatrixXd& states, double t,
                                std::span<std::mt19937_64> rngs) const = 0;
};

/// x_t = alpha(t) x0 + beta(t) z, the forward perturbation kernel.
Eigen::VectorXd perturb(const Eigen::VectorXd& x0, double t, const Eigen::VectorXd& noise,
                        const NoiseSchedule& sched);

/// One Euler-Maruyama step of the reverse-time SDE from t_i down to t_next.
Eigen::VectorXd reverse_sde_step(const Eigen::VectorXd& x, double t_i, double t_next,
                                 const Eigen::VectorXd& score, const NoiseSchedule& sched,
                                 std::mt19937_64& rng);

/// Same step with the noise vector supplied (tests, variance-free checks).
Eigen::VectorXd reverse_sde_step_with_noise(const Eigen::VectorXd& x, double t_i, double t_next,
                                            const Eigen::VectorXd& score,
                                            const NoiseSchedule& sched, const Eigen::VectorXd& z);

/// One step of the probability-flow ODE: halved diffusion term, no noise.
Eigen::VectorXd probability_flow_step(const Eigen::VectorXd& x, double t_i, double t_next,
                                      const Eigen::VectorXd& score, const NoiseSchedule& sched);

/// Generates n samples: chains start at N(0, I) at t_max and are integrated
/// down to t_min on a uniform grid. Throws on a non-finite state, naming the
/// step index.
Eigen::MatrixXd reverse_sde_sample(const ScoreModel& model, int n, const SdeConfig& config,
                                   const NoiseSchedule& sched);

/// Deterministically maps each row of z0 through the probability-flow ODE.
Eigen::MatrixXd probability_flow_map(const ScoreModel& model, const Eigen::MatrixXd& z0,
                                     const SdeConfig& config, const NoiseSchedule& sched);

}  // namespace csgm
