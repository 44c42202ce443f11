#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "csgm/mlp.hpp"
#include "csgm/sample_set.hpp"
#include "csgm/schedule.hpp"
#include "csgm/score_nn.hpp"
#include "csgm/sde.hpp"

namespace csgm {

/// Training-free score estimate over a batch of data rows:
///   s(x, t) = -sum_n w_n (x - alpha_t b_n) / beta_t^2
/// with w_n the softmax of -||x - alpha_t b_n||^2 / (2 beta_t^2), computed in
/// log space.
Eigen::VectorXd mcs_score(const Eigen::VectorXd& x_t, double t, const Eigen::MatrixXd& batch,
                          const NoiseSchedule& sched);

enum class BatchResample { PerStep, PerChain };

struct McsConfig {
  int minibatch_size = 256;
  /// Label-kernel bandwidth per label dimension; empty means the default of
  /// 2% of each label column's data range.
  Eigen::VectorXd bandwidth;
  BatchResample resample = BatchResample::PerStep;
};

/// Rows eligible for conditioning on y: scaled label distance within 6
/// bandwidths. Throws "label out of sampled range" (naming the nearest label)
/// when empty.
std::vector<int> conditional_eligible(const Eigen::MatrixXd& labels, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& h);

/// Draws up to N_m rows with probability proportional to
/// exp(-||y_j - y||^2 / (2 h^2)). Returns all eligible rows when fewer than
/// N_m are eligible.
std::vector<int> conditional_batch(const SampleSet& data, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& h, int n_m, std::mt19937_64& rng);

Eigen::VectorXd default_bandwidth(const Eigen::MatrixXd& labels);

/// ScoreModel over an empirical dataset, optionally conditioned on a label.
/// Stateless per evaluation given (data, per-chain rng); mini-batches are
/// redrawn per step or per chain.
class McsScoreModel : public ScoreModel {
 public:
  McsScoreModel(const SampleSet& data, std::optional<Eigen::VectorXd> y, const McsConfig& cfg,
                const NoiseSchedule& sched);

  Eigen::Index dim() const override { return data_.dim(); }
  Eigen::MatrixXd score(const Eigen::MatrixXd& states, double t,
                        std::span<std::mt19937_64> rngs) const override;

  const std::vector<int>& eligible_rows() const { return eligible_; }

 private:
  int draw_row(std::mt19937_64& rng) const;

  SampleSet data_;
  McsConfig cfg_;
  NoiseSchedule sched_;
  std::vector<int> eligible_;
  // Vose alias table over the eligible rows.
  std::vector<double> alias_prob_;
  std::vector<int> alias_idx_;
  mutable std::vector<std::vector<int>> per_chain_batch_;
};

/// Smooth surrogate from N(0, I_d) inputs to data space, fitted on pairs
/// produced by probability-flow integration of a score model.
struct SurrogateMap {
  Mlp net;
  Scaler out_scaler;
  int dim = 0;
  int pairs_used = 0;
  int pairs_discarded = 0;
  double holdout_rmse = 0.0;

  Eigen::MatrixXd map(const Eigen::MatrixXd& z) const;
  void save(const std::string& path) const;
  static SurrogateMap load(const std::string& path);
};

SurrogateMap fit_surrogate(const ScoreModel& score, int n_pairs, const SdeConfig& ode_config,
                           const NoiseSchedule& sched, const TrainConfig& train_cfg);

}  // namespace csgm
