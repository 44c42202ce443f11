#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "csgm/mlp.hpp"
#include "csgm/sample_set.hpp"
#include "csgm/schedule.hpp"
#include "csgm/sde.hpp"

namespace csgm {

/// Per-column standardization to zero mean, unit variance.
struct Scaler {
  Eigen::VectorXd mean, std;

  static Scaler fit(const Eigen::MatrixXd& x);
  static Scaler identity(Eigen::Index dim);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd apply_vec(const Eigen::VectorXd& x) const;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 256;
  int epochs = 40;
  std::uint64_t seed = 0;
  double t_min = 1e-3;
  double t_max = 1.0;
  int checkpoint_every = 0;  // epochs; 0 disables
  std::string checkpoint_path;

  void validate() const;
};

/// Conditional score network: input concat(x, y, t), hidden widths
/// 64-128-256-512-256-128-64 with tanh, linear output of state dimension.
/// The network operates in standardized coordinates; the scalers and the
/// schedule are stored with it so sampling is self-contained.
struct ScoreNet {
  Mlp net;
  Scaler x_scaler, y_scaler;
  NoiseSchedule sched;
  int state_dim = 0;
  int label_dim = 0;

  static ScoreNet make(int state_dim, int label_dim, const NoiseSchedule& sched,
                       std::uint64_t seed);

  /// Evaluates s(x, t, y) in standardized coordinates. x: n x state_dim,
  /// y: n x label_dim (ignored when label_dim == 0), shared time t.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double t) const;
  /// Per-row times.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                          const Eigen::VectorXd& t) const;

  void save(const std::string& path) const;
  static ScoreNet load(const std::string& path);
};

/// Denoising score-matching loss over one minibatch of standardized (x0, y)
/// pairs. Samples t ~ U(t_min, t_max) and eps ~ N(0, I) per row, perturbs,
/// and matches -eps/beta_t with weighting lambda(t) = beta_t^2. Gradients are
/// accumulated into `grads` when non-null.
double dsm_loss(ScoreNet& sn, const Eigen::MatrixXd& x0, const Eigen::MatrixXd& y,
                const TrainConfig& cfg, std::mt19937_64& rng, MlpGrads* grads);

/// Fits the scalers to `data`, trains with Adam, returns per-epoch mean loss.
std::vector<double> train(ScoreNet& sn, const SampleSet& data, const TrainConfig& cfg);

/// ScoreModel adapter with the conditioning label bound (raw units).
class NnScoreModel : public ScoreModel {
 public:
  NnScoreModel(const ScoreNet& sn, std::optional<Eigen::VectorXd> y_raw);
  Eigen::Index dim() const override { return sn_.state_dim; }
  Eigen::MatrixXd score(const Eigen::MatrixXd& states, double t,
                        std::span<std::mt19937_64> rngs) const override;

 private:
  const ScoreNet& sn_;
  Eigen::VectorXd y_std_;  // standardized label, empty if unconditional
};

/// Reverse-SDE sampling through the trained network; returns raw-unit samples
/// with the conditioned label columns re-attached when y is present.
SampleSet nn_sample(const ScoreNet& sn, const std::optional<Eigen::VectorXd>& y, int n,
                    const SdeConfig& config, const std::vector<std::string>& state_names = {},
                    const std::vector<std::string>& label_names = {});

}  // namespace csgm
