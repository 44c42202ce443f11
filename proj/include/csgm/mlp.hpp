#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace csgm {

struct MlpGrads {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
};

/// Fully connected net, tanh on hidden layers, linear output.
/// Batches are row-major: one sample per row.
class Mlp {
 public:
  Mlp() = default;
  static Mlp make(const std::vector<int>& widths, std::uint64_t seed);

  Eigen::Index input_dim() const { return weights_.empty() ? 0 : weights_.front().cols(); }
  Eigen::Index output_dim() const { return weights_.empty() ? 0 : weights_.back().rows(); }
  size_t num_layers() const { return weights_.size(); }
  std::vector<int> widths() const;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;

  struct Cache {
    std::vector<Eigen::MatrixXd> acts;  // acts[0] = input, acts[L] = output
  };
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& cache) const;

  /// dLoss_dOut has one row per sample; accumulates into grads (which is
  /// resized/zeroed if empty).
  void backward(const Cache& cache, const Eigen::MatrixXd& dLoss_dOut, MlpGrads& grads) const;

  MlpGrads zero_grads() const;
  void zero_output_layer();

  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

  void save(std::ostream& out) const;
  static Mlp load(std::istream& in);

 private:
  std::vector<Eigen::MatrixXd> weights_;  // [out x in]
  std::vector<Eigen::VectorXd> biases_;
};

/// Adam optimizer state for one Mlp.
class Adam {
 public:
  explicit Adam(const Mlp& net, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(Mlp& net, const MlpGrads& grads);
  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Eigen::MatrixXd> mw_, vw_;
  std::vector<Eigen::VectorXd> mb_, vb_;
};

}  // namespace csgm
