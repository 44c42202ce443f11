#include "csgm/mlp.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>

#include "csgm/sample_set.hpp"

namespace csgm {

Mlp Mlp::make(const std::vector<int>& widths, std::uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
  Mlp net;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l], out = widths[l + 1];
    if (in < 1 || out < 1) throw std::invalid_argument("Mlp: widths must be positive");
    // Xavier scaling, suited to tanh hidden layers.
    const double scale = std::sqrt(2.0 / (in + out));
    Eigen::MatrixXd w(out, in);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) w(i, j) = scale * normal(rng);
    net.weights_.push_back(std::move(w));
    net.biases_.push_back(Eigen::VectorXd::Zero(out));
  }
  return net;
}

std::vector<int> Mlp::widths() const {
  std::vector<int> w;
  if (weights_.empty()) return w;
  w.push_back(static_cast<int>(weights_.front().cols()));
  for (const auto& m : weights_) w.push_back(static_cast<int>(m.rows()));
  return w;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd a = x;
  for (size_t l = 0; l < weights_.size(); ++l) {
    a = (a * weights_[l].transpose()).rowwise() + biases_[l].transpose();
    if (l + 1 < weights_.size()) a = a.array().tanh();
  }
  return a;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache& cache) const {
  cache.acts.clear();
  cache.acts.push_back(x);
  for (size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd a =
        (cache.acts.back() * weights_[l].transpose()).rowwise() + biases_[l].transpose();
    if (l + 1 < weights_.size()) a = a.array().tanh();
    cache.acts.push_back(std::move(a));
  }
  return cache.acts.back();
}

MlpGrads Mlp::zero_grads() const {
  MlpGrads g;
  for (size_t l = 0; l < weights_.size(); ++l) {
    g.w.push_back(Eigen::MatrixXd::Zero(weights_[l].rows(), weights_[l].cols()));
    g.b.push_back(Eigen::VectorXd::Zero(biases_[l].size()));
  }
  return g;
}

void Mlp::backward(const Cache& cache, const Eigen::MatrixXd& dLoss_dOut, MlpGrads& grads) const {
  if (grads.w.empty()) grads = zero_grads();
  Eigen::MatrixXd delta = dLoss_dOut;
  for (size_t l = weights_.size(); l-- > 0;) {
    if (l + 1 < weights_.size()) {
      // tanh' = 1 - a^2, with a the stored post-activation.
      delta.array() *= (1.0 - cache.acts[l + 1].array().square());
    }
    grads.w[l].noalias() += delta.transpose() * cache.acts[l];
    grads.b[l] += delta.colwise().sum().transpose();
    if (l > 0) delta = delta * weights_[l];
  }
}

void Mlp::zero_output_layer() {
  weights_.back().setZero();
  biases_.back().setZero();
}

void Mlp::save(std::ostream& out) const {
  out << "mlp v1\n";
  auto w = widths();
  out << w.size();
  for (int x : w) out << ' ' << x;
  out << '\n';
  for (size_t l = 0; l < weights_.size(); ++l) {
    for (Eigen::Index i = 0; i < weights_[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < weights_[l].cols(); ++j)
        out << format_double(weights_[l](i, j)) << ' ';
      out << '\n';
    }
    for (Eigen::Index i = 0; i < biases_[l].size(); ++i) out << format_double(biases_[l][i]) << ' ';
    out << '\n';
  }
}

Mlp Mlp::load(std::istream& in) {
  std::string tag, ver;
  in >> tag >> ver;
  if (tag != "mlp" || ver != "v1") throw std::runtime_error("Mlp::load: bad header");
  size_t nw;
  in >> nw;
  std::vector<int> widths(nw);
  for (auto& x : widths) in >> x;
  Mlp net;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    Eigen::MatrixXd w(widths[l + 1], widths[l]);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) in >> w(i, j);
    Eigen::VectorXd b(widths[l + 1]);
    for (Eigen::Index i = 0; i < b.size(); ++i) in >> b[i];
    if (!in) throw std::runtime_error("Mlp::load: truncated weight data");
    net.weights_.push_back(std::move(w));
    net.biases_.push_back(std::move(b));
  }
  return net;
}

Adam::Adam(const Mlp& net, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (size_t l = 0; l < net.weights().size(); ++l) {
    mw_.push_back(Eigen::MatrixXd::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
    vw_.push_back(Eigen::MatrixXd::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
    mb_.push_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
    vb_.push_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
  }
}

void Adam::step(Mlp& net, const MlpGrads& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t l = 0; l < mw_.size(); ++l) {
    mw_[l] = beta1_ * mw_[l] + (1.0 - beta1_) * grads.w[l];
    vw_[l] = beta2_ * vw_[l].array().matrix() +
             (1.0 - beta2_) * grads.w[l].array().square().matrix();
    net.weights()[l].array() -=
        lr_ * (mw_[l].array() / c1) / ((vw_[l].array() / c2).sqrt() + eps_);

    mb_[l] = beta1_ * mb_[l] + (1.0 - beta1_) * grads.b[l];
    vb_[l] = beta2_ * vb_[l].array().matrix() +
             (1.0 - beta2_) * grads.b[l].array().square().matrix();
    net.biases()[l].array() -= lr_ * (mb_[l].array() / c1) / ((vb_[l].array() / c2).sqrt() + eps_);
  }
}

}  // namespace csgm
