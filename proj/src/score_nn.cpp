#include "csgm/score_nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace csgm {

Scaler Scaler::fit(const Eigen::MatrixXd& x) {
  Scaler s;
  s.mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - s.mean.transpose();
  s.std = (centered.array().square().colwise().mean()).sqrt();
  for (Eigen::Index i = 0; i < s.std.size(); ++i)
    if (s.std[i] < 1e-12) s.std[i] = 1.0;  // constant column
  return s;
}

Scaler Scaler::identity(Eigen::Index dim) {
  Scaler s;
  s.mean = Eigen::VectorXd::Zero(dim);
  s.std = Eigen::VectorXd::Ones(dim);
  return s;
}

Eigen::MatrixXd Scaler::apply(const Eigen::MatrixXd& x) const {
  return (x.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

Eigen::MatrixXd Scaler::invert(const Eigen::MatrixXd& x) const {
  return (x.array().rowwise() * std.transpose().array()).matrix().rowwise() + mean.transpose();
}

Eigen::VectorXd Scaler::apply_vec(const Eigen::VectorXd& x) const {
  return (x - mean).cwiseQuotient(std);
}

void TrainConfig::validate() const {
  if (learning_rate <= 0) throw std::invalid_argument("TrainConfig: learning_rate > 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size >= 1");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs >= 1");
}

static const std::vector<int> kHiddenWidths = {64, 128, 256, 512, 256, 128, 64};

ScoreNet ScoreNet::make(int state_dim, int label_dim, const NoiseSchedule& sched,
                        std::uint64_t seed) {
  if (state_dim < 1 || label_dim < 0)
    throw std::invalid_argument("ScoreNet: bad dimensions");
  std::vector<int> widths;
  widths.push_back(state_dim + label_dim + 1);
  widths.insert(widths.end(), kHiddenWidths.begin(), kHiddenWidths.end());
  widths.push_back(state_dim);
  ScoreNet sn;
  sn.net = Mlp::make(widths, seed);
  sn.x_scaler = Scaler::identity(state_dim);
  sn.y_scaler = Scaler::identity(std::max(label_dim, 1));
  sn.sched = sched;
  sn.state_dim = state_dim;
  sn.label_dim = label_dim;
  return sn;
}

static Eigen::MatrixXd assemble_input(const ScoreNet& sn, const Eigen::MatrixXd& x,
                                      const Eigen::MatrixXd& y, const Eigen::VectorXd& t) {
  if (x.cols() != sn.state_dim) throw std::invalid_argument("ScoreNet: state dimension mismatch");
  if (sn.label_dim > 0 && (y.cols() != sn.label_dim || y.rows() != x.rows()))
    throw std::invalid_argument("ScoreNet: label dimension mismatch");
  Eigen::MatrixXd in(x.rows(), sn.state_dim + sn.label_dim + 1);
  in.leftCols(sn.state_dim) = x;
  if (sn.label_dim > 0) in.middleCols(sn.state_dim, sn.label_dim) = y;
  in.col(sn.state_dim + sn.label_dim) = t;
  return in;
}

Eigen::MatrixXd ScoreNet::forward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                  double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("ScoreNet: t outside [0, 1]");
  return net.forward(assemble_input(*this, x, y, Eigen::VectorXd::Constant(x.rows(), t)));
}

Eigen::MatrixXd ScoreNet::forward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                  const Eigen::VectorXd& t) const {
  return net.forward(assemble_input(*this, x, y, t));
}

double dsm_loss(ScoreNet& sn, const Eigen::MatrixXd& x0, const Eigen::MatrixXd& y,
                const TrainConfig& cfg, std::mt19937_64& rng, MlpGrads* grads) {
  const Eigen::Index n = x0.rows();
  if (n < 1) throw std::invalid_argument("dsm_loss: empty minibatch");
  const Eigen::Index d = x0.cols();
  std::uniform_real_distribution<double> unif(cfg.t_min, cfg.t_max);
  std::normal_distribution<double> normal;

  Eigen::VectorXd t(n), beta(n), alpha(n), lambda(n);
  Eigen::MatrixXd eps(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    t[i] = unif(rng);
    alpha[i] = sn.sched.alpha(t[i]);
    const double b2 = sn.sched.beta2(t[i]);
    beta[i] = std::sqrt(b2);
    lambda[i] = b2;
    for (Eigen::Index j = 0; j < d; ++j) eps(i, j) = normal(rng);
  }
  Eigen::MatrixXd xt = (x0.array().colwise() * alpha.array()) +
                       (eps.array().colwise() * beta.array());
  Eigen::MatrixXd target = -(eps.array().colwise() / beta.array());

  Eigen::MatrixXd in = assemble_input(sn, xt, y, t);
  Mlp::Cache cache;
  Eigen::MatrixXd s = sn.net.forward(in, cache);

  Eigen::MatrixXd resid = s - target;
  Eigen::VectorXd row_loss = lambda.array() * resid.array().square().rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i)
    if (!std::isfinite(row_loss[i]))
      throw std::runtime_error("dsm_loss: non-finite loss at sample " + std::to_string(i) +
                               " (t = " + std::to_string(t[i]) + ")");
  const double loss = row_loss.mean();

  if (grads) {
    Eigen::MatrixXd dOut =
        (resid.array().colwise() * (2.0 * lambda.array() / static_cast<double>(n))).matrix();
    sn.net.backward(cache, dOut, *grads);
  }
  return loss;
}

std::vector<double> train(ScoreNet& sn, const SampleSet& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  if (data.dim() != sn.state_dim)
    throw std::invalid_argument("train: data dimension does not match network");
  if (sn.label_dim > 0 && data.label_dim() != sn.label_dim)
    throw std::invalid_argument("train: label dimension does not match network");

  sn.x_scaler = Scaler::fit(data.states);
  Eigen::MatrixXd xs = sn.x_scaler.apply(data.states);
  Eigen::MatrixXd ys;
  if (sn.label_dim > 0) {
    sn.y_scaler = Scaler::fit(*data.labels);
    ys = sn.y_scaler.apply(*data.labels);
  } else {
    ys.resize(data.rows(), 0);
  }

  const Eigen::Index n = data.rows();
  std::mt19937_64 rng(cfg.seed);
  Adam opt(sn.net, cfg.learning_rate);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    Eigen::Index count = 0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Eigen::MatrixXd bx(bs, xs.cols()), by(bs, ys.cols());
      for (Eigen::Index i = 0; i < bs; ++i) {
        bx.row(i) = xs.row(order[start + i]);
        if (ys.cols() > 0) by.row(i) = ys.row(order[start + i]);
      }
      MlpGrads grads;
      total += dsm_loss(sn, bx, by, cfg, rng, &grads) * bs;
      count += bs;
      opt.step(sn.net, grads);
    }
    history.push_back(total / count);
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
        (epoch + 1) % cfg.checkpoint_every == 0)
      sn.save(cfg.checkpoint_path);
  }
  return history;
}

NnScoreModel::NnScoreModel(const ScoreNet& sn, std::optional<Eigen::VectorXd> y_raw) : sn_(sn) {
  if (sn.label_dim > 0) {
    if (!y_raw || y_raw->size() != sn.label_dim)
      throw std::invalid_argument("NnScoreModel: label dimension mismatch");
    y_std_ = sn.y_scaler.apply_vec(*y_raw);
  } else if (y_raw) {
    throw std::invalid_argument("NnScoreModel: network is unconditional");
  }
}

Eigen::MatrixXd NnScoreModel::score(const Eigen::MatrixXd& states, double t,
                                    std::span<std::mt19937_64>) const {
  Eigen::MatrixXd y(states.rows(), y_std_.size());
  if (y_std_.size() > 0) y.rowwise() = y_std_.transpose();
  return sn_.forward(states, y, t);
}

SampleSet nn_sample(const ScoreNet& sn, const std::optional<Eigen::VectorXd>& y, int n,
                    const SdeConfig& config, const std::vector<std::string>& state_names,
                    const std::vector<std::string>& label_names) {
  NnScoreModel model(sn, y);
  Eigen::MatrixXd xs = reverse_sde_sample(model, n, config, sn.sched);
  SampleSet out;
  out.states = sn.x_scaler.invert(xs);
  out.state_names = state_names;
  if (out.state_names.empty())
    for (int i = 0; i < sn.state_dim; ++i) out.state_names.push_back("x" + std::to_string(i + 1));
  if (y) {
    Eigen::MatrixXd lab(n, y->size());
    lab.rowwise() = y->transpose();
    out.labels = lab;
    out.label_names = label_names;
    if (out.label_names.empty())
      for (int i = 0; i < sn.label_dim; ++i) out.label_names.push_back("y" + std::to_string(i + 1));
  }
  return out;
}

static void save_scaler(std::ostream& out, const Scaler& s) {
  out << s.mean.size() << '\n';
  for (Eigen::Index i = 0; i < s.mean.size(); ++i)
    out << format_double(s.mean[i]) << ' ' << format_double(s.std[i]) << '\n';
}

static Scaler load_scaler(std::istream& in) {
  Eigen::Index n;
  in >> n;
  Scaler s;
  s.mean.resize(n);
  s.std.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) in >> s.mean[i] >> s.std[i];
  return s;
}

void ScoreNet::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("ScoreNet: cannot write " + path);
  out << "csgm-scorenet v1\n";
  out << state_dim << ' ' << label_dim << '\n';
  out << (sched.kind == ScheduleKind::Linear ? "linear" : "vp") << ' '
      << format_double(sched.beta_min) << ' ' << format_double(sched.beta_d) << ' '
      << format_double(sched.coef_clamp) << '\n';
  save_scaler(out, x_scaler);
  save_scaler(out, y_scaler);
  net.save(out);
}

ScoreNet ScoreNet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ScoreNet: cannot open " + path);
  std::string tag, ver;
  in >> tag >> ver;
  if (tag != "csgm-scorenet" || ver != "v1")
    throw std::runtime_error("ScoreNet: unrecognized model file " + path);
  ScoreNet sn;
  in >> sn.state_dim >> sn.label_dim;
  std::string kind;
  in >> kind >> sn.sched.beta_min >> sn.sched.beta_d >> sn.sched.coef_clamp;
  sn.sched.kind = kind == "linear" ? ScheduleKind::Linear : ScheduleKind::VariancePreserving;
  sn.x_scaler = load_scaler(in);
  sn.y_scaler = load_scaler(in);
  sn.net = Mlp::load(in);
  if (!in) throw std::runtime_error("ScoreNet: truncated model file " + path);
  return sn;
}

}  // namespace csgm
