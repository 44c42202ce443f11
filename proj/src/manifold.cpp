#include "csgm/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "csgm/sample_set.hpp"

namespace csgm {

static Eigen::MatrixXd pairwise_sq_dists(const Eigen::MatrixXd& x) {
  Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = (-2.0 * x * x.transpose());
  d2.colwise() += sq;
  d2.rowwise() += sq.transpose();
  return d2.cwiseMax(0.0);
}

double median_epsilon(const Eigen::MatrixXd& x, double factor) {
  const Eigen::Index n = x.rows();
  if (n < 2) throw std::invalid_argument("median_epsilon: need at least 2 points");
  Eigen::MatrixXd d2 = pairwise_sq_dists(x);
  std::vector<double> vals;
  vals.reserve(n * (n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) vals.push_back(d2(i, j));
  auto mid = vals.begin() + vals.size() / 2;
  std::nth_element(vals.begin(), mid, vals.end());
  return *mid * factor;
}

Eigen::MatrixXd dmaps_markov_matrix(const Eigen::MatrixXd& x, double epsilon) {
  Eigen::MatrixXd a = (-pairwise_sq_dists(x) / (2.0 * epsilon)).array().exp();
  Eigen::VectorXd p = a.rowwise().sum();
  Eigen::MatrixXd abar = a.array() / (p * p.transpose()).array();
  Eigen::VectorXd d = abar.rowwise().sum();
  return abar.array().colwise() / d.array();
}

DmapEmbedding dmaps(const Eigen::MatrixXd& x, double epsilon, int k) {
  const Eigen::Index n = x.rows();
  if (epsilon <= 0) throw std::invalid_argument("dmaps: epsilon > 0");
  if (n < k + 1) throw std::invalid_argument("dmaps: need N >= k + 1");

  Eigen::MatrixXd a = (-pairwise_sq_dists(x) / (2.0 * epsilon)).array().exp();
  Eigen::VectorXd p = a.rowwise().sum();
  Eigen::MatrixXd abar = a.array() / (p * p.transpose()).array();
  Eigen::VectorXd d = abar.rowwise().sum();

  // Symmetric conjugate D^{-1/2} Abar D^{-1/2} shares W's spectrum; its
  // eigenvectors back-transform through D^{-1/2}.
  Eigen::VectorXd dsqrt_inv = d.array().rsqrt();
  Eigen::MatrixXd sym =
      (abar.array().colwise() * dsqrt_inv.array()).rowwise() * dsqrt_inv.transpose().array();
  // Enforce exact symmetry against rounding.
  sym = 0.5 * (sym + sym.transpose().eval());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("dmaps: eigensolver failed (n = " + std::to_string(n) +
                             ", epsilon = " + std::to_string(epsilon) + ")");
  // Ascending order from Eigen; take from the top.
  DmapEmbedding emb;
  emb.epsilon = epsilon;
  emb.training_states = x;
  emb.trivial_eigenvalue = solver.eigenvalues()[n - 1];
  emb.trivial_eigenvector = dsqrt_inv.asDiagonal() * solver.eigenvectors().col(n - 1);
  emb.eigenvalues.resize(k);
  emb.eigenvectors.resize(n, k);
  for (int i = 0; i < k; ++i) {
    emb.eigenvalues[i] = solver.eigenvalues()[n - 2 - i];
    emb.eigenvectors.col(i) = dsqrt_inv.asDiagonal() * solver.eigenvectors().col(n - 2 - i);
  }
  return emb;
}

std::vector<int> select_nonharmonic(const DmapEmbedding& emb, const NonharmonicConfig& cfg,
                                    std::vector<double>* residuals) {
  const Eigen::Index n = emb.eigenvectors.rows();
  const int k = std::min<int>(cfg.max_candidates, static_cast<int>(emb.eigenvectors.cols()));
  std::vector<int> selected;
  std::vector<double> res;
  if (k < 2) {
    for (int i = 0; i < k; ++i) {
      selected.push_back(i);
      res.push_back(1.0);
    }
    if (residuals) *residuals = res;
    return selected;  // fewer than 2 candidates: retain all
  }
  selected.push_back(0);
  res.push_back(1.0);
  for (int cand = 1; cand < k; ++cand) {
    Eigen::MatrixXd preds(n, selected.size());
    for (size_t j = 0; j < selected.size(); ++j) preds.col(j) = emb.eigenvectors.col(selected[j]);
    Eigen::VectorXd target = emb.eigenvectors.col(cand);

    Eigen::MatrixXd d2 = pairwise_sq_dists(preds);
    std::vector<double> vals;
    vals.reserve(n * (n - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) vals.push_back(d2(i, j));
    auto mid = vals.begin() + vals.size() / 2;
    std::nth_element(vals.begin(), mid, vals.end());
    const double eps_loc = *mid * cfg.bandwidth_factor;

    // Leave-one-out kernel-weighted local linear fit of target on preds.
    const Eigen::Index p = preds.cols() + 1;
    double num = 0.0, den = 0.0;
    Eigen::MatrixXd design(n, p);
    design.col(0).setOnes();
    design.rightCols(preds.cols()) = preds;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd w = (-d2.col(i) / eps_loc).array().exp();
      w[i] = 0.0;
      Eigen::MatrixXd wd = design.array().colwise() * w.array();
      Eigen::MatrixXd ata = wd.transpose() * design;
      Eigen::VectorXd atb = wd.transpose() * target;
      Eigen::VectorXd beta = ata.ldlt().solve(atb);
      const double pred = design.row(i) * beta;
      num += (target[i] - pred) * (target[i] - pred);
      den += target[i] * target[i];
    }
    const double r = std::sqrt(num / den);
    res.push_back(r);
    if (r > cfg.residual_threshold) selected.push_back(cand);
  }
  if (residuals) *residuals = res;
  return selected;
}

GhInterpolant gh_fit(const Eigen::MatrixXd& x_in, const Eigen::MatrixXd& targets,
                     double epsilon_star, double delta) {
  const Eigen::Index n = x_in.rows();
  if (n < 2) throw std::invalid_argument("gh_fit: need at least 2 points");
  if (targets.rows() != n) throw std::invalid_argument("gh_fit: target row count mismatch");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("gh_fit: delta in (0, 1)");
  if (epsilon_star <= 0) throw std::invalid_argument("gh_fit: epsilon_star > 0");

  Eigen::MatrixXd a = (-pairwise_sq_dists(x_in) / (2.0 * epsilon_star)).array().exp();
  a = 0.5 * (a + a.transpose().eval());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
  if (solver.info() != Eigen::Success) throw std::runtime_error("gh_fit: eigensolver failed");

  const double sigma0 = solver.eigenvalues()[n - 1];
  int kept = 0;
  while (kept < n && solver.eigenvalues()[n - 1 - kept] > delta * sigma0) ++kept;

  GhInterpolant gh;
  gh.epsilon_star = epsilon_star;
  gh.delta = delta;
  gh.training_inputs = x_in;
  gh.sigma.resize(kept);
  gh.psi.resize(n, kept);
  for (int i = 0; i < kept; ++i) {
    gh.sigma[i] = solver.eigenvalues()[n - 1 - i];
    gh.psi.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  gh.coefficients = gh.psi.transpose() * targets;
  return gh;
}

Eigen::MatrixXd gh_extend(const GhInterpolant& model, const Eigen::MatrixXd& x_new) {
  if (model.sigma.size() == 0) throw std::invalid_argument("gh_extend: model not fitted");
  if (x_new.cols() != model.training_inputs.cols())
    throw std::invalid_argument("gh_extend: input dimension mismatch");
  // k(x_new, x_j) for all training points.
  Eigen::VectorXd sq_train = model.training_inputs.rowwise().squaredNorm();
  Eigen::VectorXd sq_new = x_new.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = (-2.0 * x_new * model.training_inputs.transpose());
  d2.colwise() += sq_new;
  d2.rowwise() += sq_train.transpose();
  Eigen::MatrixXd kmat = (-d2.cwiseMax(0.0) / (2.0 * model.epsilon_star)).array().exp();
  // Psi_a(x_new) = sigma_a^-1 sum_j k(x_new, x_j) psi_a(x_j)
  Eigen::MatrixXd psi_new =
      (kmat * model.psi).array().rowwise() / model.sigma.transpose().array();
  return psi_new * model.coefficients;
}

Eigen::VectorXd gh_extend(const GhInterpolant& model, const Eigen::VectorXd& x_new) {
  return gh_extend(model, Eigen::MatrixXd(x_new.transpose())).row(0);
}

JacobianCheck local_jacobian_check(const Eigen::MatrixXd& from, const Eigen::MatrixXd& to,
                                   int k_neighbors, double det_tol) {
  const Eigen::Index n = from.rows();
  const Eigen::Index d = from.cols();
  if (to.rows() != n || to.cols() != d)
    throw std::invalid_argument("local_jacobian_check: shape mismatch");
  if (k_neighbors < static_cast<int>(d) + 1)
    throw std::invalid_argument("local_jacobian_check: too few neighbors");

  Eigen::MatrixXd d2 = pairwise_sq_dists(from);
  std::vector<double> dets(n);
  std::vector<Eigen::Index> idx(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k_neighbors + 1, idx.end(),
                      [&](Eigen::Index a, Eigen::Index b) { return d2(i, a) < d2(i, b); });
    Eigen::MatrixXd df(k_neighbors, d), dt(k_neighbors, d);
    int r = 0;
    for (int j = 0; j <= k_neighbors && r < k_neighbors; ++j) {
      if (idx[j] == i) continue;
      df.row(r) = from.row(idx[j]) - from.row(i);
      dt.row(r) = to.row(idx[j]) - to.row(i);
      ++r;
    }
    // Least-squares Jacobian J with dt ~ df * J^T.
    Eigen::MatrixXd jt = (df.transpose() * df).ldlt().solve(df.transpose() * dt);
    dets[i] = std::abs(jt.determinant());
  }
  JacobianCheck out;
  out.min_abs_det = *std::min_element(dets.begin(), dets.end());
  std::vector<double> sorted = dets;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  out.median_abs_det = sorted[sorted.size() / 2];
  out.fraction_nonzero =
      static_cast<double>(std::count_if(dets.begin(), dets.end(),
                                        [&](double v) { return v > det_tol; })) /
      static_cast<double>(n);
  return out;
}

static void save_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  out << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << format_double(m(i, j)) << ' ';
    out << '\n';
  }
}

static Eigen::MatrixXd load_matrix(std::istream& in) {
  Eigen::Index r, c;
  in >> r >> c;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) in >> m(i, j);
  return m;
}

void DmapEmbedding::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("DmapEmbedding: cannot write " + path);
  out << "csgm-dmap v1\n" << format_double(epsilon) << '\n';
  save_matrix(out, eigenvalues);
  save_matrix(out, eigenvectors);
  out << selected.size();
  for (int s : selected) out << ' ' << s;
  out << '\n';
  save_matrix(out, training_states);
}

DmapEmbedding DmapEmbedding::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("DmapEmbedding: cannot open " + path);
  std::string tag, ver;
  in >> tag >> ver;
  if (tag != "csgm-dmap" || ver != "v1")
    throw std::runtime_error("DmapEmbedding: unrecognized file " + path);
  DmapEmbedding e;
  in >> e.epsilon;
  e.eigenvalues = load_matrix(in);
  e.eigenvectors = load_matrix(in);
  size_t ns;
  in >> ns;
  e.selected.resize(ns);
  for (auto& s : e.selected) in >> s;
  e.training_states = load_matrix(in);
  if (!in) throw std::runtime_error("DmapEmbedding: truncated file " + path);
  return e;
}

void GhInterpolant::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("GhInterpolant: cannot write " + path);
  out << "csgm-gh v1\n" << format_double(epsilon_star) << ' ' << format_double(delta) << '\n';
  save_matrix(out, sigma);
  save_matrix(out, psi);
  save_matrix(out, coefficients);
  save_matrix(out, training_inputs);
}

GhInterpolant GhInterpolant::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("GhInterpolant: cannot open " + path);
  std::string tag, ver;
  in >> tag >> ver;
  if (tag != "csgm-gh" || ver != "v1")
    throw std::runtime_error("GhInterpolant: unrecognized file " + path);
  GhInterpolant g;
  in >> g.epsilon_star >> g.delta;
  g.sigma = load_matrix(in);
  g.psi = load_matrix(in);
  g.coefficients = load_matrix(in);
  g.training_inputs = load_matrix(in);
  if (!in) throw std::runtime_error("GhInterpolant: truncated file " + path);
  return g;
}

}  // namespace csgm
