#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace csgm {

/// Median of pairwise squared Euclidean distances, times `factor`.
double median_epsilon(const Eigen::MatrixXd& x, double factor = 1.0);

struct DmapEmbedding {
  double epsilon = 0.0;
  Eigen::VectorXd eigenvalues;   // nontrivial, descending
  Eigen::MatrixXd eigenvectors;  // N x k, trivial constant mode excluded
  std::vector<int> selected;     // non-harmonic coordinate indices (0-based)
  Eigen::MatrixXd training_states;
  double trivial_eigenvalue = 0.0;
  Eigen::VectorXd trivial_eigenvector;

  void save(const std::string& path) const;
  static DmapEmbedding load(const std::string& path);
};

/// Diffusion Maps with density normalization (A-bar = P^-1 A P^-1) and Markov
/// row normalization; top-k nontrivial eigenpairs of the row-stochastic W.
DmapEmbedding dmaps(const Eigen::MatrixXd& x, double epsilon, int k);

/// Row-stochastic Markov matrix for the given data (tests and diagnostics).
Eigen::MatrixXd dmaps_markov_matrix(const Eigen::MatrixXd& x, double epsilon);

struct NonharmonicConfig {
  double residual_threshold = 0.5;
  /// Local kernel scale as a fraction of the median squared distance in the
  /// already-selected coordinates.
  double bandwidth_factor = 0.05;
  int max_candidates = 10;
};

/// Local-linear-regression residuals r_k of each eigenvector against the
/// previously selected ones; selects r_k > threshold. The first candidate is
/// always selected (r = 1 by convention).
std::vector<int> select_nonharmonic(const DmapEmbedding& emb,
                                    const NonharmonicConfig& cfg = {},
                                    std::vector<double>* residuals = nullptr);

struct GhInterpolant {
  double epsilon_star = 0.0;
  double delta = 1e-3;
  Eigen::VectorXd sigma;         // retained eigenvalues, descending
  Eigen::MatrixXd psi;           // N x k retained eigenvectors
  Eigen::MatrixXd coefficients;  // k x p projection coefficients <f, psi>
  Eigen::MatrixXd training_inputs;

  void save(const std::string& path) const;
  static GhInterpolant load(const std::string& path);
};

/// Geometric Harmonics fit: eigendecomposition of the Gaussian kernel on
/// x_in, spectral truncation sigma_a > delta * sigma_0, projection of each
/// target column onto the retained eigenvectors.
GhInterpolant gh_fit(const Eigen::MatrixXd& x_in, const Eigen::MatrixXd& targets,
                     double epsilon_star, double delta = 1e-3);

/// Nystrom extension of the fitted targets to a new point.
Eigen::VectorXd gh_extend(const GhInterpolant& model, const Eigen::VectorXd& x_new);
Eigen::MatrixXd gh_extend(const GhInterpolant& model, const Eigen::MatrixXd& x_new);

struct JacobianCheck {
  double fraction_nonzero = 0.0;  // |det| above tolerance
  double min_abs_det = 0.0;
  double median_abs_det = 0.0;
};

/// Local linear one-to-one check between two d-dimensional coordinate sets:
/// fits a linear map on k nearest neighbors around every point and inspects
/// the Jacobian determinant.
JacobianCheck local_jacobian_check(const Eigen::MatrixXd& from, const Eigen::MatrixXd& to,
                                   int k_neighbors = 20, double det_tol = 1e-12);

}  // namespace csgm
