#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "csgm/sample_set.hpp"

namespace csgm {

// ---------------------------------------------------------------------------
// Cusp bifurcation surface: dx/dt = -x^3 + lambda x + mu.
// ---------------------------------------------------------------------------

enum class LambdaDistribution { Uniform, GaussianMixture };

struct CuspSpec {
  int n_samples = 20000;
  double x_min = -2.0, x_max = 2.0;
  double lambda_min = -2.5, lambda_max = 2.5;
  LambdaDistribution lambda_dist = LambdaDistribution::Uniform;
  std::vector<double> mixture_modes = {-1.0, 1.0};
  double mixture_sigma = 0.5;
};

/// Rows satisfy mu = x^3 - lambda x exactly. Columns (x, lambda, mu).
SampleSet cusp_sample(const CuspSpec& spec, std::uint64_t seed);

/// Real roots of -x^3 + lambda x + mu = 0, sorted ascending.
std::vector<double> cusp_roots(double lambda, double mu);

// ---------------------------------------------------------------------------
// Chafee-Infante reaction-diffusion, Galerkin-projected onto sin(kx).
// ---------------------------------------------------------------------------

struct CiGalerkin {
  double nu = 0.16;
  int n_modes = 10;
  int grid_size = 48;  // pseudospectral grid; exact for the cubic up to 3K < 2M
};

/// Right-hand side of d alpha / dt for the sine-Galerkin system: linear part
/// (1 - nu k^2) alpha_k minus the sine projection of u^3 evaluated
/// pseudospectrally on a dealiased grid.
Eigen::VectorXd ci_rhs(const Eigen::VectorXd& alpha, const CiGalerkin& sys = {});

struct CiIntegrateConfig {
  double dt = 0.01;
  double t_end = 120.0;
  double burn_in = 14.0;
  double snapshot_stride = 0.4;
  double slow_threshold = 1e-3;  // trajectory stops once ||rhs|| drops below
  int max_snapshots = 24;
};

/// Classic fourth-order Runge-Kutta; returns post-burn-in snapshots, ending
/// early once the trajectory settles below the slow threshold.
std::vector<Eigen::VectorXd> ci_integrate(const Eigen::VectorXd& alpha0,
                                          const CiIntegrateConfig& cfg,
                                          const CiGalerkin& sys = {});

/// u(x) = sum_k alpha_k sin(k x) on the given grid.
Eigen::VectorXd ci_profile(const Eigen::VectorXd& alpha, const Eigen::VectorXd& x_grid);

/// Snapshot dataset near the inertial manifold; columns a1..a10. Initial
/// conditions spread the two slow modes log-uniformly in magnitude so
/// trajectories arrive on the manifold at all phases of the slow dynamics.
SampleSet ci_dataset(int n_init, std::uint64_t seed, const CiIntegrateConfig& cfg = {},
                     const CiGalerkin& sys = {});

// ---------------------------------------------------------------------------
// Plug-flow reactor, axial-dispersion model with Danckwerts inlet.
// ---------------------------------------------------------------------------

struct PfrSpec {
  double peclet = 5.0;
  double adiabatic_rise = 12.0;  // B
  double heat_transfer = 0.5;    // beta
  double activation_ratio = 20.0;  // gamma
  int n_z = 200;
};

/// Method-of-lines right-hand side on a uniform grid; state is
/// [x1(z_0..z_n-1), x2(z_0..z_n-1)].
Eigen::VectorXd pfr_rhs(const Eigen::VectorXd& state, const PfrSpec& spec, double damkohler);

Eigen::MatrixXd pfr_jacobian(const Eigen::VectorXd& state, const PfrSpec& spec, double damkohler);

struct NewtonResult {
  Eigen::VectorXd state;
  bool converged = false;
  double residual = 0.0;
};

/// Damped Newton with an Armijo backtracking line search on ||F||.
NewtonResult pfr_newton(const Eigen::VectorXd& guess, const PfrSpec& spec, double damkohler,
                        double tol = 1e-10, int max_iter = 60);

/// Explicit time integration (stiff diffusion limit respected by the caller's
/// choice of dt).
Eigen::VectorXd pfr_integrate(const Eigen::VectorXd& state, const PfrSpec& spec, double damkohler,
                              double t_end, double dt = 2e-5);

/// All steady profiles at the given Damkohler number, found by natural
/// continuation of the lower and upper branches plus interpolated Newton
/// starts for the middle one; de-duplicated and residual-verified, sorted by
/// inlet conversion x1(0).
std::vector<Eigen::VectorXd> pfr_steady_states(const PfrSpec& spec, double damkohler);

/// Damkohler value at which the upper branch disappears (extinction fold),
/// bracketed by downward continuation with the given step.
double pfr_fold_location(const PfrSpec& spec, double da_hi = 0.12, double da_lo = 0.02,
                         double step = 0.0025);

struct PfrDataset {
  SampleSet set;              // states: x1_0; labels: Da
  Eigen::MatrixXd profiles;   // one x1(z) profile per row
  Eigen::MatrixXd full_states;  // full [x1; x2] steady state per row
};

/// Steady-state dataset over a Damkohler grid: one row per (branch, Da).
PfrDataset pfr_dataset(const std::vector<double>& da_values, const PfrSpec& spec);

}  // namespace csgm
