#include "csgm/systems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace csgm {

// ---------------------------------------------------------------------------
// Cusp
// ---------------------------------------------------------------------------

SampleSet cusp_sample(const CuspSpec& spec, std::uint64_t seed) {
  if (spec.n_samples < 1) throw std::invalid_argument("cusp_sample: n_samples >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(spec.x_min, spec.x_max);
  std::uniform_real_distribution<double> ul(spec.lambda_min, spec.lambda_max);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<size_t> mode_pick(0, spec.mixture_modes.size() - 1);

  SampleSet out;
  out.states.resize(spec.n_samples, 3);
  out.state_names = {"x", "lambda", "mu"};
  for (int i = 0; i < spec.n_samples; ++i) {
    const double x = ux(rng);
    double lam;
    if (spec.lambda_dist == LambdaDistribution::Uniform) {
      lam = ul(rng);
    } else {
      do {
        lam = spec.mixture_modes[mode_pick(rng)] + spec.mixture_sigma * normal(rng);
      } while (lam < spec.lambda_min || lam > spec.lambda_max);
    }
    out.states(i, 0) = x;
    out.states(i, 1) = lam;
    out.states(i, 2) = x * x * x - lam * x;
  }
  return out;
}

std::vector<double> cusp_roots(double lambda, double mu) {
  // Roots of x^3 - lambda x - mu = 0 (depressed cubic, p = -lambda, q = -mu).
  const double p = -lambda;
  const double q = -mu;
  const double disc = -4.0 * p * p * p - 27.0 * q * q;
  std::vector<double> roots;
  if (disc > 0) {
    // Three real roots, trigonometric form.
    const double m = 2.0 * std::sqrt(-p / 3.0);
    const double theta = std::acos(std::clamp(3.0 * q / (p * m), -1.0, 1.0)) / 3.0;
    for (int k = 0; k < 3; ++k)
      roots.push_back(m * std::cos(theta - 2.0 * std::numbers::pi * k / 3.0));
  } else {
    // One real root (Cardano); disc == 0 with p != 0 gives a double root.
    const double half_q = q / 2.0;
    const double s = std::sqrt(std::max(0.0, half_q * half_q + p * p * p / 27.0));
    const double u = std::cbrt(-half_q + s);
    const double v = std::cbrt(-half_q - s);
    roots.push_back(u + v);
    if (disc == 0 && p != 0) roots.push_back(-(u + v) / 2.0);
  }
  // One Newton polish per root.
  for (double& r : roots)
    for (int it = 0; it < 3; ++it) {
      const double f = r * r * r - lambda * r - mu;
      const double df = 3.0 * r * r - lambda;
      if (std::abs(df) > 1e-14) r -= f / df;
    }
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end(),
                          [](double a, double b) { return std::abs(a - b) < 1e-9; }),
              roots.end());
  return roots;
}

// ---------------------------------------------------------------------------
// Chafee-Infante Galerkin system
// ---------------------------------------------------------------------------

namespace {

struct CiGrid {
  Eigen::MatrixXd sines;  // (M-1) x K, sin(k x_j)
  int grid_size;
  int n_modes;
};

CiGrid make_ci_grid(const CiGalerkin& sys) {
  const int m = sys.grid_size;
  const int k = sys.n_modes;
  if (m < 3 * k / 2 + 5)
    throw std::invalid_argument("CiGalerkin: grid too small for dealiased cubic");
  CiGrid g;
  g.grid_size = m;
  g.n_modes = k;
  g.sines.resize(m - 1, k);
  for (int j = 1; j < m; ++j)
    for (int kk = 1; kk <= k; ++kk)
      g.sines(j - 1, kk - 1) = std::sin(kk * j * std::numbers::pi / m);
  return g;
}

}  // namespace

Eigen::VectorXd ci_rhs(const Eigen::VectorXd& alpha, const CiGalerkin& sys) {
  if (alpha.size() != sys.n_modes) throw std::invalid_argument("ci_rhs: mode count mismatch");
  static thread_local CiGrid grid{{}, 0, 0};
  if (grid.grid_size != sys.grid_size || grid.n_modes != sys.n_modes) grid = make_ci_grid(sys);

  Eigen::VectorXd u = grid.sines * alpha;
  Eigen::VectorXd cubic_proj =
      (2.0 / sys.grid_size) * (grid.sines.transpose() * u.array().cube().matrix());
  Eigen::VectorXd out(sys.n_modes);
  for (int k = 1; k <= sys.n_modes; ++k)
    out[k - 1] = (1.0 - sys.nu * k * k) * alpha[k - 1] - cubic_proj[k - 1];
  return out;
}

static Eigen::VectorXd ci_rk4_step(const Eigen::VectorXd& a, double dt, const CiGalerkin& sys) {
  Eigen::VectorXd k1 = ci_rhs(a, sys);
  Eigen::VectorXd k2 = ci_rhs(a + 0.5 * dt * k1, sys);
  Eigen::VectorXd k3 = ci_rhs(a + 0.5 * dt * k2, sys);
  Eigen::VectorXd k4 = ci_rhs(a + dt * k3, sys);
  return a + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

std::vector<Eigen::VectorXd> ci_integrate(const Eigen::VectorXd& alpha0,
                                          const CiIntegrateConfig& cfg, const CiGalerkin& sys) {
  std::vector<Eigen::VectorXd> snaps;
  Eigen::VectorXd a = alpha0;
  double t = 0.0;
  double next_snap = cfg.burn_in;
  while (t < cfg.t_end && static_cast<int>(snaps.size()) < cfg.max_snapshots) {
    a = ci_rk4_step(a, cfg.dt, sys);
    t += cfg.dt;
    if (t >= next_snap - 1e-9) {
      snaps.push_back(a);
      next_snap += cfg.snapshot_stride;
      if (ci_rhs(a, sys).norm() < cfg.slow_threshold) break;
    }
  }
  return snaps;
}

Eigen::VectorXd ci_profile(const Eigen::VectorXd& alpha, const Eigen::VectorXd& x_grid) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(x_grid.size());
  for (int k = 1; k <= alpha.size(); ++k)
    u += alpha[k - 1] * (k * x_grid.array()).sin().matrix();
  return u;
}

SampleSet ci_dataset(int n_init, std::uint64_t seed, const CiIntegrateConfig& cfg,
                     const CiGalerkin& sys) {
  if (n_init < 1) throw std::invalid_argument("ci_dataset: n_init >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uexp(-6.0, -0.5);
  std::uniform_real_distribution<double> usign(0.0, 1.0);
  std::uniform_real_distribution<double> usmall(-0.05, 0.05);

  std::vector<Eigen::VectorXd> all;
  for (int i = 0; i < n_init; ++i) {
    Eigen::VectorXd a0(sys.n_modes);
    a0[0] = (usign(rng) < 0.5 ? -1.0 : 1.0) * std::pow(10.0, uexp(rng));
    a0[1] = (usign(rng) < 0.5 ? -1.0 : 1.0) * std::pow(10.0, uexp(rng));
    for (int k = 3; k <= sys.n_modes; ++k) a0[k - 1] = usmall(rng) / k;
    auto snaps = ci_integrate(a0, cfg, sys);
    all.insert(all.end(), snaps.begin(), snaps.end());
  }
  if (all.empty()) throw std::runtime_error("ci_dataset: no snapshots collected");
  SampleSet out;
  out.states.resize(all.size(), sys.n_modes);
  for (size_t i = 0; i < all.size(); ++i) out.states.row(i) = all[i].transpose();
  for (int k = 1; k <= sys.n_modes; ++k) out.state_names.push_back("a" + std::to_string(k));
  return out;
}

// ---------------------------------------------------------------------------
// Plug-flow reactor
// ---------------------------------------------------------------------------

namespace {

// Arrhenius factor with a clipped exponent so diverged Newton trials stay
// finite.
double arrhenius(double x2, double gamma) {
  const double e = x2 / (1.0 + x2 / gamma);
  return std::exp(std::clamp(e, -50.0, 50.0));
}

double arrhenius_dx2(double x2, double gamma) {
  const double e = x2 / (1.0 + x2 / gamma);
  if (e <= -50.0 || e >= 50.0) return 0.0;
  const double de = 1.0 / ((1.0 + x2 / gamma) * (1.0 + x2 / gamma));
  return std::exp(e) * de;
}

}  // namespace

Eigen::VectorXd pfr_rhs(const Eigen::VectorXd& state, const PfrSpec& spec, double damkohler) {
  const int n = spec.n_z;
  if (state.size() != 2 * n) throw std::invalid_argument("pfr_rhs: state size mismatch");
  const double h = 1.0 / (n - 1);
  const double pe = spec.peclet;
  Eigen::VectorXd out(2 * n);
  for (int f = 0; f < 2; ++f) {
    const auto x = state.segment(f * n, n);
    for (int i = 0; i < n; ++i) {
      // Ghost nodes: inlet dx/dz = Pe x, outlet dx/dz = 0.
      const double xm = (i == 0) ? x[1] - 2.0 * h * pe * x[0] : x[i - 1];
      const double xp = (i == n - 1) ? x[n - 2] : x[i + 1];
      const double diff = (xp - 2.0 * x[i] + xm) / (h * h) / pe;
      const double conv = (xp - xm) / (2.0 * h);
      const double ex = arrhenius(state[n + i], spec.activation_ratio);
      const double rate = damkohler * (1.0 - state[i]) * ex;
      if (f == 0)
        out[i] = diff - conv + rate;
      else
        out[n + i] = diff - conv - spec.heat_transfer * x[i] + spec.adiabatic_rise * rate;
    }
  }
  return out;
}

Eigen::MatrixXd pfr_jacobian(const Eigen::VectorXd& state, const PfrSpec& spec,
                             double damkohler) {
  const int n = spec.n_z;
  const double h = 1.0 / (n - 1);
  const double pe = spec.peclet;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * n, 2 * n);

  // Transport operator (diffusion + convection with ghost-node BCs), shared by
  // both fields.
  auto add_transport = [&](int base) {
    for (int i = 0; i < n; ++i) {
      const int row = base + i;
      jac(row, base + i) += -2.0 / (h * h) / pe;
      if (i == 0) {
        // xm = x1 - 2 h Pe x0
        jac(row, base + 1) += 2.0 / (h * h) / pe;
        jac(row, base + 0) += -2.0 * h * pe / (h * h) / pe;
        jac(row, base + 0) -= pe;  // conv = (xp - xm)/(2h) = Pe x0
      } else if (i == n - 1) {
        jac(row, base + n - 2) += 2.0 / (h * h) / pe;
        // conv = 0 at the outlet
      } else {
        jac(row, base + i + 1) += 1.0 / (h * h) / pe - 1.0 / (2.0 * h);
        jac(row, base + i - 1) += 1.0 / (h * h) / pe + 1.0 / (2.0 * h);
      }
    }
  };
  add_transport(0);
  add_transport(n);

  for (int i = 0; i < n; ++i) {
    const double x1 = state[i];
    const double x2 = state[n + i];
    const double ex = arrhenius(x2, spec.activation_ratio);
    const double dex = arrhenius_dx2(x2, spec.activation_ratio);
    jac(i, i) += -damkohler * ex;
    jac(i, n + i) += damkohler * (1.0 - x1) * dex;
    jac(n + i, i) += -spec.adiabatic_rise * damkohler * ex;
    jac(n + i, n + i) +=
        -spec.heat_transfer + spec.adiabatic_rise * damkohler * (1.0 - x1) * dex;
  }
  return jac;
}

NewtonResult pfr_newton(const Eigen::VectorXd& guess, const PfrSpec& spec, double damkohler,
                        double tol, int max_iter) {
  NewtonResult res;
  res.state = guess;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd f = pfr_rhs(res.state, spec, damkohler);
    res.residual = f.lpNorm<Eigen::Infinity>();
    if (res.residual < tol) {
      res.converged = true;
      return res;
    }
    Eigen::VectorXd step = pfr_jacobian(res.state, spec, damkohler).partialPivLu().solve(-f);
    if (!step.allFinite()) return res;
    const double n0 = f.norm();
    double lam = 1.0;
    while (lam > 1e-6) {
      Eigen::VectorXd trial = res.state + lam * step;
      if (pfr_rhs(trial, spec, damkohler).norm() < (1.0 - 0.25 * lam) * n0 + 1e-14) break;
      lam *= 0.5;
    }
    res.state += lam * step;
  }
  Eigen::VectorXd f = pfr_rhs(res.state, spec, damkohler);
  res.residual = f.lpNorm<Eigen::Infinity>();
  res.converged = res.residual < tol;
  return res;
}

Eigen::VectorXd pfr_integrate(const Eigen::VectorXd& state, const PfrSpec& spec, double damkohler,
                              double t_end, double dt) {
  Eigen::VectorXd s = state;
  const long steps = static_cast<long>(t_end / dt);
  for (long i = 0; i < steps; ++i) s += dt * pfr_rhs(s, spec, damkohler);
  return s;
}

namespace {

// Upper (ignited) branch profile at da_hi, obtained by time integration from
// a hot initial profile and a Newton polish.
Eigen::VectorXd pfr_ignited_state(const PfrSpec& spec, double da_hi) {
  const int n = spec.n_z;
  Eigen::VectorXd hot(2 * n);
  for (int i = 0; i < n; ++i) {
    const double z = static_cast<double>(i) / (n - 1);
    hot[i] = 1.0 - std::exp(-5.0 * z);
    hot[n + i] = 3.0;
  }
  Eigen::VectorXd s = pfr_integrate(hot, spec, da_hi, 3.0);
  auto res = pfr_newton(s, spec, da_hi);
  if (!res.converged)
    throw std::runtime_error("pfr: failed to locate the ignited branch at Da = " +
                             std::to_string(da_hi));
  return res.state;
}

bool profiles_match(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double tol = 1e-4) {
  return (a - b).lpNorm<Eigen::Infinity>() < tol;
}

// Lower branch by natural continuation from Da = 0 (where the zero profile is
// exact).
Eigen::VectorXd pfr_lower_state(const PfrSpec& spec, double damkohler, double step = 0.0025) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(2 * spec.n_z);
  double da = 0.0;
  while (da < damkohler - 1e-12) {
    da = std::min(da + step, damkohler);
    auto res = pfr_newton(s, spec, da);
    if (!res.converged)
      throw std::runtime_error("pfr: lower-branch continuation failed at Da = " +
                               std::to_string(da));
    s = res.state;
  }
  return s;
}

}  // namespace

std::vector<Eigen::VectorXd> pfr_steady_states(const PfrSpec& spec, double damkohler) {
  std::vector<Eigen::VectorXd> states;
  states.push_back(pfr_lower_state(spec, damkohler));

  // Upper branch: continue the ignited state down from a Da where it is the
  // global attractor.
  const double da_hi = std::max(0.12, damkohler);
  Eigen::VectorXd upper = pfr_ignited_state(spec, da_hi);
  bool have_upper = true;
  double da = da_hi;
  const double step = 0.0025;
  while (da > damkohler + 1e-12) {
    da = std::max(da - step, damkohler);
    auto res = pfr_newton(upper, spec, da);
    if (!res.converged || profiles_match(res.state, states[0])) {
      have_upper = false;
      break;
    }
    upper = res.state;
  }
  if (have_upper && !profiles_match(upper, states[0])) states.push_back(upper);

  // Middle branch: Newton from interpolations between lower and upper.
  if (states.size() == 2) {
    for (double c : {0.15, 0.2, 0.25, 0.3, 0.4}) {
      Eigen::VectorXd guess = (1.0 - c) * states[0] + c * states[1];
      auto res = pfr_newton(guess, spec, damkohler);
      if (!res.converged) continue;
      bool known = false;
      for (const auto& s : states)
        if (profiles_match(res.state, s)) known = true;
      if (!known) states.push_back(res.state);
    }
  }
  std::sort(states.begin(), states.end(),
            [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a[0] < b[0]; });
  return states;
}

double pfr_fold_location(const PfrSpec& spec, double da_hi, double da_lo, double step) {
  Eigen::VectorXd upper = pfr_ignited_state(spec, da_hi);
  // Track the extinguished branch as far up as it exists (it dies at its own
  // ignition fold below da_hi); carry the last converged profile beyond that.
  Eigen::VectorXd lower = Eigen::VectorXd::Zero(2 * spec.n_z);
  for (double d = step; d < da_hi + 1e-12; d += step) {
    auto res = pfr_newton(lower, spec, std::min(d, da_hi));
    if (!res.converged) break;
    lower = res.state;
  }
  double da = da_hi;
  while (da > da_lo + 1e-12) {
    const double da_next = da - step;
    auto low = pfr_newton(lower, spec, da_next);
    if (low.converged) lower = low.state;
    auto res = pfr_newton(upper, spec, da_next);
    if (!res.converged || profiles_match(res.state, lower)) return da - 0.5 * step;
    upper = res.state;
    da = da_next;
  }
  throw std::runtime_error("pfr_fold_location: no fold found in [" + std::to_string(da_lo) +
                           ", " + std::to_string(da_hi) + "]");
}

PfrDataset pfr_dataset(const std::vector<double>& da_values, const PfrSpec& spec) {
  if (da_values.empty()) throw std::invalid_argument("pfr_dataset: empty Da grid");
  std::vector<double> grid = da_values;
  std::sort(grid.begin(), grid.end());
  const size_t ng = grid.size();
  const double step = 0.0025;

  // One upward continuation sweep for the lower branch, recording at grid
  // values until the ignition fold kills it.
  std::vector<Eigen::VectorXd> lower(ng), upper(ng);
  std::vector<bool> have_lower(ng, false), have_upper(ng, false);
  {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(2 * spec.n_z);
    double da = 0.0;
    for (size_t gi = 0; gi < ng; ++gi) {
      bool failed = false;
      while (da < grid[gi] - 1e-12) {
        da = std::min(da + step, grid[gi]);
        auto res = pfr_newton(s, spec, da);
        if (!res.converged) {
          failed = true;
          break;
        }
        s = res.state;
      }
      if (failed) break;
      lower[gi] = s;
      have_lower[gi] = true;
    }
  }

  // One downward sweep for the ignited branch, stopping at the extinction
  // fold (Newton failure or collapse onto the lower branch).
  {
    const double da_hi = std::max(0.12, grid.back());
    Eigen::VectorXd s = pfr_ignited_state(spec, da_hi);
    double da = da_hi;
    for (size_t gi = ng; gi-- > 0;) {
      bool failed = false;
      while (da > grid[gi] + 1e-12) {
        da = std::max(da - step, grid[gi]);
        auto res = pfr_newton(s, spec, da);
        if (!res.converged) {
          failed = true;
          break;
        }
        s = res.state;
      }
      if (failed) break;
      if (have_lower[gi] && profiles_match(s, lower[gi])) break;
      upper[gi] = s;
      have_upper[gi] = true;
    }
  }

  std::vector<double> das;
  std::vector<Eigen::VectorXd> profiles;
  for (size_t gi = 0; gi < ng; ++gi) {
    std::vector<Eigen::VectorXd> branches;
    if (have_lower[gi]) branches.push_back(lower[gi]);
    if (have_upper[gi]) branches.push_back(upper[gi]);
    if (have_lower[gi] && have_upper[gi]) {
      for (double c : {0.15, 0.2, 0.25, 0.3, 0.4}) {
        Eigen::VectorXd guess = (1.0 - c) * lower[gi] + c * upper[gi];
        auto res = pfr_newton(guess, spec, grid[gi]);
        if (!res.converged) continue;
        bool known = false;
        for (const auto& b : branches)
          if (profiles_match(res.state, b)) known = true;
        if (!known) {
          branches.push_back(res.state);
          break;
        }
      }
    }
    for (const auto& b : branches) {
      das.push_back(grid[gi]);
      profiles.push_back(b);
    }
  }
  if (das.empty()) throw std::runtime_error("pfr_dataset: no steady states found on the grid");
  PfrDataset out;
  const int n = spec.n_z;
  out.set.states.resize(das.size(), 1);
  out.set.state_names = {"x1_0"};
  Eigen::MatrixXd labels(das.size(), 1);
  out.profiles.resize(das.size(), n);
  out.full_states.resize(das.size(), 2 * n);
  for (size_t i = 0; i < das.size(); ++i) {
    out.set.states(i, 0) = profiles[i][0];
    labels(i, 0) = das[i];
    out.profiles.row(i) = profiles[i].head(n).transpose();
    out.full_states.row(i) = profiles[i].transpose();
  }
  out.set.labels = labels;
  out.set.label_names = {"Da"};
  return out;
}

}  // namespace csgm
