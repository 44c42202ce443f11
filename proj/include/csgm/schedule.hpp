#pragma once

#include <cmath>

namespace csgm {

enum class ScheduleKind { Linear, VariancePreserving };

/// Forward-SDE noise schedule. The forward process perturbs data as
/// x_t = alpha(t) x_0 + beta(t) z with z ~ N(0, I). drift_coef is
/// b(t) = d log alpha / dt and g2 is the squared diffusion
/// g^2(t) = d beta^2/dt - 2 b(t) beta^2(t).
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::Linear;
  double beta_min = 1e-3;  // variance-preserving rate at t = 0
  double beta_d = 3.0;     // variance-preserving rate slope
  // The linear schedule is singular at t = 1; drift_coef and g2 evaluate
  // at min(t, 1 - coef_clamp).
  double coef_clamp = 1e-3;

  double alpha(double t) const;
  double beta2(double t) const;
  double beta(double t) const { return std::sqrt(beta2(t)); }
  double drift_coef(double t) const;
  double g2(double t) const;

  static NoiseSchedule linear();
  static NoiseSchedule variance_preserving(double beta_min = 1e-3, double beta_d = 3.0);

  /// Variance-preserving rate beta_min + beta_d * t.
  double vp_rate(double t) const { return beta_min + beta_d * t; }
};

}  // namespace csgm
