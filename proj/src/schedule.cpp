#include "csgm/schedule.hpp"

#include <algorithm>

namespace csgm {

NoiseSchedule NoiseSchedule::linear() { return NoiseSchedule{ScheduleKind::Linear}; }

NoiseSchedule NoiseSchedule::variance_preserving(double bmin, double bd) {
  NoiseSchedule s;
  s.kind = ScheduleKind::VariancePreserving;
  s.beta_min = bmin;
  s.beta_d = bd;
  return s;
}

// Integral of the variance-preserving rate over [0, t].
static double vp_rate_integral(const NoiseSchedule& s, double t) {
  return s.beta_min * t + 0.5 * s.beta_d * t * t;
}

double NoiseSchedule::alpha(double t) const {
  if (kind == ScheduleKind::Linear) return 1.0 - t;
  return std::exp(-0.5 * vp_rate_integral(*this, t));
}

double NoiseSchedule::beta2(double t) const {
  if (kind == ScheduleKind::Linear) return t;
  return 1.0 - std::exp(-vp_rate_integral(*this, t));
}

double NoiseSchedule::drift_coef(double t) const {
  if (kind == ScheduleKind::Linear) {
    double tc = std::min(t, 1.0 - coef_clamp);
    return -1.0 / (1.0 - tc);
  }
  return -0.5 * vp_rate(t);
}

double NoiseSchedule::g2(double t) const {
  if (kind == ScheduleKind::Linear) {
    double tc = std::min(t, 1.0 - coef_clamp);
    return 1.0 + 2.0 * tc / (1.0 - tc);
  }
  return vp_rate(t);
}

}  // namespace csgm
