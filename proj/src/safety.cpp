#include "gstz/safety.hpp"

#include <cmath>

namespace gstz {

namespace {

struct Rect {
  double cx, cy;       // center
  double ax, ay;       // unit axis along the length
  double hl, hw;       // half extents (inflated)
};

Rect make_rect(const VehicleState& s, const FootprintSpec& fp,
               double inflation) {
  Rect r;
  r.cx = s.x;
  r.cy = s.y;
  r.ax = std::cos(s.psi);
  r.ay = std::sin(s.psi);
  r.hl = 0.5 * fp.length + inflation;
  r.hw = 0.5 * fp.width + inflation;
  return r;
}

// Projection radius of a rect onto a unit axis.
double radius_on(const Rect& r, double ux, double uy) {
  const double along = std::abs(ux * r.ax + uy * r.ay);
  const double across = std::abs(ux * -r.ay + uy * r.ax);
  return r.hl * along + r.hw * across;
}

bool separated_on(const Rect& a, const Rect& b, double ux, double uy) {
  const double dist = std::abs((b.cx - a.cx) * ux + (b.cy - a.cy) * uy);
  return dist > radius_on(a, ux, uy) + radius_on(b, ux, uy);
}

}  // namespace

bool rectangles_overlap(const VehicleState& a, const VehicleState& b,
                        const FootprintSpec& fp, double inflation) {
  const Rect ra = make_rect(a, fp, inflation);
  const Rect rb = make_rect(b, fp, inflation);
  // Candidate axes: both rects' length and width directions.
  if (separated_on(ra, rb, ra.ax, ra.ay)) return false;
  if (separated_on(ra, rb, -ra.ay, ra.ax)) return false;
  if (separated_on(ra, rb, rb.ax, rb.ay)) return false;
  if (separated_on(ra, rb, -rb.ay, rb.ax)) return false;
  return true;
}

int safety_check(const TrajectoryPlan& plan,
                 std::span<const VehicleState> others, double dt,
                 double margin, const FootprintSpec& fp) {
  const int n = static_cast<int>(plan.states.size());
  for (int t = 0; t < n; ++t) {
    const double horizon = (t + 1) * dt;  // plan state t is (t+1) steps ahead
    for (const VehicleState& o : others) {
      VehicleState pred = o;
      pred.x += o.v * std::cos(o.psi) * horizon;
      pred.y += o.v * std::sin(o.psi) * horizon;
      if (rectangles_overlap(plan.states[t], pred, fp, margin)) {
        return t;
      }
    }
  }
  return n;
}

}  // namespace gstz
