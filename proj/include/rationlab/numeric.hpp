#pragma once

#include <cmath>
#include <functional>
#include <utility>

#include "rationlab/errors.hpp"

namespace rationlab {

// Bisection for a nonincreasing function f on [lo, hi] with f(lo) >= 0 >= f(hi).
// Returns the point where f crosses zero, to within xtol on the bracket.
inline double bisect_decreasing(const std::function<double(double)>& f, double lo, double hi,
                                double xtol, int max_iter = 200) {
  double flo = f(lo), fhi = f(hi);
  if (flo < 0.0 && flo > -1e-13) return lo;
  if (fhi > 0.0 && fhi < 1e-13) return hi;
  if (flo < 0.0 || fhi > 0.0) throw SolverError("bisect_decreasing: root not bracketed");
  for (int i = 0; i < max_iter && (hi - lo) > xtol; ++i) {
    double mid = 0.5 * (lo + hi);
    if (f(mid) >= 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Golden-section maximization on [a, b]. The caller is responsible for the
// bracket containing a single local maximum; we pre-scan to be safe on pieces
// that are only piecewise smooth.
inline std::pair<double, double> golden_max(const std::function<double(double)>& f, double a,
                                            double b, double xtol, int prescan = 9) {
  if (b < a) std::swap(a, b);
  // Coarse scan first: pick the best grid cell, then refine inside it.
  double best_x = a, best_f = f(a);
  for (int i = 1; i <= prescan; ++i) {
    double x = a + (b - a) * i / prescan;
    double v = f(x);
    if (v > best_f) {
      best_f = v;
      best_x = x;
    }
  }
  double cell = (b - a) / prescan;
  double lo = std::max(a, best_x - cell), hi = std::min(b, best_x + cell);
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - (hi - lo) * invphi;
  double d = lo + (hi - lo) * invphi;
  double fc = f(c), fd = f(d);
  while (hi - lo > xtol) {
    if (fc > fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - (hi - lo) * invphi;
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + (hi - lo) * invphi;
      fd = f(d);
    }
  }
  double x = 0.5 * (lo + hi);
  double v = f(x);
  if (best_f > v) return {best_x, best_f};
  return {x, v};
}

// Adaptive Simpson quadrature with absolute error control.
namespace detail {
inline double simpson(double a, double fa, double b, double fb, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adapt(const std::function<double(double)>& f, double a, double fa, double b,
                    double fb, double m, double fm, double whole, double eps, int depth) {
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = simpson(a, fa, m, fm, flm);
  double right = simpson(m, fm, b, fb, frm);
  double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
  return adapt(f, a, fa, m, fm, lm, flm, left, 0.5 * eps, depth - 1) +
         adapt(f, m, fm, b, fb, rm, frm, right, 0.5 * eps, depth - 1);
}
}  // namespace detail

inline double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                                 double eps) {
  if (a == b) return 0.0;
  double sign = 1.0;
  if (b < a) {
    std::swap(a, b);
    sign = -1.0;
  }
  double m = 0.5 * (a + b);
  double fa = f(a), fb = f(b), fm = f(m);
  double whole = detail::simpson(a, fa, b, fb, fm);
  return sign * detail::adapt(f, a, fa, b, fb, m, fm, whole, eps, 48);
}

}  // namespace rationlab
