#include "rationlab/demand.hpp"

#include <algorithm>
#include <cmath>

#include "rationlab/numeric.hpp"
#include "rationlab/tolerances.hpp"

namespace rationlab {

namespace {

void check_domain(double q, double qmax, const char* op) {
  if (!(q >= 0.0) || q > qmax * (1.0 + 1e-12) + 1e-12)
    throw ValidationError(std::string(op) + ": quantity outside [0, q_max]");
}

double linear_raw(const LinearAnchored& c, double q) {
  return c.anchor_p + c.slope * (q - c.anchor_q);
}

// Quantity where the raw affine part crosses zero (may be +inf conceptually;
// callers clamp against their own domain).
double linear_zero_crossing(const LinearAnchored& c) {
  return c.anchor_q - c.anchor_p / c.slope;
}

double hill_eval(const TruncatedHill& c, double q) {
  double sh = std::pow(c.scale, c.exponent);
  return c.choke * sh / (sh + std::pow(q, c.exponent));
}

}  // namespace

void validate(const DemandCurve& curve) {
  if (const auto* lin = std::get_if<LinearAnchored>(&curve)) {
    if (!(lin->slope < 0.0)) throw ValidationError("LinearAnchored: slope must be negative");
    if (!(lin->anchor_p >= 0.0)) throw ValidationError("LinearAnchored: anchor price < 0");
  } else if (const auto* hill = std::get_if<TruncatedHill>(&curve)) {
    if (!(hill->choke > 0.0)) throw ValidationError("TruncatedHill: choke must be positive");
    if (!(hill->scale > 0.0)) throw ValidationError("TruncatedHill: scale must be positive");
    if (!(hill->exponent >= 1.0)) throw ValidationError("TruncatedHill: exponent must be >= 1");
  } else {
    const auto& knots = std::get<PiecewiseAffine>(curve).knots;
    if (knots.size() < 2) throw ValidationError("PiecewiseAffine: need at least two knots");
    if (knots.front().first != 0.0)
      throw ValidationError("PiecewiseAffine: first knot must be at q = 0");
    for (std::size_t i = 1; i < knots.size(); ++i) {
      if (!(knots[i].first > knots[i - 1].first))
        throw ValidationError("PiecewiseAffine: knot quantities must strictly increase");
      if (knots[i].second > knots[i - 1].second + 1e-15)
        throw ValidationError("PiecewiseAffine: knot prices must be nonincreasing");
    }
    if (knots.back().second < -1e-15) throw ValidationError("PiecewiseAffine: negative price");
  }
}

double domain_max(const DemandCurve& curve) {
  if (const auto* pwa = std::get_if<PiecewiseAffine>(&curve)) return pwa->knots.back().first;
  return std::numeric_limits<double>::infinity();
}

double eval_inverse_demand(const DemandCurve& curve, double q) {
  check_domain(q, domain_max(curve), "eval_inverse_demand");
  if (const auto* lin = std::get_if<LinearAnchored>(&curve)) {
    return std::max(0.0, linear_raw(*lin, q));
  }
  if (const auto* hill = std::get_if<TruncatedHill>(&curve)) {
    return hill_eval(*hill, q);
  }
  const auto& knots = std::get<PiecewiseAffine>(curve).knots;
  auto it = std::upper_bound(knots.begin(), knots.end(), q,
                             [](double x, const auto& k) { return x < k.first; });
  if (it == knots.begin()) return knots.front().second;
  if (it == knots.end()) return knots.back().second;
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  double t = (q - lo.first) / (hi.first - lo.first);
  return lo.second + t * (hi.second - lo.second);
}

double generalized_inverse(const DemandCurve& curve, double p, double q_max) {
  double dom = std::min(q_max, domain_max(curve));
  if (const auto* lin = std::get_if<LinearAnchored>(&curve)) {
    double p0 = std::max(0.0, linear_raw(*lin, 0.0));
    if (p >= p0) return 0.0;
    if (p < 0.0) return dom;
    // inf{x : P(x) <= p}; on the clamped tail P == 0, so p = 0 inverts to the crossing.
    double x = (p > 0.0) ? lin->anchor_q + (p - lin->anchor_p) / lin->slope
                         : linear_zero_crossing(*lin);
    return std::clamp(x, 0.0, dom);
  }
  if (const auto* hill = std::get_if<TruncatedHill>(&curve)) {
    if (p >= hill->choke) return 0.0;
    if (p <= 0.0) return dom;  // P > 0 everywhere: set empty below zero
    double x = hill->scale * std::pow((hill->choke - p) / p, 1.0 / hill->exponent);
    return std::min(x, dom);
  }
  const auto& knots = std::get<PiecewiseAffine>(curve).knots;
  if (p >= knots.front().second) return 0.0;
  if (p < knots.back().second) return dom;
  // Walk segments; left-continuity puts flat runs at their left endpoint.
  for (std::size_t i = 1; i < knots.size(); ++i) {
    const auto& [q0, v0] = knots[i - 1];
    const auto& [q1, v1] = knots[i];
    if (p >= v1) {
      if (v0 == v1) return std::min(q0, dom);
      double x = q0 + (p - v0) * (q1 - q0) / (v1 - v0);
      return std::min(x, dom);
    }
  }
  return dom;
}

double gross_surplus(const DemandCurve& curve, double a, double b) {
  double dom = domain_max(curve);
  check_domain(a, dom, "gross_surplus");
  check_domain(b, dom, "gross_surplus");
  if (a == b) return 0.0;
  double sign = 1.0;
  if (b < a) {
    std::swap(a, b);
    sign = -1.0;
  }
  if (const auto* lin = std::get_if<LinearAnchored>(&curve)) {
    // Affine above the zero crossing, identically zero past it.
    auto affine_int = [&](double x0, double x1) {
      double m0 = linear_raw(*lin, x0), m1 = linear_raw(*lin, x1);
      return 0.5 * (m0 + m1) * (x1 - x0);
    };
    double xc = linear_zero_crossing(*lin);
    double r;
    if (b <= xc)
      r = affine_int(a, b);
    else if (a >= xc)
      r = 0.0;
    else
      r = affine_int(a, xc);
    return sign * r;
  }
  if (const auto* hill = std::get_if<TruncatedHill>(&curve)) {
    if (hill->exponent == 2.0) {
      // arctan antiderivative, exact for the common case
      double s = hill->scale;
      double r = hill->choke * s * (std::atan(b / s) - std::atan(a / s));
      return sign * r;
    }
    auto f = [&](double x) { return hill_eval(*hill, x); };
    return sign * integrate_adaptive(f, a, b, tol::quadrature);
  }
  const auto& knots = std::get<PiecewiseAffine>(curve).knots;
  double total = 0.0;
  for (std::size_t i = 1; i < knots.size() && knots[i - 1].first < b; ++i) {
    double lo = std::max(a, knots[i - 1].first);
    double hi = std::min(b, knots[i].first);
    if (hi <= lo) continue;
    double plo = eval_inverse_demand(curve, lo);
    double phi = eval_inverse_demand(curve, hi);
    total += 0.5 * (plo + phi) * (hi - lo);
  }
  return sign * total;
}

double consumer_surplus(const DemandCurve& curve, double q, double price_paid) {
  return gross_surplus(curve, 0.0, q) - price_paid * q;
}

}  // namespace rationlab
