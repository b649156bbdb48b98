#pragma once

#include <limits>
#include <utility>
#include <variant>
#include <vector>

#include "rationlab/errors.hpp"

namespace rationlab {

// Linear inverse demand through an anchor point: P(q) = anchor_p + slope * (q - anchor_q),
// clamped below at zero. slope < 0. P(0) = anchor_p - slope * anchor_q is finite.
struct LinearAnchored {
  double anchor_q = 1.0;
  double anchor_p = 1.0;
  double slope = -1.0;
};

// Hill (sigmoidal) inverse demand with a finite choke price:
//   P(q) = choke * scale^exponent / (scale^exponent + q^exponent).
// P(0) = choke exactly; strictly decreasing and smooth on [0, inf).
struct TruncatedHill {
  double choke = 4.0;
  double scale = 1.0;
  double exponent = 2.0;
};

// Continuous piecewise-affine inverse demand given by knots with strictly
// increasing quantities and nonincreasing prices. The first knot must sit at
// q = 0 so P(0) is defined; the domain ends at the last knot.
struct PiecewiseAffine {
  std::vector<std::pair<double, double>> knots;  // (q, p)
};

using DemandCurve = std::variant<LinearAnchored, TruncatedHill, PiecewiseAffine>;

// Validates the variant invariants; throws ValidationError.
void validate(const DemandCurve& curve);

// Largest quantity the curve is defined on (infinite for the closed-form variants).
double domain_max(const DemandCurve& curve);

// P(q). Domain error if q < 0 or q beyond the curve domain.
double eval_inverse_demand(const DemandCurve& curve, double q);

// Left-continuous generalized inverse:
//   q(p) = inf{ x in [0, q_max] : P(x) <= p }, or q_max when the set is empty.
// Total on p >= 0 (and tolerant of p < 0, which simply yields q_max).
double generalized_inverse(const DemandCurve& curve, double p,
                           double q_max = std::numeric_limits<double>::infinity());

// Signed integral of P over [a, b]. Closed form for the affine variants,
// adaptive quadrature (abs error <= tol::quadrature) for TruncatedHill.
double gross_surplus(const DemandCurve& curve, double a, double b);

// gross_surplus(0, q) - price_paid * q.
double consumer_surplus(const DemandCurve& curve, double q, double price_paid);

}  // namespace rationlab
