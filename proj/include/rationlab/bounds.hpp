#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rationlab/demand.hpp"
#include "rationlab/market.hpp"
#include "rationlab/rng.hpp"

namespace rationlab {

// One market of the partial-identification problem: an observed quantity, an
// anchor price interval for the shadow price at that quantity, two-sided
// slope bounds on inverse demand, an optional finite choke cap, and the
// quantity domain bound.
struct BoundsMarket {
  double q_obs = 1.0;
  double anchor_lo = 1.0;  // p_bar - b_upper
  double anchor_hi = 1.0;  // p_bar - b_lower
  double g_lower = -5.0;   // g_L: steepest admissible slope
  double g_upper = -2.5;   // g_U: flattest admissible slope, g_L < g_U < 0
  std::optional<double> choke;  // M: P(0) <= M when present
  double q_max = 10.0;

  // Inverse-demand slopes map to quantity-per-price slopes of the inverse.
  double alpha() const { return 1.0 / g_upper; }  // most negative
  double beta() const { return 1.0 / g_lower; }   // least negative
  double width() const { return beta() - alpha(); }  // d_i > 0

  void validate_market() const;
};

struct BoundsProblem {
  std::vector<BoundsMarket> markets;
  double total = 0.0;    // Q_bar = sum of q_obs
  double ceiling = 0.0;  // p_bar

  void validate_problem() const;
};

enum class BoundSide { Lower, Upper };

// Quantity envelopes at price p for a market anchored at (q_obs, p0): the
// smallest and largest quantities any admissible demand could absorb. The
// full forms include the zero/q_max clamps and the choke trim.
double envelope_lower(const BoundsMarket& m, double p0, double p);
double envelope_upper(const BoundsMarket& m, double p0, double p);

// Prices at which either envelope may change slope; used for exact
// piecewise integration and the breakpoint sweep.
std::vector<double> envelope_breakpoints(const BoundsMarket& m, double p0);

// Exact integral of an envelope over [a, b] (piecewise-linear, so trapezoid
// on the breakpoint refinement is exact).
double envelope_integral(const BoundsMarket& m, double p0, bool upper, double a, double b);

// Candidate common-shadow-price set I = { p : L(p) <= total <= U(p) },
// assembled exactly from the piecewise-linear envelope sums. Throws
// ValidationError when empty. Multiple components are returned in order
// (monotone envelopes make a single component the norm).
std::vector<std::pair<double, double>> candidate_interval(const BoundsProblem& prob,
                                                          const std::vector<double>& anchors);

// Separable quadratic projection: minimize sum delta_i^2 / (2 d_i) subject to
// sum delta_i = mass and 0 <= delta_i <= cap_i, by bisection on the KKT
// multiplier with delta_i = clamp(lambda d_i, 0, cap_i).
std::pair<double, std::vector<double>> triangle_penalty(const std::vector<double>& widths,
                                                        const std::vector<double>& caps,
                                                        double mass);

struct ConditionalValue {
  double value = 0.0;
  std::vector<double> endpoints;  // per-market q_i(p) after the projection
  std::vector<double> deltas;     // per-market endpoint deviation (0 off the active set)
  double residual_mass = 0.0;     // Delta^+/- before the projection
};

// The bracketed objective of the one-dimensional reduction at a fixed
// candidate shadow price p in I: envelope integrals plus the triangle
// penalty, with the active-set case split on the sign of the residual.
ConditionalValue conditional_bound(const BoundsProblem& prob, const std::vector<double>& anchors,
                                   double p, BoundSide side);

enum class AnchorMode { Fixed, Interval };

struct BoundsDiagnostics {
  bool interiority_ok = true;   // simplified envelopes valid on traversed ranges
  bool choke_active = false;    // a choke trim shaped an envelope or anchor
  std::vector<std::string> notes;
};

struct BoundsResult {
  double phi_lower = 0.0;
  double phi_upper = 0.0;
  double p_star_lower = 0.0;
  double p_star_upper = 0.0;
  std::vector<double> anchors_lower;  // attaining anchor vector per side
  std::vector<double> anchors_upper;
  std::vector<PiecewiseAffine> extremal_lower;
  std::vector<PiecewiseAffine> extremal_upper;
  std::pair<double, double> interval_lower{0.0, 0.0};  // I at the attaining anchors
  std::pair<double, double> interval_upper{0.0, 0.0};
  BoundsDiagnostics diagnostics;
};

// Sharp bounds [phi_lower, phi_upper] on misallocation loss. Fixed mode
// evaluates at the anchor-interval midpoints; interval mode optimizes the
// anchor vector over its hyper-rectangle (corner initialization following
// the monotone per-coordinate structure, then coordinate ascent with seeded
// random-corner restarts).
BoundsResult solve_bounds(const BoundsProblem& prob, AnchorMode mode);

// The extremal inverse demand attaining a conditional bound: follows the
// relevant envelope from the anchor toward p_star, switches slope once at
// distance h = delta / d from p_star, and extends to [0, q_max] with the
// flat-slope continuation clipped at the choke.
PiecewiseAffine construct_extremal(const BoundsMarket& m, double p0, double p_star, double delta,
                                   BoundSide side);

// Random admissible inverse demand through (q_obs, p0): 1-6 piecewise-affine
// segments, slopes within [g_L, g_U], P(0) <= M. Deterministic per seed.
PiecewiseAffine admissible_sampler(const BoundsMarket& m, double p0, std::uint64_t seed);

// Misallocation loss of a concrete demand profile for this problem: the
// equal-shadow-price split of `total` against the observed allocation.
double evaluate_misallocation(const BoundsProblem& prob, const std::vector<DemandCurve>& curves);

}  // namespace rationlab
