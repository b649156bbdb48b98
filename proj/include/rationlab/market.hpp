#pragma once

#include <Eigen/Core>
#include <vector>

#include "rationlab/demand.hpp"
#include "rationlab/errors.hpp"
#include "rationlab/tolerances.hpp"

namespace rationlab {

using Vec = Eigen::VectorXd;

// Caps q_bar_i and total supply Q_bar: the polytope
//   { q : 0 <= q_i <= caps_i, sum(q) = total }.
// Requires 0 < total < sum(caps), so the ceiling is binding and the set has
// interior points in every coordinate direction.
struct FeasibleSet {
  Vec caps;
  double total = 0.0;

  FeasibleSet(Vec caps_in, double total_in) : caps(std::move(caps_in)), total(total_in) {
    if (caps.size() == 0) throw ValidationError("FeasibleSet: no markets");
    if ((caps.array() < 0.0).any()) throw ValidationError("FeasibleSet: negative cap");
    if (!(total > 0.0)) throw ValidationError("FeasibleSet: total supply must be positive");
    if (!(total < caps.sum()))
      throw ValidationError("FeasibleSet: total must be below the cap sum (binding ceiling)");
  }

  Eigen::Index size() const { return caps.size(); }
};

enum class CoordTag { AtZero, Interior, AtCap };

// A point of the feasible set with per-coordinate boundary classification.
struct Allocation {
  Vec q;
  std::vector<CoordTag> tags;

  int interior_count() const {
    int n = 0;
    for (auto t : tags)
      if (t == CoordTag::Interior) ++n;
    return n;
  }
};

// Classifies against caps with tolerance and validates feasibility.
Allocation make_allocation(const Vec& q, const FeasibleSet& fs);

// One submarket: its inverse demand, the supplier's unit delivery cost, and
// the quantity domain bound.
struct MarketSpec {
  DemandCurve demand;
  double unit_cost = 0.0;
  double q_max = std::numeric_limits<double>::infinity();

  void validate_spec() const {
    validate(demand);
    if (!(unit_cost >= 0.0)) throw ValidationError("MarketSpec: unit_cost must be >= 0");
    if (!(q_max > 0.0)) throw ValidationError("MarketSpec: q_max must be positive");
  }
};

// Welfare accounting for one allocation.
struct WelfareReport {
  double gross_surplus = 0.0;       // sum_i int_0^{q_i} P_i
  double net_surplus = 0.0;         // gross - ceiling * total
  double shadow_price = 0.0;        // p* (efficient) or lambda (worst case), when defined
  double misallocation_loss = 0.0;  // W(q*) - W(q)
  double harberger_loss = 0.0;      // aggregate-triangle benchmark, when provided
  double ratio = 0.0;               // misallocation / harberger when harberger > 0
};

}  // namespace rationlab
