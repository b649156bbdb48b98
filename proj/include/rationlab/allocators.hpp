#pragma once

#include <vector>

#include "rationlab/market.hpp"

namespace rationlab {

struct EfficientResult {
  Allocation allocation;
  double shadow_price = 0.0;  // common p* across interior markets
};

struct WorstCaseResult {
  Allocation allocation;
  double cutoff = 0.0;  // lambda_worst from the KKT conditions
  double gross_surplus = 0.0;
};

// Surplus-maximizing split of fs.total across markets: equalizes shadow
// prices. Monotone bisection on the scalar price p with per-market quantities
// clamped to [0, cap_i]; flat demand segments receive the residual mass
// explicitly so the adding-up constraint holds exactly.
EfficientResult efficient_allocation(const std::vector<MarketSpec>& markets,
                                     const FeasibleSet& fs);

// Tie handling for the greedy fill: Error surfaces ties and prefix-sum
// degeneracies to the caller (they are economically meaningful), IndexOrder
// breaks them deterministically by market index.
enum class TieBreak { Error, IndexOrder };

// Cost-minimizing vertex under a binding ceiling: fill caps in increasing
// order of unit cost with one partially served market. In Error mode throws
// TieError on cost ties within tol::tie and DegenerateError when the supply
// equals a prefix cap sum within tol::tie.
Allocation greedy_controlled_allocation(const std::vector<MarketSpec>& markets,
                                        const FeasibleSet& fs,
                                        TieBreak tie_break = TieBreak::Error);

// Gross-surplus-minimizing allocation. Exact vertex enumeration for
// n <= worst_case_exact_limit (default documented limit 20); beyond that a
// greedy-by-average-value heuristic with local vertex swaps (no global
// guarantee, the necessary conditions are still verified).
WorstCaseResult worst_case_allocation(const std::vector<MarketSpec>& markets,
                                      const FeasibleSet& fs);

inline constexpr int worst_case_exact_limit = 20;

// W(q*) - W(q) = sum_i int_{q_i}^{q_i*} P_i; always >= -tol::sum_constraint.
double misallocation_loss(const std::vector<MarketSpec>& markets, const FeasibleSet& fs,
                          const Allocation& q);

// Triangle between aggregate demand and the baseline price over [supply, base_q]:
//   gross(base_q) - gross(supply) - base_p * (base_q - supply).
double harberger_loss(const DemandCurve& aggregate_demand, double base_p, double base_q,
                      double supply);

// Exhaustive vertex minimizer of cost over the polytope; ground truth for the
// greedy rule in tests. n <= 12.
Allocation lp_vertex_oracle(const Vec& costs, const FeasibleSet& fs);

// Aggregate gross surplus at an allocation.
double total_gross_surplus(const std::vector<MarketSpec>& markets, const Vec& q);

// Max KKT residual of the equal-shadow-price conditions at (q, p_star).
double efficient_kkt_residual(const std::vector<MarketSpec>& markets, const FeasibleSet& fs,
                              const Allocation& alloc, double p_star);

// Max KKT residual of the worst-case cutoff conditions at (q, lambda).
double worst_case_kkt_residual(const std::vector<MarketSpec>& markets, const FeasibleSet& fs,
                               const Allocation& alloc, double lambda);

}  // namespace rationlab
