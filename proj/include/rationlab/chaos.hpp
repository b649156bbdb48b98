#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rationlab/allocators.hpp"
#include "rationlab/market.hpp"
#include "rationlab/rng.hpp"

namespace rationlab {

// Cost model for the grid scenario: either iid uniform draws, or a systematic
// distance-from-depot gradient plus an iid uniform idiosyncratic component.
struct CostModel {
  enum class Kind { IidUniform, Systematic } kind = Kind::IidUniform;
  double lo = 0.0;
  double hi = 0.1;
  double gradient = 0.0;  // systematic component scale (cost per normalized distance)
};

// Default Hill demand parameters for the grid simulation. Calibration-free:
// chosen so per-market demand at the 80% ceiling is about 2.09 units, which
// lets roughly 72 of 100 markets absorb a supply of 150 (about 28 unserved).
inline constexpr TruncatedHill default_grid_demand{4.0, 2.5, 2.0};

struct ScenarioConfig {
  int grid_rows = 10;
  int grid_cols = 10;
  TruncatedHill demand = default_grid_demand;
  CostModel costs;
  double supply = 150.0;
  double ceiling_fraction = 0.8;
  std::uint64_t rng_seed = 0;
  // Optional per-market heterogeneity: each market's demand scale is jittered
  // by a factor uniform in [1 - demand_scale_jitter, 1 + demand_scale_jitter].
  double demand_scale_jitter = 0.0;

  int market_count() const { return grid_rows * grid_cols; }
  void validate_config() const;
};

struct GridResult {
  Allocation free_allocation;        // no ceiling: net shadow prices equalize
  Allocation controlled_allocation;  // binding ceiling: greedy cost fill
  double market_price = 0.0;         // clears aggregate demand at the supply
  double ceiling = 0.0;              // ceiling_fraction * market_price
  double lambda_free = 0.0;          // common net shadow price of the free solution
  double welfare_free = 0.0;         // consumer surplus (net of ceiling) at free allocation
  double welfare_controlled = 0.0;
  int unserved_count = 0;
  Vec costs;
  std::vector<MarketSpec> markets;
  FeasibleSet feasible;
};

// Builds the grid markets (seeded costs, optional cap jitter), clears the
// market price, applies the ceiling, and solves both regimes. Cost ties are
// resolved by adding index-scaled 1e-15 jitter before the greedy fill.
GridResult run_grid_scenario(const ScenarioConfig& cfg);

// Free-market split with delivery costs: equalizes net shadow prices
// P_i(q_i) - c_i across served markets subject only to adding-up (the caps
// are a ceiling phenomenon). Returns the allocation and the net shadow price.
std::pair<Vec, double> free_market_allocation(const std::vector<MarketSpec>& markets,
                                              const Vec& costs, double supply);

// One discontinuous reallocation event along an affine cost path.
struct JumpEvent {
  double t = 0.0;                  // crossing location on the path
  Vec pre_allocation;              // greedy allocation just before t
  Vec post_allocation;             // just after t
  double reallocated_mass = 0.0;   // units moved between the two markets
  double welfare_jump = 0.0;       // precise two-market surplus difference
  int market_down = -1;            // r: loses mass
  int market_up = -1;              // s: gains mass
  bool compound = false;           // several crossings coincide within resolution
};

// Scans c(t) = base + t * direction over [t_lo, t_hi] with the given step,
// bisects every greedy-allocation change to within 1e-10 in t, and reports the
// jumps. Coarse steps that hide several crossings are refined recursively.
std::vector<JumpEvent> sweep_cost_path(const std::vector<MarketSpec>& markets,
                                       const FeasibleSet& fs, const Vec& base_costs,
                                       const Vec& direction, double t_lo, double t_hi,
                                       double step);

// Unique minimizer of c.q + (kappa/2)|q|^2 over the feasible set, via
// bisection on the KKT multiplier with coordinates clamped to their box.
Allocation smoothed_allocation(const Vec& costs, const FeasibleSet& fs, double kappa);

struct CutoffGapStats {
  int n = 0;
  double mean = 0.0;
  double median = 0.0;
  double q10 = 0.0;
  double q90 = 0.0;
};

// Distribution of the cost gap c_(k+1) - c_(k) at the served/unserved cutoff
// of the greedy fill, for iid uniform costs, homogeneous caps, and supply
// equal to supply_fraction of the aggregate cap.
std::vector<CutoffGapStats> cutoff_gap_statistics(const std::vector<int>& n_values, int draws,
                                                  double cost_lo, double cost_hi, double cap,
                                                  double supply_fraction, std::uint64_t seed);

}  // namespace rationlab
