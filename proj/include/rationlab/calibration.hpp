#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rationlab/bounds.hpp"

namespace rationlab {

// One state of the station survey: status shares, station count, and 1972
// gallon sales (missing values are imputed from station counts).
struct StationSurveyRow {
  std::string state;
  double share_out = 0.0;
  double share_limiting = 0.0;
  double share_open = 0.0;
  double stations_1972 = 0.0;
  std::optional<double> gallons_1972;
  bool gallons_imputed = false;

  double rationing_share() const { return share_out + share_limiting; }
};

struct CalibrationParams {
  double ceiling = 0.8;            // normalized controlled price
  double eps_lo = 0.2;             // elasticity interval
  double eps_hi = 0.4;
  double eps_point = 0.3;          // point calibration
  double supply = 0.91;            // 9% aggregate shortage against baseline 1
  std::optional<double> choke;     // per-capita choke cap (4 in the choke variant)
  double harberger_epsilon = 0.2;  // conservative benchmark elasticity
  double q_max_headroom = 0.95;    // fraction of the flat-slope price budget kept as domain

  double slope_steep() const { return -1.0 / eps_lo; }  // g_L
  double slope_flat() const { return -1.0 / eps_hi; }   // g_U

  void validate_params() const;
};

std::vector<StationSurveyRow> load_station_survey(const std::string& path);
std::vector<StationSurveyRow> load_station_survey(std::istream& in);

// Fills missing gallons with stations * (observed national gallons per
// observed national station); flags imputed rows.
void impute_gallons(std::vector<StationSurveyRow>& rows);

struct NationalShares {
  double out = 0.0;
  double limiting = 0.0;
  double open = 0.0;
};

// Station-count-weighted national status shares.
NationalShares national_station_shares(const std::vector<StationSurveyRow>& rows);

// A calibrated two-cell (or many-cell) bounds problem plus its per-capita
// quantities; weights are the cells' shares of baseline consumption.
struct CellInfo {
  std::string state;  // empty for pooled cells
  bool open = false;
  double weight = 0.0;
  double q_per_capita = 0.0;
};

struct CalibratedModel {
  BoundsProblem problem;
  std::vector<CellInfo> cells;
  double q_open = 0.0;    // per capita
  double q_closed = 0.0;  // per capita (non-open)
  double open_weight = 0.0;
};

// Open stations consume their ceiling demand q_O = 1 + (1 - ceiling) * eps;
// the non-open cell receives the residual of the aggregate supply. Anchor
// intervals come from baseline-anchored linear extrapolation to each cell's
// per-capita quantity at the two slope bounds.
CalibratedModel pooled_two_market(const CalibrationParams& params, double open_share);

// Two cells per state (open / non-open), gallon-proportional weights,
// zero-share cells dropped, per-cell anchors and slopes as in the pooled
// construction.
CalibratedModel state_by_status(const std::vector<StationSurveyRow>& rows,
                                const CalibrationParams& params);

// Harberger triangle of the baseline-anchored linear demand at elasticity eps.
double harberger_at(const CalibrationParams& params, double eps);

// Point misallocation loss when every cell shares the welfare slope -m
// (per capita); anchors are re-extrapolated at the same slope. Computed via
// the allocation machinery, not the bounds engine.
double common_slope_misallocation(const CalibratedModel& model, double slope_magnitude);

struct DecompositionRow {
  std::string label;
  double phi_lower = 0.0;
  double phi_upper = 0.0;
  double ratio_lower = 0.0;
  double ratio_upper = 0.0;
};

// The four assumption regimes: common welfare elasticity, per-market slope
// bounds with fixed (midpoint) anchors, interval anchors, and interval
// anchors plus the choke cap. Ratios in rows 2-4 are normalized by the
// conservative Harberger benchmark.
std::vector<DecompositionRow> assumption_decomposition(const std::vector<StationSurveyRow>& rows,
                                                       const CalibrationParams& params);

struct StateShadowPrice {
  std::string state;
  double value = 0.0;  // rationing-share-weighted average anchor shadow price
};

std::vector<StateShadowPrice> state_shadow_prices(const std::vector<StationSurveyRow>& rows,
                                                  const CalibrationParams& params,
                                                  BoundSide side);

// Everything the calibrate front end emits, computed with shared solves: the
// pooled headline, the decomposition table, and both shadow-price maps.
struct CalibrationReport {
  NationalShares shares;
  CalibratedModel pooled;
  BoundsResult pooled_bounds;
  double harberger_conservative = 0.0;
  std::vector<DecompositionRow> table;
  std::vector<StateShadowPrice> shadow_upper;
  std::vector<StateShadowPrice> shadow_lower;
};

CalibrationReport calibrate_report(const std::vector<StationSurveyRow>& rows,
                                   const CalibrationParams& params,
                                   AnchorMode pooled_mode = AnchorMode::Interval);

}  // namespace rationlab
