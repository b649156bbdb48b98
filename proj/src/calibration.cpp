#include "rationlab/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rationlab/allocators.hpp"
#include "rationlab/tolerances.hpp"

namespace rationlab {

void CalibrationParams::validate_params() const {
  if (!(ceiling > 0.0 && ceiling < 1.0))
    throw ValidationError("CalibrationParams: ceiling must be in (0, 1)");
  if (!(eps_lo > 0.0 && eps_lo <= eps_point && eps_point <= eps_hi))
    throw ValidationError("CalibrationParams: need 0 < eps_lo <= eps_point <= eps_hi");
  if (!(supply > 0.0 && supply < 1.0))
    throw ValidationError("CalibrationParams: supply must be in (0, 1) of baseline");
  if (choke && !(*choke > 1.0)) throw ValidationError("CalibrationParams: choke must exceed 1");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (char ch : line) {
    if (quoted) {
      if (ch == '"')
        quoted = false;
      else
        field.push_back(ch);
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  out.push_back(field);
  return out;
}

double parse_num(const std::string& s, int line_no, const char* what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("survey line " + std::to_string(line_no) + ": bad " + what + " '" + s +
                          "'");
  }
}

}  // namespace

std::vector<StationSurveyRow> load_station_survey(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("survey: empty file");
  auto header = split_csv_line(line);
  const std::vector<std::string> expected{"state",         "share_out",  "share_limiting",
                                          "share_open",    "stations_1972",
                                          "gallons_1972"};
  if (header != expected)
    throw ValidationError(
        "survey: header must be state,share_out,share_limiting,share_open,stations_1972,"
        "gallons_1972");
  std::vector<StationSurveyRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != 6)
      throw ValidationError("survey line " + std::to_string(line_no) + ": expected 6 fields");
    StationSurveyRow r;
    r.state = f[0];
    r.share_out = parse_num(f[1], line_no, "share_out");
    r.share_limiting = parse_num(f[2], line_no, "share_limiting");
    r.share_open = parse_num(f[3], line_no, "share_open");
    r.stations_1972 = parse_num(f[4], line_no, "stations_1972");
    if (!f[5].empty()) r.gallons_1972 = parse_num(f[5], line_no, "gallons_1972");
    for (double s : {r.share_out, r.share_limiting, r.share_open})
      if (s < 0.0 || s > 1.0)
        throw ValidationError("survey line " + std::to_string(line_no) + ": share outside [0,1]");
    if (std::fabs(r.share_out + r.share_limiting + r.share_open - 1.0) > 1e-6)
      throw ValidationError("survey line " + std::to_string(line_no) +
                            ": shares do not sum to 1");
    if (r.stations_1972 < 0.0 || (r.gallons_1972 && *r.gallons_1972 < 0.0))
      throw ValidationError("survey line " + std::to_string(line_no) + ": negative count");
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ValidationError("survey: no data rows");
  return rows;
}

std::vector<StationSurveyRow> load_station_survey(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("survey: cannot open " + path);
  return load_station_survey(in);
}

void impute_gallons(std::vector<StationSurveyRow>& rows) {
  double obs_gallons = 0.0, obs_stations = 0.0;
  for (const auto& r : rows)
    if (r.gallons_1972) {
      obs_gallons += *r.gallons_1972;
      obs_stations += r.stations_1972;
    }
  if (obs_stations <= 0.0)
    throw ValidationError("impute_gallons: no rows with observed gallons");
  double per_station = obs_gallons / obs_stations;
  for (auto& r : rows)
    if (!r.gallons_1972) {
      r.gallons_1972 = r.stations_1972 * per_station;
      r.gallons_imputed = true;
    }
}

NationalShares national_station_shares(const std::vector<StationSurveyRow>& rows) {
  double total = 0.0;
  NationalShares s;
  for (const auto& r : rows) {
    total += r.stations_1972;
    s.out += r.stations_1972 * r.share_out;
    s.limiting += r.stations_1972 * r.share_limiting;
    s.open += r.stations_1972 * r.share_open;
  }
  if (total <= 0.0) throw ValidationError("national_station_shares: no stations");
  s.out /= total;
  s.limiting /= total;
  s.open /= total;
  return s;
}

namespace {

// Baseline-anchored linear extrapolation: the price at quantity q on the line
// through (1, 1) with inverse-demand slope -m.
double baseline_price_at(double q, double m) { return 1.0 + m * (1.0 - q); }

// Builds one market of a calibrated problem from per-capita primitives and a
// consumption weight. Prices are unit-free; quantities and slopes scale.
BoundsMarket make_cell(double q_pc, double weight, const CalibrationParams& params) {
  double mU = -params.slope_flat();   // 2.5 at defaults
  double mL = -params.slope_steep();  // 5.0
  double a1 = baseline_price_at(q_pc, mU);
  double a2 = baseline_price_at(q_pc, mL);
  BoundsMarket m;
  m.anchor_lo = std::min(a1, a2);
  m.anchor_hi = std::max(a1, a2);
  if (params.choke) {
    m.choke = *params.choke;
    // Anchors the flat slope cannot connect to P(0) <= M are inadmissible.
    m.anchor_hi = std::min(m.anchor_hi, *params.choke - mU * q_pc);
    if (m.anchor_hi < m.anchor_lo) m.anchor_lo = m.anchor_hi;
  }
  double q_max_pc = q_pc + params.q_max_headroom * m.anchor_lo / mU;
  m.q_obs = weight * q_pc;
  m.g_upper = params.slope_flat() / weight;
  m.g_lower = params.slope_steep() / weight;
  m.q_max = weight * q_max_pc;
  return m;
}

}  // namespace

CalibratedModel pooled_two_market(const CalibrationParams& params, double open_share) {
  params.validate_params();
  if (!(open_share > 0.0 && open_share < 1.0))
    throw ValidationError("pooled_two_market: open share must be in (0, 1)");
  double closed_share = 1.0 - open_share;
  double q_open = 1.0 + (1.0 - params.ceiling) * params.eps_point;
  double q_closed = (params.supply - open_share * q_open) / closed_share;
  if (!(q_closed > 0.0))
    throw ValidationError("pooled_two_market: residual non-open quantity is not positive");

  CalibratedModel model;
  model.q_open = q_open;
  model.q_closed = q_closed;
  model.open_weight = open_share;
  model.problem.total = params.supply;
  model.problem.ceiling = params.ceiling;
  model.problem.markets.push_back(make_cell(q_open, open_share, params));
  model.problem.markets.push_back(make_cell(q_closed, closed_share, params));
  model.cells.push_back(CellInfo{"", true, open_share, q_open});
  model.cells.push_back(CellInfo{"", false, closed_share, q_closed});
  model.problem.validate_problem();
  return model;
}

CalibratedModel state_by_status(const std::vector<StationSurveyRow>& rows,
                                const CalibrationParams& params) {
  params.validate_params();
  std::vector<StationSurveyRow> data = rows;
  impute_gallons(data);
  double total_gallons = 0.0;
  for (const auto& r : data) total_gallons += *r.gallons_1972;
  if (total_gallons <= 0.0) throw ValidationError("state_by_status: zero total gallons");

  double open_weight = 0.0;
  for (const auto& r : data)
    open_weight += (*r.gallons_1972 / total_gallons) * (1.0 - r.rationing_share());
  double non_weight = 1.0 - open_weight;
  if (non_weight <= 0.0) throw ValidationError("state_by_status: no rationed cells");

  double q_open = 1.0 + (1.0 - params.ceiling) * params.eps_point;
  double q_closed = (params.supply - open_weight * q_open) / non_weight;
  if (!(q_closed > 0.0))
    throw ValidationError("state_by_status: residual non-open quantity is not positive");

  CalibratedModel model;
  model.q_open = q_open;
  model.q_closed = q_closed;
  model.open_weight = open_weight;
  model.problem.total = params.supply;
  model.problem.ceiling = params.ceiling;
  for (const auto& r : data) {
    double gshare = *r.gallons_1972 / total_gallons;
    double w_open = gshare * (1.0 - r.rationing_share());
    double w_non = gshare * r.rationing_share();
    if (w_open > 0.0) {
      model.problem.markets.push_back(make_cell(q_open, w_open, params));
      model.cells.push_back(CellInfo{r.state, true, w_open, q_open});
    }
    if (w_non > 0.0) {
      model.problem.markets.push_back(make_cell(q_closed, w_non, params));
      model.cells.push_back(CellInfo{r.state, false, w_non, q_closed});
    }
  }
  if (model.cells.empty()) throw ValidationError("state_by_status: all cells inactive");
  model.problem.validate_problem();
  return model;
}

double harberger_at(const CalibrationParams& params, double eps) {
  DemandCurve base = LinearAnchored{1.0, 1.0, -1.0 / eps};
  return harberger_loss(base, 1.0, 1.0, params.supply);
}

double common_slope_misallocation(const CalibratedModel& model, double slope_magnitude) {
  const auto n = model.cells.size();
  std::vector<MarketSpec> markets;
  Vec caps(static_cast<Eigen::Index>(n));
  Vec q_obs(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cell = model.cells[i];
    double p0 = baseline_price_at(cell.q_per_capita, slope_magnitude);
    LinearAnchored curve{cell.weight * cell.q_per_capita, p0, -slope_magnitude / cell.weight};
    markets.push_back(MarketSpec{DemandCurve{curve}, 0.0, model.problem.markets[i].q_max});
    caps[static_cast<Eigen::Index>(i)] = model.problem.markets[i].q_max;
    q_obs[static_cast<Eigen::Index>(i)] = cell.weight * cell.q_per_capita;
  }
  FeasibleSet fs(caps, model.problem.total);
  Allocation observed = make_allocation(q_obs, fs);
  return misallocation_loss(markets, fs, observed);
}

namespace {

DecompositionRow common_elasticity_row(const CalibratedModel& state,
                                       const CalibrationParams& params) {
  double m_lo = -params.slope_flat();   // eps_hi end
  double m_hi = -params.slope_steep();  // eps_lo end
  double phi_at_flat = common_slope_misallocation(state, m_lo);
  double phi_at_steep = common_slope_misallocation(state, m_hi);
  DecompositionRow r;
  r.label = "common elasticity, fixed anchors";
  r.phi_lower = std::min(phi_at_flat, phi_at_steep);
  r.phi_upper = std::max(phi_at_flat, phi_at_steep);
  // The same slope scales loss and triangle, so the ratio is flat across the sweep.
  double harb_flat = 0.5 * (1.0 - params.supply) * (1.0 - params.supply) * m_lo;
  r.ratio_lower = phi_at_flat / harb_flat;
  r.ratio_upper = r.ratio_lower;
  return r;
}

std::vector<DecompositionRow> build_table(const CalibratedModel& state,
                                          const BoundsResult& interval_nochoke,
                                          const BoundsResult& interval_choke,
                                          const CalibrationParams& params) {
  double harb_cons = harberger_at(params, params.harberger_epsilon);
  std::vector<DecompositionRow> table;
  table.push_back(common_elasticity_row(state, params));
  BoundsResult fixed = solve_bounds(state.problem, AnchorMode::Fixed);
  table.push_back(DecompositionRow{"heterogeneous elasticity, fixed anchors", fixed.phi_lower,
                                   fixed.phi_upper, fixed.phi_lower / harb_cons,
                                   fixed.phi_upper / harb_cons});
  table.push_back(DecompositionRow{"+ anchor uncertainty", interval_nochoke.phi_lower,
                                   interval_nochoke.phi_upper,
                                   interval_nochoke.phi_lower / harb_cons,
                                   interval_nochoke.phi_upper / harb_cons});
  table.push_back(DecompositionRow{"+ choke constraint", interval_choke.phi_lower,
                                   interval_choke.phi_upper,
                                   interval_choke.phi_lower / harb_cons,
                                   interval_choke.phi_upper / harb_cons});
  return table;
}

std::vector<StateShadowPrice> shadow_map(const std::vector<StationSurveyRow>& rows,
                                         const CalibratedModel& model,
                                         const std::vector<double>& anchors) {
  std::vector<StateShadowPrice> out;
  std::vector<StationSurveyRow> data = rows;
  impute_gallons(data);
  for (const auto& r : data) {
    double p_open = 0.0, p_non = 0.0;
    bool has_open = false, has_non = false;
    for (std::size_t i = 0; i < model.cells.size(); ++i) {
      if (model.cells[i].state != r.state) continue;
      if (model.cells[i].open) {
        p_open = anchors[i];
        has_open = true;
      } else {
        p_non = anchors[i];
        has_non = true;
      }
    }
    double share = r.rationing_share();
    double value = 0.0;
    if (has_open && has_non)
      value = (1.0 - share) * p_open + share * p_non;
    else if (has_open)
      value = p_open;
    else if (has_non)
      value = p_non;
    else
      continue;
    out.push_back(StateShadowPrice{r.state, value});
  }
  return out;
}

}  // namespace

std::vector<DecompositionRow> assumption_decomposition(const std::vector<StationSurveyRow>& rows,
                                                       const CalibrationParams& params) {
  params.validate_params();
  CalibrationParams no_choke = params;
  no_choke.choke.reset();
  CalibrationParams with_choke = params;
  if (!with_choke.choke) with_choke.choke = 4.0;

  CalibratedModel state = state_by_status(rows, no_choke);
  CalibratedModel state_choked = state_by_status(rows, with_choke);
  BoundsResult r3 = solve_bounds(state.problem, AnchorMode::Interval);
  BoundsResult r4 = solve_bounds(state_choked.problem, AnchorMode::Interval);
  return build_table(state, r3, r4, params);
}

std::vector<StateShadowPrice> state_shadow_prices(const std::vector<StationSurveyRow>& rows,
                                                  const CalibrationParams& params,
                                                  BoundSide side) {
  CalibratedModel model = state_by_status(rows, params);
  BoundsResult b = solve_bounds(model.problem, AnchorMode::Interval);
  return shadow_map(rows, model, (side == BoundSide::Upper) ? b.anchors_upper : b.anchors_lower);
}

CalibrationReport calibrate_report(const std::vector<StationSurveyRow>& rows,
                                   const CalibrationParams& params, AnchorMode pooled_mode) {
  params.validate_params();
  CalibrationReport rep;
  rep.shares = national_station_shares(rows);
  rep.pooled = pooled_two_market(params, rep.shares.open);
  rep.pooled_bounds = solve_bounds(rep.pooled.problem, pooled_mode);
  rep.harberger_conservative = harberger_at(params, params.harberger_epsilon);

  CalibrationParams no_choke = params;
  no_choke.choke.reset();
  CalibrationParams with_choke = params;
  if (!with_choke.choke) with_choke.choke = 4.0;
  CalibratedModel state = state_by_status(rows, no_choke);
  CalibratedModel state_choked = state_by_status(rows, with_choke);
  BoundsResult r3 = solve_bounds(state.problem, AnchorMode::Interval);
  BoundsResult r4 = solve_bounds(state_choked.problem, AnchorMode::Interval);
  rep.table = build_table(state, r3, r4, params);

  // Shadow-price maps come from the configuration the caller asked for: the
  // choked solve when a cap is set, the plain interval solve otherwise.
  const CalibratedModel& shadow_model = params.choke ? state_choked : state;
  const BoundsResult& shadow_solve = params.choke ? r4 : r3;
  rep.shadow_upper = shadow_map(rows, shadow_model, shadow_solve.anchors_upper);
  rep.shadow_lower = shadow_map(rows, shadow_model, shadow_solve.anchors_lower);
  return rep;
}

}  // namespace rationlab
