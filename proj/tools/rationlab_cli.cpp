// Command-line front end: config parsing, subcommand dispatch, file emission.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "rationlab/allocators.hpp"
#include "rationlab/bounds.hpp"
#include "rationlab/calibration.hpp"
#include "rationlab/chaos.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace rationlab;

namespace {

// All numeric output is formatted at 12 significant digits so reruns with the
// same config and seed are byte-identical.
double round12(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return std::strtod(buf, nullptr);
}

std::string fmt12(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  json cfg;
  try {
    in >> cfg;
  } catch (const std::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!cfg.contains("schema_version") || cfg["schema_version"] != 1)
    throw ValidationError("config must carry schema_version = 1");
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write output file: " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

DemandCurve parse_demand(const json& j) {
  std::string type = j.at("type").get<std::string>();
  if (type == "linear_anchored")
    return LinearAnchored{j.at("anchor_q").get<double>(), j.at("anchor_p").get<double>(),
                          j.at("slope").get<double>()};
  if (type == "truncated_hill")
    return TruncatedHill{j.at("choke").get<double>(), j.at("scale").get<double>(),
                         j.at("exponent").get<double>()};
  if (type == "piecewise_affine") {
    PiecewiseAffine pwa;
    for (const auto& k : j.at("knots"))
      pwa.knots.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
    return pwa;
  }
  throw ValidationError("unknown demand type: " + type);
}

std::vector<MarketSpec> parse_markets(const json& cfg) {
  std::vector<MarketSpec> out;
  for (const auto& m : cfg.at("markets")) {
    MarketSpec spec;
    spec.demand = parse_demand(m.at("demand"));
    spec.unit_cost = m.value("unit_cost", 0.0);
    spec.q_max = m.value("q_max", 1e9);
    spec.validate_spec();
    out.push_back(std::move(spec));
  }
  if (out.empty()) throw ValidationError("config has no markets");
  return out;
}

FeasibleSet parse_feasible(const json& cfg, const std::vector<MarketSpec>& markets) {
  Vec caps(static_cast<Eigen::Index>(markets.size()));
  if (cfg.contains("caps")) {
    const auto& c = cfg.at("caps");
    if (c.size() != markets.size()) throw ValidationError("caps/markets size mismatch");
    for (std::size_t i = 0; i < markets.size(); ++i)
      caps[static_cast<Eigen::Index>(i)] = c.at(i).get<double>();
  } else {
    // caps default to demand at the ceiling, the binding-ceiling semantics
    double ceiling = cfg.at("ceiling").get<double>();
    for (std::size_t i = 0; i < markets.size(); ++i)
      caps[static_cast<Eigen::Index>(i)] =
          generalized_inverse(markets[i].demand, ceiling, markets[i].q_max);
  }
  return FeasibleSet(caps, cfg.at("total").get<double>());
}

json allocation_to_json(const Allocation& a) {
  json q = json::array(), tags = json::array();
  for (Eigen::Index i = 0; i < a.q.size(); ++i) {
    q.push_back(round12(a.q[i]));
    switch (a.tags[static_cast<std::size_t>(i)]) {
      case CoordTag::AtZero: tags.push_back("zero"); break;
      case CoordTag::Interior: tags.push_back("interior"); break;
      case CoordTag::AtCap: tags.push_back("cap"); break;
    }
  }
  return json{{"q", q}, {"classification", tags}};
}

Vec parse_vec(const json& arr) {
  Vec v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = arr.at(i).get<double>();
  return v;
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::string tie_break = "error";
  std::optional<double> choke;
  std::vector<double> epsilon;
  std::string anchors = "interval";
};

int cmd_allocate(const CommonOpts& opt) {
  json cfg = load_config(opt.config_path);
  auto markets = parse_markets(cfg);
  FeasibleSet fsb = parse_feasible(cfg, markets);
  double ceiling = cfg.value("ceiling", 0.0);

  EfficientResult eff = efficient_allocation(markets, fsb);
  TieBreak tb = (opt.tie_break == "index") ? TieBreak::IndexOrder : TieBreak::Error;
  Allocation greedy = greedy_controlled_allocation(markets, fsb, tb);

  WelfareReport rep;
  rep.gross_surplus = total_gross_surplus(markets, greedy.q);
  rep.net_surplus = rep.gross_surplus - ceiling * fsb.total;
  rep.shadow_price = eff.shadow_price;
  rep.misallocation_loss = misallocation_loss(markets, fsb, greedy);
  if (cfg.contains("baseline")) {
    const auto& b = cfg.at("baseline");
    rep.harberger_loss = harberger_loss(parse_demand(b.at("demand")), b.at("price").get<double>(),
                                        b.at("quantity").get<double>(), fsb.total);
    if (rep.harberger_loss > 0.0) rep.ratio = rep.misallocation_loss / rep.harberger_loss;
  }

  json out;
  out["schema_version"] = 1;
  out["efficient"] = allocation_to_json(eff.allocation);
  out["efficient"]["shadow_price"] = round12(eff.shadow_price);
  out["greedy"] = allocation_to_json(greedy);
  out["welfare"] = {{"gross_surplus", round12(rep.gross_surplus)},
                    {"net_surplus", round12(rep.net_surplus)},
                    {"shadow_price", round12(rep.shadow_price)},
                    {"misallocation_loss", round12(rep.misallocation_loss)},
                    {"harberger_loss", round12(rep.harberger_loss)},
                    {"ratio", round12(rep.ratio)}};
  write_json(fs::path(opt.out_dir) / "allocation.json", out);
  return 0;
}

int cmd_worst(const CommonOpts& opt) {
  json cfg = load_config(opt.config_path);
  auto markets = parse_markets(cfg);
  FeasibleSet fsb = parse_feasible(cfg, markets);
  WorstCaseResult w = worst_case_allocation(markets, fsb);
  json out;
  out["schema_version"] = 1;
  out["worst_case"] = allocation_to_json(w.allocation);
  out["cutoff"] = round12(w.cutoff);
  out["gross_surplus"] = round12(w.gross_surplus);
  out["misallocation_loss"] = round12(misallocation_loss(markets, fsb, w.allocation));
  write_json(fs::path(opt.out_dir) / "worst_case.json", out);
  return 0;
}

BoundsProblem parse_bounds_problem(const json& cfg, const CommonOpts& opt) {
  BoundsProblem prob;
  prob.ceiling = cfg.at("ceiling").get<double>();
  double total = 0.0;
  for (const auto& mj : cfg.at("markets")) {
    BoundsMarket m;
    m.q_obs = mj.at("q_obs").get<double>();
    m.anchor_lo = mj.at("anchor_lo").get<double>();
    m.anchor_hi = mj.at("anchor_hi").get<double>();
    m.g_lower = mj.at("g_lower").get<double>();
    m.g_upper = mj.at("g_upper").get<double>();
    m.q_max = mj.at("q_max").get<double>();
    if (mj.contains("choke") && !mj.at("choke").is_null())
      m.choke = mj.at("choke").get<double>();
    if (opt.choke) {
      m.choke = *opt.choke;
      m.anchor_hi = std::min(m.anchor_hi, *opt.choke - (-m.g_upper) * m.q_obs);
      if (m.anchor_hi < m.anchor_lo) m.anchor_lo = m.anchor_hi;
    }
    total += m.q_obs;
    prob.markets.push_back(m);
  }
  prob.total = cfg.contains("total") ? cfg.at("total").get<double>() : total;
  prob.validate_problem();
  return prob;
}

json pwa_to_json(const PiecewiseAffine& pwa) {
  json knots = json::array();
  for (const auto& [q, p] : pwa.knots) knots.push_back({round12(q), round12(p)});
  return knots;
}

int cmd_bounds(const CommonOpts& opt) {
  json cfg = load_config(opt.config_path);
  BoundsProblem prob = parse_bounds_problem(cfg, opt);
  AnchorMode mode = (opt.anchors == "fixed") ? AnchorMode::Fixed : AnchorMode::Interval;
  BoundsResult r = solve_bounds(prob, mode);

  json out;
  out["schema_version"] = 1;
  out["phi_lower"] = round12(r.phi_lower);
  out["phi_upper"] = round12(r.phi_upper);
  out["p_star_lower"] = round12(r.p_star_lower);
  out["p_star_upper"] = round12(r.p_star_upper);
  json alo = json::array(), ahi = json::array();
  for (double a : r.anchors_lower) alo.push_back(round12(a));
  for (double a : r.anchors_upper) ahi.push_back(round12(a));
  out["anchors_lower"] = alo;
  out["anchors_upper"] = ahi;
  out["interval_lower"] = {round12(r.interval_lower.first), round12(r.interval_lower.second)};
  out["interval_upper"] = {round12(r.interval_upper.first), round12(r.interval_upper.second)};
  json exl = json::array(), exu = json::array();
  for (const auto& c : r.extremal_lower) exl.push_back(pwa_to_json(c));
  for (const auto& c : r.extremal_upper) exu.push_back(pwa_to_json(c));
  out["extremal_lower"] = exl;
  out["extremal_upper"] = exu;
  if (cfg.contains("harberger")) {
    double harb = cfg.at("harberger").get<double>();
    out["ratio_lower"] = round12(r.phi_lower / harb);
    out["ratio_upper"] = round12(r.phi_upper / harb);
  }
  out["diagnostics"] = {{"interiority_ok", r.diagnostics.interiority_ok},
                        {"choke_active", r.diagnostics.choke_active},
                        {"notes", r.diagnostics.notes}};
  write_json(fs::path(opt.out_dir) / "bounds.json", out);
  return 0;
}

int cmd_simulate(const CommonOpts& opt) {
  json cfg = load_config(opt.config_path);
  ScenarioConfig sc;
  sc.grid_rows = cfg.value("grid_rows", 10);
  sc.grid_cols = cfg.value("grid_cols", 10);
  if (cfg.contains("demand")) {
    const auto& d = cfg.at("demand");
    sc.demand = TruncatedHill{d.value("choke", 4.0), d.value("scale", 2.5),
                              d.value("exponent", 2.0)};
  }
  if (cfg.contains("cost_model")) {
    const auto& c = cfg.at("cost_model");
    std::string type = c.value("type", "iid_uniform");
    sc.costs.kind =
        (type == "systematic") ? CostModel::Kind::Systematic : CostModel::Kind::IidUniform;
    sc.costs.lo = c.value("lo", 0.0);
    sc.costs.hi = c.value("hi", 0.1);
    sc.costs.gradient = c.value("gradient", 0.0);
  }
  sc.supply = cfg.value("supply", 150.0);
  sc.ceiling_fraction = cfg.value("ceiling_fraction", 0.8);
  sc.rng_seed = cfg.value("seed", 0ULL);
  sc.demand_scale_jitter = cfg.value("demand_scale_jitter", 0.0);
  if (opt.seed) sc.rng_seed = *opt.seed;

  GridResult r = run_grid_scenario(sc);

  std::string csv = "market_index,row,col,cost,free_q,controlled_q,classification\r\n";
  for (int i = 0; i < sc.market_count(); ++i) {
    const char* tag = "interior";
    switch (r.controlled_allocation.tags[static_cast<std::size_t>(i)]) {
      case CoordTag::AtZero: tag = "zero"; break;
      case CoordTag::AtCap: tag = "cap"; break;
      case CoordTag::Interior: tag = "interior"; break;
    }
    csv += std::to_string(i) + "," + std::to_string(i / sc.grid_cols) + "," +
           std::to_string(i % sc.grid_cols) + "," + fmt12(r.costs[i]) + "," +
           fmt12(r.free_allocation.q[i]) + "," + fmt12(r.controlled_allocation.q[i]) + "," +
           tag + "\r\n";
  }
  write_text(fs::path(opt.out_dir) / "grid.csv", csv);

  json out;
  out["schema_version"] = 1;
  out["seed"] = sc.rng_seed;
  out["market_price"] = round12(r.market_price);
  out["ceiling"] = round12(r.ceiling);
  out["lambda_free"] = round12(r.lambda_free);
  out["welfare_free"] = round12(r.welfare_free);
  out["welfare_controlled"] = round12(r.welfare_controlled);
  out["unserved_count"] = r.unserved_count;
  out["interior_count"] = r.controlled_allocation.interior_count();
  write_json(fs::path(opt.out_dir) / "summary.json", out);
  return 0;
}

int cmd_sweep(const CommonOpts& opt) {
  json cfg = load_config(opt.config_path);
  auto markets = parse_markets(cfg);
  FeasibleSet fsb = parse_feasible(cfg, markets);
  Vec base = parse_vec(cfg.at("base_costs"));
  Vec dir = parse_vec(cfg.at("direction"));
  double t_lo = cfg.at("t_lo").get<double>();
  double t_hi = cfg.at("t_hi").get<double>();
  double step = cfg.at("step").get<double>();
  auto events = sweep_cost_path(markets, fsb, base, dir, t_lo, t_hi, step);

  std::string csv = "t,market_down,market_up,reallocated_mass,welfare_jump,compound\r\n";
  for (const auto& ev : events)
    csv += fmt12(ev.t) + "," + std::to_string(ev.market_down) + "," +
           std::to_string(ev.market_up) + "," + fmt12(ev.reallocated_mass) + "," +
           fmt12(ev.welfare_jump) + "," + (ev.compound ? "true" : "false") + "\r\n";
  write_text(fs::path(opt.out_dir) / "jumps.csv", csv);
  return 0;
}

int cmd_calibrate(const CommonOpts& opt) {
  json cfg = load_config(opt.config_path);
  CalibrationParams params;
  params.ceiling = cfg.value("ceiling", 0.8);
  if (!opt.epsilon.empty()) {
    params.eps_lo = opt.epsilon[0];
    params.eps_hi = opt.epsilon[1];
  } else if (cfg.contains("epsilon")) {
    params.eps_lo = cfg.at("epsilon").at(0).get<double>();
    params.eps_hi = cfg.at("epsilon").at(1).get<double>();
  }
  params.eps_point = cfg.value("epsilon_point", 0.3);
  params.supply = cfg.value("supply", 0.91);
  if (cfg.contains("choke") && !cfg.at("choke").is_null())
    params.choke = cfg.at("choke").get<double>();
  if (opt.choke) params.choke = *opt.choke;
  params.validate_params();

  std::string survey = cfg.at("survey").get<std::string>();
  auto rows = load_station_survey(survey);
  AnchorMode pooled_mode = (opt.anchors == "fixed") ? AnchorMode::Fixed : AnchorMode::Interval;
  CalibrationReport rep = calibrate_report(rows, params, pooled_mode);
  double harb = rep.harberger_conservative;

  json out;
  out["schema_version"] = 1;
  out["national_shares"] = {{"out", round12(rep.shares.out)},
                            {"limiting", round12(rep.shares.limiting)},
                            {"open", round12(rep.shares.open)}};
  out["headline"] = {{"q_open", round12(rep.pooled.q_open)},
                     {"q_closed", round12(rep.pooled.q_closed)},
                     {"harberger_conservative", round12(harb)},
                     {"pooled_phi_lower", round12(rep.pooled_bounds.phi_lower)},
                     {"pooled_phi_upper", round12(rep.pooled_bounds.phi_upper)},
                     {"pooled_ratio_lower", round12(rep.pooled_bounds.phi_lower / harb)},
                     {"pooled_ratio_upper", round12(rep.pooled_bounds.phi_upper / harb)}};
  json rows_json = json::array();
  for (const auto& r : rep.table)
    rows_json.push_back({{"assumptions", r.label},
                         {"phi_lower", round12(r.phi_lower)},
                         {"phi_upper", round12(r.phi_upper)},
                         {"ratio_lower", round12(r.ratio_lower)},
                         {"ratio_upper", round12(r.ratio_upper)}});
  out["decomposition"] = rows_json;
  write_json(fs::path(opt.out_dir) / "decomposition.json", out);

  auto write_shadow = [&](const std::vector<StateShadowPrice>& prices, const char* name) {
    std::string csv = "state,shadow_price\r\n";
    for (const auto& sp : prices) csv += sp.state + "," + fmt12(sp.value) + "\r\n";
    write_text(fs::path(opt.out_dir) / name, csv);
  };
  write_shadow(rep.shadow_upper, "shadow_prices_upper.csv");
  write_shadow(rep.shadow_lower, "shadow_prices_lower.csv");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"price-ceiling allocation, chaos simulation, and robust misallocation bounds"};
  app.require_subcommand(1);

  CommonOpts opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON config file")->required();
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_option("--seed", opt.seed, "RNG seed override");
    sub->add_option("--tie-break", opt.tie_break, "cost tie handling: index|error")
        ->check(CLI::IsMember({"index", "error"}));
    sub->add_option("--choke", opt.choke, "choke price cap override");
    sub->add_option("--epsilon", opt.epsilon, "elasticity interval LO HI")->expected(2);
    sub->add_option("--anchors", opt.anchors, "anchor mode: fixed|interval")
        ->check(CLI::IsMember({"fixed", "interval"}));
  };

  auto* allocate = app.add_subcommand("allocate", "efficient and greedy allocations");
  add_common(allocate);
  auto* worst = app.add_subcommand("worst", "worst-case allocation and cutoff");
  add_common(worst);
  auto* bounds = app.add_subcommand("bounds", "robust misallocation bounds");
  add_common(bounds);
  auto* simulate = app.add_subcommand("simulate", "grid-market scenario");
  add_common(simulate);
  auto* sweep = app.add_subcommand("sweep", "cost-path jump detection");
  add_common(sweep);
  auto* calibrate = app.add_subcommand("calibrate", "gasoline-crisis calibration");
  add_common(calibrate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    fs::create_directories(opt.out_dir);
    if (allocate->parsed()) return cmd_allocate(opt);
    if (worst->parsed()) return cmd_worst(opt);
    if (bounds->parsed()) return cmd_bounds(opt);
    if (simulate->parsed()) return cmd_simulate(opt);
    if (sweep->parsed()) return cmd_sweep(opt);
    if (calibrate->parsed()) return cmd_calibrate(opt);
  } catch (const ValidationError& e) {
    std::cerr << "{\"error\":{\"code\":\"validation\",\"message\":\"" << e.what() << "\"}}\n";
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "{\"error\":{\"code\":\"solver\",\"message\":\"" << e.what() << "\"}}\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "{\"error\":{\"code\":\"validation\",\"message\":\"" << e.what() << "\"}}\n";
    return 2;
  }
  return 2;
}
