#include "rationlab/chaos.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rationlab/numeric.hpp"

namespace rationlab {

void ScenarioConfig::validate_config() const {
  if (grid_rows < 1 || grid_cols < 1) throw ValidationError("ScenarioConfig: grid size >= 1");
  if (!(ceiling_fraction > 0.0 && ceiling_fraction < 1.0))
    throw ValidationError("ScenarioConfig: ceiling_fraction must be in (0, 1)");
  if (!(costs.lo < costs.hi)) throw ValidationError("ScenarioConfig: cost lo must be < hi");
  if (!(supply > 0.0)) throw ValidationError("ScenarioConfig: supply must be positive");
  if (demand_scale_jitter < 0.0 || demand_scale_jitter >= 1.0)
    throw ValidationError("ScenarioConfig: demand_scale_jitter must be in [0, 1)");
  validate(DemandCurve{demand});
}

// P_i(q_i) - c_i = lambda for served markets, q_i = 0 when P_i(0) - c_i is
// below lambda. No caps; only the adding-up constraint binds (the ceiling is
// what creates the caps).
std::pair<Vec, double> free_market_allocation(const std::vector<MarketSpec>& markets,
                                              const Vec& costs, double supply) {
  const auto n = static_cast<Eigen::Index>(markets.size());
  auto qty = [&](double lambda, Eigen::Index i) {
    const auto& m = markets[static_cast<std::size_t>(i)];
    double p = lambda + costs[i];
    if (p <= 0.0) p = 1e-300;  // demand explodes as price falls to zero; stay positive
    return generalized_inverse(m.demand, p, m.q_max);
  };
  auto total = [&](double lambda) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += qty(lambda, i);
    return s;
  };
  double hi = 0.0;
  for (const auto& m : markets) hi = std::max(hi, eval_inverse_demand(m.demand, 0.0));
  double lo = -costs.minCoeff();  // price in the cheapest market tends to zero
  double eps = std::max(1e-12, 1e-12 * std::fabs(lo));
  lo += eps;
  if (total(lo) < supply)
    throw SolverError("free allocation: demand cannot absorb supply even at zero price");
  for (int it = 0; it < 200 && (hi - lo) > 1e-13 * std::max(1.0, std::fabs(hi)); ++it) {
    double mid = 0.5 * (lo + hi);
    if (total(mid) >= supply)
      lo = mid;
    else
      hi = mid;
  }
  double lambda = 0.5 * (lo + hi);
  Vec q(n);
  for (Eigen::Index i = 0; i < n; ++i) q[i] = qty(lambda, i);
  // Exact adding-up: spread the rounding residual over served markets.
  double residual = supply - q.sum();
  double served = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) served += (q[i] > 0.0) ? q[i] : 0.0;
  if (served > 0.0)
    for (Eigen::Index i = 0; i < n; ++i)
      if (q[i] > 0.0) q[i] += residual * q[i] / served;
  return {q, lambda};
}

GridResult run_grid_scenario(const ScenarioConfig& cfg) {
  cfg.validate_config();
  const int n = cfg.market_count();
  SplitMix64 root(cfg.rng_seed);

  Vec costs(n);
  std::vector<MarketSpec> markets;
  markets.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SplitMix64 stream = root.split(static_cast<std::uint64_t>(i));
    double c = stream.uniform(cfg.costs.lo, cfg.costs.hi);
    if (cfg.costs.kind == CostModel::Kind::Systematic) {
      int row = i / cfg.grid_cols, col = i % cfg.grid_cols;
      double dr = static_cast<double>(row) / std::max(1, cfg.grid_rows - 1);
      double dc = static_cast<double>(col) / std::max(1, cfg.grid_cols - 1);
      c += cfg.costs.gradient * std::hypot(dr, dc) / std::sqrt(2.0);
    }
    // Index-scaled jitter resolves exact ties deterministically.
    c += static_cast<double>(i) * 1e-15;
    costs[i] = c;

    TruncatedHill d = cfg.demand;
    if (cfg.demand_scale_jitter > 0.0) {
      SplitMix64 jstream = root.split(0x100000ULL + static_cast<std::uint64_t>(i));
      d.scale *= 1.0 + cfg.demand_scale_jitter * (2.0 * jstream.next_double() - 1.0);
    }
    markets.push_back(MarketSpec{DemandCurve{d}, c, 50.0 * d.scale});
  }

  // Market-clearing price: aggregate demand equals the fixed supply.
  auto aggregate_demand = [&](double p) {
    double s = 0.0;
    for (const auto& m : markets) s += generalized_inverse(m.demand, p, m.q_max);
    return s - cfg.supply;
  };
  double p_hi = 0.0;
  for (const auto& m : markets) p_hi = std::max(p_hi, eval_inverse_demand(m.demand, 0.0));
  double market_price = bisect_decreasing(aggregate_demand, 1e-9, p_hi, 1e-13);
  double ceiling = cfg.ceiling_fraction * market_price;

  Vec caps(n);
  for (int i = 0; i < n; ++i)
    caps[i] = generalized_inverse(markets[static_cast<std::size_t>(i)].demand, ceiling,
                                  markets[static_cast<std::size_t>(i)].q_max);
  FeasibleSet fs(caps, cfg.supply);

  auto [q_free, lambda_free] = free_market_allocation(markets, costs, cfg.supply);
  Allocation controlled = greedy_controlled_allocation(markets, fs, TieBreak::IndexOrder);

  double w_free = total_gross_surplus(markets, q_free) - ceiling * cfg.supply;
  double w_ctrl = total_gross_surplus(markets, controlled.q) - ceiling * cfg.supply;
  int unserved = 0;
  for (Eigen::Index i = 0; i < controlled.q.size(); ++i)
    if (controlled.q[i] <= tol::sum_constraint) ++unserved;

  Allocation free_alloc;
  free_alloc.q = q_free;
  free_alloc.tags.assign(static_cast<std::size_t>(n), CoordTag::Interior);
  for (Eigen::Index i = 0; i < q_free.size(); ++i)
    if (q_free[i] <= tol::sum_constraint)
      free_alloc.tags[static_cast<std::size_t>(i)] = CoordTag::AtZero;

  return GridResult{std::move(free_alloc),
                    std::move(controlled),
                    market_price,
                    ceiling,
                    lambda_free,
                    w_free,
                    w_ctrl,
                    unserved,
                    std::move(costs),
                    std::move(markets),
                    std::move(fs)};
}

namespace {

Vec costs_at(const Vec& base, const Vec& dir, double t) { return base + t * dir; }

Allocation greedy_at(const std::vector<MarketSpec>& markets, const FeasibleSet& fs,
                     const Vec& base, const Vec& dir, double t) {
  std::vector<MarketSpec> ms = markets;
  Vec c = costs_at(base, dir, t);
  for (std::size_t i = 0; i < ms.size(); ++i) ms[i].unit_cost = c[static_cast<Eigen::Index>(i)];
  return greedy_controlled_allocation(ms, fs);
}

bool same_allocation(const Vec& a, const Vec& b) {
  return ((a - b).array().abs() < 1e-9).all();
}

// Number of coordinates that differ between two allocations.
int diff_count(const Vec& a, const Vec& b, std::vector<int>* idx = nullptr) {
  int k = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::fabs(a[i] - b[i]) > 1e-9) {
      ++k;
      if (idx) idx->push_back(static_cast<int>(i));
    }
  return k;
}

void locate_jumps(const std::vector<MarketSpec>& markets, const FeasibleSet& fs, const Vec& base,
                  const Vec& dir, double t0, const Vec& q0, double t1, const Vec& q1,
                  std::vector<JumpEvent>& out, int depth) {
  if (same_allocation(q0, q1)) return;
  // Bisect to localize the crossing; greedy can throw exactly at a tie, in
  // which case we shrink the bracket around the throwing point.
  double lo = t0, hi = t1;
  Vec qlo = q0, qhi = q1;
  while (hi - lo > 1e-10) {
    double mid = 0.5 * (lo + hi);
    Vec qmid;
    try {
      qmid = greedy_at(markets, fs, base, dir, mid).q;
    } catch (const ValidationError&) {
      // exact tie or degeneracy at mid: nudge the bracket asymmetrically
      double mid2 = lo + (hi - lo) * 0.49;
      try {
        qmid = greedy_at(markets, fs, base, dir, mid2).q;
        mid = mid2;
      } catch (const ValidationError&) {
        break;
      }
    }
    if (same_allocation(qmid, qlo)) {
      lo = mid;
      qlo = qmid;
    } else {
      hi = mid;
      qhi = qmid;
    }
  }
  // If more than one rank swap hides in the bracket, the outer allocations
  // differ in more than two coordinates; refine recursively before giving up.
  std::vector<int> changed;
  int k = diff_count(qlo, qhi, &changed);
  if (k > 2 && depth < 40 && hi - lo > 1e-12) {
    double mid = 0.5 * (lo + hi);
    try {
      Vec qmid = greedy_at(markets, fs, base, dir, mid).q;
      locate_jumps(markets, fs, base, dir, lo, qlo, mid, qmid, out, depth + 1);
      locate_jumps(markets, fs, base, dir, mid, qmid, hi, qhi, out, depth + 1);
      return;
    } catch (const ValidationError&) {
      // fall through: emit as compound
    }
  }

  JumpEvent ev;
  ev.t = 0.5 * (lo + hi);
  ev.pre_allocation = qlo;
  ev.post_allocation = qhi;
  ev.compound = (k != 2);
  if (k == 2) {
    int r = (qhi[changed[0]] < qlo[changed[0]]) ? changed[0] : changed[1];
    int s = (r == changed[0]) ? changed[1] : changed[0];
    ev.market_down = r;
    ev.market_up = s;
    ev.reallocated_mass = qhi[s] - qlo[s];
    const auto& Ps = markets[static_cast<std::size_t>(s)].demand;
    const auto& Pr = markets[static_cast<std::size_t>(r)].demand;
    ev.welfare_jump =
        gross_surplus(Ps, qlo[s], qhi[s]) - gross_surplus(Pr, qhi[r], qlo[r]);
  } else {
    ev.reallocated_mass = 0.5 * (qhi - qlo).cwiseAbs().sum();
    double dw = 0.0;
    for (Eigen::Index i = 0; i < qlo.size(); ++i)
      dw += gross_surplus(markets[static_cast<std::size_t>(i)].demand, qlo[i], qhi[i]);
    ev.welfare_jump = dw;
  }
  out.push_back(std::move(ev));
}

}  // namespace

std::vector<JumpEvent> sweep_cost_path(const std::vector<MarketSpec>& markets,
                                       const FeasibleSet& fs, const Vec& base_costs,
                                       const Vec& direction, double t_lo, double t_hi,
                                       double step) {
  if (!(t_lo < t_hi)) throw ValidationError("sweep_cost_path: empty t range");
  if (!(step > 0.0)) throw ValidationError("sweep_cost_path: step must be positive");
  Vec c0 = costs_at(base_costs, direction, t_lo);
  Vec c1 = costs_at(base_costs, direction, t_hi);
  auto distinct = [](const Vec& c) {
    for (Eigen::Index i = 0; i < c.size(); ++i)
      for (Eigen::Index j = i + 1; j < c.size(); ++j)
        if (std::fabs(c[i] - c[j]) <= tol::tie) return false;
    return true;
  };
  if (!distinct(c0) || !distinct(c1))
    throw ValidationError("sweep_cost_path: path endpoints have tied costs");

  std::vector<JumpEvent> events;
  double t_prev = t_lo;
  Vec q_prev = greedy_at(markets, fs, base_costs, direction, t_lo).q;
  for (double t = t_lo + step; t_prev < t_hi; t += step) {
    double t_cur = std::min(t, t_hi);
    Vec q_cur;
    try {
      q_cur = greedy_at(markets, fs, base_costs, direction, t_cur).q;
    } catch (const ValidationError&) {
      t_cur = std::min(t_cur + 0.37 * step, t_hi);  // grid point landed on a tie
      q_cur = greedy_at(markets, fs, base_costs, direction, t_cur).q;
    }
    if (!same_allocation(q_prev, q_cur))
      locate_jumps(markets, fs, base_costs, direction, t_prev, q_prev, t_cur, q_cur, events, 0);
    t_prev = t_cur;
    q_prev = q_cur;
    if (t_cur >= t_hi) break;
  }
  return events;
}

Allocation smoothed_allocation(const Vec& costs, const FeasibleSet& fs, double kappa) {
  if (!(kappa > 0.0)) throw ValidationError("smoothed_allocation: kappa must be positive");
  if (costs.size() != fs.size()) throw ValidationError("smoothed_allocation: size mismatch");
  // KKT: q_i = clamp((lambda - c_i)/kappa, 0, cap_i); sum is nondecreasing in lambda.
  auto total = [&](double lambda) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < costs.size(); ++i)
      s += std::clamp((lambda - costs[i]) / kappa, 0.0, fs.caps[i]);
    return s;
  };
  double lo = costs.minCoeff();
  double hi = costs.maxCoeff() + kappa * fs.caps.maxCoeff() + kappa * fs.total + 1.0;
  for (int it = 0; it < 200 && (hi - lo) > 1e-15 * std::max(1.0, std::fabs(hi)); ++it) {
    double mid = 0.5 * (lo + hi);
    if (total(mid) <= fs.total)
      lo = mid;
    else
      hi = mid;
  }
  double lambda = 0.5 * (lo + hi);
  Vec q(costs.size());
  for (Eigen::Index i = 0; i < costs.size(); ++i)
    q[i] = std::clamp((lambda - costs[i]) / kappa, 0.0, fs.caps[i]);
  // Exact adding-up on the strictly interior coordinates.
  double residual = fs.total - q.sum();
  if (std::fabs(residual) > 0.0) {
    for (Eigen::Index i = 0; i < q.size() && std::fabs(residual) > 0.0; ++i) {
      double adj = std::clamp(residual, -q[i], fs.caps[i] - q[i]);
      if (q[i] > 0.0 && q[i] < fs.caps[i]) {
        q[i] += adj;
        residual -= adj;
      }
    }
    for (Eigen::Index i = 0; i < q.size() && std::fabs(residual) > 0.0; ++i) {
      double adj = std::clamp(residual, -q[i], fs.caps[i] - q[i]);
      q[i] += adj;
      residual -= adj;
    }
  }
  return make_allocation(q, fs);
}

std::vector<CutoffGapStats> cutoff_gap_statistics(const std::vector<int>& n_values, int draws,
                                                  double cost_lo, double cost_hi, double cap,
                                                  double supply_fraction, std::uint64_t seed) {
  if (draws < 1) throw ValidationError("cutoff_gap_statistics: draws must be >= 1");
  if (!(cost_lo < cost_hi)) throw ValidationError("cutoff_gap_statistics: cost range empty");
  if (!(supply_fraction > 0.0 && supply_fraction < 1.0))
    throw ValidationError("cutoff_gap_statistics: supply_fraction must be in (0, 1)");
  std::vector<CutoffGapStats> out;
  SplitMix64 root(seed);
  for (std::size_t vi = 0; vi < n_values.size(); ++vi) {
    int n = n_values[vi];
    if (n < 2) throw ValidationError("cutoff_gap_statistics: n must be >= 2");
    std::vector<double> gaps;
    gaps.reserve(static_cast<std::size_t>(draws));
    SplitMix64 stream = root.split(vi);
    for (int d = 0; d < draws; ++d) {
      std::vector<double> costs(static_cast<std::size_t>(n));
      for (auto& c : costs) c = stream.uniform(cost_lo, cost_hi);
      std::sort(costs.begin(), costs.end());
      // Greedy with homogeneous caps: the cutoff index depends only on supply.
      double supply = supply_fraction * cap * n;
      int k = static_cast<int>(supply / cap);  // markets filled to cap before the cutoff
      if (k >= n - 1) k = n - 2;
      gaps.push_back(costs[static_cast<std::size_t>(k + 1)] - costs[static_cast<std::size_t>(k)]);
    }
    std::sort(gaps.begin(), gaps.end());
    CutoffGapStats s;
    s.n = n;
    s.mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
    auto quantile = [&](double q) {
      double pos = q * static_cast<double>(gaps.size() - 1);
      auto i = static_cast<std::size_t>(pos);
      double frac = pos - static_cast<double>(i);
      if (i + 1 >= gaps.size()) return gaps.back();
      return gaps[i] * (1.0 - frac) + gaps[i + 1] * frac;
    };
    s.median = quantile(0.5);
    s.q10 = quantile(0.1);
    s.q90 = quantile(0.9);
    out.push_back(s);
  }
  return out;
}

}  // namespace rationlab
