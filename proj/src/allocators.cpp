#include "rationlab/allocators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rationlab/numeric.hpp"

namespace rationlab {

namespace {

// Classification tolerance mirrors the feasibility tolerance.
CoordTag classify(double q, double cap) {
  if (q <= tol::sum_constraint) return CoordTag::AtZero;
  if (q >= cap - tol::sum_constraint) return CoordTag::AtCap;
  return CoordTag::Interior;
}

void require_feasible(const Vec& q, const FeasibleSet& fs) {
  if (q.size() != fs.size()) throw ValidationError("allocation size mismatch");
  for (Eigen::Index i = 0; i < q.size(); ++i)
    if (q[i] < -tol::sum_constraint || q[i] > fs.caps[i] + tol::sum_constraint)
      throw ValidationError("allocation outside box bounds");
  if (std::fabs(q.sum() - fs.total) > tol::sum_constraint)
    throw ValidationError("allocation does not sum to total supply");
}

double curve_choke(const DemandCurve& d) {
  return eval_inverse_demand(d, 0.0);
}

}  // namespace

Allocation make_allocation(const Vec& q, const FeasibleSet& fs) {
  require_feasible(q, fs);
  Allocation a;
  a.q = q;
  a.tags.reserve(static_cast<std::size_t>(q.size()));
  for (Eigen::Index i = 0; i < q.size(); ++i) a.tags.push_back(classify(q[i], fs.caps[i]));
  return a;
}

double total_gross_surplus(const std::vector<MarketSpec>& markets, const Vec& q) {
  double w = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i)
    w += gross_surplus(markets[static_cast<std::size_t>(i)].demand, 0.0, q[i]);
  return w;
}

EfficientResult efficient_allocation(const std::vector<MarketSpec>& markets,
                                     const FeasibleSet& fs) {
  const auto n = fs.size();
  if (static_cast<Eigen::Index>(markets.size()) != n)
    throw ValidationError("efficient_allocation: market/cap count mismatch");

  auto clamped = [&](double p, Eigen::Index i) {
    const auto& m = markets[static_cast<std::size_t>(i)];
    double q = generalized_inverse(m.demand, p, std::min(m.q_max, fs.caps[i]));
    return std::min(q, fs.caps[i]);
  };
  auto total_at = [&](double p) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += clamped(p, i);
    return s;
  };

  double p_hi = 0.0;
  for (const auto& m : markets) p_hi = std::max(p_hi, curve_choke(m.demand));
  p_hi = std::max(p_hi, 1.0) * (1.0 + 1e-9);

  double p_lo = 0.0;
  Vec q(n);
  double p_star;
  if (total_at(p_lo) < fs.total - tol::sum_constraint) {
    // Demand cannot absorb the supply at any nonnegative price: surplus is flat
    // past the zero-price crossings, so fix p* = 0 and fill deterministically.
    p_star = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) q[i] = clamped(0.0, i);
    double residual = fs.total - q.sum();
    for (Eigen::Index i = 0; i < n && residual > 0.0; ++i) {
      double room = fs.caps[i] - q[i];
      double add = std::min(room, residual);
      q[i] += add;
      residual -= add;
    }
    if (residual > tol::sum_constraint)
      throw SolverError("efficient_allocation: could not place residual supply");
  } else {
    // Monotone bisection on the common shadow price.
    double lo = p_lo, hi = p_hi;
    for (int it = 0; it < 200 && (hi - lo) > 1e-13 * std::max(1.0, hi); ++it) {
      double mid = 0.5 * (lo + hi);
      if (total_at(mid) >= fs.total)
        lo = mid;
      else
        hi = mid;
    }
    // q(hi) undershoots, q(lo) overshoots; split the residual proportionally to
    // the per-market slack so flat demand segments absorb the remaining mass.
    Vec q_under(n), q_over(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      q_under[i] = clamped(hi, i);
      q_over[i] = clamped(lo, i);
    }
    double slack = (q_over - q_under).sum();
    double residual = fs.total - q_under.sum();
    if (slack > 0.0 && residual > 0.0) {
      double t = std::min(1.0, residual / slack);
      q = q_under + t * (q_over - q_under);
    } else {
      q = q_under;
    }
    // Tiny leftover from clamping: place it wherever box room remains.
    double leftover = fs.total - q.sum();
    for (Eigen::Index i = 0; i < n && std::fabs(leftover) > 0.0; ++i) {
      double adj = std::clamp(leftover, -q[i], fs.caps[i] - q[i]);
      q[i] += adj;
      leftover -= adj;
    }
    if (std::fabs(fs.total - q.sum()) > tol::sum_constraint)
      throw SolverError("efficient_allocation: bisection failed to meet adding-up");
    p_star = 0.5 * (lo + hi);
  }

  EfficientResult res{make_allocation(q, fs), p_star};
  return res;
}

Allocation greedy_controlled_allocation(const std::vector<MarketSpec>& markets,
                                        const FeasibleSet& fs, TieBreak tie_break) {
  const auto n = fs.size();
  if (static_cast<Eigen::Index>(markets.size()) != n)
    throw ValidationError("greedy_controlled_allocation: market/cap count mismatch");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    double ca = markets[static_cast<std::size_t>(a)].unit_cost;
    double cb = markets[static_cast<std::size_t>(b)].unit_cost;
    if (ca != cb) return ca < cb;
    return a < b;
  });
  if (tie_break == TieBreak::Error) {
    for (std::size_t k = 1; k < order.size(); ++k) {
      double ca = markets[static_cast<std::size_t>(order[k - 1])].unit_cost;
      double cb = markets[static_cast<std::size_t>(order[k])].unit_cost;
      if (std::fabs(cb - ca) <= tol::tie)
        throw TieError("greedy_controlled_allocation: unit costs tie within tolerance");
    }
    double prefix = 0.0;
    for (auto idx : order) {
      prefix += fs.caps[idx];
      if (std::fabs(prefix - fs.total) <= tol::tie)
        throw DegenerateError(
            "greedy_controlled_allocation: supply equals a prefix sum of caps");
    }
  }

  Vec q = Vec::Zero(n);
  double remaining = fs.total;
  Eigen::Index cutoff = -1;
  for (auto idx : order) {
    double take = std::min(remaining, fs.caps[idx]);
    q[idx] = take;
    remaining -= take;
    if (take < fs.caps[idx] && take > 0.0 && cutoff < 0) cutoff = idx;
    if (remaining < 0.0) remaining = 0.0;
  }
  if (remaining > tol::sum_constraint)
    throw ValidationError("greedy_controlled_allocation: caps cannot absorb supply");
  // Canonical partial coordinate: total minus the ascending-index cap sum of
  // the fully served markets, so the vertex is bit-identical to enumeration.
  if (cutoff >= 0) {
    double full_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != cutoff && q[i] > 0.0) full_sum += fs.caps[i];
    q[cutoff] = fs.total - full_sum;
  }
  return make_allocation(q, fs);
}

namespace {

// Enumerates vertices of the box-hyperplane polytope: a set S of full markets
// plus at most one partially served market. Calls visit(full_mask, partial, r)
// where r is the partial quantity (r < 0 means no partial coordinate).
template <typename Visit>
void enumerate_vertices(const Vec& caps, double total, Visit&& visit) {
  const int n = static_cast<int>(caps.size());
  std::vector<int> full;
  auto rec = [&](auto&& self, int i, double capsum) -> void {
    if (capsum > total + tol::tie) return;  // prefix already overshoots
    if (i == n) {
      if (std::fabs(capsum - total) <= tol::tie) {
        visit(full, -1, -1.0);
        return;
      }
      double r = total - capsum;
      for (int j = 0; j < n; ++j) {
        if (std::find(full.begin(), full.end(), j) != full.end()) continue;
        if (caps[j] > r + tol::tie) visit(full, j, r);
      }
      return;
    }
    self(self, i + 1, capsum);
    if (caps[i] > 0.0) {
      full.push_back(i);
      self(self, i + 1, capsum + caps[i]);
      full.pop_back();
    }
  };
  rec(rec, 0, 0.0);
}

Vec vertex_point(const Vec& caps, const std::vector<int>& full, int partial, double r) {
  Vec q = Vec::Zero(caps.size());
  for (int i : full) q[i] = caps[i];
  if (partial >= 0) q[partial] = r;
  return q;
}

double feasible_cutoff(const std::vector<MarketSpec>& markets, const FeasibleSet& fs,
                       const Vec& q) {
  // Any lambda in [max_full P_i(cap_i), min_zero P_i(0)] certifies the vertex;
  // report the midpoint of that interval (the interior value when a partial
  // coordinate pins it exactly).
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    const auto& d = markets[static_cast<std::size_t>(i)].demand;
    double cap = fs.caps[i];
    if (q[i] <= tol::sum_constraint)
      hi = std::min(hi, eval_inverse_demand(d, 0.0));
    else if (q[i] >= cap - tol::sum_constraint)
      lo = std::max(lo, eval_inverse_demand(d, std::min(cap, domain_max(d))));
    else
      return eval_inverse_demand(d, q[i]);
  }
  if (!std::isfinite(hi)) return lo;
  return 0.5 * (lo + std::min(hi, std::max(lo, hi)));
}

WorstCaseResult worst_case_heuristic(const std::vector<MarketSpec>& markets,
                                     const FeasibleSet& fs) {
  const auto n = fs.size();
  // Rank markets by average value over the quantity they could receive; fill
  // the least valuable first, then try pairwise vertex swaps.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  auto avg_value = [&](Eigen::Index i) {
    double span = std::min(fs.caps[i], fs.total);
    if (span <= 0.0) return std::numeric_limits<double>::infinity();
    return gross_surplus(markets[static_cast<std::size_t>(i)].demand, 0.0, span) / span;
  };
  std::vector<double> av(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) av[static_cast<std::size_t>(i)] = avg_value(i);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return av[a] < av[b]; });

  Vec q = Vec::Zero(n);
  double remaining = fs.total;
  for (auto idx : order) {
    double take = std::min(remaining, fs.caps[idx]);
    q[idx] = take;
    remaining -= take;
  }
  double value = total_gross_surplus(markets, q);

  // Local improvement: move mass between a donor and a receiver while keeping
  // the vertex structure (donor empties or receiver fills).
  bool improved = true;
  int guard = 0;
  while (improved && guard++ < 200) {
    improved = false;
    for (Eigen::Index a = 0; a < n; ++a) {
      if (q[a] <= 0.0) continue;
      for (Eigen::Index b = 0; b < n; ++b) {
        if (a == b) continue;
        double move = std::min(q[a], fs.caps[b] - q[b]);
        if (move <= tol::sum_constraint) continue;
        Vec trial = q;
        trial[a] -= move;
        trial[b] += move;
        double v = total_gross_surplus(markets, trial);
        if (v < value - 1e-12) {
          q = trial;
          value = v;
          improved = true;
        }
      }
    }
  }
  Allocation alloc = make_allocation(q, fs);
  double cutoff = feasible_cutoff(markets, fs, q);
  return {std::move(alloc), cutoff, value};
}

}  // namespace

WorstCaseResult worst_case_allocation(const std::vector<MarketSpec>& markets,
                                      const FeasibleSet& fs) {
  const auto n = fs.size();
  if (static_cast<Eigen::Index>(markets.size()) != n)
    throw ValidationError("worst_case_allocation: market/cap count mismatch");
  if (n > worst_case_exact_limit) return worst_case_heuristic(markets, fs);

  std::vector<double> full_value(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    full_value[static_cast<std::size_t>(i)] =
        gross_surplus(markets[static_cast<std::size_t>(i)].demand, 0.0, fs.caps[i]);

  double best = std::numeric_limits<double>::infinity();
  Vec best_q;
  enumerate_vertices(fs.caps, fs.total, [&](const std::vector<int>& full, int partial, double r) {
    double v = 0.0;
    for (int i : full) v += full_value[static_cast<std::size_t>(i)];
    if (partial >= 0)
      v += gross_surplus(markets[static_cast<std::size_t>(partial)].demand, 0.0, r);
    if (v < best) {
      best = v;
      best_q = vertex_point(fs.caps, full, partial, r);
    }
  });
  if (!best_q.size()) throw SolverError("worst_case_allocation: no vertex found");
  Allocation alloc = make_allocation(best_q, fs);
  double cutoff = feasible_cutoff(markets, fs, best_q);
  return {std::move(alloc), cutoff, best};
}

double misallocation_loss(const std::vector<MarketSpec>& markets, const FeasibleSet& fs,
                          const Allocation& q) {
  require_feasible(q.q, fs);
  EfficientResult eff = efficient_allocation(markets, fs);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < fs.size(); ++i)
    loss += gross_surplus(markets[static_cast<std::size_t>(i)].demand, q.q[i], eff.allocation.q[i]);
  return loss;
}

double harberger_loss(const DemandCurve& aggregate_demand, double base_p, double base_q,
                      double supply) {
  if (supply > base_q + tol::sum_constraint)
    throw ValidationError("harberger_loss: supply exceeds baseline quantity");
  return gross_surplus(aggregate_demand, supply, base_q) - base_p * (base_q - supply);
}

Allocation lp_vertex_oracle(const Vec& costs, const FeasibleSet& fs) {
  if (fs.size() > 12) throw ValidationError("lp_vertex_oracle: n too large (limit 12)");
  if (costs.size() != fs.size()) throw ValidationError("lp_vertex_oracle: size mismatch");
  double best = std::numeric_limits<double>::infinity();
  Vec best_q;
  enumerate_vertices(fs.caps, fs.total, [&](const std::vector<int>& full, int partial, double r) {
    Vec q = vertex_point(fs.caps, full, partial, r);
    double v = costs.dot(q);
    if (v < best) {
      best = v;
      best_q = std::move(q);
    }
  });
  if (!best_q.size()) throw SolverError("lp_vertex_oracle: no vertex found");
  return make_allocation(best_q, fs);
}

double efficient_kkt_residual(const std::vector<MarketSpec>& markets, const FeasibleSet& fs,
                              const Allocation& alloc, double p_star) {
  double r = 0.0;
  for (Eigen::Index i = 0; i < fs.size(); ++i) {
    const auto& d = markets[static_cast<std::size_t>(i)].demand;
    double qi = alloc.q[i];
    switch (alloc.tags[static_cast<std::size_t>(i)]) {
      case CoordTag::Interior:
        r = std::max(r, std::fabs(eval_inverse_demand(d, qi) - p_star));
        break;
      case CoordTag::AtCap:
        r = std::max(r, std::max(0.0, p_star - eval_inverse_demand(d, qi)));
        break;
      case CoordTag::AtZero:
        r = std::max(r, std::max(0.0, eval_inverse_demand(d, 0.0) - p_star));
        break;
    }
  }
  return r;
}

double worst_case_kkt_residual(const std::vector<MarketSpec>& markets, const FeasibleSet& fs,
                               const Allocation& alloc, double lambda) {
  double r = 0.0;
  for (Eigen::Index i = 0; i < fs.size(); ++i) {
    const auto& d = markets[static_cast<std::size_t>(i)].demand;
    double qi = alloc.q[i];
    switch (alloc.tags[static_cast<std::size_t>(i)]) {
      case CoordTag::Interior:
        r = std::max(r, std::fabs(eval_inverse_demand(d, qi) - lambda));
        break;
      case CoordTag::AtCap:
        r = std::max(r, std::max(0.0, eval_inverse_demand(d, qi) - lambda));
        break;
      case CoordTag::AtZero:
        r = std::max(r, std::max(0.0, lambda - eval_inverse_demand(d, 0.0)));
        break;
    }
  }
  return r;
}

}  // namespace rationlab
