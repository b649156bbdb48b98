#include "rationlab/bounds.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "rationlab/allocators.hpp"
#include "rationlab/numeric.hpp"
#include "rationlab/tolerances.hpp"

namespace rationlab {

void BoundsMarket::validate_market() const {
  if (!(g_lower < g_upper && g_upper < 0.0))
    throw ValidationError("BoundsMarket: need g_lower < g_upper < 0");
  if (!(q_obs > 0.0 && q_obs < q_max))
    throw ValidationError("BoundsMarket: need 0 < q_obs < q_max");
  if (!(anchor_lo <= anchor_hi)) throw ValidationError("BoundsMarket: anchor_lo > anchor_hi");
  if (!(anchor_lo > 0.0)) throw ValidationError("BoundsMarket: anchor must be positive");
  if (choke && !(*choke > anchor_hi))
    throw ValidationError("BoundsMarket: choke must exceed the anchor price");
}

void BoundsProblem::validate_problem() const {
  if (markets.empty()) throw ValidationError("BoundsProblem: no markets");
  double s = 0.0;
  for (const auto& m : markets) {
    m.validate_market();
    s += m.q_obs;
  }
  if (std::fabs(s - total) > tol::sum_constraint)
    throw ValidationError("BoundsProblem: observed quantities do not sum to total");
  if (!(ceiling > 0.0)) throw ValidationError("BoundsProblem: ceiling must be positive");
}

namespace {

double line_a(const BoundsMarket& m, double p0, double p) {  // flat-demand inverse
  return m.q_obs + (p - p0) / m.g_upper;
}
double line_b(const BoundsMarket& m, double p0, double p) {  // steep-demand inverse
  return m.q_obs + (p - p0) / m.g_lower;
}
double choke_trim(const BoundsMarket& m, double p) {  // largest q reachable under the cap
  return (*m.choke - p) / (-m.g_upper);
}

}  // namespace

double envelope_lower(const BoundsMarket& m, double p0, double p) {
  if (m.choke && p >= *m.choke) return 0.0;
  return std::max(0.0, std::min(line_a(m, p0, p), line_b(m, p0, p)));
}

double envelope_upper(const BoundsMarket& m, double p0, double p) {
  if (m.choke && p >= *m.choke) return 0.0;
  double v = std::min(m.q_max, std::max(line_a(m, p0, p), line_b(m, p0, p)));
  if (m.choke) v = std::min(v, choke_trim(m, p));
  return std::max(0.0, v);
}

std::vector<double> envelope_breakpoints(const BoundsMarket& m, double p0) {
  std::vector<double> bp;
  bp.push_back(p0);
  double au = -m.g_upper, al = -m.g_lower;  // |g_U|, |g_L|
  bp.push_back(p0 + m.q_obs * au);          // line_a hits zero
  bp.push_back(p0 + m.q_obs * al);          // line_b hits zero
  bp.push_back(p0 - (m.q_max - m.q_obs) * au);  // line_a hits q_max
  bp.push_back(p0 - (m.q_max - m.q_obs) * al);  // line_b hits q_max
  if (m.choke) {
    double M = *m.choke;
    bp.push_back(M);
    bp.push_back(M + m.g_upper * m.q_max);  // trim hits q_max
    // trim crosses line_b (trim is parallel to line_a)
    double denom = m.g_upper - m.g_lower;
    bp.push_back((m.g_upper * p0 - m.g_lower * M - m.g_lower * m.g_upper * m.q_obs) / denom);
  }
  std::sort(bp.begin(), bp.end());
  bp.erase(std::unique(bp.begin(), bp.end(),
                       [](double a, double b) { return std::fabs(a - b) < 1e-13; }),
           bp.end());
  return bp;
}

double envelope_integral(const BoundsMarket& m, double p0, bool upper, double a, double b) {
  if (a == b) return 0.0;
  double sign = 1.0;
  if (b < a) {
    std::swap(a, b);
    sign = -1.0;
  }
  std::vector<double> cuts{a, b};
  for (double p : envelope_breakpoints(m, p0))
    if (p > a && p < b) cuts.push_back(p);
  std::sort(cuts.begin(), cuts.end());
  // Midpoint rule per affine piece is exact and sidesteps the jump at the choke.
  double total = 0.0;
  for (std::size_t i = 1; i < cuts.size(); ++i) {
    double mid = 0.5 * (cuts[i - 1] + cuts[i]);
    double v = upper ? envelope_upper(m, p0, mid) : envelope_lower(m, p0, mid);
    total += v * (cuts[i] - cuts[i - 1]);
  }
  return sign * total;
}

std::vector<std::pair<double, double>> candidate_interval(const BoundsProblem& prob,
                                                          const std::vector<double>& anchors) {
  prob.validate_problem();
  if (anchors.size() != prob.markets.size())
    throw ValidationError("candidate_interval: anchor count mismatch");
  const auto n = prob.markets.size();

  auto L = [&](double p) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += envelope_lower(prob.markets[i], anchors[i], p);
    return s;
  };
  auto U = [&](double p) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += envelope_upper(prob.markets[i], anchors[i], p);
    return s;
  };

  // The candidate set lives inside the anchor span: below every anchor each
  // lower envelope exceeds its q_obs, above every anchor each upper envelope
  // is below it.
  double lo = *std::min_element(anchors.begin(), anchors.end());
  double hi = *std::max_element(anchors.begin(), anchors.end());

  std::vector<double> cuts{lo, hi};
  for (std::size_t i = 0; i < n; ++i)
    for (double p : envelope_breakpoints(prob.markets[i], anchors[i]))
      if (p > lo && p < hi) cuts.push_back(p);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [](double a, double b) { return std::fabs(a - b) < 1e-13; }),
             cuts.end());

  std::vector<std::pair<double, double>> comps;
  auto push = [&](double a, double b) {
    if (b < a) return;
    if (!comps.empty() && a <= comps.back().second + 1e-12)
      comps.back().second = std::max(comps.back().second, b);
    else
      comps.emplace_back(a, b);
  };

  const double Q = prob.total;
  const std::pair<double, double> kEmpty{1.0, 0.0};
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    double x0 = cuts[i], x1 = cuts[i + 1];
    double w = x1 - x0;
    if (w <= 0.0) continue;
    double pa = x0 + 0.25 * w, pb = x0 + 0.75 * w;
    // Each sum is affine on the open piece; reconstruct the line from two
    // interior samples and intersect the half-space condition with the piece.
    auto clipped = [&](double fa, double fb, bool ge) -> std::pair<double, double> {
      double slope = (fb - fa) / (0.5 * w);
      double f0 = fa - slope * (pa - x0);
      double slack = tol::sum_constraint;
      if (std::fabs(slope) * w < 1e-14) {
        bool ok = ge ? (f0 >= Q - slack) : (f0 <= Q + slack);
        return ok ? std::make_pair(x0, x1) : kEmpty;
      }
      double root = x0 + (Q - f0) / slope;
      bool left_side;  // condition holds for p <= root
      if (ge)
        left_side = (slope < 0.0);
      else
        left_side = (slope > 0.0);
      double a = left_side ? x0 : std::max(x0, root);
      double b = left_side ? std::min(x1, root) : x1;
      if (a > b) return kEmpty;
      return {a, b};
    };
    auto [la, lb] = clipped(L(pa), L(pb), false);
    if (la > lb) continue;
    auto [ua, ub] = clipped(U(pa), U(pb), true);
    if (ua > ub) continue;
    double a = std::max(la, ua), b = std::min(lb, ub);
    if (a <= b) push(a, b);
  }
  // Endpoint prices themselves (anchors can be isolated solutions).
  for (double p : {lo, hi})
    if (L(p) <= Q + tol::sum_constraint && U(p) >= Q - tol::sum_constraint) push(p, p);
  std::sort(comps.begin(), comps.end());
  std::vector<std::pair<double, double>> merged;
  for (auto& c : comps) {
    if (!merged.empty() && c.first <= merged.back().second + 1e-12)
      merged.back().second = std::max(merged.back().second, c.second);
    else
      merged.push_back(c);
  }
  if (merged.empty())
    throw ValidationError("candidate_interval: empty (inputs jointly inconsistent)");
  return merged;
}

std::pair<double, std::vector<double>> triangle_penalty(const std::vector<double>& widths,
                                                        const std::vector<double>& caps,
                                                        double mass) {
  const auto n = widths.size();
  if (caps.size() != n) throw ValidationError("triangle_penalty: size mismatch");
  double cap_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(widths[i] > 0.0)) throw ValidationError("triangle_penalty: width d_i must be > 0");
    if (caps[i] < 0.0) throw ValidationError("triangle_penalty: negative cap");
    cap_sum += caps[i];
  }
  if (mass < -tol::sum_constraint || mass > cap_sum + tol::sum_constraint)
    throw ValidationError("triangle_penalty: infeasible mass");
  mass = std::clamp(mass, 0.0, cap_sum);
  std::vector<double> delta(n, 0.0);
  if (mass == 0.0) return {0.0, delta};

  auto total = [&](double lambda) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::clamp(lambda * widths[i], 0.0, caps[i]);
    return s;
  };
  double lam_hi = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (widths[i] > 0.0) lam_hi = std::max(lam_hi, caps[i] / widths[i]);
  double lo = 0.0, hi = lam_hi;
  for (int it = 0; it < 200 && (hi - lo) > 1e-16 * std::max(1.0, hi); ++it) {
    double mid = 0.5 * (lo + hi);
    if (total(mid) < mass)
      lo = mid;
    else
      hi = mid;
  }
  double lambda = 0.5 * (lo + hi);
  double assigned = 0.0, free_width = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    delta[i] = std::clamp(lambda * widths[i], 0.0, caps[i]);
    assigned += delta[i];
    if (delta[i] > 0.0 && delta[i] < caps[i]) free_width += widths[i];
  }
  // Exact mass: spread the bisection residual over unclamped coordinates.
  double residual = mass - assigned;
  if (std::fabs(residual) > 0.0 && free_width > 0.0) {
    for (std::size_t i = 0; i < n; ++i)
      if (delta[i] > 0.0 && delta[i] < caps[i])
        delta[i] = std::clamp(delta[i] + residual * widths[i] / free_width, 0.0, caps[i]);
  } else if (std::fabs(residual) > 0.0) {
    for (std::size_t i = 0; i < n && std::fabs(residual) > 0.0; ++i) {
      double adj = std::clamp(residual, -delta[i], caps[i] - delta[i]);
      delta[i] += adj;
      residual -= adj;
    }
  }
  double value = 0.0;
  for (std::size_t i = 0; i < n; ++i) value += delta[i] * delta[i] / (2.0 * widths[i]);
  return {value, delta};
}

ConditionalValue conditional_bound(const BoundsProblem& prob, const std::vector<double>& anchors,
                                   double p, BoundSide side) {
  const auto n = prob.markets.size();
  if (anchors.size() != n) throw ValidationError("conditional_bound: anchor count mismatch");

  ConditionalValue out;
  out.endpoints.assign(n, 0.0);
  out.deltas.assign(n, 0.0);

  double value = prob.total * p;
  std::vector<bool> above(n);  // p >= p0_i
  std::vector<double> base(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = prob.markets[i];
    double p0 = anchors[i];
    value -= m.q_obs * p0;
    above[i] = (p >= p0);
    bool base_is_lower = (side == BoundSide::Upper) == above[i];
    base[i] = base_is_lower ? envelope_lower(m, p0, p) : envelope_upper(m, p0, p);
    // For p >= p0 the objective subtracts the integral of the baseline
    // envelope from p0 up to p; for p < p0 it adds the integral from p back
    // to p0, which is the same signed integral from p0 to p negated twice.
    value -= envelope_integral(m, p0, /*upper=*/!base_is_lower, p0, p);
  }

  double baseline_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) baseline_sum += base[i];
  double residual = prob.total - baseline_sum;
  out.residual_mass = residual;

  // Active set per the case split on the residual's sign.
  std::vector<std::size_t> active;
  bool deviate_up;  // endpoints move up from the lower envelope
  if (side == BoundSide::Upper) {
    if (residual > 0.0) {
      for (std::size_t i = 0; i < n; ++i)
        if (above[i]) active.push_back(i);
      deviate_up = true;
    } else {
      for (std::size_t i = 0; i < n; ++i)
        if (!above[i]) active.push_back(i);
      deviate_up = false;
    }
  } else {
    if (residual > 0.0) {
      for (std::size_t i = 0; i < n; ++i)
        if (!above[i]) active.push_back(i);
      deviate_up = true;
    } else {
      for (std::size_t i = 0; i < n; ++i)
        if (above[i]) active.push_back(i);
      deviate_up = false;
    }
  }

  double psi = 0.0;
  std::vector<double> deltas(active.size(), 0.0);
  if (std::fabs(residual) > 0.0) {
    std::vector<double> widths, caps;
    widths.reserve(active.size());
    caps.reserve(active.size());
    double cap_sum = 0.0;
    for (auto i : active) {
      const auto& m = prob.markets[i];
      widths.push_back(m.width());
      caps.push_back(std::max(0.0, envelope_upper(m, anchors[i], p) -
                                       envelope_lower(m, anchors[i], p)));
      cap_sum += caps.back();
    }
    double mass = std::fabs(residual);
    if (mass > cap_sum + 1e-7 * std::max(1.0, cap_sum))
      throw ValidationError("conditional_bound: p outside the candidate interval");
    auto [v, d] = triangle_penalty(widths, caps, std::min(mass, cap_sum));
    psi = v;
    deltas = std::move(d);
  }

  for (std::size_t k = 0; k < active.size(); ++k) {
    out.deltas[active[k]] = deltas[k];
  }
  for (std::size_t i = 0; i < n; ++i) {
    double d = out.deltas[i];
    out.endpoints[i] = deviate_up ? base[i] + d : base[i] - d;
  }

  out.value = (side == BoundSide::Upper) ? value - psi : value + psi;
  return out;
}

namespace {

struct SideSolution {
  double value = 0.0;
  double p_star = 0.0;
  std::vector<double> anchors;
  ConditionalValue cond;
  std::pair<double, double> interval{0.0, 0.0};
};

SideSolution solve_at_anchors(const BoundsProblem& prob, const std::vector<double>& anchors,
                              BoundSide side) {
  auto comps = candidate_interval(prob, anchors);
  const bool maximize = (side == BoundSide::Upper);
  auto objective = [&](double p) {
    // Prices that drift marginally past the interval edge during the search
    // are simply never optimal.
    try {
      double v = conditional_bound(prob, anchors, p, side).value;
      return maximize ? v : -v;
    } catch (const ValidationError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  double best_val = -std::numeric_limits<double>::infinity();
  double best_p = comps.front().first;
  std::pair<double, double> best_comp = comps.front();
  for (const auto& comp : comps) {
    std::vector<double> cuts{comp.first, comp.second};
    for (std::size_t i = 0; i < prob.markets.size(); ++i)
      for (double bp : envelope_breakpoints(prob.markets[i], anchors[i]))
        if (bp > comp.first && bp < comp.second) cuts.push_back(bp);
    // Active-set switches where the pre-projection residual changes sign.
    auto residual_at = [&](double p) {
      double s = 0.0;
      for (std::size_t i = 0; i < prob.markets.size(); ++i) {
        const auto& m = prob.markets[i];
        bool base_is_lower = (side == BoundSide::Upper) == (p >= anchors[i]);
        s += base_is_lower ? envelope_lower(m, anchors[i], p)
                           : envelope_upper(m, anchors[i], p);
      }
      return prob.total - s;
    };
    std::sort(cuts.begin(), cuts.end());
    std::vector<double> roots;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      double a = cuts[i], b = cuts[i + 1];
      double ra = residual_at(a), rb = residual_at(b);
      if (ra == 0.0) roots.push_back(a);
      if (ra * rb < 0.0) {
        double lo = a, hi = b;
        for (int it = 0; it < 100 && (hi - lo) > 1e-12; ++it) {
          double mid = 0.5 * (lo + hi);
          double rm = residual_at(mid);
          if ((rm < 0.0) == (ra < 0.0))
            lo = mid;
          else
            hi = mid;
        }
        roots.push_back(0.5 * (lo + hi));
      }
    }
    cuts.insert(cuts.end(), roots.begin(), roots.end());
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(),
                           [](double a, double b) { return std::fabs(a - b) < 1e-13; }),
               cuts.end());

    // Coarse pass over every piece, golden refinement on the leading ones.
    std::vector<std::pair<double, std::size_t>> piece_scores;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      if (cuts[i + 1] - cuts[i] < 1e-13) {
        double v = objective(cuts[i]);
        if (v > best_val) {
          best_val = v;
          best_p = cuts[i];
          best_comp = comp;
        }
        continue;
      }
      double sample = -std::numeric_limits<double>::infinity();
      for (int k = 0; k <= 3; ++k) {
        double p = cuts[i] + (cuts[i + 1] - cuts[i]) * k / 3.0;
        sample = std::max(sample, objective(p));
      }
      piece_scores.emplace_back(sample, i);
    }
    std::sort(piece_scores.rbegin(), piece_scores.rend());
    std::size_t refine = std::min<std::size_t>(piece_scores.size(), 3);
    for (std::size_t r = 0; r < refine; ++r) {
      std::size_t i = piece_scores[r].second;
      auto [x, v] = golden_max(objective, cuts[i], cuts[i + 1], 1e-10);
      if (v > best_val) {
        best_val = v;
        best_p = x;
        best_comp = comp;
      }
    }
    if (comp.second - comp.first < 1e-13) {
      double v = objective(comp.first);
      if (v > best_val) {
        best_val = v;
        best_p = comp.first;
        best_comp = comp;
      }
    }
  }

  SideSolution sol;
  sol.p_star = best_p;
  sol.anchors = anchors;
  sol.cond = conditional_bound(prob, anchors, best_p, side);
  sol.value = sol.cond.value;
  sol.interval = best_comp;
  return sol;
}

SideSolution solve_side_interval(const BoundsProblem& prob, BoundSide side) {
  const auto n = prob.markets.size();
  auto lo_of = [&](std::size_t i) { return prob.markets[i].anchor_lo; };
  auto hi_of = [&](std::size_t i) { return prob.markets[i].anchor_hi; };
  auto mid_of = [&](std::size_t i) { return 0.5 * (lo_of(i) + hi_of(i)); };
  bool maximize = (side == BoundSide::Upper);
  auto strictly_better = [&](double a, double b) {
    double eps = 1e-12 * std::max(1.0, std::fabs(b));
    return maximize ? a > b + eps : a < b - eps;
  };
  auto better = [&](const SideSolution& a, const SideSolution& b) {
    return strictly_better(a.value, b.value);
  };
  // Revisited anchor configurations are common during the ascent; memoize.
  std::map<std::vector<double>, SideSolution> memo;
  auto solve_memo = [&](const std::vector<double>& anchors) -> const SideSolution& {
    auto it = memo.find(anchors);
    if (it == memo.end()) it = memo.emplace(anchors, solve_at_anchors(prob, anchors, side)).first;
    return it->second;
  };

  // Pilot solve at midpoints locates p* relative to each anchor interval.
  std::vector<double> mids(n);
  for (std::size_t i = 0; i < n; ++i) mids[i] = mid_of(i);
  SideSolution pilot = solve_memo(mids);
  SideSolution best = pilot;

  if (side == BoundSide::Lower) {
    // The inner value falls as any anchor moves toward the attaining shadow
    // price (envelope derivative -|beta_i| (p* - p0_i) on each branch), so the
    // minimizing anchors clamp to p*: a fixed-point iteration, not a corner
    // search. Overlapping anchor intervals legitimately drive the bound to 0.
    std::vector<std::vector<double>> inits{mids};
    std::vector<double> all_lo(n), all_hi(n);
    for (std::size_t i = 0; i < n; ++i) {
      all_lo[i] = lo_of(i);
      all_hi[i] = hi_of(i);
    }
    inits.push_back(all_lo);
    inits.push_back(all_hi);
    for (auto anchors : inits) {
      SideSolution cur = solve_memo(anchors);
      SideSolution run_best = cur;
      for (int it = 0; it < 20; ++it) {
        std::vector<double> next(n);
        double moved = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          next[i] = std::clamp(cur.p_star, lo_of(i), hi_of(i));
          moved = std::max(moved, std::fabs(next[i] - cur.anchors[i]));
        }
        if (moved < 1e-10) break;
        SideSolution trial = solve_memo(next);
        bool improved = better(trial, run_best);
        if (improved) run_best = trial;
        if (!improved) break;
        cur = trial;
      }
      if (!better(best, run_best)) best = run_best;
    }
    return best;
  }

  // Upper bound: anchors repel from p*, so corners are optimal per
  // coordinate; structured initialization plus coordinate ascent with seeded
  // random-corner restarts covers the coupled cases.
  std::vector<std::vector<double>> starts;
  {
    std::vector<double> structured(n);
    for (std::size_t i = 0; i < n; ++i)
      structured[i] = (pilot.p_star >= mids[i]) ? lo_of(i) : hi_of(i);
    starts.push_back(structured);
    std::vector<double> all_lo(n), all_hi(n);
    for (std::size_t i = 0; i < n; ++i) {
      all_lo[i] = lo_of(i);
      all_hi[i] = hi_of(i);
    }
    starts.push_back(all_lo);
    starts.push_back(all_hi);
    SplitMix64 rng(0x5eedULL);
    int restarts = (n <= 12) ? 5 : 2;
    for (int r = 0; r < restarts; ++r) {
      std::vector<double> corner(n);
      for (std::size_t i = 0; i < n; ++i)
        corner[i] = (rng.next_double() < 0.5) ? lo_of(i) : hi_of(i);
      starts.push_back(std::move(corner));
    }
  }

  // Markets with identical parameters share an optimal corner, so flip them
  // as one block; individual flips additionally run for small problems.
  std::vector<std::vector<std::size_t>> classes;
  {
    std::vector<bool> seen(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      if (seen[i]) continue;
      std::vector<std::size_t> cls{i};
      seen[i] = true;
      const auto& a = prob.markets[i];
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto& b = prob.markets[j];
        if (!seen[j] && a.q_obs == b.q_obs && a.anchor_lo == b.anchor_lo &&
            a.anchor_hi == b.anchor_hi && a.g_lower == b.g_lower && a.g_upper == b.g_upper &&
            a.q_max == b.q_max && a.choke == b.choke) {
          cls.push_back(j);
          seen[j] = true;
        }
      }
      classes.push_back(std::move(cls));
    }
  }
  const bool individual_flips = (n <= 12);

  for (auto& start : starts) {
    SideSolution cur = solve_memo(start);
    bool changed = true;
    int guard = 0;
    while (changed && guard++ < 6) {
      changed = false;
      for (const auto& cls : classes) {
        std::size_t i0 = cls.front();
        if (hi_of(i0) - lo_of(i0) < 1e-14) continue;
        double other = (cur.anchors[i0] == lo_of(i0)) ? hi_of(i0) : lo_of(i0);
        auto trial_anchor = cur.anchors;
        for (std::size_t i : cls) trial_anchor[i] = other;
        const SideSolution& trial = solve_memo(trial_anchor);
        if (better(trial, cur)) {
          cur = trial;
          changed = true;
        }
      }
      if (individual_flips) {
        for (std::size_t i = 0; i < n; ++i) {
          if (hi_of(i) - lo_of(i) < 1e-14) continue;
          double other = (cur.anchors[i] == lo_of(i)) ? hi_of(i) : lo_of(i);
          auto trial_anchor = cur.anchors;
          trial_anchor[i] = other;
          const SideSolution& trial = solve_memo(trial_anchor);
          if (better(trial, cur)) {
            cur = trial;
            changed = true;
          }
        }
      }
    }
    if (better(cur, best)) best = cur;
  }
  return best;
}

void run_diagnostics(const BoundsProblem& prob, const SideSolution& sol, BoundsDiagnostics& diag,
                     const char* label) {
  for (std::size_t i = 0; i < prob.markets.size(); ++i) {
    const auto& m = prob.markets[i];
    double p0 = sol.anchors[i];
    double a = std::min(p0, sol.p_star), b = std::max(p0, sol.p_star);
    std::vector<double> probes{a, b, 0.5 * (a + b)};
    for (double bp : envelope_breakpoints(m, p0))
      if (bp > a && bp < b) probes.push_back(bp);
    for (double p : probes) {
      double la = line_a(m, p0, p), lb = line_b(m, p0, p);
      double simple_lo = std::min(la, lb), simple_hi = std::max(la, lb);
      double full_lo = envelope_lower(m, p0, p), full_hi = envelope_upper(m, p0, p);
      // The anchor exactly on the choke boundary makes the trim coincide with
      // the flat line; that case is benign and not a clamp.
      if (full_lo < simple_lo - 1e-9 || full_hi < simple_hi - 1e-9 ||
          full_lo > simple_lo + 1e-9 || full_hi > simple_hi + 1e-9) {
        diag.interiority_ok = false;
        diag.notes.push_back(std::string(label) + ": market " + std::to_string(i) +
                             " envelope clamped on traversed range (conservative)");
        break;
      }
    }
    if (m.choke && choke_trim(m, p0) - m.q_obs < 1e-9) diag.choke_active = true;
  }
}

}  // namespace

BoundsResult solve_bounds(const BoundsProblem& prob, AnchorMode mode) {
  prob.validate_problem();
  SideSolution up, dn;
  if (mode == AnchorMode::Fixed) {
    std::vector<double> mids(prob.markets.size());
    for (std::size_t i = 0; i < prob.markets.size(); ++i)
      mids[i] = 0.5 * (prob.markets[i].anchor_lo + prob.markets[i].anchor_hi);
    up = solve_at_anchors(prob, mids, BoundSide::Upper);
    dn = solve_at_anchors(prob, mids, BoundSide::Lower);
  } else {
    up = solve_side_interval(prob, BoundSide::Upper);
    dn = solve_side_interval(prob, BoundSide::Lower);
  }

  BoundsResult res;
  res.phi_upper = up.value;
  res.phi_lower = dn.value;
  res.p_star_upper = up.p_star;
  res.p_star_lower = dn.p_star;
  res.anchors_upper = up.anchors;
  res.anchors_lower = dn.anchors;
  res.interval_upper = up.interval;
  res.interval_lower = dn.interval;
  for (std::size_t i = 0; i < prob.markets.size(); ++i) {
    res.extremal_upper.push_back(construct_extremal(prob.markets[i], up.anchors[i], up.p_star,
                                                    up.cond.deltas[i], BoundSide::Upper));
    res.extremal_lower.push_back(construct_extremal(prob.markets[i], dn.anchors[i], dn.p_star,
                                                    dn.cond.deltas[i], BoundSide::Lower));
  }
  run_diagnostics(prob, up, res.diagnostics, "upper");
  run_diagnostics(prob, dn, res.diagnostics, "lower");
  if (res.phi_lower > res.phi_upper + 1e-9)
    throw SolverError("solve_bounds: bound ordering violated");
  return res;
}

PiecewiseAffine construct_extremal(const BoundsMarket& m, double p0, double p_star, double delta,
                                   BoundSide side) {
  m.validate_market();
  if (delta < -tol::sum_constraint) throw ValidationError("construct_extremal: negative delta");
  delta = std::max(0.0, delta);
  double d = m.width();
  double h = delta / d;
  double span = std::fabs(p_star - p0);
  if (h > span + tol::sum_constraint)
    throw ValidationError("construct_extremal: delta infeasible for this price span");
  h = std::min(h, span);

  // A traversal shorter than the solver's price resolution is the degenerate
  // anchored case: the curve just passes through the anchor on one slope.
  // Dropping a kink this small changes the attained value by O(d span^2).
  if (span < 1e-5) {
    p_star = p0;
    h = 0.0;
    span = 0.0;
  }

  const bool above = (p_star >= p0);
  // Kink slope in quantity-per-price space: the upper-bound extremal leaves
  // the envelope at the steep-demand slope, the lower-bound one at the flat.
  double kink_slope = (side == BoundSide::Upper) ? m.beta() : m.alpha();
  bool base_is_lower = (side == BoundSide::Upper) == above;

  auto env = [&](double s) {
    return base_is_lower ? envelope_lower(m, p0, s) : envelope_upper(m, p0, s);
  };

  // Sample points (price, quantity) of the constructed inverse quantity map.
  std::vector<std::pair<double, double>> pts;  // ascending price
  double lo = std::min(p0, p_star), hi = std::max(p0, p_star);
  double switch_at = above ? (p_star - h) : (p_star + h);

  std::vector<double> grid{lo, hi, switch_at};
  for (double bp : envelope_breakpoints(m, p0))
    if (bp > lo && bp < hi) grid.push_back(bp);
  std::sort(grid.begin(), grid.end());
  // Merge near-coincident grid points: micro-segments otherwise pick up
  // roundoff slopes. The traversal endpoints survive the merge.
  {
    std::vector<double> merged;
    for (double g : grid) {
      if (!merged.empty() && g - merged.back() < 1e-8) {
        if (g == hi && merged.size() > 1) merged.back() = hi;
        continue;
      }
      merged.push_back(g);
    }
    grid = std::move(merged);
  }

  for (double s : grid) {
    double q;
    if (above) {
      // follow the envelope on [p0, switch_at], then the kink line up to p_star
      if (s <= switch_at)
        q = env(s);
      else
        q = env(switch_at) + kink_slope * (s - switch_at);
    } else {
      // envelope on [switch_at, p0], kink line down on [p_star, switch_at]
      if (s >= switch_at)
        q = env(s);
      else
        q = env(switch_at) + kink_slope * (s - switch_at);
    }
    pts.emplace_back(s, q);
  }

  // Extend above the traversed range with the flat-demand slope until q = 0.
  {
    auto [p_top, q_top] = pts.back();
    if (q_top > 1e-14) {
      double p_zero = p_top + q_top * (-m.g_upper);
      if (m.choke && p_zero > *m.choke + 1e-12) p_zero = *m.choke;  // clipped; flagged upstream
      pts.emplace_back(p_zero, 0.0);
    }
  }
  // Extend below with the flat-demand slope until q_max or the price floor.
  {
    auto [p_bot, q_bot] = pts.front();
    if (q_bot < m.q_max - 1e-14) {
      double p_qmax = p_bot - (m.q_max - q_bot) * (-m.g_upper);
      if (p_qmax >= 0.0) {
        pts.insert(pts.begin(), {p_qmax, m.q_max});
      } else {
        double q_at_zero = q_bot + p_bot / (-m.g_upper);
        pts.insert(pts.begin(), {0.0, std::min(q_at_zero, m.q_max)});
        if (q_at_zero < m.q_max - 1e-12)
          pts.insert(pts.begin(), {0.0, m.q_max});  // flat zero-price tail to the domain end
      }
    }
  }

  PiecewiseAffine out;
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    double q = it->second, p = std::max(0.0, it->first);
    if (!out.knots.empty()) {
      if (q <= out.knots.back().first + 1e-13) continue;
      if (p > out.knots.back().second) p = out.knots.back().second;
    }
    out.knots.emplace_back(q, p);
  }
  validate(DemandCurve{out});
  return out;
}

PiecewiseAffine admissible_sampler(const BoundsMarket& m, double p0, std::uint64_t seed) {
  m.validate_market();
  double au = -m.g_upper, al = -m.g_lower;
  if (m.choke && p0 + au * m.q_obs > *m.choke + 1e-12)
    throw ValidationError("admissible_sampler: anchor incompatible with choke cap");
  if (p0 < au * (m.q_max - m.q_obs) - 1e-12)
    throw ValidationError("admissible_sampler: no nonnegative curve reaches q_max");

  SplitMix64 rng(seed);
  int n_left = 1 + static_cast<int>(rng.next_u64() % 3);
  int n_right = 1 + static_cast<int>(rng.next_u64() % 3);

  // Left of the anchor: walk toward q = 0 keeping enough flat-slope headroom
  // to respect the choke cap.
  std::vector<std::pair<double, double>> left;  // (q, p), q descending
  {
    std::vector<double> qs{m.q_obs};
    for (int k = 1; k < n_left; ++k) qs.push_back(m.q_obs * rng.next_double());
    qs.push_back(0.0);
    std::sort(qs.rbegin(), qs.rend());
    double p = p0;
    for (std::size_t k = 0; k + 1 < qs.size(); ++k) {
      double len = qs[k] - qs[k + 1];
      if (len <= 0.0) continue;
      double rem = qs[k + 1];  // distance still to cover after this segment
      double cap = al;
      if (m.choke) {
        double budget = *m.choke - p - au * rem;
        cap = std::min(al, budget / len);
        cap = std::max(cap, au);
      }
      double slope = au + (cap - au) * rng.next_double();
      p += slope * len;
      left.emplace_back(qs[k + 1], p);
    }
  }
  // Right of the anchor: keep enough headroom for prices to stay nonnegative.
  std::vector<std::pair<double, double>> right;  // q ascending
  {
    std::vector<double> qs{m.q_obs};
    for (int k = 1; k < n_right; ++k)
      qs.push_back(m.q_obs + (m.q_max - m.q_obs) * rng.next_double());
    qs.push_back(m.q_max);
    std::sort(qs.begin(), qs.end());
    double p = p0;
    for (std::size_t k = 0; k + 1 < qs.size(); ++k) {
      double len = qs[k + 1] - qs[k];
      if (len <= 0.0) continue;
      double rem = m.q_max - qs[k + 1];
      double budget = p - au * rem;  // price we may spend on this segment
      double cap = std::min(al, budget / len);
      cap = std::max(cap, au);
      double slope = au + (cap - au) * rng.next_double();
      p -= slope * len;
      right.emplace_back(qs[k + 1], std::max(0.0, p));
    }
  }

  PiecewiseAffine out;
  for (auto it = left.rbegin(); it != left.rend(); ++it) out.knots.emplace_back(*it);
  out.knots.emplace_back(m.q_obs, p0);
  for (const auto& kp : right) out.knots.emplace_back(kp);
  // Defensive dedupe of zero-length segments from repeated breakpoints.
  auto& ks = out.knots;
  ks.erase(std::unique(ks.begin(), ks.end(),
                       [](const auto& a, const auto& b) {
                         return std::fabs(a.first - b.first) < 1e-13;
                       }),
           ks.end());
  validate(DemandCurve{out});
  return out;
}

double evaluate_misallocation(const BoundsProblem& prob, const std::vector<DemandCurve>& curves) {
  if (curves.size() != prob.markets.size())
    throw ValidationError("evaluate_misallocation: curve count mismatch");
  std::vector<MarketSpec> specs;
  Vec caps(static_cast<Eigen::Index>(curves.size()));
  for (std::size_t i = 0; i < curves.size(); ++i) {
    double qm = std::min(prob.markets[i].q_max, domain_max(curves[i]));
    specs.push_back(MarketSpec{curves[i], 0.0, qm});
    caps[static_cast<Eigen::Index>(i)] = qm;
  }
  FeasibleSet fs(caps, prob.total);
  EfficientResult eff = efficient_allocation(specs, fs);
  double phi = 0.0;
  for (std::size_t i = 0; i < curves.size(); ++i)
    phi += gross_surplus(curves[i], prob.markets[i].q_obs,
                         eff.allocation.q[static_cast<Eigen::Index>(i)]);
  return phi;
}

}  // namespace rationlab
