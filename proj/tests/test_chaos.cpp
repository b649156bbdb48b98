#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rationlab/chaos.hpp"

using namespace rationlab;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

std::vector<MarketSpec> linear_pair(double cap_domain = 20.0) {
  return {MarketSpec{DemandCurve{LinearAnchored{0.0, 3.0, -1.5}}, 0.0, cap_domain},
          MarketSpec{DemandCurve{LinearAnchored{0.0, 2.5, -1.0}}, 0.0, cap_domain}};
}

}  // namespace

TEST_CASE("grid scenario: defaults reproduce the documented structure") {
  ScenarioConfig cfg;
  cfg.rng_seed = 1;
  GridResult r = run_grid_scenario(cfg);
  CHECK(r.markets.size() == 100);
  // identical Hill demands: market clearing at aggregate demand = supply
  double agg = 0.0;
  for (const auto& m : r.markets)
    agg += generalized_inverse(m.demand, r.market_price, m.q_max);
  CHECK(agg == doctest::Approx(150.0).epsilon(1e-9));
  CHECK(r.ceiling == doctest::Approx(0.8 * r.market_price));
  // per-market cap at ceiling ~ 2.09 with the documented Hill defaults
  CHECK(r.feasible.caps[0] == doctest::Approx(2.0916500).epsilon(1e-6));
  // controlled allocation is a vertex
  CHECK(r.controlled_allocation.interior_count() <= 1);
  CHECK(r.unserved_count == 28);
  // welfare bracketing for this scenario
  auto eff = efficient_allocation(r.markets, r.feasible);
  auto worst = worst_case_allocation(r.markets, r.feasible);
  double w_eff = total_gross_surplus(r.markets, eff.allocation.q) - r.ceiling * 150.0;
  double w_worst = worst.gross_surplus - r.ceiling * 150.0;
  CHECK(r.welfare_controlled <= w_eff + 1e-9);
  CHECK(r.welfare_controlled >= w_worst - 1e-9);
}

TEST_CASE("grid scenario: symmetric costs give a uniform free allocation") {
  ScenarioConfig cfg;
  cfg.rng_seed = 3;
  cfg.costs.lo = 0.05;
  cfg.costs.hi = 0.05 + 1e-12;  // effectively equal costs (plus index jitter)
  GridResult r = run_grid_scenario(cfg);
  double mean = r.free_allocation.q.mean();
  CHECK((r.free_allocation.q.array() - mean).abs().maxCoeff() <= 1e-6);
}

TEST_CASE("free-market continuity against controlled jumps") {
  // Perturbing one cost by delta moves the free allocation by O(delta); the
  // greedy controlled allocation, at a crossing, moves a whole cap at once.
  SplitMix64 rng(404);
  for (int trial = 0; trial < 100; ++trial) {
    ScenarioConfig cfg;
    cfg.rng_seed = 1000 + static_cast<std::uint64_t>(trial);
    GridResult base = run_grid_scenario(cfg);
    double delta = 1e-6;
    Vec costs2 = base.costs;
    int which = static_cast<int>(rng.next_u64() % 100);
    costs2[which] += delta;
    auto [q2, lambda2] = free_market_allocation(base.markets, costs2, cfg.supply);
    (void)lambda2;
    // measured continuity constant: demand slope bounded by |D'| ~ s/choke
    // scale; 1e3 is generous for the documented Hill defaults
    CHECK((base.free_allocation.q - q2).norm() <= 1e3 * delta);
  }

  // at a detected crossing the controlled allocation moves at least the
  // smallest relevant cap gap
  auto ms = linear_pair();
  FeasibleSet fs(vec2(1.2, 0.9), 1.5);
  auto events = sweep_cost_path(ms, fs, vec2(0.5, 0.5), vec2(-1.0, 1.0), -0.1, 0.1, 0.01);
  REQUIRE(events.size() == 1);
  double smallest_gap = std::min({fs.caps[0], fs.caps[1], fs.total, fs.caps.sum() - fs.total});
  CHECK(events.front().reallocated_mass >= smallest_gap - 1e-9);
}

TEST_CASE("systematic cost model adds a distance gradient") {
  ScenarioConfig cfg;
  cfg.rng_seed = 9;
  cfg.costs.kind = CostModel::Kind::Systematic;
  cfg.costs.gradient = 0.5;
  GridResult r = run_grid_scenario(cfg);
  // far corner strictly more expensive than the depot corner on average
  double near = 0.0, far = 0.0;
  int k = 0;
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) {
      near += r.costs[row * 10 + col];
      far += r.costs[(9 - row) * 10 + (9 - col)];
      ++k;
    }
  CHECK(far / k > near / k + 0.2);
  CHECK(r.controlled_allocation.interior_count() <= 1);
}

TEST_CASE("deterministic per seed, different across seeds") {
  ScenarioConfig cfg;
  cfg.rng_seed = 5;
  GridResult a = run_grid_scenario(cfg);
  GridResult b = run_grid_scenario(cfg);
  CHECK((a.costs - b.costs).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.controlled_allocation.q - b.controlled_allocation.q).cwiseAbs().maxCoeff() == 0.0);
  cfg.rng_seed = 6;
  GridResult c = run_grid_scenario(cfg);
  CHECK((a.costs - c.costs).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("sweep: symmetric two-market tie produces exactly one jump at t = 0") {
  auto ms = linear_pair();
  FeasibleSet fs(vec2(1.2, 0.9), 1.5);
  Vec base = vec2(0.5, 0.5);
  Vec dir = vec2(-1.0, 1.0);
  auto events = sweep_cost_path(ms, fs, base, dir, -0.1, 0.1, 0.01);
  REQUIRE(events.size() == 1);
  const auto& ev = events.front();
  CHECK(std::fabs(ev.t) <= 1e-9);
  CHECK_FALSE(ev.compound);
  CHECK(ev.reallocated_mass > 0.0);
  CHECK(std::fabs(ev.welfare_jump) > 0.0);
  // pre/post differ in exactly the two swapped coordinates
  int diffs = 0;
  for (Eigen::Index i = 0; i < ev.pre_allocation.size(); ++i)
    if (std::fabs(ev.pre_allocation[i] - ev.post_allocation[i]) > 1e-9) ++diffs;
  CHECK(diffs == 2);
}

TEST_CASE("sweep: jump reallocates the edge length of the feasible segment") {
  // Two markets, supply below both caps would split differently; here the
  // corners are cap-limited, so the jump moves min(cap1, cap2, total,
  // capsum - total) units.
  auto ms = linear_pair();
  double cap1 = 1.1, cap2 = 0.8, total = 1.5;
  FeasibleSet fs(vec2(cap1, cap2), total);
  Vec base = vec2(0.5, 0.5);
  Vec dir = vec2(1.0, -1.0);
  auto events = sweep_cost_path(ms, fs, base, dir, -0.05, 0.05, 0.005);
  REQUIRE(events.size() == 1);
  double expected = std::min(std::min(cap1, cap2), std::min(total, cap1 + cap2 - total));
  CHECK(events.front().reallocated_mass == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("sweep: welfare jump matches an independent recomputation") {
  SplitMix64 rng(100);
  int found = 0;
  for (int trial = 0; trial < 40; ++trial) {
    int n = 10;
    std::vector<MarketSpec> ms;
    Vec caps(n), base(n), dir(n);
    for (int i = 0; i < n; ++i) {
      ms.push_back(MarketSpec{
          DemandCurve{LinearAnchored{0.0, rng.uniform(1.5, 4.0), -rng.uniform(0.5, 3.0)}},
          0.0, 20.0});
      caps[i] = rng.uniform(0.3, 1.5);
      base[i] = rng.uniform(0.0, 0.1);
      dir[i] = rng.uniform(-1.0, 1.0);
    }
    FeasibleSet fs(caps, 0.6 * caps.sum());
    std::vector<JumpEvent> events;
    try {
      events = sweep_cost_path(ms, fs, base, dir, -0.02, 0.02, 0.002);
    } catch (const ValidationError&) {
      continue;
    }
    for (const auto& ev : events) {
      if (ev.compound) continue;
      double dw = 0.0;
      for (Eigen::Index i = 0; i < ev.pre_allocation.size(); ++i)
        dw += gross_surplus(ms[static_cast<std::size_t>(i)].demand, ev.pre_allocation[i],
                            ev.post_allocation[i]);
      CHECK(std::fabs(dw - ev.welfare_jump) <= 1e-9);
      ++found;
    }
  }
  CHECK(found > 10);
}

TEST_CASE("sweep: reversing the path flips the welfare jump sign") {
  auto ms = linear_pair();
  FeasibleSet fs(vec2(1.2, 0.9), 1.5);
  Vec base = vec2(0.48, 0.52);
  Vec dir = vec2(1.0, -1.0);
  auto fwd = sweep_cost_path(ms, fs, base, dir, -0.1, 0.1, 0.01);
  auto rev = sweep_cost_path(ms, fs, base, -dir, -0.1, 0.1, 0.01);
  REQUIRE(fwd.size() == 1);
  REQUIRE(rev.size() == 1);
  CHECK(fwd.front().welfare_jump == doctest::Approx(-rev.front().welfare_jump).epsilon(1e-9));
}

TEST_CASE("sweep rejects tied endpoints") {
  auto ms = linear_pair();
  FeasibleSet fs(vec2(1.2, 0.9), 1.5);
  CHECK_THROWS_AS(sweep_cost_path(ms, fs, vec2(0.5, 0.5), vec2(0.0, 0.0), -0.1, 0.1, 0.01),
                  ValidationError);
}

TEST_CASE("smoothed allocation: KKT example and limits") {
  // kappa = 1, costs (0, 0.1), caps (10,10), total 10 -> (5.05, 4.95)
  FeasibleSet fs(vec2(10.0, 10.0), 10.0);
  auto a = smoothed_allocation(vec2(0.0, 0.1), fs, 1.0);
  CHECK(a.q[0] == doctest::Approx(5.05).epsilon(1e-9));
  CHECK(a.q[1] == doctest::Approx(4.95).epsilon(1e-9));

  // large kappa, zero costs: uniform split
  auto u = smoothed_allocation(vec2(0.0, 0.0), FeasibleSet(vec2(3.0, 3.0), 2.0), 1e6);
  CHECK(u.q[0] == doctest::Approx(1.0).epsilon(1e-9));

  // kappa -> 0 converges to the greedy vertex on non-tie instances
  std::vector<MarketSpec> ms{MarketSpec{DemandCurve{LinearAnchored{0.0, 3.0, -1.0}}, 0.05, 10.0},
                             MarketSpec{DemandCurve{LinearAnchored{0.0, 3.0, -1.0}}, 0.30, 10.0}};
  FeasibleSet fs2(vec2(1.0, 1.0), 1.4);
  auto greedy = greedy_controlled_allocation(ms, fs2);
  auto smooth = smoothed_allocation(vec2(0.05, 0.30), fs2, 1e-8);
  CHECK((greedy.q - smooth.q).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("smoothed allocation: Lipschitz bound in costs") {
  SplitMix64 rng(2718);
  for (int trial = 0; trial < 1000; ++trial) {
    int n = 2 + static_cast<int>(rng.next_u64() % 5);
    Vec caps(n), c1(n), c2(n);
    for (int i = 0; i < n; ++i) {
      caps[i] = rng.uniform(0.5, 2.0);
      c1[i] = rng.uniform(0.0, 1.0);
      c2[i] = c1[i] + rng.uniform(-0.05, 0.05);
    }
    FeasibleSet fs(caps, rng.uniform(0.2, 0.8) * caps.sum());
    double kappa = rng.uniform(0.05, 2.0);
    auto q1 = smoothed_allocation(c1, fs, kappa);
    auto q2 = smoothed_allocation(c2, fs, kappa);
    CHECK((q1.q - q2.q).norm() <= (c1 - c2).norm() / kappa + 1e-9);
  }
}

TEST_CASE("smoothed allocation KKT residual") {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + static_cast<int>(rng.next_u64() % 5);
    Vec caps(n), c(n);
    for (int i = 0; i < n; ++i) {
      caps[i] = rng.uniform(0.5, 2.0);
      c[i] = rng.uniform(0.0, 1.0);
    }
    FeasibleSet fs(caps, rng.uniform(0.2, 0.8) * caps.sum());
    double kappa = rng.uniform(0.05, 2.0);
    auto a = smoothed_allocation(c, fs, kappa);
    // recover the multiplier from an interior coordinate, then check stationarity
    double lambda = 0.0;
    bool have = false;
    for (Eigen::Index i = 0; i < a.q.size(); ++i)
      if (a.tags[static_cast<std::size_t>(i)] == CoordTag::Interior) {
        lambda = c[i] + kappa * a.q[i];
        have = true;
        break;
      }
    if (!have) continue;
    for (Eigen::Index i = 0; i < a.q.size(); ++i) {
      double grad = c[i] + kappa * a.q[i];
      switch (a.tags[static_cast<std::size_t>(i)]) {
        case CoordTag::Interior: CHECK(std::fabs(grad - lambda) <= 1e-8); break;
        case CoordTag::AtZero: CHECK(grad >= lambda - 1e-8); break;
        case CoordTag::AtCap: CHECK(grad <= lambda + 1e-8); break;
      }
    }
  }
}

TEST_CASE("cutoff gap statistics") {
  // n = 2 uniform costs on [0,1]: expected |c1 - c2| = 1/3
  auto stats = cutoff_gap_statistics({2, 10, 100, 1000}, 4000, 0.0, 1.0, 1.0, 0.5, 12345);
  CHECK(stats[0].mean == doctest::Approx(1.0 / 3.0).epsilon(0.03));
  // median gap decreases in n
  CHECK(stats[1].median > stats[2].median);
  CHECK(stats[2].median > stats[3].median);
  // reproducibility
  auto again = cutoff_gap_statistics({2, 10, 100, 1000}, 4000, 0.0, 1.0, 1.0, 0.5, 12345);
  CHECK(stats[3].mean == again[3].mean);
  CHECK(stats[3].median == again[3].median);
}
