#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "racelab/equilibrium.hpp"
#include "racelab/market.hpp"
#include "racelab/race_prob.hpp"

using namespace racelab;
using Catch::Matchers::WithinAbs;

namespace {

RoundSpec round_for(BumpDesign design, double delta, double endowment) {
    RoundSpec round;
    round.endowment = endowment;
    round.bump = bump_of(design, delta);
    return round;
}

}  // namespace

TEST_CASE("the round objective is prize-weighted probability plus the rebate", "[equilibrium]") {
    const TechnologyTier tier = canonical_tier("medium-cost");
    MarketConfig cfg;
    cfg.n_traders = 3;
    const RoundSpec round = round_for(BumpDesign::asym_det, 3.0, 10.0);
    const std::vector<double> rivals{4.0, 6.0};
    const double invest = 5.0;

    RaceParams p;
    p.own_rate = arrival_rate(tier, invest, round.endowment);
    p.rival_rates = {arrival_rate(tier, rivals[0], round.endowment),
                     arrival_rate(tier, rivals[1], round.endowment)};
    p.mm_rate = cfg.mm_rate;
    p.bump = round.bump;
    const double prob = exec_prob(p, BumpDesign::asym_det, 3.0);
    const double expected = cfg.prize * prob + (round.endowment - invest);
    CHECK_THAT(investment_objective(invest, rivals, round, tier, cfg), WithinAbs(expected, 1e-12));

    SECTION("spending beyond the endowment is not a feasible choice") {
        CHECK_THROWS_AS(investment_objective(11.0, rivals, round, tier, cfg), std::domain_error);
        CHECK_THROWS_AS(investment_objective(-0.5, rivals, round, tier, cfg), std::domain_error);
    }
}

TEST_CASE("best response matches a fine brute-force scan", "[equilibrium]") {
    const TechnologyTier tier = canonical_tier("high-cost");
    MarketConfig cfg;
    cfg.n_traders = 2;
    const RoundSpec round = round_for(BumpDesign::sym_rand, 3.0, 10.0);
    const std::vector<double> rivals{4.0};

    const double br = best_response(rivals, round, tier, cfg);

    double scan_x = 0.0, scan_f = investment_objective(0.0, rivals, round, tier, cfg);
    constexpr int kFine = 20001;
    for (int i = 1; i < kFine; ++i) {
        const double x = round.endowment * double(i) / double(kFine - 1);
        const double f = investment_objective(x, rivals, round, tier, cfg);
        if (f > scan_f) {
            scan_f = f;
            scan_x = x;
        }
    }
    CHECK_THAT(br, WithinAbs(scan_x, 2e-3));
    // The refined point should be at least as good as the scan's champion.
    CHECK(investment_objective(br, rivals, round, tier, cfg) >= scan_f - 1e-10);

    SECTION("a worthless prize makes zero the best response") {
        MarketConfig cheap = cfg;
        cheap.prize = 1e-6;
        CHECK(best_response(rivals, round, tier, cheap) == 0.0);
    }
    SECTION("a huge prize pushes the response to the endowment") {
        MarketConfig rich = cfg;
        rich.prize = 1e6;
        CHECK_THAT(best_response(rivals, round, tier, rich), WithinAbs(round.endowment, 1e-9));
    }
}

TEST_CASE("converged equilibria are fixed points of the best response", "[equilibrium]") {
    MarketConfig cfg;
    const std::vector<std::pair<BumpDesign, double>> cells = {
        {BumpDesign::none, 0.0},
        {BumpDesign::sym_det, 3.0},
        {BumpDesign::sym_rand, 3.0},
        {BumpDesign::asym_rand, 1.0},
    };
    for (const char* name : {"high-cost", "medium-cost", "low-cost"}) {
        const TechnologyTier tier = canonical_tier(name);
        for (const auto& [design, delta] : cells) {
            const RoundSpec round = round_for(design, delta, 10.0);
            const auto res = solve_symmetric_equilibrium(round, tier, cfg);
            INFO(name << " " << to_string(design) << " delta=" << delta);
            REQUIRE(res.converged);
            const double l = res.invests.front();
            const std::vector<double> rivals(std::size_t(cfg.n_traders - 1), l);
            const double br = best_response(rivals, round, tier, cfg);
            CHECK_THAT(br, WithinAbs(l, 2e-3 * round.endowment));

            // Reported diagnostics are consistent with the investment.
            CHECK(res.invests == std::vector<double>(std::size_t(cfg.n_traders), l));
            CHECK_THAT(res.rates.front(), WithinAbs(arrival_rate(tier, l, 10.0), 1e-12));
            CHECK(res.corner_flags.front() == (l == 0.0 || l == 10.0));
            RaceParams p;
            p.own_rate = res.rates.front();
            p.rival_rates.assign(std::size_t(cfg.n_traders - 1), res.rates.front());
            p.mm_rate = cfg.mm_rate;
            p.bump = round.bump;
            CHECK_THAT(res.exec_probs.front(), WithinAbs(exec_prob(p, design, delta), 1e-12));
            CHECK_THAT(res.expected_profits.front(),
                       WithinAbs(cfg.prize * res.exec_probs.front() + 10.0 - l, 1e-12));
        }
    }
}

TEST_CASE("identical delays for everyone leave the equilibrium unchanged", "[equilibrium]") {
    // A bump that hits every participant equally cancels out of the race
    // probabilities, so the whole solve — converged or cycling — must match
    // the undelayed market step for step.
    MarketConfig cfg;
    for (const char* name : {"high-cost", "medium-cost", "low-cost"}) {
        const TechnologyTier tier = canonical_tier(name);
        for (double w : {10.0, 20.0}) {
            const auto base =
                solve_symmetric_equilibrium(round_for(BumpDesign::none, 0.0, w), tier, cfg);
            for (double delta : {1.0, 3.0, 5.0}) {
                const auto res = solve_symmetric_equilibrium(
                    round_for(BumpDesign::sym_det, delta, w), tier, cfg);
                INFO(name << " w=" << w << " delta=" << delta);
                CHECK(res.converged == base.converged);
                if (base.converged)
                    CHECK_THAT(res.invests.front(), WithinAbs(base.invests.front(), 1e-3 * w));
                else
                    CHECK(res.trajectory == base.trajectory);
            }
        }
    }
}

TEST_CASE("a cycling iteration reports failure with its trajectory", "[equilibrium]") {
    // Known no-equilibrium cell: the best response jumps discontinuously from
    // an interior spend to zero, so the damped iteration settles into a cycle.
    MarketConfig cfg;
    const TechnologyTier tier = canonical_tier("low-cost");
    const auto res = solve_symmetric_equilibrium(round_for(BumpDesign::asym_det, 5.0, 20.0),
                                                 tier, cfg);
    CHECK_FALSE(res.converged);
    CHECK(res.iterations == 500);
    CHECK(res.residual > 1e-4 * 20.0);
    REQUIRE(res.trajectory.size() > 10);

    // The tail revisits the same handful of iterates — a genuine cycle, not
    // slow convergence toward a point.
    std::set<long long> tail;
    const std::size_t n = res.trajectory.size();
    for (std::size_t i = n - 9; i < n; ++i)
        tail.insert(llround(res.trajectory[i] * 1e6));
    CHECK(tail.size() <= 4);
    CHECK(tail.size() >= 2);
}

TEST_CASE("the canonical sweep covers every design cell", "[equilibrium]") {
    const TechnologyTier tier = canonical_tier("medium-cost");
    const auto grid = canonical_grid(tier);
    REQUIRE(grid.size() == 25);
    CHECK(grid.front().design == BumpDesign::none);
    CHECK(grid.front().delta == 0.0);
    CHECK(grid.front().endowment == 10.0);

    std::set<std::tuple<int, double, double>> seen;
    for (const auto& cell : grid)
        seen.insert({int(cell.design), cell.delta, cell.endowment});
    CHECK(seen.size() == 25);  // no duplicates
    for (BumpDesign d : {BumpDesign::sym_det, BumpDesign::asym_det, BumpDesign::sym_rand,
                         BumpDesign::asym_rand})
        for (double delta : {1.0, 3.0, 5.0})
            for (double w : {10.0, 20.0}) CHECK(seen.count({int(d), delta, w}) == 1);
}

TEST_CASE("sweeps skip broken cells instead of aborting", "[equilibrium]") {
    MarketConfig cfg;
    TechnologyTier tier = canonical_tier("high-cost");
    std::vector<StaticsCell> grid = {
        {BumpDesign::none, 0.0, 10.0, tier},
        {BumpDesign::sym_det, 3.0, -1.0, tier},  // invalid endowment
    };
    const auto rows = comparative_statics(grid, cfg);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].error.empty());
    REQUIRE(rows[0].result.has_value());
    CHECK(rows[0].result->converged);
    CHECK_FALSE(rows[1].error.empty());
    CHECK_FALSE(rows[1].result.has_value());

    CHECK_THROWS_AS(comparative_statics({}, cfg), std::domain_error);
}
