#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "racelab/market.hpp"
#include "racelab/race_prob.hpp"

namespace racelab {

struct SolverOptions {
    int grid_points = 201;    // coarse scan of [0, endowment]
    double damping = 0.5;     // weight on the new best response each step
    double tol_frac = 1e-4;   // convergence: |BR(l) - l| < tol_frac * endowment
    int max_iters = 500;
};

// A symmetric investment equilibrium (or the state of the failed search for
// one). Probabilities are per trader under the engine actually used; mm_prob
// is the probability mass the engine leaves to the market maker, which for
// the inexact closed-form engine is bookkeeping rather than a true
// probability.
struct EquilibriumResult {
    BumpDesign design = BumpDesign::none;
    double delta = 0.0;
    double endowment = 0.0;
    std::string tier_label;
    ProbEngine engine = ProbEngine::exact;  // backend that produced the numbers

    bool converged = false;
    int iterations = 0;
    double residual = std::numeric_limits<double>::infinity();

    std::vector<double> invests;
    std::vector<double> rates;
    std::vector<double> exec_probs;
    double mm_prob = 0.0;
    std::vector<double> expected_profits;
    std::vector<bool> corner_flags;   // investment pinned at 0 or the endowment
    std::vector<double> trajectory;   // symmetric iterate path, for diagnosis
};

// Expected round payoff from investing `invest` against fixed rival
// investments: prize-weighted execution probability plus the uninvested
// endowment, which is rebated.
inline double investment_objective(double invest, const std::vector<double>& rival_invests,
                                   const RoundSpec& round, const TechnologyTier& tier,
                                   const MarketConfig& config,
                                   ProbEngine engine = ProbEngine::exact) {
    RaceParams p;
    p.own_rate = arrival_rate(tier, invest, round.endowment);
    p.rival_rates.reserve(rival_invests.size());
    for (double r : rival_invests)
        p.rival_rates.push_back(arrival_rate(tier, r, round.endowment));
    p.mm_rate = config.mm_rate;
    p.bump = round.bump;
    const double delta = round.bump ? round.bump->mean_delay : 0.0;
    const double prob = exec_prob(p, design_of(round.bump), delta, engine);
    return config.prize * prob + (round.endowment - invest);
}

namespace detail {

// Golden-section refinement of a maximum bracketed in [a, b].
template <class F>
double golden_max(F&& f, double a, double b, double tol) {
    constexpr double invphi = 0.6180339887498949;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = f(x1);
    double f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace detail

// Maximizes the round objective over own investment in [0, endowment]:
// coarse grid scan, then golden-section refinement around every grid-local
// optimum (corners included), returning the best refined candidate. The
// objective can be bimodal (corner vs. interior optimum), which the grid
// stage is there to catch.
inline double best_response(const std::vector<double>& rival_invests, const RoundSpec& round,
                            const TechnologyTier& tier, const MarketConfig& config,
                            ProbEngine engine = ProbEngine::exact, int grid_points = 201) {
    if (grid_points < 3) throw std::domain_error("best_response: need at least 3 grid points");
    const double w = round.endowment;
    const auto obj = [&](double l) {
        return investment_objective(l, rival_invests, round, tier, config, engine);
    };

    const std::size_t n = std::size_t(grid_points);
    std::vector<double> fs(n);
    const double step = w / double(n - 1);
    for (std::size_t i = 0; i < n; ++i) fs[i] = obj(std::min(w, double(i) * step));

    double best_x = 0.0;
    double best_f = fs[0];
    const auto consider = [&](double x, double fx) {
        if (fx > best_f) {
            best_f = fx;
            best_x = x;
        }
    };
    consider(w, fs[n - 1]);

    const double tol = 1e-10 * std::max(1.0, w);
    for (std::size_t i = 0; i < n; ++i) {
        const bool up_ok = i == 0 || fs[i] >= fs[i - 1];
        const bool down_ok = i + 1 == n || fs[i] >= fs[i + 1];
        if (!(up_ok && down_ok)) continue;
        const double lo = i == 0 ? 0.0 : double(i - 1) * step;
        const double hi = i + 1 == n ? w : std::min(w, double(i + 1) * step);
        const double x = detail::golden_max(obj, lo, hi, tol);
        consider(x, obj(x));
    }
    return best_x;
}

// Damped symmetric best-response iteration: from l = endowment/2, move
// halfway to the best response each step until the response stops moving.
// Non-convergence is reported in the result (with the full trajectory), not
// thrown — a cycling iteration is a finding, not a crash.
inline EquilibriumResult solve_symmetric_equilibrium(const RoundSpec& round,
                                                     const TechnologyTier& tier,
                                                     const MarketConfig& config,
                                                     ProbEngine engine = ProbEngine::exact,
                                                     const SolverOptions& opts = {}) {
    validate(tier);
    validate(config);
    const double w = round.endowment;
    if (!(w > 0.0)) throw std::domain_error("endowment must be > 0");
    const int n = config.n_traders;
    const BumpDesign design = design_of(round.bump);
    const double delta = round.bump ? round.bump->mean_delay : 0.0;

    EquilibriumResult res;
    res.design = design;
    res.delta = delta;
    res.endowment = w;
    res.tier_label = tier.label;
    res.engine = engine_used(design, engine);

    double l = 0.5 * w;
    res.trajectory.push_back(l);
    const double tol = opts.tol_frac * w;
    for (int it = 1; it <= opts.max_iters; ++it) {
        const std::vector<double> rivals(std::size_t(n - 1), l);
        const double br = best_response(rivals, round, tier, config, engine, opts.grid_points);
        res.residual = std::abs(br - l);
        res.iterations = it;
        l = (1.0 - opts.damping) * l + opts.damping * br;
        res.trajectory.push_back(l);
        if (res.residual < tol) {
            res.converged = true;
            l = br;  // settle on the fixed point itself, not the damped iterate
            break;
        }
    }

    RaceParams p;
    p.own_rate = arrival_rate(tier, l, w);
    p.rival_rates.assign(std::size_t(n - 1), p.own_rate);
    p.mm_rate = config.mm_rate;
    p.bump = round.bump;
    const double prob = exec_prob(p, design, delta, engine);

    res.invests.assign(std::size_t(n), l);
    res.rates.assign(std::size_t(n), p.own_rate);
    res.exec_probs.assign(std::size_t(n), prob);
    res.mm_prob = 1.0 - double(n) * prob;
    res.expected_profits.assign(std::size_t(n), config.prize * prob + (w - l));
    res.corner_flags.assign(std::size_t(n), l <= tol || l >= w - tol);
    return res;
}

// One design cell of a comparative-statics sweep.
struct StaticsCell {
    BumpDesign design = BumpDesign::none;
    double delta = 0.0;
    double endowment = 10.0;
    TechnologyTier tier;
};

struct StaticsRow {
    StaticsCell cell;
    std::optional<EquilibriumResult> result;
    std::string error;  // non-empty when the cell could not be solved at all
};

// The cells the canonical protocol spans for one tier: the undelayed market
// plus every design x delay x endowment combination (25 in total).
inline std::vector<StaticsCell> canonical_grid(const TechnologyTier& tier) {
    std::vector<StaticsCell> cells;
    cells.push_back({BumpDesign::none, 0.0, 10.0, tier});
    for (BumpDesign d : {BumpDesign::sym_det, BumpDesign::asym_det, BumpDesign::sym_rand,
                         BumpDesign::asym_rand})
        for (double delta : {1.0, 3.0, 5.0})
            for (double w : {10.0, 20.0}) cells.push_back({d, delta, w, tier});
    return cells;
}

inline std::vector<StaticsRow> comparative_statics(const std::vector<StaticsCell>& grid,
                                                   const MarketConfig& config,
                                                   ProbEngine engine = ProbEngine::exact,
                                                   const SolverOptions& opts = {}) {
    if (grid.empty()) throw std::domain_error("comparative_statics: empty grid");
    std::vector<StaticsRow> rows;
    rows.reserve(grid.size());
    for (const StaticsCell& cell : grid) {
        StaticsRow row;
        row.cell = cell;
        try {
            RoundSpec round;
            round.endowment = cell.endowment;
            round.bump = bump_of(cell.design, cell.delta);
            row.result = solve_symmetric_equilibrium(round, cell.tier, config, engine, opts);
        } catch (const std::exception& e) {
            row.error = e.what();  // keep sweeping; the cell reports its failure
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace racelab
