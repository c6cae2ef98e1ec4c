#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "racelab/market.hpp"
#include "racelab/race_prob.hpp"
#include "racelab/rng.hpp"

namespace racelab {

// One realized race. Trader indices run 0..n-1; the market maker is
// participant n. Ties have probability zero in the continuous model; if one
// occurs numerically the lowest participant index wins and `tie` records it.
struct RaceOutcome {
    std::vector<double> arrival_times;   // per trader: transit + realized bump
    double mm_time = 0.0;                // cancellation + bump when symmetric
    std::vector<double> realized_bumps;  // traders first, market maker last
    int winner = 0;                      // trader index, or n_traders for the MM
    bool tie = false;
    std::vector<double> payoffs;  // per trader: rebate + prize if they won

    bool mm_won() const { return winner == int(arrival_times.size()); }
};

// Realized exchange delay for one participant. Deterministic bumps burn no
// randomness; random bumps pick one of the three equally likely multiples.
inline double draw_bump(const SpeedBumpSpec& bump, const SeedSpec& seed,
                        std::uint32_t participant) {
    validate(bump);
    if (!bump.random) return bump.mean_delay;
    static const double kMultipliers[3] = {0.5, 1.0, 1.5};
    return kMultipliers[uniform_below(seed, participant, kDrawBump, 3)] * bump.mean_delay;
}

namespace detail {

struct RawRace {
    std::vector<double> times;  // traders then MM
    std::vector<double> bumps;
    int winner = 0;
    bool tie = false;
};

// Core race draw shared by the round simulator and the Monte Carlo oracle.
inline RawRace race_once(const std::vector<double>& trader_rates, double mm_rate,
                         const std::optional<SpeedBumpSpec>& bump, const SeedSpec& seed) {
    const std::size_t n = trader_rates.size();
    RawRace r;
    r.times.resize(n + 1);
    r.bumps.assign(n + 1, 0.0);

    for (std::size_t i = 0; i <= n; ++i) {
        const bool is_mm = i == n;
        const double rate = is_mm ? mm_rate : trader_rates[i];
        const auto pid = std::uint32_t(i);
        const double transit = exponential(seed, pid, kDrawLatency, rate);
        if (bump && (!is_mm || bump->symmetric))
            r.bumps[i] = draw_bump(*bump, seed, pid);
        r.times[i] = transit + r.bumps[i];
    }

    r.winner = 0;
    for (std::size_t i = 1; i <= n; ++i) {
        if (r.times[i] < r.times[r.winner]) {
            r.winner = int(i);
        } else if (r.times[i] == r.times[r.winner]) {
            r.tie = true;  // lowest index keeps the win
        }
    }
    return r;
}

}  // namespace detail

// Simulates one round at a given investment profile. Fully deterministic in
// (seed, coordinates): the same inputs reproduce the same outcome bit for
// bit regardless of how many rounds ran before.
inline RaceOutcome simulate_round(const RoundSpec& round, const std::vector<double>& invests,
                                  const TechnologyTier& tier, const MarketConfig& config,
                                  const SeedSpec& seed) {
    validate(tier);
    validate(config);
    if (int(invests.size()) != config.n_traders)
        throw std::domain_error("simulate_round: one investment per trader required");

    std::vector<double> rates;
    rates.reserve(invests.size());
    for (double l : invests) rates.push_back(arrival_rate(tier, l, round.endowment));

    const detail::RawRace raw =
        detail::race_once(rates, config.mm_rate, round.bump, seed);

    RaceOutcome out;
    out.arrival_times.assign(raw.times.begin(), raw.times.end() - 1);
    out.mm_time = raw.times.back();
    out.realized_bumps = raw.bumps;
    out.winner = raw.winner;
    out.tie = raw.tie;
    out.payoffs.reserve(invests.size());
    for (std::size_t i = 0; i < invests.size(); ++i) {
        const double prize = raw.winner == int(i) ? config.prize : 0.0;
        out.payoffs.push_back(round.endowment - invests[i] + prize);
    }
    return out;
}

struct MonteCarloEstimate {
    std::vector<double> prob;  // win frequency per participant, MM last
    std::vector<double> se;    // binomial standard errors
    std::size_t n_reps = 0;
};

// Win-frequency estimate over independent replications. Replication r uses
// the session coordinate r, so the estimate is a pure function of
// (master_seed, group, round) and replications could be farmed out in any
// order without changing the result.
inline MonteCarloEstimate monte_carlo_race(const std::vector<double>& trader_rates,
                                           double mm_rate,
                                           const std::optional<SpeedBumpSpec>& bump,
                                           std::size_t n_reps, const SeedSpec& seed) {
    if (n_reps == 0) throw std::domain_error("monte_carlo_race: n_reps must be >= 1");
    if (n_reps > 0xFFFFFFFFull)
        throw std::domain_error("monte_carlo_race: n_reps exceeds the coordinate space");
    for (double r : trader_rates)
        if (!(r > 0.0)) throw std::domain_error("monte_carlo_race: rates must be > 0");
    if (!(mm_rate > 0.0)) throw std::domain_error("monte_carlo_race: mm_rate must be > 0");

    const std::size_t n = trader_rates.size() + 1;
    std::vector<std::size_t> wins(n, 0);
    for (std::size_t rep = 0; rep < n_reps; ++rep) {
        const SeedSpec rep_seed = seed.with_session(std::uint32_t(rep));
        ++wins[std::size_t(detail::race_once(trader_rates, mm_rate, bump, rep_seed).winner)];
    }

    MonteCarloEstimate est;
    est.n_reps = n_reps;
    est.prob.reserve(n);
    est.se.reserve(n);
    for (std::size_t w : wins) {
        const double p = double(w) / double(n_reps);
        est.prob.push_back(p);
        est.se.push_back(std::sqrt(p * (1.0 - p) / double(n_reps)));
    }
    return est;
}

inline MonteCarloEstimate monte_carlo_exec_prob(const RoundSpec& round,
                                                const std::vector<double>& invests,
                                                const TechnologyTier& tier,
                                                const MarketConfig& config,
                                                std::size_t n_reps, const SeedSpec& seed) {
    if (int(invests.size()) != config.n_traders)
        throw std::domain_error("monte_carlo_exec_prob: one investment per trader required");
    std::vector<double> rates;
    rates.reserve(invests.size());
    for (double l : invests) rates.push_back(arrival_rate(tier, l, round.endowment));
    SeedSpec base = seed.with_round(std::uint32_t(round.index));
    return monte_carlo_race(rates, config.mm_rate, round.bump, n_reps, base);
}

}  // namespace racelab
