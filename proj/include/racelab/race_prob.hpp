#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "racelab/errors.hpp"
#include "racelab/market.hpp"

namespace racelab {

// The four bump designs plus the undelayed market. "sym" designs also delay
// the market maker's cancellation, "rand" designs draw each delay from
// {0.5*delta, delta, 1.5*delta} instead of applying delta exactly.
enum class BumpDesign { none, sym_det, asym_det, sym_rand, asym_rand };

// Probability backend: `paper_formula` uses the two-trader closed form for
// the symmetric-random design (which is written down in closed form but is
// not exact, see exec_prob_random_paper); `exact` always enumerates.
// Designs with no dedicated formula are identical under both engines.
enum class ProbEngine { paper_formula, exact };

inline std::string to_string(BumpDesign d) {
    switch (d) {
        case BumpDesign::none: return "none";
        case BumpDesign::sym_det: return "sym-det";
        case BumpDesign::asym_det: return "asym-det";
        case BumpDesign::sym_rand: return "sym-rand";
        case BumpDesign::asym_rand: return "asym-rand";
    }
    throw std::logic_error("unreachable design");
}

inline BumpDesign design_from_string(const std::string& s) {
    if (s == "none") return BumpDesign::none;
    if (s == "sym-det") return BumpDesign::sym_det;
    if (s == "asym-det") return BumpDesign::asym_det;
    if (s == "sym-rand") return BumpDesign::sym_rand;
    if (s == "asym-rand") return BumpDesign::asym_rand;
    throw config_error("unknown design '" + s +
                       "' (expected none|sym-det|asym-det|sym-rand|asym-rand)");
}

inline std::string to_string(ProbEngine e) {
    return e == ProbEngine::paper_formula ? "paper" : "exact";
}

inline ProbEngine engine_from_string(const std::string& s) {
    if (s == "paper" || s == "paper-formula") return ProbEngine::paper_formula;
    if (s == "exact") return ProbEngine::exact;
    throw config_error("unknown probability engine '" + s + "' (expected paper|exact)");
}

inline BumpDesign design_of(const std::optional<SpeedBumpSpec>& bump) {
    if (!bump || bump->mean_delay == 0.0) return BumpDesign::none;
    if (bump->symmetric) return bump->random ? BumpDesign::sym_rand : BumpDesign::sym_det;
    return bump->random ? BumpDesign::asym_rand : BumpDesign::asym_det;
}

inline std::optional<SpeedBumpSpec> bump_of(BumpDesign design, double delta) {
    if (design == BumpDesign::none || delta == 0.0) return std::nullopt;
    SpeedBumpSpec b;
    b.mean_delay = delta;
    b.symmetric = design == BumpDesign::sym_det || design == BumpDesign::sym_rand;
    b.random = design == BumpDesign::sym_rand || design == BumpDesign::asym_rand;
    return b;
}

// One trader's view of a race: their own arrival rate, each rival trader's
// rate, and the market maker's cancellation rate. Rival and market-maker
// rates of zero are tolerated (they model an absent racer in oracle tests).
struct RaceParams {
    double own_rate = 0.2;
    std::vector<double> rival_rates;
    double mm_rate = 0.2;
    std::optional<SpeedBumpSpec> bump;
};

inline void validate(const RaceParams& p) {
    if (!(p.own_rate > 0.0)) throw std::domain_error("own_rate must be > 0");
    if (!(p.mm_rate >= 0.0)) throw std::domain_error("mm_rate must be >= 0");
    for (double r : p.rival_rates)
        if (!(r >= 0.0)) throw std::domain_error("rival rates must be >= 0");
}

inline double total_rate(const RaceParams& p) {
    return p.own_rate + std::accumulate(p.rival_rates.begin(), p.rival_rates.end(), 0.0) +
           p.mm_rate;
}

// P(racer `winner_index` arrives first) when racer k's arrival time is
// offsets[k] + Exponential(rates[k]). Integrates the winner's arrival
// density against the rivals' survival functions; the product of survivals
// is piecewise exponential in t, changing only where a rival's head start
// expires, so each piece has a closed form. Exact up to rounding.
//
// A zero-rate racer never arrives and simply drops out (and has
// probability zero of winning itself).
inline double exec_prob_offsets(const std::vector<double>& rates,
                                const std::vector<double>& offsets,
                                std::size_t winner_index) {
    if (rates.size() != offsets.size())
        throw std::domain_error("exec_prob_offsets: rates/offsets length mismatch");
    if (rates.empty()) throw std::domain_error("exec_prob_offsets: no racers");
    if (winner_index >= rates.size())
        throw std::domain_error("exec_prob_offsets: winner index out of range");
    for (std::size_t k = 0; k < rates.size(); ++k) {
        if (!(rates[k] >= 0.0)) throw std::domain_error("exec_prob_offsets: negative rate");
        if (!(offsets[k] >= 0.0))
            throw std::domain_error("exec_prob_offsets: negative offset");
    }
    const double lw = rates[winner_index];
    if (lw == 0.0) return 0.0;

    struct Rival {
        double rate;
        double head;   // rival offset minus winner offset; negative = rival ahead
        double start;  // time (on the winner's exponential clock) the rival's
                       // survival term becomes active
    };
    std::vector<Rival> rivals;
    rivals.reserve(rates.size() - 1);
    for (std::size_t k = 0; k < rates.size(); ++k) {
        if (k == winner_index || rates[k] == 0.0) continue;
        const double head = offsets[k] - offsets[winner_index];
        rivals.push_back({rates[k], head, std::max(0.0, head)});
    }

    std::vector<double> cuts{0.0};
    for (const auto& r : rivals) cuts.push_back(r.start);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    double prob = 0.0;
    for (std::size_t i = 0; i < cuts.size(); ++i) {
        const double u = cuts[i];
        const bool last = i + 1 == cuts.size();
        const double v = last ? std::numeric_limits<double>::infinity() : cuts[i + 1];
        double s = lw;   // combined decay rate on this piece
        double shift = 0.0;  // sum of rate*head over active rivals
        for (const auto& r : rivals) {
            if (r.start <= u) {
                s += r.rate;
                shift += r.rate * r.head;
            }
        }
        // shift - s*u <= 0 always (each active head <= u), so no overflow.
        const double hi = last ? 0.0 : std::exp(shift - s * v);
        prob += (lw / s) * (std::exp(shift - s * u) - hi);
    }
    return prob;
}

// Execution probability under a deterministic bump: traders are all delayed
// by `delta`, the market maker by `delta_mm`, which must be either delta
// (symmetric design) or 0 (asymmetric). Exact for any number of rivals:
//
//   exp(mm_rate*(delta_mm - delta)) * own_rate / total_rate.
//
// Other market-maker delays are rejected rather than extrapolated — a trader
// head start over the market maker is outside the supported designs.
inline double exec_prob_deterministic(const RaceParams& p, double delta, double delta_mm) {
    validate(p);
    if (!(delta >= 0.0)) throw std::domain_error("delta must be >= 0");
    if (!(delta_mm == 0.0 || delta_mm == delta))
        throw unsupported_design("delta_mm must be 0 (asymmetric) or delta (symmetric)");
    return std::exp(p.mm_rate * (delta_mm - delta)) * p.own_rate / total_rate(p);
}

// The printed two-trader closed form for the symmetric random design,
// reproduced verbatim:
//
//   P = (1/27) * Psi * own_rate / total_rate,
//
// where Psi collects hyperbolic-cosine terms over the nine relative-delay
// differences of the 27 equally likely delay states. Kept faithful to the
// source: it equals the exact enumeration at delta = 0 but drifts above it
// for delta > 0 (at equal rates 0.2 and delta = 3 it gives ~0.3975 where
// exchangeability forces exactly 1/3), and it can exceed 1 for fast racers.
// No clamping is applied; use exec_prob_random_exact for ground truth.
inline double exec_prob_random_paper(const RaceParams& p, double delta) {
    validate(p);
    if (p.rival_rates.size() != 1)
        throw unsupported_design("the closed form covers exactly one rival trader");
    if (!(delta >= 0.0)) throw std::domain_error("delta must be >= 0");
    const double lj = p.rival_rates[0];
    const double lm = p.mm_rate;
    const auto f = [delta](double x) { return std::exp(delta * x) + std::exp(-delta * x); };
    const double psi = 3.0 + f(lj) + f(lm) + f(lj + lm) + f(0.5 * lj + lm) +
                       f(lj + 0.5 * lm) + f(0.5 * lj - 0.5 * lm) + 2.0 * f(0.5 * lj) +
                       2.0 * f(0.5 * lm) + 2.0 * f(0.5 * lj + 0.5 * lm);
    return psi / 27.0 * p.own_rate / total_rate(p);
}

// All joint delay states of a random bump: every delayed participant
// independently lands on one of {0.5*delta, delta, 1.5*delta}, equally
// likely. Participant order is traders first, market maker last; under the
// asymmetric design the market maker keeps offset 0 in every state.
struct StateEnumeration {
    std::vector<std::vector<double>> offsets;  // one vector per state

    std::size_t count() const { return offsets.size(); }
    double weight() const { return offsets.empty() ? 0.0 : 1.0 / double(offsets.size()); }
};

inline StateEnumeration enumerate_bump_states(int n_traders, double delta, bool symmetric) {
    if (n_traders < 1) throw std::domain_error("need at least one trader");
    if (!(delta >= 0.0)) throw std::domain_error("delta must be >= 0");
    const double draws[3] = {0.5 * delta, delta, 1.5 * delta};
    const int n_drawing = symmetric ? n_traders + 1 : n_traders;
    std::size_t n_states = 1;
    for (int i = 0; i < n_drawing; ++i) n_states *= 3;

    StateEnumeration e;
    e.offsets.reserve(n_states);
    for (std::size_t code = 0; code < n_states; ++code) {
        std::vector<double> state(std::size_t(n_traders) + 1, 0.0);
        std::size_t rem = code;
        for (int k = 0; k < n_drawing; ++k) {
            state[std::size_t(k)] = draws[rem % 3];
            rem /= 3;
        }
        e.offsets.push_back(std::move(state));
    }
    return e;
}

// Ground-truth execution probability under a random bump: the equally
// weighted average of the exact offset-race probability over all delay
// states. Handles any number of rivals.
inline double exec_prob_random_exact(const RaceParams& p, double delta, bool symmetric) {
    validate(p);
    if (!(delta >= 0.0)) throw std::domain_error("delta must be >= 0");
    std::vector<double> rates;
    rates.reserve(p.rival_rates.size() + 2);
    rates.push_back(p.own_rate);
    rates.insert(rates.end(), p.rival_rates.begin(), p.rival_rates.end());
    rates.push_back(p.mm_rate);

    const int n_traders = int(p.rival_rates.size()) + 1;
    const StateEnumeration states = enumerate_bump_states(n_traders, delta, symmetric);
    double sum = 0.0;
    for (const auto& offsets : states.offsets) sum += exec_prob_offsets(rates, offsets, 0);
    return sum * states.weight();
}

// Unified front end used by the solver and the CLI. The asymmetric-random
// design has no closed form, so both engines enumerate there; callers that
// need to know which backend produced a number should consult
// engine_used(design, engine).
inline ProbEngine engine_used(BumpDesign design, ProbEngine requested) {
    if (design == BumpDesign::asym_rand) return ProbEngine::exact;
    if (design == BumpDesign::sym_rand) return requested;
    return ProbEngine::exact;  // deterministic closed forms are exact
}

inline double exec_prob(const RaceParams& p, BumpDesign design, double delta,
                        ProbEngine engine = ProbEngine::exact) {
    switch (design) {
        case BumpDesign::none:
            return exec_prob_deterministic(p, 0.0, 0.0);
        case BumpDesign::sym_det:
            return exec_prob_deterministic(p, delta, delta);
        case BumpDesign::asym_det:
            return exec_prob_deterministic(p, delta, 0.0);
        case BumpDesign::sym_rand:
            return engine == ProbEngine::paper_formula
                       ? exec_prob_random_paper(p, delta)
                       : exec_prob_random_exact(p, delta, true);
        case BumpDesign::asym_rand:
            return exec_prob_random_exact(p, delta, false);
    }
    throw std::logic_error("unreachable design");
}

// dP/d(own_rate). Closed forms where they exist; the random designs without
// one are differenced centrally with step 1e-6 * max(1, own_rate).
inline double marginal_exec_prob(const RaceParams& p, double delta, BumpDesign design,
                                 ProbEngine engine = ProbEngine::exact) {
    validate(p);
    if (!(delta >= 0.0)) throw std::domain_error("delta must be >= 0");
    const double total = total_rate(p);
    const double others = total - p.own_rate;

    switch (design) {
        case BumpDesign::none:
        case BumpDesign::sym_det:
            // The symmetric deterministic bump cancels out of the probability,
            // so the marginal benefit carries no delta dependence at all.
            return others / (total * total);
        case BumpDesign::asym_det:
            return std::exp(-p.mm_rate * delta) * others / (total * total);
        case BumpDesign::sym_rand:
            if (engine == ProbEngine::paper_formula) {
                // Psi does not involve own_rate, so the derivative just
                // re-weights the no-bump marginal.
                const double psi_scaled =
                    exec_prob_random_paper(p, delta) * total / p.own_rate;
                return psi_scaled * others / (total * total);
            }
            break;
        case BumpDesign::asym_rand:
            break;
    }

    const bool symmetric = design == BumpDesign::sym_rand;
    const double h = 1e-6 * std::max(1.0, std::abs(p.own_rate));
    RaceParams up = p, dn = p;
    up.own_rate += h;
    dn.own_rate -= h;
    if (!(dn.own_rate > 0.0))
        throw std::domain_error("own_rate too small to difference");
    return (exec_prob_random_exact(up, delta, symmetric) -
            exec_prob_random_exact(dn, delta, symmetric)) /
           (2.0 * h);
}

// First-order condition residual at an investment profile: the prize-scaled
// marginal execution probability per ECoin minus the marginal cost, which is
// exactly 1 because uninvested endowment is rebated. A sign change over
// (0, endowment) brackets an interior optimum; a residual that never reaches
// zero means the optimum sits at a corner.
inline double foc_residual(double invest, const std::vector<double>& rival_invests,
                           const RoundSpec& round, const TechnologyTier& tier,
                           const MarketConfig& config,
                           ProbEngine engine = ProbEngine::exact) {
    const double w = round.endowment;
    RaceParams p;
    p.own_rate = arrival_rate(tier, invest, w);
    p.rival_rates.reserve(rival_invests.size());
    for (double r : rival_invests) p.rival_rates.push_back(arrival_rate(tier, r, w));
    p.mm_rate = config.mm_rate;
    p.bump = round.bump;

    const BumpDesign design = design_of(round.bump);
    const double delta = round.bump ? round.bump->mean_delay : 0.0;
    const double dP = marginal_exec_prob(p, delta, design, engine);
    return config.prize * dP * marginal_arrival_rate(tier, invest, w) - 1.0;
}

}  // namespace racelab
