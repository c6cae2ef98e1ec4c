#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "racelab/errors.hpp"

namespace racelab {

// Latency-investment technology: spending l of the endowment w raises the
// order arrival rate to
//
//   lambda(l) = lambda0 + psi * (l/w)^gamma.
//
// Orders then arrive after an Exponential(lambda) transit time, so 1/lambda
// is the expected arrival time before any exchange-imposed delay.
struct TechnologyTier {
    double lambda0 = 0.2;  // baseline arrival rate, per second
    double psi = 0.0;      // productivity scale of investment, per second
    double gamma = 1.0;    // curvature (>1: slow start, accelerating returns)
    std::string label;     // "high-cost" | "medium-cost" | "low-cost"
};

// The three tiers groups are assigned to. "Cost" is relative: the high-cost
// tier buys the least speed per ECoin (full investment only reaches a
// 2-second expected transit), the low-cost tier the most (0.5 s).
inline const std::array<TechnologyTier, 3>& canonical_tiers() {
    static const std::array<TechnologyTier, 3> tiers{{
        {0.2, 0.30, 1.25, "high-cost"},
        {0.2, 0.60, 1.50, "medium-cost"},
        {0.2, 1.80, 1.80, "low-cost"},
    }};
    return tiers;
}

inline const TechnologyTier& canonical_tier(const std::string& label) {
    for (const auto& t : canonical_tiers())
        if (t.label == label) return t;
    throw config_error("unknown technology tier label: '" + label +
                       "' (expected high-cost, medium-cost, or low-cost)");
}

// Exchange-imposed delay between order receipt and processing. A random bump
// is drawn per participant from {0.5*delay, delay, 1.5*delay}, equally
// likely; a deterministic bump is exactly `mean_delay`. Symmetric bumps also
// delay the market maker's cancellation; asymmetric bumps delay traders only.
struct SpeedBumpSpec {
    double mean_delay = 0.0;  // seconds; canonical sizes are 1, 3, 5
    bool symmetric = false;
    bool random = false;
};

// One round of the protocol. No `bump` means an undelayed market.
struct RoundSpec {
    int index = 0;  // 1-based position in the session schedule
    std::optional<SpeedBumpSpec> bump;
    double endowment = 10.0;  // ECoins available to invest this round
    bool training = false;    // practice rounds, excluded from analysis
};

struct MarketConfig {
    double prize = 100.0;  // value of the stale quote, ECoins
    double mm_rate = 0.2;  // market maker cancellation rate, per second
    int n_traders = 3;     // traders racing per group
};

inline void validate(const TechnologyTier& t) {
    if (!(t.lambda0 > 0.0) || !(t.psi > 0.0) || !(t.gamma > 0.0))
        throw std::domain_error("technology tier requires lambda0, psi, gamma all > 0");
}

inline void validate(const SpeedBumpSpec& b) {
    if (!(b.mean_delay >= 0.0))
        throw std::domain_error("speed bump mean_delay must be >= 0");
}

inline void validate(const MarketConfig& c) {
    if (!(c.mm_rate > 0.0)) throw std::domain_error("mm_rate must be > 0");
    if (!(c.prize >= 0.0)) throw std::domain_error("prize must be >= 0");
    if (c.n_traders < 1) throw std::domain_error("n_traders must be >= 1");
}

namespace detail {
inline void check_invest_domain(double invest, double endowment) {
    if (!(endowment > 0.0)) throw std::domain_error("endowment must be > 0");
    if (!(invest >= 0.0 && invest <= endowment))
        throw std::domain_error("investment must lie in [0, endowment]");
}
}  // namespace detail

inline double arrival_rate(const TechnologyTier& tier, double invest, double endowment) {
    detail::check_invest_domain(invest, endowment);
    return tier.lambda0 + tier.psi * std::pow(invest / endowment, tier.gamma);
}

// Expected time for an order to execute: exponential transit plus the
// realized (or deterministic) bump delay.
inline double expected_arrival_time(double rate, double bump_delay) {
    if (!(rate > 0.0)) throw std::domain_error("arrival rate must be > 0");
    if (!(bump_delay >= 0.0)) throw std::domain_error("bump delay must be >= 0");
    return 1.0 / rate + bump_delay;
}

// d(1/lambda)/dl: how one more ECoin of investment moves the expected
// transit time (negative on the interior). The expression is 0/0 at l = 0;
// for gamma > 1 the limit is 0 and we return it, for gamma <= 1 the one-sided
// limit is nonzero or divergent and the point is rejected.
inline double marginal_expected_time(const TechnologyTier& tier, double invest,
                                     double endowment) {
    detail::check_invest_domain(invest, endowment);
    if (invest == 0.0) {
        if (tier.gamma > 1.0) return 0.0;
        throw std::domain_error(
            "marginal_expected_time is singular at invest = 0 for gamma <= 1");
    }
    const double frac = std::pow(invest / endowment, tier.gamma);
    const double lambda = tier.lambda0 + tier.psi * frac;
    return -(tier.gamma * tier.psi * frac) / (invest * lambda * lambda);
}

// d(lambda)/dl, the rate gain per ECoin. Related to the above by
// d(1/lambda)/dl = -(dlambda/dl)/lambda^2.
inline double marginal_arrival_rate(const TechnologyTier& tier, double invest,
                                    double endowment) {
    detail::check_invest_domain(invest, endowment);
    if (invest == 0.0) {
        if (tier.gamma > 1.0) return 0.0;
        if (tier.gamma == 1.0) return tier.psi / endowment;
        throw std::domain_error(
            "marginal_arrival_rate diverges at invest = 0 for gamma < 1");
    }
    return tier.psi * tier.gamma * std::pow(invest / endowment, tier.gamma - 1.0) /
           endowment;
}

// d^2(1/lambda)/(dl dw): how the endowment scale changes the marginal value
// of investment. Note the numerator factor (lambda0 - psi*(l/w)^gamma) flips
// sign once investment is productive enough — the value is reported as-is,
// with no sign promise.
inline double cross_marginal_expected_time(const TechnologyTier& tier, double invest,
                                           double endowment) {
    detail::check_invest_domain(invest, endowment);
    if (invest == 0.0) {
        if (tier.gamma > 1.0) return 0.0;
        throw std::domain_error(
            "cross_marginal_expected_time is singular at invest = 0 for gamma <= 1");
    }
    const double x = invest / endowment;
    const double frac = std::pow(x, tier.gamma);
    const double lambda = tier.lambda0 + tier.psi * frac;
    return tier.gamma * tier.gamma * tier.psi * std::pow(x, tier.gamma - 1.0) *
           (tier.lambda0 - tier.psi * frac) /
           (endowment * endowment * lambda * lambda * lambda);
}

}  // namespace racelab
