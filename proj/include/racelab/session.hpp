#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "racelab/config.hpp"
#include "racelab/equilibrium.hpp"
#include "racelab/errors.hpp"
#include "racelab/hash.hpp"
#include "racelab/race_sim.hpp"
#include "racelab/rng.hpp"
#include "racelab/schedule.hpp"

namespace racelab {

// How a simulated trader picks its investment each round.
//   equilibrium          — the symmetric equilibrium of the round's design
//   fixed-fraction(f)    — always f * endowment
//   noisy-best-response(s) — best response to rivals' previous investments,
//                            plus uniform noise of half-width s * endowment
//   uniform-random       — uniform over [0, endowment]
struct AgentPolicy {
    enum class Kind { equilibrium, fixed_fraction, noisy_best_response, uniform_random };
    Kind kind = Kind::equilibrium;
    double param = 0.0;  // fraction or noise half-width, by kind
};

inline std::string to_string(const AgentPolicy& p) {
    switch (p.kind) {
        case AgentPolicy::Kind::equilibrium: return "equilibrium";
        case AgentPolicy::Kind::fixed_fraction:
            return "fixed-fraction:" + std::to_string(p.param);
        case AgentPolicy::Kind::noisy_best_response:
            return "noisy-best-response:" + std::to_string(p.param);
        case AgentPolicy::Kind::uniform_random: return "uniform-random";
    }
    throw std::logic_error("unreachable policy kind");
}

inline AgentPolicy policy_from_string(const std::string& s) {
    const auto colon = s.find(':');
    const std::string name = s.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : s.substr(colon + 1);
    AgentPolicy p;
    if (name == "equilibrium") {
        p.kind = AgentPolicy::Kind::equilibrium;
        return p;
    }
    if (name == "uniform-random") {
        p.kind = AgentPolicy::Kind::uniform_random;
        return p;
    }
    if (name == "fixed-fraction") {
        p.kind = AgentPolicy::Kind::fixed_fraction;
        if (arg.empty()) throw config_error("fixed-fraction policy needs a fraction, e.g. fixed-fraction:0.75");
        p.param = std::stod(arg);
        if (!(p.param >= 0.0 && p.param <= 1.0))
            throw config_error("fixed-fraction must lie in [0, 1]");
        return p;
    }
    if (name == "noisy-best-response") {
        p.kind = AgentPolicy::Kind::noisy_best_response;
        if (arg.empty())
            throw config_error("noisy-best-response policy needs a scale, e.g. noisy-best-response:0.1");
        p.param = std::stod(arg);
        if (!(p.param >= 0.0)) throw config_error("noisy-best-response scale must be >= 0");
        return p;
    }
    throw config_error("unknown policy '" + s +
                       "' (expected equilibrium | fixed-fraction:f | "
                       "noisy-best-response:s | uniform-random)");
}

// One participant-round observation, the unit of the analysis panel.
struct RoundRecord {
    int session_id = 0;
    int group_id = 0;
    int participant_id = 0;  // unique across groups within a session
    int round_index = 0;
    bool training = false;
    double endowment = 0.0;
    double bump_mean = 0.0;  // 0 on no-bump rounds
    bool bump_symmetric = false;
    bool bump_random = false;
    double realized_bump = 0.0;
    std::string tier;  // the group's technology tier label
    double invest = 0.0;
    double invest_frac = 0.0;
    double arrival_rate = 0.0;
    double realized_time = 0.0;  // transit + realized bump
    bool won = false;
    bool won_previous = false;  // lag of `won` within participant, 0 in round 1
    double payoff = 0.0;
    bool clamped = false;  // policy returned an out-of-range investment
};

struct SessionConfig {
    int n_groups = 16;
    std::vector<AgentPolicy> policies;     // one per trader, or a single one for all
    std::vector<std::string> tier_labels;  // per group, one for all, or empty for
                                           // a seeded random assignment
    MarketConfig market;
    std::uint64_t master_seed = 0;
    std::uint32_t session_id = 0;
};

namespace detail {

// Equilibrium investments are identical for every group facing the same
// design cell, so solve each cell once per session. A symmetric
// deterministic bump cancels out of the execution probability entirely,
// making the cell's objective the no-bump objective; normalizing its key
// both saves solves and keeps the equivalence exact in the emitted data.
class EquilibriumCache {
  public:
    double invest(const RoundSpec& round, const TechnologyTier& tier,
                  const MarketConfig& market) {
        BumpDesign design = design_of(round.bump);
        double delta = round.bump ? round.bump->mean_delay : 0.0;
        if (design == BumpDesign::sym_det) {
            design = BumpDesign::none;
            delta = 0.0;
        }
        const Key key{int(design), delta, round.endowment, tier.label};
        const auto hit = cache_.find(key);
        if (hit != cache_.end()) return hit->second;

        RoundSpec cell;
        cell.endowment = round.endowment;
        cell.bump = bump_of(design, delta);
        const EquilibriumResult res =
            solve_symmetric_equilibrium(cell, tier, market, ProbEngine::exact);
        const double l = res.invests.front();
        cache_.emplace(key, l);
        return l;
    }

  private:
    using Key = std::tuple<int, double, double, std::string>;
    std::map<Key, double> cache_;
};

inline double policy_investment(const AgentPolicy& policy, const RoundSpec& round,
                                const TechnologyTier& tier, const MarketConfig& market,
                                EquilibriumCache& cache, const SeedSpec& seed,
                                std::uint32_t trader, const std::vector<double>& prev_fracs) {
    const double w = round.endowment;
    switch (policy.kind) {
        case AgentPolicy::Kind::equilibrium:
            return cache.invest(round, tier, market);
        case AgentPolicy::Kind::fixed_fraction:
            return policy.param * w;
        case AgentPolicy::Kind::uniform_random:
            return uniform_open(seed, trader, kDrawPolicy) * w;
        case AgentPolicy::Kind::noisy_best_response: {
            std::vector<double> rivals;
            rivals.reserve(prev_fracs.size() - 1);
            for (std::size_t j = 0; j < prev_fracs.size(); ++j)
                if (j != trader) rivals.push_back(prev_fracs[j] * w);
            const double br = best_response(rivals, round, tier, market);
            const double noise =
                (2.0 * uniform_open(seed, trader, kDrawPolicy) - 1.0) * policy.param * w;
            return br + noise;  // may leave [0, w]; the session clamps and flags
        }
    }
    throw std::logic_error("unreachable policy kind");
}

}  // namespace detail

// Runs the full 32-round protocol for every group and emits one record per
// trader per round, ordered by (group, round, participant). Deterministic:
// the same configuration and seed reproduce the records bit for bit.
inline std::vector<RoundRecord> run_session(const SessionConfig& cfg) {
    validate(cfg.market);
    if (cfg.n_groups < 1) throw std::domain_error("run_session: n_groups must be >= 1");
    const int n = cfg.market.n_traders;

    std::vector<AgentPolicy> policies = cfg.policies;
    if (policies.empty()) policies.assign(std::size_t(n), AgentPolicy{});
    if (policies.size() == 1) policies.assign(std::size_t(n), policies.front());
    if (int(policies.size()) != n)
        throw std::domain_error("run_session: need one policy per trader (or one for all)");

    const Schedule schedule = build_schedule();
    detail::EquilibriumCache cache;
    std::vector<RoundRecord> records;
    records.reserve(std::size_t(cfg.n_groups) * schedule.rounds.size() * std::size_t(n));

    for (int g = 0; g < cfg.n_groups; ++g) {
        SeedSpec gseed{cfg.master_seed, cfg.session_id, std::uint32_t(g), 0};

        const TechnologyTier* tier = nullptr;
        if (cfg.tier_labels.empty()) {
            // Round 0 is outside the schedule, so this draw collides with
            // nothing the rounds consume.
            tier = &canonical_tiers()[uniform_below(gseed, 0, 0, 3)];
        } else if (cfg.tier_labels.size() == 1) {
            tier = &canonical_tier(cfg.tier_labels.front());
        } else if (int(cfg.tier_labels.size()) == cfg.n_groups) {
            tier = &canonical_tier(cfg.tier_labels[std::size_t(g)]);
        } else {
            throw std::domain_error(
                "run_session: tier_labels must be empty, a single label, or one per group");
        }

        std::vector<double> prev_fracs(std::size_t(n), 0.5);
        std::vector<bool> won_prev(std::size_t(n), false);

        for (const RoundSpec& round : schedule.rounds) {
            const SeedSpec rseed = gseed.with_round(std::uint32_t(round.index));
            std::vector<double> invests(static_cast<std::size_t>(n));
            std::vector<bool> clamped(std::size_t(n), false);
            for (int i = 0; i < n; ++i) {
                double l = detail::policy_investment(policies[std::size_t(i)], round, *tier,
                                                     cfg.market, cache, rseed,
                                                     std::uint32_t(i), prev_fracs);
                if (l < 0.0) {
                    l = 0.0;
                    clamped[std::size_t(i)] = true;
                } else if (l > round.endowment) {
                    l = round.endowment;
                    clamped[std::size_t(i)] = true;
                }
                invests[std::size_t(i)] = l;
            }

            const RaceOutcome outcome =
                simulate_round(round, invests, *tier, cfg.market, rseed);

            for (int i = 0; i < n; ++i) {
                const auto ui = std::size_t(i);
                RoundRecord rec;
                rec.session_id = int(cfg.session_id);
                rec.group_id = g;
                rec.participant_id = g * n + i;
                rec.round_index = round.index;
                rec.training = round.training;
                rec.endowment = round.endowment;
                rec.bump_mean = round.bump ? round.bump->mean_delay : 0.0;
                rec.bump_symmetric = round.bump ? round.bump->symmetric : false;
                rec.bump_random = round.bump ? round.bump->random : false;
                rec.realized_bump = outcome.realized_bumps[ui];
                rec.tier = tier->label;
                rec.invest = invests[ui];
                rec.invest_frac = invests[ui] / round.endowment;
                rec.arrival_rate = arrival_rate(*tier, invests[ui], round.endowment);
                rec.realized_time = outcome.arrival_times[ui];
                rec.won = outcome.winner == i;
                rec.won_previous = won_prev[ui];
                rec.payoff = outcome.payoffs[ui];
                rec.clamped = clamped[ui];
                records.push_back(std::move(rec));
            }

            for (int i = 0; i < n; ++i) {
                prev_fracs[std::size_t(i)] = invests[std::size_t(i)] / round.endowment;
                won_prev[std::size_t(i)] = outcome.winner == i;
            }
        }
    }
    return records;
}

inline const char* kRecordHeader =
    "session_id,group_id,participant_id,round_index,training,endowment,bump_mean,"
    "bump_symmetric,bump_random,realized_bump,tier,invest,invest_frac,arrival_rate,"
    "realized_time,won,won_previous,payoff,clamped";

namespace detail {

inline std::string fmt_g6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string fmt_invest(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace detail

// Serializes records in the documented column order. Reals carry 6
// significant digits except `invest`, which is written with the platform's
// two-extra-decimals entry precision (4 places); flags are 0/1. The exported
// text is the canonical representation: exporting what import_csv read back
// reproduces the bytes exactly.
inline void export_csv(const std::vector<RoundRecord>& records, std::ostream& out) {
    if (records.empty())
        throw std::domain_error("export_csv: refusing to write an empty dataset");
    using detail::fmt_g6;
    out << kRecordHeader << '\n';
    for (const RoundRecord& r : records) {
        out << r.session_id << ',' << r.group_id << ',' << r.participant_id << ','
            << r.round_index << ',' << int(r.training) << ',' << fmt_g6(r.endowment) << ','
            << fmt_g6(r.bump_mean) << ',' << int(r.bump_symmetric) << ','
            << int(r.bump_random) << ',' << fmt_g6(r.realized_bump) << ',' << r.tier << ','
            << detail::fmt_invest(r.invest) << ',' << fmt_g6(r.invest_frac) << ','
            << fmt_g6(r.arrival_rate) << ',' << fmt_g6(r.realized_time) << ','
            << int(r.won) << ',' << int(r.won_previous) << ',' << fmt_g6(r.payoff) << ','
            << int(r.clamped) << '\n';
    }
}

inline void export_csv(const std::vector<RoundRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("export_csv: cannot open " + path + " for writing");
    export_csv(records, out);
    out.flush();
    if (!out) throw io_error("export_csv: write to " + path + " failed");
}

inline std::string csv_string(const std::vector<RoundRecord>& records) {
    std::ostringstream out;
    export_csv(records, out);
    return out.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string::size_type start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

inline double parse_real(const std::string& s, const char* what, std::size_t lineno) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::domain_error("import_csv: bad " + std::string(what) + " '" + s +
                                "' on line " + std::to_string(lineno));
    }
}

inline int parse_int(const std::string& s, const char* what, std::size_t lineno) {
    const double v = parse_real(s, what, lineno);
    const int i = int(v);
    if (double(i) != v)
        throw std::domain_error("import_csv: non-integer " + std::string(what) + " on line " +
                                std::to_string(lineno));
    return i;
}

inline bool parse_flag(const std::string& s, const char* what, std::size_t lineno) {
    if (s == "0") return false;
    if (s == "1") return true;
    throw std::domain_error("import_csv: flag " + std::string(what) + " must be 0 or 1 on line " +
                            std::to_string(lineno));
}

}  // namespace detail

inline std::vector<RoundRecord> import_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::domain_error("import_csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kRecordHeader)
        throw std::domain_error("import_csv: unexpected header (expected '" +
                                std::string(kRecordHeader) + "')");

    std::vector<RoundRecord> records;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 19)
            throw std::domain_error("import_csv: expected 19 fields on line " +
                                    std::to_string(lineno) + ", got " +
                                    std::to_string(f.size()));
        using namespace detail;
        RoundRecord r;
        r.session_id = parse_int(f[0], "session_id", lineno);
        r.group_id = parse_int(f[1], "group_id", lineno);
        r.participant_id = parse_int(f[2], "participant_id", lineno);
        r.round_index = parse_int(f[3], "round_index", lineno);
        r.training = parse_flag(f[4], "training", lineno);
        r.endowment = parse_real(f[5], "endowment", lineno);
        r.bump_mean = parse_real(f[6], "bump_mean", lineno);
        r.bump_symmetric = parse_flag(f[7], "bump_symmetric", lineno);
        r.bump_random = parse_flag(f[8], "bump_random", lineno);
        r.realized_bump = parse_real(f[9], "realized_bump", lineno);
        r.tier = f[10];
        r.invest = parse_real(f[11], "invest", lineno);
        r.invest_frac = parse_real(f[12], "invest_frac", lineno);
        r.arrival_rate = parse_real(f[13], "arrival_rate", lineno);
        r.realized_time = parse_real(f[14], "realized_time", lineno);
        r.won = parse_flag(f[15], "won", lineno);
        r.won_previous = parse_flag(f[16], "won_previous", lineno);
        r.payoff = parse_real(f[17], "payoff", lineno);
        r.clamped = parse_flag(f[18], "clamped", lineno);
        records.push_back(std::move(r));
    }
    if (records.empty()) throw std::domain_error("import_csv: no data rows");
    return records;
}

inline std::vector<RoundRecord> import_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("import_csv: cannot open " + path);
    return import_csv(in);
}

// Provenance sidecar for a session run: everything needed to reproduce or
// audit the emitted dataset, including a fingerprint of its exact bytes.
inline nlohmann::json session_manifest(const SessionConfig& cfg,
                                       const std::vector<RoundRecord>& records) {
    std::map<int, std::string> group_tiers;
    for (const RoundRecord& r : records) group_tiers[r.group_id] = r.tier;

    nlohmann::json tiers = nlohmann::json::array();
    for (const auto& [g, label] : group_tiers)
        tiers.push_back({{"group", g}, {"tier", label}});

    std::vector<AgentPolicy> policies = cfg.policies;
    if (policies.empty()) policies.assign(1, AgentPolicy{});
    nlohmann::json policy_names = nlohmann::json::array();
    for (const AgentPolicy& p : policies) policy_names.push_back(to_string(p));

    return {
        {"master_seed", cfg.master_seed},
        {"session_id", cfg.session_id},
        {"n_groups", cfg.n_groups},
        {"market", to_json(cfg.market)},
        {"policies", policy_names},
        {"tier_assignment", tiers},
        {"schedule_hash", schedule_hash(build_schedule())},
        {"n_records", records.size()},
        {"content_hash", hex64(fnv1a64(csv_string(records)))},
    };
}

}  // namespace racelab
