#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "racelab/panel.hpp"
#include "racelab/session.hpp"

namespace racelab {

// Numeric design codes used by dataset filters. A zero mean delay is coded
// as "none" regardless of the symmetry/randomness flags.
inline constexpr double kDesignNone = 0.0;
inline constexpr double kDesignSymDet = 1.0;
inline constexpr double kDesignAsymDet = 2.0;
inline constexpr double kDesignSymRand = 3.0;
inline constexpr double kDesignAsymRand = 4.0;

inline double design_code(double bump_mean, bool symmetric, bool random) {
    if (bump_mean == 0.0) return kDesignNone;
    if (symmetric) return random ? kDesignSymRand : kDesignSymDet;
    return random ? kDesignAsymRand : kDesignAsymDet;
}

// Flattens session records into an analysis dataset. Adds three derived
// columns on top of the record fields:
//   bump        1 when the round had a positive mean delay
//   design_code see the constants above
//   tier_code   0 high-cost, 1 medium-cost, 2 low-cost; other labels are
//               numbered from 3 in order of first appearance
inline Dataset dataset_from_records(const std::vector<RoundRecord>& records) {
    if (records.empty()) throw std::domain_error("cannot analyze an empty record set");

    std::map<std::string, double> tier_codes{
        {"high-cost", 0.0}, {"medium-cost", 1.0}, {"low-cost", 2.0}};
    const auto tier_code = [&](const std::string& label) {
        const auto [it, inserted] = tier_codes.emplace(label, double(tier_codes.size()));
        return it->second;
    };

    const std::size_t n = records.size();
    const auto numeric = [&](auto&& get) {
        std::vector<double> col;
        col.reserve(n);
        for (const RoundRecord& r : records) col.push_back(double(get(r)));
        return col;
    };

    Dataset data;
    data.add("session_id", numeric([](const RoundRecord& r) { return r.session_id; }));
    data.add("group_id", numeric([](const RoundRecord& r) { return r.group_id; }));
    data.add("participant_id", numeric([](const RoundRecord& r) { return r.participant_id; }));
    data.add("round_index", numeric([](const RoundRecord& r) { return r.round_index; }));
    data.add("training", numeric([](const RoundRecord& r) { return r.training ? 1 : 0; }));
    data.add("endowment", numeric([](const RoundRecord& r) { return r.endowment; }));
    data.add("bump_mean", numeric([](const RoundRecord& r) { return r.bump_mean; }));
    data.add("bump_symmetric",
             numeric([](const RoundRecord& r) { return r.bump_symmetric ? 1 : 0; }));
    data.add("bump_random", numeric([](const RoundRecord& r) { return r.bump_random ? 1 : 0; }));
    data.add("realized_bump", numeric([](const RoundRecord& r) { return r.realized_bump; }));
    data.add("tier_code", numeric([&](const RoundRecord& r) { return tier_code(r.tier); }));
    data.add("invest", numeric([](const RoundRecord& r) { return r.invest; }));
    data.add("invest_frac", numeric([](const RoundRecord& r) { return r.invest_frac; }));
    data.add("arrival_rate", numeric([](const RoundRecord& r) { return r.arrival_rate; }));
    data.add("realized_time", numeric([](const RoundRecord& r) { return r.realized_time; }));
    data.add("won", numeric([](const RoundRecord& r) { return r.won ? 1 : 0; }));
    data.add("won_previous",
             numeric([](const RoundRecord& r) { return r.won_previous ? 1 : 0; }));
    data.add("payoff", numeric([](const RoundRecord& r) { return r.payoff; }));
    data.add("clamped", numeric([](const RoundRecord& r) { return r.clamped ? 1 : 0; }));
    data.add("bump", numeric([](const RoundRecord& r) { return r.bump_mean > 0.0 ? 1 : 0; }));
    data.add("design_code", numeric([](const RoundRecord& r) {
                 return design_code(r.bump_mean, r.bump_symmetric, r.bump_random);
             }));
    return data;
}

// A named single-row Wald restriction: sum of weighted coefficients = target.
struct FTestSpec {
    std::string label;
    std::vector<std::pair<std::string, double>> combo;
    double target = 0.0;
};

struct AnalysisSpec {
    PanelSpec panel;
    std::vector<FTestSpec> f_tests;
};

struct Battery {
    std::string name;
    std::vector<AnalysisSpec> specs;
};

namespace detail {

inline PanelSpec baseline_panel(std::string label, std::vector<double> designs) {
    PanelSpec spec;
    spec.label = std::move(label);
    spec.dependent = "invest_frac";
    spec.terms = {"bump"};
    spec.fixed_effects = {"participant_id", "group_id"};
    spec.clusters = {"participant_id", "group_id", "round_index"};
    spec.filters = {{"training", {0.0}}, {"design_code", std::move(designs)}};
    return spec;
}

}  // namespace detail

// Nine regressions of investment share on a has-a-delay dummy, one per
// design subsample. Every subsample keeps the no-delay rounds (they identify
// the dummy's baseline) and narrows the delayed rounds to a design class.
inline Battery table_delay_dummy_battery() {
    Battery battery;
    battery.name = "delay-dummy";
    const std::vector<std::pair<std::string, std::vector<double>>> rows = {
        {"Overall",
         {kDesignNone, kDesignSymDet, kDesignAsymDet, kDesignSymRand, kDesignAsymRand}},
        {"Random", {kDesignNone, kDesignSymRand, kDesignAsymRand}},
        {"Deterministic", {kDesignNone, kDesignSymDet, kDesignAsymDet}},
        {"Symmetric", {kDesignNone, kDesignSymDet, kDesignSymRand}},
        {"Asymmetric", {kDesignNone, kDesignAsymDet, kDesignAsymRand}},
        {"Random and symmetric", {kDesignNone, kDesignSymRand}},
        {"Random and asymmetric", {kDesignNone, kDesignAsymRand}},
        {"Deterministic and symmetric", {kDesignNone, kDesignSymDet}},
        {"Deterministic and asymmetric", {kDesignNone, kDesignAsymDet}},
    };
    for (const auto& [label, designs] : rows)
        battery.specs.push_back({detail::baseline_panel(label, designs), {}});
    return battery;
}

// The full design-interaction regression: symmetry and randomness dummies,
// the standardized mean delay, all their interactions, plus standardized
// endowment and a lagged-win control. Two follow-up Wald tests ask whether
// the delay slope nets to zero for symmetric designs.
inline Battery main_interaction_battery() {
    Battery battery;
    battery.name = "design-interactions";
    PanelSpec spec;
    spec.label = "Investment share on delay design";
    spec.dependent = "invest_frac";
    spec.terms = {
        "bump_symmetric",
        "bump_random",
        "bump_symmetric*bump_random",
        "std:bump_mean",
        "std:bump_mean*bump_symmetric",
        "std:bump_mean*bump_random",
        "std:bump_mean*bump_symmetric*bump_random",
        "std:endowment",
        "won_previous",
    };
    spec.fixed_effects = {"participant_id", "group_id"};
    spec.clusters = {"participant_id", "group_id", "round_index"};
    spec.filters = {{"training", {0.0}}};

    std::vector<FTestSpec> tests;
    tests.push_back({"delay slope, symmetric deterministic",
                     {{"std:bump_mean", 1.0}, {"std:bump_mean*bump_symmetric", 1.0}},
                     0.0});
    tests.push_back({"delay slope, symmetric random",
                     {{"std:bump_mean", 1.0},
                      {"std:bump_mean*bump_symmetric", 1.0},
                      {"std:bump_mean*bump_random", 1.0},
                      {"std:bump_mean*bump_symmetric*bump_random", 1.0}},
                     0.0});
    battery.specs.push_back({std::move(spec), std::move(tests)});
    return battery;
}

inline Battery named_battery(const std::string& name) {
    if (name == "delay-dummy") return table_delay_dummy_battery();
    if (name == "design-interactions") return main_interaction_battery();
    throw config_error("unknown battery '" + name +
                       "' (expected delay-dummy or design-interactions)");
}

// --- JSON (de)serialization of custom analysis specs -----------------------

inline Filter filter_from_json(const nlohmann::json& j) {
    Filter f;
    f.column = j.at("column").get<std::string>();
    f.any_of = j.at("any_of").get<std::vector<double>>();
    if (f.any_of.empty()) throw config_error("filter on '" + f.column + "' accepts nothing");
    return f;
}

inline AnalysisSpec analysis_spec_from_json(const nlohmann::json& j) {
    try {
        AnalysisSpec spec;
        spec.panel.label = j.value("label", std::string{});
        spec.panel.dependent = j.at("dependent").get<std::string>();
        spec.panel.terms = j.at("terms").get<std::vector<std::string>>();
        spec.panel.fixed_effects =
            j.value("fixed_effects", std::vector<std::string>{});
        spec.panel.clusters = j.value("clusters", std::vector<std::string>{});
        spec.panel.finite_sample = j.value("finite_sample", true);
        for (const auto& jf : j.value("filters", nlohmann::json::array()))
            spec.panel.filters.push_back(filter_from_json(jf));
        for (const auto& jt : j.value("f_tests", nlohmann::json::array())) {
            FTestSpec t;
            t.label = jt.value("label", std::string{});
            t.target = jt.value("target", 0.0);
            for (const auto& [term, weight] : jt.at("combo").items())
                t.combo.emplace_back(term, weight.get<double>());
            spec.f_tests.push_back(std::move(t));
        }
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("malformed analysis spec: ") + e.what());
    }
}

// Accepts one spec object, an array of them, or {name, specs: [...]}.
inline Battery battery_from_json(const nlohmann::json& j) {
    Battery battery;
    if (j.is_array()) {
        for (const auto& js : j) battery.specs.push_back(analysis_spec_from_json(js));
    } else if (j.contains("specs")) {
        battery.name = j.value("name", std::string{});
        for (const auto& js : j.at("specs"))
            battery.specs.push_back(analysis_spec_from_json(js));
    } else {
        battery.specs.push_back(analysis_spec_from_json(j));
    }
    if (battery.specs.empty()) throw config_error("analysis battery has no specs");
    return battery;
}

// --- Running a battery ------------------------------------------------------

struct AnalysisResult {
    FitResult fit;
    std::vector<std::pair<FTestSpec, FTestResult>> f_tests;
};

inline AnalysisResult run_spec(const AnalysisSpec& spec, const Dataset& data) {
    AnalysisResult result;
    result.fit = fit_fe_ols(spec.panel, data);
    for (const FTestSpec& t : spec.f_tests)
        result.f_tests.emplace_back(t, f_test_combo(result.fit, t.combo, t.target));
    return result;
}

inline std::vector<AnalysisResult> run_battery(const Battery& battery, const Dataset& data) {
    std::vector<AnalysisResult> results;
    results.reserve(battery.specs.size());
    for (const AnalysisSpec& spec : battery.specs) results.push_back(run_spec(spec, data));
    return results;
}

inline nlohmann::json result_to_json(const AnalysisResult& result) {
    const FitResult& fit = result.fit;
    nlohmann::json j;
    j["label"] = fit.label;
    j["n_obs"] = fit.n_obs;
    j["r_squared"] = fit.r_squared;
    j["constant"] = fit.constant;
    j["fixed_effects"] = fit.fe_dims;
    j["clusters"] = fit.cluster_dims;
    j["cluster_counts"] = fit.cluster_counts;
    j["df_denom"] = fit.df_denom;
    j["vcov_repaired"] = fit.vcov_repaired;
    nlohmann::json coefs = nlohmann::json::array();
    for (std::size_t i = 0; i < fit.terms.size(); ++i) {
        coefs.push_back({{"term", fit.terms[i]},
                         {"coef", fit.coef[Eigen::Index(i)]},
                         {"se", fit.se[Eigen::Index(i)]},
                         {"t", fit.t_stats[Eigen::Index(i)]},
                         {"p", fit.p_values[Eigen::Index(i)]}});
    }
    j["coefficients"] = std::move(coefs);
    nlohmann::json tests = nlohmann::json::array();
    for (const auto& [spec, res] : result.f_tests) {
        tests.push_back({{"label", spec.label},
                         {"target", spec.target},
                         {"stat", res.stat},
                         {"p", res.p_value},
                         {"q", res.q},
                         {"df_denom", res.df_denom}});
    }
    j["f_tests"] = std::move(tests);
    return j;
}

inline std::string render_analysis(const AnalysisResult& result) {
    std::string out = summarize(result.fit);
    char buf[160];
    for (const auto& [spec, res] : result.f_tests) {
        std::snprintf(buf, sizeof buf, "F-test %-34s F(%zu, %.0f) = %.3f, p = %.3f\n",
                      (spec.label + ":").c_str(), res.q, res.df_denom, res.stat, res.p_value);
        out += buf;
    }
    return out;
}

}  // namespace racelab
