#pragma once

#include <fstream>
#include <string>

#include "json.hpp"
#include "racelab/errors.hpp"
#include "racelab/market.hpp"

namespace racelab {

// A tier is given either as a canonical label ("medium-cost") or as an
// object overriding individual curve parameters.
inline TechnologyTier tier_from_json(const nlohmann::json& j) {
    try {
        if (j.is_string()) return canonical_tier(j.get<std::string>());
        TechnologyTier t;
        if (j.contains("label") && !j.contains("psi") && !j.contains("gamma"))
            return canonical_tier(j.at("label").get<std::string>());
        t.label = j.value("label", std::string("custom"));
        t.lambda0 = j.value("lambda0", 0.2);
        t.psi = j.at("psi").get<double>();
        t.gamma = j.at("gamma").get<double>();
        validate(t);
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("bad tier specification: ") + e.what());
    }
}

inline MarketConfig market_from_json(const nlohmann::json& j) {
    try {
        MarketConfig c;
        c.prize = j.value("prize", c.prize);
        c.mm_rate = j.value("mm_rate", c.mm_rate);
        c.n_traders = j.value("n_traders", c.n_traders);
        validate(c);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("bad market configuration: ") + e.what());
    }
}

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config file: " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw config_error("cannot parse " + path + ": " + e.what());
    }
}

inline nlohmann::json to_json(const TechnologyTier& t) {
    return {{"label", t.label}, {"lambda0", t.lambda0}, {"psi", t.psi}, {"gamma", t.gamma}};
}

inline nlohmann::json to_json(const MarketConfig& c) {
    return {{"prize", c.prize}, {"mm_rate", c.mm_rate}, {"n_traders", c.n_traders}};
}

}  // namespace racelab
