#pragma once

#include <string>
#include <vector>

#include "racelab/hash.hpp"
#include "racelab/market.hpp"

namespace racelab {

// The 32-round protocol. Rounds 1-4 are training; the remaining 28 rounds
// place each (delay, symmetric, random, endowment) combination exactly once
// (3 x 2 x 2 x 2 = 24 bump rounds) plus four undelayed rounds, in a fixed
// shuffled order so design effects are not confounded with learning.
struct Schedule {
    std::vector<RoundSpec> rounds;
};

inline Schedule build_schedule() {
    // One row per round: delay (0 = no bump), symmetric?, random?, endowment.
    struct Row {
        double delta;
        bool sym, rand;
        double endowment;
    };
    static const Row table[32] = {
        {5, true, false, 20},   // 1  (training)
        {1, false, true, 10},   // 2  (training)
        {3, true, true, 20},    // 3  (training)
        {0, false, false, 10},  // 4  (training)
        {1, true, true, 10},    // 5
        {5, false, true, 20},   // 6
        {3, true, true, 10},    // 7
        {1, true, false, 20},   // 8
        {5, true, true, 10},    // 9
        {0, false, false, 20},  // 10
        {1, true, false, 10},   // 11
        {5, false, false, 20},  // 12
        {3, false, true, 10},   // 13
        {1, true, true, 20},    // 14
        {5, true, false, 10},   // 15
        {0, false, false, 10},  // 16
        {3, true, true, 20},    // 17
        {5, false, false, 10},  // 18
        {1, false, true, 20},   // 19
        {5, true, false, 20},   // 20
        {3, false, false, 10},  // 21
        {0, false, false, 20},  // 22
        {5, true, true, 20},    // 23
        {3, true, false, 10},   // 24
        {1, false, true, 10},   // 25
        {3, false, false, 20},  // 26
        {5, false, true, 10},   // 27
        {0, false, false, 10},  // 28
        {1, false, false, 20},  // 29
        {3, true, false, 20},   // 30
        {3, false, true, 20},   // 31
        {1, false, false, 10},  // 32
    };

    Schedule s;
    s.rounds.reserve(32);
    for (int i = 0; i < 32; ++i) {
        const Row& row = table[i];
        RoundSpec r;
        r.index = i + 1;
        r.endowment = row.endowment;
        r.training = r.index <= 4;
        if (row.delta > 0.0) {
            SpeedBumpSpec b;
            b.mean_delay = row.delta;
            b.symmetric = row.sym;
            b.random = row.rand;
            r.bump = b;
        }
        s.rounds.push_back(r);
    }
    return s;
}

// Stable fingerprint of the schedule contents, recorded in session manifests
// so any change to the protocol is visible in provenance.
inline std::string schedule_hash(const Schedule& s) {
    std::string repr;
    for (const RoundSpec& r : s.rounds) {
        repr += std::to_string(r.index) + ':';
        if (r.bump) {
            repr += std::to_string(r.bump->mean_delay) + ',';
            repr += r.bump->symmetric ? "s," : "a,";
            repr += r.bump->random ? "r" : "d";
        } else {
            repr += "none";
        }
        repr += ',' + std::to_string(r.endowment);
        repr += r.training ? ",T;" : ";";
    }
    return hex64(fnv1a64(repr));
}

}  // namespace racelab
