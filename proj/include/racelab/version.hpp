#pragma once

namespace racelab {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace racelab
