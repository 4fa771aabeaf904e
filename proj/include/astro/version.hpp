#pragma once

namespace astro {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace astro
