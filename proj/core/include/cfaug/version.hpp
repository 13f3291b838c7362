#pragma once

namespace cfaug {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cfaug
