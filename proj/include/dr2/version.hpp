#pragma once

namespace dr2 {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dr2
