#pragma once

namespace ccr {

inline constexpr const char* kVersion = "ccr-0.1.0";

}  // namespace ccr
