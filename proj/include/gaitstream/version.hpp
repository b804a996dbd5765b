#pragma once

namespace gaitstream {

inline constexpr const char* kToolName = "gaitstream";
inline constexpr const char* kVersion = "0.1.0";

} // namespace gaitstream
