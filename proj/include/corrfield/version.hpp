#pragma once

namespace corrfield {

inline constexpr const char* kToolName = "corrfield";
inline constexpr const char* kToolVersion = "0.1.0";

inline const char* version_string() { return "corrfield 0.1.0"; }

}  // namespace corrfield
