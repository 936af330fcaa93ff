// version.hpp — library version string

#pragma once

namespace qcm {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

} // namespace qcm
