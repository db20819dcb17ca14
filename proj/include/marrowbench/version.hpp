#pragma once

namespace marrowbench {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kReportFormatVersion = "1";
inline constexpr const char* kModelFormatVersion = "1";

}  // namespace marrowbench
