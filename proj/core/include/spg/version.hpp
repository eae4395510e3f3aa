#pragma once

namespace spg {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kFormatVersion = 1;  // checkpoint / bundle / pool formats

}  // namespace spg
