#pragma once

namespace aesmc {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace aesmc
