#pragma once

namespace aiwdn {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace aiwdn
