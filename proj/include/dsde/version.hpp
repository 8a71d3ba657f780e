#pragma once

namespace dsde {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dsde
