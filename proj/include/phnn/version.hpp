#pragma once

namespace phnn {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace phnn
