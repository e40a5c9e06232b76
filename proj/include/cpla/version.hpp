#pragma once

namespace cpla {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cpla
