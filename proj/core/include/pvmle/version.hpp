#pragma once

namespace pvmle {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace pvmle
