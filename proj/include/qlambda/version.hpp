#pragma once

namespace qlambda {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qlambda
