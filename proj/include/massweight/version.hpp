#pragma once

namespace massweight {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace massweight
