#pragma once

#include <cstdio>
#include <string>

namespace massweight {

/// 17 significant digits: enough for binary64 round trips, so printed
/// results can be re-read losslessly.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace massweight
