#pragma once

#include <charconv>
#include <string>

namespace beaconopt {

/// Shortest decimal text that parses back to exactly the same double.
inline std::string fmt_num(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace beaconopt
