#pragma once

#include <cstdio>
#include <string>

namespace haarkit {

// Canonical float formatting: 17 significant digits round-trip any double and
// make serialized models byte-identical across runs.
inline std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string format_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

}  // namespace haarkit
