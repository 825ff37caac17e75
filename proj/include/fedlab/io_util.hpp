#pragma once

#include <cstdio>
#include <string>

namespace fedlab::io {

// Shortest exact decimal form of a double; byte-stable across runs.
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace fedlab::io
