// Formatting helpers shared by the CSV emitters. %.17g round-trips doubles
// exactly, which is what keeps rerun outputs byte-identical.
#pragma once

#include <cstdio>
#include <string>

namespace cfpc {

inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace cfpc
