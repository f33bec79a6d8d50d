#pragma once

#include <cstdio>
#include <string>

namespace harmflow {

/// Number format used by every file the tools emit: 9 significant digits,
/// shortest representation. Identical inputs therefore serialize to
/// byte-identical text.
inline std::string format_sig9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

} // namespace harmflow
