#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace saccade {

// Floats in CSV output use 9 significant digits.
inline std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// Rounds through the 9-digit text form so JSON output matches the CSVs.
inline double round9(double v) { return std::strtod(fmt9(v).c_str(), nullptr); }

} // namespace saccade
