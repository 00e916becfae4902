#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <string>

namespace bgv {

// Exact rational arithmetic. All symbolic identity checks reduce to exact
// zeros of these coefficients; no floating point enters the expr layer.
using Rat = boost::multiprecision::cpp_rational;

inline std::string rat_str(const Rat& r) { return r.str(); }

inline bool is_integer(const Rat& r) { return denominator(r) == 1; }

} // namespace bgv
