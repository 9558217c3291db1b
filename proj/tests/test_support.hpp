#pragma once

#include <kolmo/random_fields.hpp>

namespace kolmo::testing {

using kolmo::octave_noise;
using kolmo::random_compact_field;
inline double bump(double t) { return window_bump(t); }
inline double gaussian(const point& v) { return unit_gaussian(v); }

} // namespace kolmo::testing
