#pragma once

namespace odyn {

// Working precision of the numerical core. Training builds use f32; the
// gradient-check build defines ODYN_REAL_F64.
#if defined(ODYN_REAL_F64)
using real = double;
inline constexpr const char* precision_name = "f64";
#else
using real = float;
inline constexpr const char* precision_name = "f32";
#endif

}  // namespace odyn
