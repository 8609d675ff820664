#pragma once

// The numeric library is compiled twice: single precision (the default, used
// for training and inference) and double precision (used by the
// central-difference gradient checks). Each build lives in its own namespace so
// both can be linked into one executable.

#ifdef LOFTR_USE_DOUBLE
#define LOFTR_PRECISION f64
#else
#define LOFTR_PRECISION f32
#endif

namespace loftr::LOFTR_PRECISION {

#ifdef LOFTR_USE_DOUBLE
using real = double;
#else
using real = float;
#endif

}  // namespace loftr::LOFTR_PRECISION

namespace loftr {
using namespace LOFTR_PRECISION;
}  // namespace loftr
