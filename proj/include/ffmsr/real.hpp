#pragma once

// Scalar type for everything that lives on the autodiff tape.
//
// Training builds use 32-bit floats. Defining FFMSR_DOUBLE_PRECISION switches
// the same sources to 64-bit, which the gradient-check suites need for
// finite-difference headroom. The two variants live in different inline
// namespaces so both libraries can be linked into one binary.

#if defined(FFMSR_DOUBLE_PRECISION) && FFMSR_DOUBLE_PRECISION
#define FFMSR_PRECISION inline f64
#else
#define FFMSR_PRECISION inline f32
#endif

namespace ffmsr::FFMSR_PRECISION {

#if defined(FFMSR_DOUBLE_PRECISION) && FFMSR_DOUBLE_PRECISION
using Real = double;
#else
using Real = float;
#endif

}  // namespace ffmsr::FFMSR_PRECISION
