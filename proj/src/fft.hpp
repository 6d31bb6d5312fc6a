#pragma once

// Shared FFTW plan cache. Planning is not thread-safe; execution through the
// new-array interface is, so plans are created once under a lock and reused.

#include <fftw3.h>

#include <cstddef>

namespace amdm::detail {

struct Plans {
  fftw_plan forward;  // r2c
  fftw_plan inverse;  // c2r, unnormalized
};

const Plans& plans_for(std::size_t n);

struct FftBuffers {
  explicit FftBuffers(std::size_t n)
      : real(fftw_alloc_real(n)), spec(fftw_alloc_complex(n / 2 + 1)) {}
  ~FftBuffers() {
    fftw_free(real);
    fftw_free(spec);
  }
  FftBuffers(const FftBuffers&) = delete;
  FftBuffers& operator=(const FftBuffers&) = delete;
  double* real;
  fftw_complex* spec;
};

}  // namespace amdm::detail
