#include "fft.hpp"

#include <map>
#include <mutex>
#include <stdexcept>
#include <string>

namespace amdm::detail {

const Plans& plans_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, Plans> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  double* r = fftw_alloc_real(n);
  fftw_complex* c = fftw_alloc_complex(n / 2 + 1);
  const int in = static_cast<int>(n);
  Plans p{fftw_plan_dft_r2c_1d(in, r, c, FFTW_ESTIMATE),
          fftw_plan_dft_c2r_1d(in, c, r, FFTW_ESTIMATE)};
  fftw_free(r);
  fftw_free(c);
  if (!p.forward || !p.inverse)
    throw std::runtime_error("fft: planning failed for size " + std::to_string(n));
  return cache.emplace(n, p).first->second;
}

}  // namespace amdm::detail
