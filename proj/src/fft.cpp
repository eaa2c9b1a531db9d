#include "udig/fft.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <vector>

#include <fftw3.h>

namespace udig {

namespace {

// Plans are cached per geometry; creation is serialized (FFTW requirement),
// execution via fftw_execute_dft is thread-safe.
struct PlanCache {
  std::mutex mutex;
  std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans;

  fftw_plan get(std::size_t rows, std::size_t cols, int sign) {
    std::lock_guard<std::mutex> lock(mutex);
    auto key = std::make_tuple(rows, cols, sign);
    auto it = plans.find(key);
    if (it != plans.end()) return it->second;
    std::vector<std::complex<double>> scratch(rows * cols);
    fftw_plan p = fftw_plan_dft_2d(
        static_cast<int>(rows), static_cast<int>(cols),
        reinterpret_cast<fftw_complex*>(scratch.data()),
        reinterpret_cast<fftw_complex*>(scratch.data()), sign,
        FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans.emplace(key, p);
    return p;
  }
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

} // namespace

void fft2_unitary(std::complex<double>* data, std::size_t rows,
                  std::size_t cols, bool inverse) {
  fftw_plan p = cache().get(rows, cols, inverse ? FFTW_BACKWARD : FFTW_FORWARD);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(data),
                   reinterpret_cast<fftw_complex*>(data));
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows * cols));
  for (std::size_t i = 0; i < rows * cols; ++i) data[i] *= scale;
}

void roll2d(const std::complex<double>* in, std::complex<double>* out,
            std::size_t rows, std::size_t cols, std::size_t dr, std::size_t dc) {
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t rr = (r + dr) % rows;
    for (std::size_t c = 0; c < cols; ++c)
      out[rr * cols + (c + dc) % cols] = in[r * cols + c];
  }
}

} // namespace udig
