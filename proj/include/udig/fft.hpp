#ifndef UDIG_FFT_HPP
#define UDIG_FFT_HPP

#include <complex>
#include <cstddef>

namespace udig {

// In-place unitary 2-D FFT over a row-major (rows x cols) complex buffer.
// Both directions scale by 1/sqrt(rows*cols), so forward followed by
// inverse is the identity and norms are preserved.
void fft2_unitary(std::complex<double>* data, std::size_t rows,
                  std::size_t cols, bool inverse);

// Cyclic roll: out[(r + dr) % rows][(c + dc) % cols] = in[r][c].
void roll2d(const std::complex<double>* in, std::complex<double>* out,
            std::size_t rows, std::size_t cols, std::size_t dr, std::size_t dc);

} // namespace udig

#endif // UDIG_FFT_HPP
