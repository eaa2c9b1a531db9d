#ifndef UDIG_OPERATORS_HPP
#define UDIG_OPERATORS_HPP

#include <complex>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "udig/tensor.hpp"

namespace udig {

// Measurement container shared by both modalities.
//   MRI: data has shape (2, n_coils, rows, cols), re/im channels of the
//        k-space stack in centered ordering (DC at the middle), zero at
//        unsampled locations.
//   CT:  data has shape (n_angles, n_detectors), a post-log sinogram.
struct Measurements {
  Tensor data;
  std::string operator_id;
};

// Multi-coil Cartesian MRI operator: mask * centered FFT * sensitivities.
struct MriOperator {
  Tensor mask;                              // (rows, cols), entries in {0,1}
  std::vector<std::complex<double>> smaps;  // n_coils * rows * cols
  std::size_t n_coils = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  int acceleration = 1;
  std::uint64_t seed = 0;
  std::string id;

  nlohmann::json geometry_json() const;
};

// Sparse-view parallel-beam CT operator: view selection * discrete radon.
struct CtOperator {
  std::vector<double> angles_deg;  // strictly increasing, within [0, 180)
  std::size_t n_detectors = 0;     // equals cols
  std::size_t rows = 0;
  std::size_t cols = 0;
  int n_views = 0;
  std::string id;

  nlohmann::json geometry_json() const;
};

// Phase-encode line mask with a fully-sampled central band and uniformly
// random remaining lines; total sampled lines == round(rows/acceleration).
Tensor cartesian_mask(std::size_t rows, std::size_t cols, int acceleration,
                      double acs_fraction, std::uint64_t seed);

// Smooth complex coil profiles, normalized so sum_c |S_c(p)|^2 == 1 per pixel.
std::vector<std::complex<double>> simulate_smaps(std::size_t n_coils,
                                                 std::size_t rows,
                                                 std::size_t cols);

MriOperator make_mri_operator(std::size_t rows, std::size_t cols,
                              std::size_t n_coils, int acceleration,
                              double acs_fraction, std::uint64_t seed);

Measurements mri_forward(const MriOperator& op, const Tensor& image);
Tensor mri_adjoint(const MriOperator& op, const Measurements& y);

// Tensor-level entry points (same math, no Measurements wrapper).
Tensor mri_forward_data(const MriOperator& op, const Tensor& image);
Tensor mri_adjoint_data(const MriOperator& op, const Tensor& kspace);

// Equispaced selection of n_views angles from an n_full-angle fan over
// [0, 180) degrees, starting at 0.
std::vector<double> select_views(std::size_t n_full, std::size_t n_views);

CtOperator make_ct_operator(std::size_t rows, std::size_t cols,
                            std::size_t n_full, std::size_t n_views);

// Rotate-and-sum discretization of the radon transform; the adjoint applies
// the exact transposed interpolation weights.
Measurements radon_forward(const CtOperator& op, const Tensor& image);
Tensor radon_adjoint(const CtOperator& op, const Measurements& sinogram);

Tensor radon_forward_data(const CtOperator& op, const Tensor& image);
Tensor radon_adjoint_data(const CtOperator& op, const Tensor& sinogram);

// Max over trials of |<Ax, y> - <x, A^H y>| / (||Ax|| ||y||).
double adjoint_test(const std::function<Tensor(const Tensor&)>& forward,
                    const std::function<Tensor(const Tensor&)>& adjoint,
                    const std::vector<std::size_t>& input_shape,
                    const std::vector<std::size_t>& output_shape,
                    int n_trials, std::uint64_t seed);

} // namespace udig

#endif // UDIG_OPERATORS_HPP
