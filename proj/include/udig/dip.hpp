#ifndef UDIG_DIP_HPP
#define UDIG_DIP_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "udig/nets.hpp"
#include "udig/operators.hpp"
#include "udig/tensor.hpp"

namespace udig {

// Type-erased linear acquisition model. Images are always (C,H,W) with
// C = 2 (re/im MRI) or C = 1 (CT); the wrappers translate to whatever the
// concrete operator expects.
struct LinearOperator {
  std::vector<std::size_t> image_shape;
  std::vector<std::size_t> data_shape;
  std::string id;
  std::function<Tensor(const Tensor&)> forward;
  std::function<Tensor(const Tensor&)> adjoint;
};

LinearOperator wrap_mri(const MriOperator& op);
LinearOperator wrap_ct(const CtOperator& op);
LinearOperator identity_operator(std::vector<std::size_t> image_shape);

enum class InputMode { random, adjoint, reference, ground_truth_plus_noise };

struct DipConfig {
  int iters = 4000;
  double lr = 1e-4;
  OptAlgorithm optimizer = OptAlgorithm::adam;
  InputMode input_mode = InputMode::adjoint;
  double noise_sigma = 0.0;  // ground_truth_plus_noise only
  std::uint64_t seed = 0;
  int eval_every = 50;
  // network size; channel counts follow the operator's image shape
  int base_width = 16;
  int depth = 3;
};

struct ReconTrace {
  std::vector<int> iterations;
  std::vector<double> psnr_db;
  std::vector<double> ssim;
  std::vector<double> data_loss;
  double best_psnr_db = 0.0;
  int best_iter = -1;
  Tensor final_image;
  bool aborted = false;  // loss went non-finite; trace holds the steps so far
};

// Rows "iteration,psnr_db,ssim,data_loss"; missing metrics render as nan.
void write_trace_csv(const ReconTrace& trace, const std::filesystem::path& path);
ReconTrace read_trace_csv(const std::filesystem::path& path);

// Fits the network to the measurements with the input held fixed; the traced
// metrics compare each step's output against x_true when given.
ReconTrace dip_reconstruct(const Measurements& y, const LinearOperator& A,
                           const DipConfig& cfg, const Tensor* x_true = nullptr);

// Same loop with the input pinned to a supplied reference image.
ReconTrace refg_dip_reconstruct(const Measurements& y, const LinearOperator& A,
                                const Tensor& reference, const DipConfig& cfg,
                                const Tensor* x_true = nullptr);

struct SensitivityTable {
  std::vector<double> sigmas;
  std::vector<double> mean_best_psnr_db;
  std::vector<double> std_best_psnr_db;
};

// For each input perturbation level, runs n_seeds reconstructions with
// z = x_true + sigma * noise against noiseless measurements A x_true and
// aggregates the best attained PSNR. Per-seed noise is paired across sigmas.
// A non-empty out_dir receives sigma_sweep.csv and sigma_sweep.svg.
SensitivityTable input_sensitivity_experiment(
    const Tensor& x_true, const LinearOperator& A,
    const std::vector<double>& sigmas, const DipConfig& cfg, int n_seeds,
    const std::filesystem::path& out_dir = {});

void write_sensitivity_csv(const SensitivityTable& table,
                           const std::filesystem::path& path);

namespace detail {

// One shared inner loop for every reconstruction method: n_steps updates of
// ||A f(z) - y||^2 + lambda ||f(z) - z||^2 with z held fixed, appending trace
// rows on the usual grid (step 1, multiples of eval_every, the last step).
// Returns false when the loss went non-finite and the run must stop.
struct GradientLoop {
  UNet* net = nullptr;
  OptimizerState* opt = nullptr;
  const LinearOperator* A = nullptr;
  const Tensor* y = nullptr;
  double lambda = 0.0;
  int total_iters = 0;
  int eval_every = 50;
  const Tensor* x_true = nullptr;  // optional, enables psnr/ssim tracing
};

bool run_gradient_steps(GradientLoop& loop, const Tensor& z, int done,
                        int n_steps, ReconTrace& trace);

void finalize_trace(ReconTrace& trace);

std::uint64_t net_seed(std::uint64_t run_seed);

} // namespace detail

} // namespace udig

#endif // UDIG_DIP_HPP
