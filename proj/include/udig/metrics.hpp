#ifndef UDIG_METRICS_HPP
#define UDIG_METRICS_HPP

#include "udig/tensor.hpp"

namespace udig {

struct MetricConfig {
  double data_range = 0.0; // <= 0 means "use max of the reference"
  int ssim_window = 7;
  double ssim_k1 = 0.01;
  double ssim_k2 = 0.03;
  double psnr_cap_db = 100.0;
};

// 10*log10(range^2 / MSE), capped at psnr_cap_db (exact match returns the cap).
double psnr(const Tensor& x, const Tensor& ref, const MetricConfig& cfg = {});

// Mean local SSIM over fully-interior uniform windows.
double ssim(const Tensor& x, const Tensor& ref, const MetricConfig& cfg = {});

// Per-pixel magnitude of a 2-channel (re, im) image -> (H, W).
Tensor magnitude(const Tensor& two_channel);

// Metrics for a reconstruction against its ground truth. Both tasks use
// data_range = max of the reference; 2-channel images are compared as
// magnitude images (MRI convention).
struct ImagePairMetrics {
  double psnr_db;
  double ssim;
};
ImagePairMetrics evaluate_reconstruction(const Tensor& recon, const Tensor& ref);

} // namespace udig

#endif // UDIG_METRICS_HPP
