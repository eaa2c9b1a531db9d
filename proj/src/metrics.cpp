#include "udig/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace udig {

namespace {

double effective_range(const Tensor& ref, const MetricConfig& cfg) {
  if (cfg.data_range > 0.0) return cfg.data_range;
  double m = 0.0;
  for (std::size_t i = 0; i < ref.numel(); ++i) m = std::max(m, ref[i]);
  if (m <= 0.0)
    throw Error(ErrorCode::invalid_argument,
                "metrics: reference has non-positive peak and no data_range given");
  return m;
}

} // namespace

double psnr(const Tensor& x, const Tensor& ref, const MetricConfig& cfg) {
  x.require_same_shape(ref);
  const double range = effective_range(ref, cfg);
  double mse = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = x[i] - ref[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x.numel());
  if (mse == 0.0) return cfg.psnr_cap_db;
  return std::min(cfg.psnr_cap_db, 10.0 * std::log10(range * range / mse));
}

double ssim(const Tensor& x, const Tensor& ref, const MetricConfig& cfg) {
  x.require_same_shape(ref);
  if (x.ndim() != 2)
    throw Error(ErrorCode::shape_mismatch, "ssim expects 2-D images");
  const int w = cfg.ssim_window;
  if (w < 1 || w % 2 == 0)
    throw Error(ErrorCode::invalid_argument, "ssim_window must be odd and positive");
  const int H = static_cast<int>(x.dim(0));
  const int W = static_cast<int>(x.dim(1));
  if (H < w || W < w)
    throw Error(ErrorCode::invalid_argument, "image smaller than ssim window");

  const double L = effective_range(ref, cfg);
  const double c1 = (cfg.ssim_k1 * L) * (cfg.ssim_k1 * L);
  const double c2 = (cfg.ssim_k2 * L) * (cfg.ssim_k2 * L);
  const double n = static_cast<double>(w) * w;

  double acc = 0.0;
  std::size_t count = 0;
  for (int r = 0; r + w <= H; ++r) {
    for (int c = 0; c + w <= W; ++c) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < w; ++i) {
        for (int j = 0; j < w; ++j) {
          const double a = x.at(r + i, c + j);
          const double b = ref.at(r + i, c + j);
          sx += a;
          sy += b;
          sxx += a * a;
          syy += b * b;
          sxy += a * b;
        }
      }
      const double mx = sx / n;
      const double my = sy / n;
      const double vx = sxx / n - mx * mx;
      const double vy = syy / n - my * my;
      const double cov = sxy / n - mx * my;
      acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

Tensor magnitude(const Tensor& two_channel) {
  if (two_channel.ndim() != 3 || two_channel.dim(0) != 2)
    throw Error(ErrorCode::shape_mismatch, "magnitude expects a (2,H,W) image");
  const std::size_t H = two_channel.dim(1);
  const std::size_t W = two_channel.dim(2);
  Tensor out({H, W});
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c)
      out.at(r, c) = std::hypot(two_channel.at(0, r, c), two_channel.at(1, r, c));
  return out;
}

namespace {

Tensor as_plane(const Tensor& img) {
  if (img.ndim() == 3 && img.dim(0) == 2) return magnitude(img);
  if (img.ndim() == 3 && img.dim(0) == 1)
    return Tensor({img.dim(1), img.dim(2)}, img.values());
  return img;
}

} // namespace

ImagePairMetrics evaluate_reconstruction(const Tensor& recon, const Tensor& ref) {
  Tensor a = as_plane(recon);
  Tensor b = as_plane(ref);
  MetricConfig cfg;
  return {psnr(a, b, cfg), ssim(a, b, cfg)};
}

} // namespace udig
