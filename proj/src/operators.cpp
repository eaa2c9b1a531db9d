#include "udig/operators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "udig/fft.hpp"

namespace udig {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_image_shape(const Tensor& x, std::size_t rows, std::size_t cols,
                       const char* what) {
  if (x.ndim() != 3 || x.dim(0) != 2 || x.dim(1) != rows || x.dim(2) != cols)
    throw Error(ErrorCode::shape_mismatch,
                std::string(what) + ": expected (2," + std::to_string(rows) +
                    "," + std::to_string(cols) + ") image");
}

// Bilinear sampling weights at (sy, sx) with zero padding outside the image.
// Out-of-range or zero-weight neighbors are skipped, so forward/adjoint built
// on the same enumeration form an exact transpose pair.
template <class Fn>
inline void for_each_bilinear_weight(double sy, double sx, std::size_t H,
                                     std::size_t W, Fn&& fn) {
  if (sy <= -1.0 || sx <= -1.0 || sy >= static_cast<double>(H) ||
      sx >= static_cast<double>(W))
    return;
  const double fy = std::floor(sy);
  const double fx = std::floor(sx);
  const long y0 = static_cast<long>(fy);
  const long x0 = static_cast<long>(fx);
  const double wy = sy - fy;
  const double wx = sx - fx;
  const auto emit = [&](long y, long x, double w) {
    if (w != 0.0 && y >= 0 && y < static_cast<long>(H) && x >= 0 &&
        x < static_cast<long>(W))
      fn(static_cast<std::size_t>(y), static_cast<std::size_t>(x), w);
  };
  emit(y0, x0, (1.0 - wy) * (1.0 - wx));
  emit(y0, x0 + 1, (1.0 - wy) * wx);
  emit(y0 + 1, x0, wy * (1.0 - wx));
  emit(y0 + 1, x0 + 1, wy * wx);
}

} // namespace

Tensor cartesian_mask(std::size_t rows, std::size_t cols, int acceleration,
                      double acs_fraction, std::uint64_t seed) {
  if (acceleration < 1)
    throw Error(ErrorCode::invalid_argument, "acceleration must be >= 1");
  if (acs_fraction <= 0.0 || acs_fraction >= 1.0)
    throw Error(ErrorCode::invalid_argument, "acs_fraction must be in (0,1)");

  Tensor mask({rows, cols});
  std::vector<bool> line(rows, false);
  if (acceleration == 1) {
    std::fill(line.begin(), line.end(), true);
  } else {
    const std::size_t band =
        static_cast<std::size_t>(std::ceil(acs_fraction * static_cast<double>(rows)));
    const std::size_t target = static_cast<std::size_t>(
        std::llround(static_cast<double>(rows) / acceleration));
    if (band > target)
      throw Error(ErrorCode::invalid_argument,
                  "ACS band exceeds the sampling budget");
    const std::size_t start = (rows - band) / 2;
    for (std::size_t r = start; r < start + band; ++r) line[r] = true;

    std::vector<std::size_t> candidates;
    for (std::size_t r = 0; r < rows; ++r)
      if (!line[r]) candidates.push_back(r);
    Rng rng(seed);
    // partial Fisher-Yates: the first (target - band) entries are the draw
    const std::size_t extra = target - band;
    for (std::size_t i = 0; i < extra; ++i) {
      const std::size_t j = i + rng.uniform_index(candidates.size() - i);
      std::swap(candidates[i], candidates[j]);
      line[candidates[i]] = true;
    }
  }
  for (std::size_t r = 0; r < rows; ++r)
    if (line[r])
      for (std::size_t c = 0; c < cols; ++c) mask.at(r, c) = 1.0;
  return mask;
}

std::vector<std::complex<double>> simulate_smaps(std::size_t n_coils,
                                                 std::size_t rows,
                                                 std::size_t cols) {
  if (n_coils < 1)
    throw Error(ErrorCode::invalid_argument, "n_coils must be >= 1");
  const double cy = (static_cast<double>(rows) - 1.0) / 2.0;
  const double cx = (static_cast<double>(cols) - 1.0) / 2.0;
  const double size = static_cast<double>(std::max(rows, cols));
  const double sigma = 0.55 * size;

  std::vector<std::complex<double>> smaps(n_coils * rows * cols);
  for (std::size_t c = 0; c < n_coils; ++c) {
    const double phi = 2.0 * kPi * static_cast<double>(c) /
                       static_cast<double>(n_coils);
    const double coil_y = cy + 0.5 * static_cast<double>(rows) * std::sin(phi);
    const double coil_x = cx + 0.5 * static_cast<double>(cols) * std::cos(phi);
    // small per-coil linear phase ramp keeps the maps genuinely complex
    const double ky = 0.6 * kPi * std::sin(phi) / size;
    const double kx = 0.6 * kPi * std::cos(phi) / size;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t x = 0; x < cols; ++x) {
        const double dy = static_cast<double>(r) - coil_y;
        const double dx = static_cast<double>(x) - coil_x;
        const double mag = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        const double phase = ky * static_cast<double>(r) + kx * static_cast<double>(x);
        smaps[(c * rows + r) * cols + x] =
            std::polar(mag, phase + 0.5 * phi);
      }
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t x = 0; x < cols; ++x) {
      double ss = 0.0;
      for (std::size_t c = 0; c < n_coils; ++c)
        ss += std::norm(smaps[(c * rows + r) * cols + x]);
      const double inv = 1.0 / std::sqrt(ss);
      for (std::size_t c = 0; c < n_coils; ++c)
        smaps[(c * rows + r) * cols + x] *= inv;
    }
  }
  return smaps;
}

MriOperator make_mri_operator(std::size_t rows, std::size_t cols,
                              std::size_t n_coils, int acceleration,
                              double acs_fraction, std::uint64_t seed) {
  MriOperator op;
  op.mask = cartesian_mask(rows, cols, acceleration, acs_fraction, seed);
  op.smaps = simulate_smaps(n_coils, rows, cols);
  op.n_coils = n_coils;
  op.rows = rows;
  op.cols = cols;
  op.acceleration = acceleration;
  op.seed = seed;
  op.id = "mri_" + std::to_string(rows) + "x" + std::to_string(cols) + "_acc" +
          std::to_string(acceleration) + "_seed" + std::to_string(seed);
  return op;
}

nlohmann::json MriOperator::geometry_json() const {
  return {{"modality", "mri"},
          {"shape", {rows, cols}},
          {"acceleration", acceleration},
          {"seed", seed}};
}

nlohmann::json CtOperator::geometry_json() const {
  return {{"modality", "ct"}, {"shape", {rows, cols}}, {"n_views", n_views}};
}

Tensor mri_forward_data(const MriOperator& op, const Tensor& image) {
  check_image_shape(image, op.rows, op.cols, "mri_forward");
  const std::size_t H = op.rows, W = op.cols, n = H * W;
  Tensor out({2, op.n_coils, H, W});
  std::vector<std::complex<double>> buf(n), shifted(n);
  for (std::size_t c = 0; c < op.n_coils; ++c) {
    for (std::size_t i = 0; i < n; ++i)
      buf[i] = op.smaps[c * n + i] *
               std::complex<double>(image[i], image[n + i]);
    fft2_unitary(buf.data(), H, W, false);
    roll2d(buf.data(), shifted.data(), H, W, H / 2, W / 2); // DC to center
    for (std::size_t i = 0; i < n; ++i) {
      const std::complex<double> v = op.mask[i] * shifted[i];
      out[(0 * op.n_coils + c) * n + i] = v.real();
      out[(1 * op.n_coils + c) * n + i] = v.imag();
    }
  }
  return out;
}

Tensor mri_adjoint_data(const MriOperator& op, const Tensor& kspace) {
  if (kspace.ndim() != 4 || kspace.dim(0) != 2 || kspace.dim(1) != op.n_coils ||
      kspace.dim(2) != op.rows || kspace.dim(3) != op.cols)
    throw Error(ErrorCode::shape_mismatch, "mri_adjoint: k-space shape mismatch");
  const std::size_t H = op.rows, W = op.cols, n = H * W;
  Tensor out({2, H, W});
  std::vector<std::complex<double>> buf(n), unshifted(n);
  for (std::size_t c = 0; c < op.n_coils; ++c) {
    for (std::size_t i = 0; i < n; ++i)
      buf[i] = op.mask[i] *
               std::complex<double>(kspace[(0 * op.n_coils + c) * n + i],
                                    kspace[(1 * op.n_coils + c) * n + i]);
    roll2d(buf.data(), unshifted.data(), H, W, H - H / 2, W - W / 2);
    fft2_unitary(unshifted.data(), H, W, true);
    for (std::size_t i = 0; i < n; ++i) {
      const std::complex<double> v = std::conj(op.smaps[c * n + i]) * unshifted[i];
      out[i] += v.real();
      out[n + i] += v.imag();
    }
  }
  return out;
}

Measurements mri_forward(const MriOperator& op, const Tensor& image) {
  return {mri_forward_data(op, image), op.id};
}

Tensor mri_adjoint(const MriOperator& op, const Measurements& y) {
  return mri_adjoint_data(op, y.data);
}

std::vector<double> select_views(std::size_t n_full, std::size_t n_views) {
  if (n_views < 1 || n_views > n_full)
    throw Error(ErrorCode::invalid_argument,
                "n_views must satisfy 1 <= n_views <= n_full");
  std::vector<double> angles(n_views);
  const double step = 180.0 / static_cast<double>(n_full);
  for (std::size_t j = 0; j < n_views; ++j)
    angles[j] = step * static_cast<double>(j * n_full / n_views);
  return angles;
}

CtOperator make_ct_operator(std::size_t rows, std::size_t cols,
                            std::size_t n_full, std::size_t n_views) {
  CtOperator op;
  op.angles_deg = select_views(n_full, n_views);
  op.n_detectors = cols;
  op.rows = rows;
  op.cols = cols;
  op.n_views = static_cast<int>(n_views);
  op.id = "ct_" + std::to_string(rows) + "x" + std::to_string(cols) +
          "_views" + std::to_string(n_views);
  return op;
}

Tensor radon_forward_data(const CtOperator& op, const Tensor& image) {
  if (image.ndim() != 2 || image.dim(0) != op.rows || image.dim(1) != op.cols)
    throw Error(ErrorCode::shape_mismatch, "radon_forward: image shape mismatch");
  const std::size_t H = op.rows, W = op.cols;
  const double cy = (static_cast<double>(H) - 1.0) / 2.0;
  const double cx = (static_cast<double>(W) - 1.0) / 2.0;
  Tensor sino({op.angles_deg.size(), op.n_detectors});
  for (std::size_t a = 0; a < op.angles_deg.size(); ++a) {
    const double th = op.angles_deg[a] * kPi / 180.0;
    const double ct = std::cos(th), st = std::sin(th);
    for (std::size_t r = 0; r < H; ++r) {
      const double dy = static_cast<double>(r) - cy;
      for (std::size_t d = 0; d < W; ++d) {
        const double dx = static_cast<double>(d) - cx;
        const double sy = cy - st * dx + ct * dy;
        const double sx = cx + ct * dx + st * dy;
        double acc = 0.0;
        for_each_bilinear_weight(sy, sx, H, W,
                                 [&](std::size_t y, std::size_t x, double w) {
                                   acc += w * image.at(y, x);
                                 });
        sino.at(a, d) += acc;
      }
    }
  }
  return sino;
}

Tensor radon_adjoint_data(const CtOperator& op, const Tensor& sinogram) {
  if (sinogram.ndim() != 2 || sinogram.dim(0) != op.angles_deg.size() ||
      sinogram.dim(1) != op.n_detectors)
    throw Error(ErrorCode::shape_mismatch, "radon_adjoint: sinogram shape mismatch");
  const std::size_t H = op.rows, W = op.cols;
  const double cy = (static_cast<double>(H) - 1.0) / 2.0;
  const double cx = (static_cast<double>(W) - 1.0) / 2.0;
  Tensor img({H, W});
  for (std::size_t a = 0; a < op.angles_deg.size(); ++a) {
    const double th = op.angles_deg[a] * kPi / 180.0;
    const double ct = std::cos(th), st = std::sin(th);
    for (std::size_t r = 0; r < H; ++r) {
      const double dy = static_cast<double>(r) - cy;
      for (std::size_t d = 0; d < W; ++d) {
        const double dx = static_cast<double>(d) - cx;
        const double sy = cy - st * dx + ct * dy;
        const double sx = cx + ct * dx + st * dy;
        const double v = sinogram.at(a, d);
        for_each_bilinear_weight(sy, sx, H, W,
                                 [&](std::size_t y, std::size_t x, double w) {
                                   img.at(y, x) += w * v;
                                 });
      }
    }
  }
  return img;
}

Measurements radon_forward(const CtOperator& op, const Tensor& image) {
  return {radon_forward_data(op, image), op.id};
}

Tensor radon_adjoint(const CtOperator& op, const Measurements& sinogram) {
  return radon_adjoint_data(op, sinogram.data);
}

double adjoint_test(const std::function<Tensor(const Tensor&)>& forward,
                    const std::function<Tensor(const Tensor&)>& adjoint,
                    const std::vector<std::size_t>& input_shape,
                    const std::vector<std::size_t>& output_shape,
                    int n_trials, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < n_trials; ++t) {
    const Tensor x = randn(input_shape, rng);
    const Tensor y = randn(output_shape, rng);
    const Tensor ax = forward(x);
    const Tensor aty = adjoint(y);
    const double lhs = dot(ax, y);
    const double rhs = dot(x, aty);
    const double den = std::sqrt(squared_norm(ax)) * std::sqrt(squared_norm(y));
    const double err = std::abs(lhs - rhs) / std::max(den, 1e-300);
    worst = std::max(worst, err);
  }
  return worst;
}

} // namespace udig
