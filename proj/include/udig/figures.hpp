#ifndef UDIG_FIGURES_HPP
#define UDIG_FIGURES_HPP

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "udig/tensor.hpp"

namespace udig {

struct CurveSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Standalone SVG line chart. Non-finite samples split the polyline into
// segments; throws invalid_argument when no series has a finite point.
void save_curve_svg(const std::filesystem::path& path,
                    const std::vector<CurveSeries>& series,
                    const std::string& x_label, const std::string& y_label,
                    const std::string& title);

// 8-bit grayscale PNG. (2,H,W) inputs are reduced to per-pixel magnitude and
// (1,H,W) to the single plane; values map linearly from the image's own
// [min, max].
void save_image_png(const std::filesystem::path& path, const Tensor& image);

struct PanelSpec {
  std::string label;
  Tensor image;
  // Rendered as "PSNR = xx.xx dB" under the label; NaN drops the line.
  double psnr_db = std::numeric_limits<double>::quiet_NaN();
};

// Side-by-side panels against a shared reference: full view with a marked
// crop, the zoomed crop, and an error inset on a scale shared across panels.
void save_recon_panels(const std::filesystem::path& path,
                       const Tensor& reference,
                       const std::vector<PanelSpec>& panels);

} // namespace udig

#endif // UDIG_FIGURES_HPP
