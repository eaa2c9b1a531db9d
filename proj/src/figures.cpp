#include "udig/figures.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <png.h>

#include "udig/errors.hpp"
#include "udig/metrics.hpp"

namespace udig {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

std::string fmt(double v, const char* spec = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

void write_bytes(const std::filesystem::path& path, const char* data,
                 std::size_t n) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_unwritable, "cannot open " + path.string());
  out.write(data, static_cast<std::streamsize>(n));
  if (!out) throw Error(ErrorCode::io_unwritable, "short write to " + path.string());
}

struct TickSet {
  double lo, hi, step;
};

// Expand [lo, hi] to round multiples of a 1/2/5 step.
TickSet nice_ticks(double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double raw = (hi - lo) / 5.0;
  double step = std::pow(10.0, std::floor(std::log10(raw)));
  const double frac = raw / step;
  if (frac > 5.0) step *= 10.0;
  else if (frac > 2.0) step *= 5.0;
  else if (frac > 1.0) step *= 2.0;
  return {std::floor(lo / step) * step, std::ceil(hi / step) * step, step};
}

// --- PNG encoding ---------------------------------------------------------

struct PngBuf {
  std::vector<unsigned char> bytes;
};

extern "C" void png_append_cb(png_structp png, png_bytep data, png_size_t n) {
  auto* buf = static_cast<PngBuf*>(png_get_io_ptr(png));
  buf->bytes.insert(buf->bytes.end(), data, data + n);
}

extern "C" void png_flush_cb(png_structp) {}

std::vector<unsigned char> encode_png(const std::vector<unsigned char>& pix,
                                      std::size_t w, std::size_t h,
                                      int channels) {
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::generic, "libpng writer allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::generic, "libpng info allocation failed");
  }
  PngBuf buf;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::generic, "png encoding failed");
  }
  png_set_write_fn(png, &buf, png_append_cb, png_flush_cb);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w),
               static_cast<png_uint_32>(h), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(h);
  for (std::size_t r = 0; r < h; ++r)
    rows[r] = const_cast<png_bytep>(pix.data() + r * w * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return buf.bytes;
}

std::string base64(const std::vector<unsigned char>& in) {
  static const char tab[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= in.size(); i += 3) {
    const unsigned v = in[i] << 16 | in[i + 1] << 8 | in[i + 2];
    out += tab[v >> 18];
    out += tab[(v >> 12) & 63];
    out += tab[(v >> 6) & 63];
    out += tab[v & 63];
  }
  if (i + 1 == in.size()) {
    const unsigned v = in[i] << 16;
    out += tab[v >> 18];
    out += tab[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == in.size()) {
    const unsigned v = in[i] << 16 | in[i + 1] << 8;
    out += tab[v >> 18];
    out += tab[(v >> 12) & 63];
    out += tab[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

Tensor display_plane(const Tensor& img) {
  if (img.ndim() == 2) return img;
  if (img.ndim() == 3 && img.dim(0) == 2) return magnitude(img);
  if (img.ndim() == 3 && img.dim(0) == 1)
    return Tensor({img.dim(1), img.dim(2)}, img.values());
  throw Error(ErrorCode::shape_mismatch,
              "figures: expected a 2-D, (1,H,W) or (2,H,W) image");
}

std::vector<unsigned char> gray8(const Tensor& plane, double lo, double hi) {
  const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
  std::vector<unsigned char> pix(plane.numel());
  for (std::size_t i = 0; i < plane.numel(); ++i) {
    const double v = std::clamp((plane[i] - lo) * scale, 0.0, 1.0);
    pix[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  return pix;
}

// black -> red -> yellow -> white heat ramp for error insets
void heat_rgb(double v, unsigned char* px) {
  const double r = std::clamp(3.0 * v, 0.0, 1.0);
  const double g = std::clamp(3.0 * v - 1.0, 0.0, 1.0);
  const double b = std::clamp(3.0 * v - 2.0, 0.0, 1.0);
  px[0] = static_cast<unsigned char>(std::lround(r * 255.0));
  px[1] = static_cast<unsigned char>(std::lround(g * 255.0));
  px[2] = static_cast<unsigned char>(std::lround(b * 255.0));
}

std::string png_data_uri(const std::vector<unsigned char>& pix, std::size_t w,
                         std::size_t h, int channels) {
  return "data:image/png;base64," + base64(encode_png(pix, w, h, channels));
}

// Crop origin with the highest local variance of the reference, scanned on a
// half-window grid so every column shows the same detail-rich region.
std::pair<std::size_t, std::size_t> zoom_origin(const Tensor& plane,
                                                std::size_t side) {
  const std::size_t H = plane.dim(0), W = plane.dim(1);
  const std::size_t step = std::max<std::size_t>(1, side / 2);
  double best = -1.0;
  std::pair<std::size_t, std::size_t> origin{0, 0};
  for (std::size_t r = 0; r + side <= H; r += step) {
    for (std::size_t c = 0; c + side <= W; c += step) {
      double s = 0.0, ss = 0.0;
      for (std::size_t i = 0; i < side; ++i)
        for (std::size_t j = 0; j < side; ++j) {
          const double v = plane.at(r + i, c + j);
          s += v;
          ss += v * v;
        }
      const double n = static_cast<double>(side * side);
      const double var = ss / n - (s / n) * (s / n);
      if (var > best) {
        best = var;
        origin = {r, c};
      }
    }
  }
  return origin;
}

} // namespace

void save_curve_svg(const std::filesystem::path& path,
                    const std::vector<CurveSeries>& series,
                    const std::string& x_label, const std::string& y_label,
                    const std::string& title) {
  constexpr double W = 720, H = 480, L = 72, R = 24, T = 48, B = 60;
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  bool any = false;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size())
      throw Error(ErrorCode::shape_mismatch,
                  "curve series '" + s.label + "': x/y length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!any) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        any = true;
      } else {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    }
  }
  if (!any)
    throw Error(ErrorCode::invalid_argument, "curve plot has no finite data");
  const double ypad = ymax > ymin ? 0.05 * (ymax - ymin) : 1.0;
  const TickSet tx = nice_ticks(xmin, xmax);
  const TickSet ty = nice_ticks(ymin - ypad, ymax + ypad);
  const auto X = [&](double v) {
    return L + (v - tx.lo) / (tx.hi - tx.lo) * (W - L - R);
  };
  const auto Y = [&](double v) {
    return H - B - (v - ty.lo) / (ty.hi - ty.lo) * (H - T - B);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H
      << "\" font-family=\"sans-serif\">\n"
      << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"26\" font-size=\"16\" "
         "text-anchor=\"middle\">"
      << xml_escape(title) << "</text>\n";

  const int nx = static_cast<int>(std::lround((tx.hi - tx.lo) / tx.step));
  for (int k = 0; k <= nx; ++k) {
    const double v = tx.lo + k * tx.step;
    const double px = X(v);
    svg << "<line x1=\"" << fmt(px) << "\" y1=\"" << T << "\" x2=\"" << fmt(px)
        << "\" y2=\"" << H - B << "\" stroke=\"#dddddd\"/>\n"
        << "<text x=\"" << fmt(px) << "\" y=\"" << H - B + 20
        << "\" font-size=\"12\" text-anchor=\"middle\">" << fmt(v, "%.6g")
        << "</text>\n";
  }
  const int ny = static_cast<int>(std::lround((ty.hi - ty.lo) / ty.step));
  for (int k = 0; k <= ny; ++k) {
    const double v = ty.lo + k * ty.step;
    const double py = Y(v);
    svg << "<line x1=\"" << L << "\" y1=\"" << fmt(py) << "\" x2=\"" << W - R
        << "\" y2=\"" << fmt(py) << "\" stroke=\"#dddddd\"/>\n"
        << "<text x=\"" << L - 8 << "\" y=\"" << fmt(py + 4)
        << "\" font-size=\"12\" text-anchor=\"end\">" << fmt(v, "%.6g")
        << "</text>\n";
  }
  svg << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R
      << "\" height=\"" << H - T - B
      << "\" fill=\"none\" stroke=\"#333333\"/>\n"
      << "<text x=\"" << L + (W - L - R) / 2 << "\" y=\"" << H - 16
      << "\" font-size=\"14\" text-anchor=\"middle\">" << xml_escape(x_label)
      << "</text>\n"
      << "<text x=\"20\" y=\"" << T + (H - T - B) / 2
      << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
      << T + (H - T - B) / 2 << ")\">" << xml_escape(y_label) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kPalette[si % kPaletteSize];
    std::vector<std::pair<double, double>> seg;
    const auto flush = [&]() {
      if (seg.size() >= 2) {
        svg << "<polyline fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"1.8\" points=\"";
        for (const auto& p : seg)
          svg << fmt(p.first) << "," << fmt(p.second) << " ";
        svg << "\"/>\n";
      } else if (seg.size() == 1) {
        svg << "<circle cx=\"" << fmt(seg[0].first) << "\" cy=\""
            << fmt(seg[0].second) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      }
      seg.clear();
    };
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
        seg.emplace_back(X(s.x[i]), Y(s.y[i]));
      else
        flush();
    }
    flush();
  }

  for (std::size_t si = 0; si < series.size(); ++si) {
    const double ly = T + 16 + 18.0 * static_cast<double>(si);
    svg << "<line x1=\"" << W - R - 150 << "\" y1=\"" << fmt(ly - 4)
        << "\" x2=\"" << W - R - 126 << "\" y2=\"" << fmt(ly - 4)
        << "\" stroke=\"" << kPalette[si % kPaletteSize]
        << "\" stroke-width=\"3\"/>\n"
        << "<text x=\"" << W - R - 120 << "\" y=\"" << fmt(ly)
        << "\" font-size=\"12\">" << xml_escape(series[si].label)
        << "</text>\n";
  }
  svg << "</svg>\n";

  const std::string body = svg.str();
  write_bytes(path, body.data(), body.size());
}

void save_image_png(const std::filesystem::path& path, const Tensor& image) {
  const Tensor plane = display_plane(image);
  double lo = plane[0], hi = plane[0];
  for (std::size_t i = 1; i < plane.numel(); ++i) {
    lo = std::min(lo, plane[i]);
    hi = std::max(hi, plane[i]);
  }
  const auto png = encode_png(gray8(plane, lo, hi), plane.dim(1), plane.dim(0), 1);
  write_bytes(path, reinterpret_cast<const char*>(png.data()), png.size());
}

void save_recon_panels(const std::filesystem::path& path,
                       const Tensor& reference,
                       const std::vector<PanelSpec>& panels) {
  if (panels.empty())
    throw Error(ErrorCode::invalid_argument, "no reconstruction panels given");
  const Tensor ref = display_plane(reference);
  const std::size_t H = ref.dim(0), W = ref.dim(1);
  std::vector<Tensor> planes;
  planes.reserve(panels.size());
  for (const auto& p : panels) {
    Tensor plane = display_plane(p.image);
    if (plane.dim(0) != H || plane.dim(1) != W)
      throw Error(ErrorCode::shape_mismatch,
                  "panel '" + p.label + "' does not match the reference shape");
    planes.push_back(std::move(plane));
  }

  double lo = ref[0], hi = ref[0];
  for (std::size_t i = 1; i < ref.numel(); ++i) {
    lo = std::min(lo, ref[i]);
    hi = std::max(hi, ref[i]);
  }

  const std::size_t side =
      std::min({std::max<std::size_t>(8, H / 4), H, W});
  const auto [zr, zc] = zoom_origin(ref, side);

  const auto crop = [&](const Tensor& plane) {
    Tensor out({side, side});
    for (std::size_t i = 0; i < side; ++i)
      for (std::size_t j = 0; j < side; ++j)
        out.at(i, j) = plane.at(zr + i, zc + j);
    return out;
  };
  const Tensor ref_crop = crop(ref);

  double emax = 0.0;
  std::vector<Tensor> err_crops;
  err_crops.reserve(planes.size());
  for (const auto& plane : planes) {
    Tensor e({side, side});
    for (std::size_t i = 0; i < side; ++i)
      for (std::size_t j = 0; j < side; ++j) {
        const double d =
            std::fabs(plane.at(zr + i, zc + j) - ref_crop.at(i, j));
        e.at(i, j) = d;
        emax = std::max(emax, d);
      }
    err_crops.push_back(std::move(e));
  }
  if (emax == 0.0) emax = 1.0;

  const auto heat_pix = [&](const Tensor& e) {
    std::vector<unsigned char> pix(side * side * 3);
    for (std::size_t i = 0; i < e.numel(); ++i)
      heat_rgb(e[i] / emax, pix.data() + 3 * i);
    return pix;
  };

  constexpr int S = 192, pad = 12, inset = 93;
  const int ncols = static_cast<int>(panels.size()) + 1;
  const int total_w = pad + ncols * (S + pad);
  const int y_img = 30, y_inset = y_img + S + 6;
  const int y_cap = y_inset + inset + 18;
  const int total_h = y_cap + 20 + 12;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << total_w
      << "\" height=\"" << total_h << "\" viewBox=\"0 0 " << total_w << " "
      << total_h << "\" font-family=\"sans-serif\">\n"
      << "<rect width=\"" << total_w << "\" height=\"" << total_h
      << "\" fill=\"white\"/>\n";

  const auto emit_column = [&](int col, const Tensor& plane,
                               const Tensor* err, const std::string& label,
                               double psnr_db) {
    const int x0 = pad + col * (S + pad);
    svg << "<image x=\"" << x0 << "\" y=\"" << y_img << "\" width=\"" << S
        << "\" height=\"" << S
        << "\" style=\"image-rendering:pixelated\" href=\""
        << png_data_uri(gray8(plane, lo, hi), W, H, 1) << "\"/>\n";
    // crop marker on the full view
    const double sx = static_cast<double>(S) / static_cast<double>(W);
    const double sy = static_cast<double>(S) / static_cast<double>(H);
    svg << "<rect x=\"" << fmt(x0 + static_cast<double>(zc) * sx) << "\" y=\""
        << fmt(y_img + static_cast<double>(zr) * sy) << "\" width=\""
        << fmt(static_cast<double>(side) * sx) << "\" height=\""
        << fmt(static_cast<double>(side) * sy)
        << "\" fill=\"none\" stroke=\"#ffd700\" stroke-width=\"1.5\"/>\n";
    svg << "<image x=\"" << x0 << "\" y=\"" << y_inset << "\" width=\""
        << inset << "\" height=\"" << inset
        << "\" style=\"image-rendering:pixelated\" href=\""
        << png_data_uri(gray8(crop(plane), lo, hi), side, side, 1) << "\"/>\n";
    if (err) {
      svg << "<image x=\"" << x0 + inset + 6 << "\" y=\"" << y_inset
          << "\" width=\"" << inset << "\" height=\"" << inset
          << "\" style=\"image-rendering:pixelated\" href=\""
          << png_data_uri(heat_pix(*err), side, side, 3) << "\"/>\n";
    }
    svg << "<text x=\"" << x0 + S / 2 << "\" y=\"" << y_cap
        << "\" font-size=\"13\" text-anchor=\"middle\">" << xml_escape(label)
        << "</text>\n";
    if (std::isfinite(psnr_db)) {
      svg << "<text x=\"" << x0 + S / 2 << "\" y=\"" << y_cap + 16
          << "\" font-size=\"12\" text-anchor=\"middle\">PSNR = "
          << fmt(psnr_db) << " dB</text>\n";
    }
  };

  emit_column(0, ref, nullptr, "Reference",
              std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < panels.size(); ++i)
    emit_column(static_cast<int>(i) + 1, planes[i], &err_crops[i],
                panels[i].label, panels[i].psnr_db);
  svg << "</svg>\n";

  const std::string body = svg.str();
  write_bytes(path, body.data(), body.size());
}

} // namespace udig
