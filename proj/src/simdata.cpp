#include "udig/simdata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "udig/persistence.hpp"

namespace udig {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Ellipse {
  double x0, y0, a, b, angle_rad, value;
};

// Shepp-Logan geometry with the contrast-enhanced intensity variant, so the
// rendered phantom peaks at exactly 1 with a zero background.
const std::vector<Ellipse>& shepp_logan_ellipses() {
  static const std::vector<Ellipse> es = [] {
    const double d = kPi / 180.0;
    return std::vector<Ellipse>{
        {0.0, 0.0, 0.69, 0.92, 0.0, 1.0},
        {0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8},
        {0.22, 0.0, 0.11, 0.31, -18.0 * d, -0.2},
        {-0.22, 0.0, 0.16, 0.41, 18.0 * d, -0.2},
        {0.0, 0.35, 0.21, 0.25, 0.0, 0.1},
        {0.0, 0.1, 0.046, 0.046, 0.0, 0.1},
        {0.0, -0.1, 0.046, 0.046, 0.0, 0.1},
        {-0.08, -0.605, 0.046, 0.023, 0.0, 0.1},
        {0.0, -0.605, 0.023, 0.023, 0.0, 0.1},
        {0.06, -0.605, 0.023, 0.046, 0.0, 0.1},
    };
  }();
  return es;
}

Tensor render_ellipses(const std::vector<Ellipse>& ellipses, std::size_t size) {
  Tensor img({size, size});
  const double half = static_cast<double>(size) / 2.0;
  const double cy = (static_cast<double>(size) - 1.0) / 2.0;
  for (std::size_t r = 0; r < size; ++r) {
    const double y = (cy - static_cast<double>(r)) / half;
    for (std::size_t c = 0; c < size; ++c) {
      const double x = (static_cast<double>(c) - cy) / half;
      double v = 0.0;
      for (const auto& e : ellipses) {
        const double dx = x - e.x0;
        const double dy = y - e.y0;
        const double ct = std::cos(e.angle_rad);
        const double st = std::sin(e.angle_rad);
        const double u = (dx * ct + dy * st) / e.a;
        const double w = (-dx * st + dy * ct) / e.b;
        if (u * u + w * w <= 1.0) v += e.value;
      }
      img.at(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

// Random phantoms share a fixed elliptical shell; interior structure varies.
// Ranges: centers in [-0.35,0.35]x[-0.45,0.45], semi-axes in [0.06,0.30],
// angle in [0,pi), added intensity in [-0.2,0.5].
std::vector<Ellipse> random_ellipse_set(int n_ellipses, std::uint64_t seed) {
  std::vector<Ellipse> es = {
      {0.0, 0.0, 0.75, 0.92, 0.0, 1.0},
      {0.0, 0.0, 0.70, 0.865, 0.0, -0.8},
  };
  Rng rng(mix_seed(seed, 0x9e11));
  for (int i = 0; i < n_ellipses; ++i) {
    Ellipse e;
    e.x0 = rng.uniform(-0.35, 0.35);
    e.y0 = rng.uniform(-0.45, 0.45);
    e.a = rng.uniform(0.06, 0.30);
    e.b = rng.uniform(0.06, 0.30);
    e.angle_rad = rng.uniform(0.0, kPi);
    e.value = rng.uniform(-0.2, 0.5);
    es.push_back(e);
  }
  return es;
}

} // namespace

std::string phantom_kind_name(PhantomKind k) {
  switch (k) {
    case PhantomKind::shepp_logan: return "shepp_logan";
    case PhantomKind::random_ellipses: return "random_ellipses";
    case PhantomKind::user_array: return "user_array";
  }
  throw Error(ErrorCode::invalid_argument, "bad phantom kind");
}

PhantomKind phantom_kind_from_name(const std::string& name) {
  if (name == "shepp_logan") return PhantomKind::shepp_logan;
  if (name == "random_ellipses") return PhantomKind::random_ellipses;
  if (name == "user_array") return PhantomKind::user_array;
  throw Error(ErrorCode::invalid_argument, "unknown phantom kind: " + name);
}

void to_json(nlohmann::json& j, const PhantomSpec& spec) {
  j = {{"kind", phantom_kind_name(spec.kind)},
       {"size", spec.size},
       {"n_ellipses", spec.n_ellipses},
       {"seed", spec.seed}};
  if (spec.kind == PhantomKind::user_array) j["path"] = spec.path;
}

void from_json(const nlohmann::json& j, PhantomSpec& spec) {
  spec.kind = phantom_kind_from_name(j.at("kind").get<std::string>());
  spec.size = j.value("size", std::size_t{64});
  spec.n_ellipses = j.value("n_ellipses", 6);
  spec.seed = j.value("seed", std::uint64_t{0});
  spec.path = j.value("path", std::string{});
}

Tensor generate_phantom(const PhantomSpec& spec) {
  if (spec.kind == PhantomKind::user_array) {
    Tensor t = load_array(spec.path).tensor;
    if (t.ndim() != 2)
      throw Error(ErrorCode::invalid_argument,
                  "user_array phantom must be a 2-D array");
    for (std::size_t i = 0; i < t.numel(); ++i)
      t[i] = std::clamp(t[i], 0.0, 1.0);
    return t;
  }
  if (spec.size < 16)
    throw Error(ErrorCode::invalid_argument, "phantom size must be >= 16");
  if (spec.kind == PhantomKind::shepp_logan)
    return render_ellipses(shepp_logan_ellipses(), spec.size);
  return render_ellipses(random_ellipse_set(spec.n_ellipses, spec.seed),
                         spec.size);
}

Tensor make_mri_ground_truth(const Tensor& phantom, double phase_strength,
                             std::uint64_t seed) {
  if (phantom.ndim() != 2)
    throw Error(ErrorCode::shape_mismatch, "phantom must be 2-D");
  const std::size_t H = phantom.dim(0), W = phantom.dim(1);
  // low-order polynomial phase: sum of c_pq * y^p * x^q for p+q <= 2
  Rng rng(mix_seed(seed, 0x9e22));
  double coef[6];
  for (double& c : coef) c = rng.normal();
  Tensor out({2, H, W});
  const double hy = (static_cast<double>(H) - 1.0) / 2.0;
  const double hx = (static_cast<double>(W) - 1.0) / 2.0;
  for (std::size_t r = 0; r < H; ++r) {
    const double y = (static_cast<double>(r) - hy) / std::max(hy, 1.0);
    for (std::size_t c = 0; c < W; ++c) {
      const double x = (static_cast<double>(c) - hx) / std::max(hx, 1.0);
      const double phase =
          phase_strength * (coef[0] + coef[1] * x + coef[2] * y +
                            coef[3] * x * x + coef[4] * x * y + coef[5] * y * y);
      out.at(0, r, c) = phantom.at(r, c) * std::cos(phase);
      out.at(1, r, c) = phantom.at(r, c) * std::sin(phase);
    }
  }
  return out;
}

Measurements simulate_mri_measurements(const MriOperator& op,
                                       const Tensor& x_true,
                                       double noise_sigma, std::uint64_t seed) {
  if (noise_sigma < 0.0)
    throw Error(ErrorCode::invalid_argument, "noise_sigma must be >= 0");
  Measurements y = mri_forward(op, x_true);
  if (noise_sigma == 0.0) return y;
  Rng rng(mix_seed(seed, 0x9e33));
  const std::size_t n = op.rows * op.cols;
  for (std::size_t c = 0; c < op.n_coils; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      if (op.mask[i] == 0.0) continue;
      y.data[(0 * op.n_coils + c) * n + i] += noise_sigma * rng.normal();
      y.data[(1 * op.n_coils + c) * n + i] += noise_sigma * rng.normal();
    }
  }
  return y;
}

Measurements simulate_ct_measurements(const CtOperator& op,
                                      const Tensor& x_true, double I0,
                                      std::uint64_t seed) {
  for (std::size_t i = 0; i < x_true.numel(); ++i)
    if (x_true[i] < 0.0)
      throw Error(ErrorCode::invalid_argument, "x_true must be non-negative");
  Measurements m = radon_forward(op, x_true);
  if (std::isinf(I0)) return m;  // noiseless sentinel
  if (I0 <= 0.0)
    throw Error(ErrorCode::invalid_argument, "I0 must be positive");

  // Scale line integrals so exponents lie in [0,1]; without it the raw
  // integrals (order tens) drive exp(-x) to zero for any realistic I0.
  double s = 0.0;
  for (std::size_t i = 0; i < m.data.numel(); ++i) s = std::max(s, m.data[i]);
  Rng rng(mix_seed(seed, 0x9e44));
  for (std::size_t i = 0; i < m.data.numel(); ++i) {
    const double lam = s > 0.0 ? I0 * std::exp(-m.data[i] / s) : I0;
    const double counts =
        std::max<double>(1.0, static_cast<double>(rng.poisson(lam)));
    m.data[i] = -s * std::log(counts / I0);
  }
  return m;
}

void add_gaussian_noise(Tensor& data, double sigma, std::uint64_t seed) {
  if (sigma < 0.0)
    throw Error(ErrorCode::invalid_argument, "sigma must be >= 0");
  if (sigma == 0.0) return;
  Rng rng(mix_seed(seed, 0x9e55));
  for (std::size_t i = 0; i < data.numel(); ++i) data[i] += sigma * rng.normal();
}

} // namespace udig
