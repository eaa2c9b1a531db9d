#include "udig/diffusion.hpp"

#include <cmath>

#include "udig/rng.hpp"

namespace udig {

double NoiseSchedule::beta(int i) const {
  if (i < 1 || i > T)
    throw Error(ErrorCode::invalid_argument,
                "schedule step " + std::to_string(i) + " outside 1.." +
                    std::to_string(T));
  return betas[static_cast<std::size_t>(i) - 1];
}

double NoiseSchedule::alpha_bar(int i) const {
  if (i == 0) return 1.0;
  if (i < 0 || i > T)
    throw Error(ErrorCode::invalid_argument,
                "schedule step " + std::to_string(i) + " outside 0.." +
                    std::to_string(T));
  return alpha_bars[static_cast<std::size_t>(i) - 1];
}

nlohmann::json NoiseSchedule::to_json() const {
  return {{"T", T}, {"beta_min", beta_min}, {"beta_max", beta_max}, {"kind", kind}};
}

NoiseSchedule make_schedule(int T, double beta_min, double beta_max,
                            const std::string& kind) {
  if (kind != "linear")
    throw Error(ErrorCode::invalid_argument, "unknown schedule kind: " + kind);
  if (T < 1 || beta_min <= 0.0 || beta_min > beta_max || beta_max >= 1.0)
    throw Error(ErrorCode::invalid_argument,
                "schedule needs T >= 1 and 0 < beta_min <= beta_max < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  s.kind = kind;
  s.betas.resize(T);
  s.alpha_bars.resize(T);
  double abar = 1.0;
  for (int i = 0; i < T; ++i) {
    s.betas[i] = (T == 1) ? beta_min
                          : beta_min + (beta_max - beta_min) * i / (T - 1.0);
    abar *= 1.0 - s.betas[i];
    s.alpha_bars[i] = abar;
  }
  return s;
}

NoiseSchedule schedule_from_json(const nlohmann::json& j) {
  return make_schedule(j.at("T").get<int>(), j.at("beta_min").get<double>(),
                       j.at("beta_max").get<double>(),
                       j.value("kind", "linear"));
}

Tensor forward_perturb_with(const Tensor& x, int M, const NoiseSchedule& sched,
                            const Tensor& noise) {
  if (M < 0 || M > sched.T)
    throw Error(ErrorCode::invalid_argument, "perturbation step M outside 0..T");
  if (M == 0) return x;
  x.require_same_shape(noise);
  const double abar = sched.alpha_bar(M);
  const double a = std::sqrt(abar), b = std::sqrt(1.0 - abar);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = a * x[i] + b * noise[i];
  return out;
}

Tensor forward_perturb(const Tensor& x, int M, const NoiseSchedule& sched,
                       std::uint64_t noise_seed) {
  if (M < 0 || M > sched.T)
    throw Error(ErrorCode::invalid_argument, "perturbation step M outside 0..T");
  if (M == 0) return x;
  Rng rng(noise_seed);
  return forward_perturb_with(x, M, sched, randn(x.shape(), rng));
}

Tensor reverse_step(const Tensor& x_i, int i, const UNet& score_net,
                    const NoiseSchedule& sched, std::uint64_t noise_seed,
                    bool add_noise) {
  const double beta = sched.beta(i);
  if (beta == 0.0) return x_i; // zero-step limit
  const double abar = sched.alpha_bar(i);
  const Tensor eps_pred = score_net.apply(x_i, i);
  const double score_scale = -1.0 / std::sqrt(1.0 - abar);
  const double inv = 1.0 / std::sqrt(1.0 - beta);
  Tensor out(x_i.shape());
  for (std::size_t k = 0; k < x_i.numel(); ++k)
    out[k] = inv * (x_i[k] + beta * score_scale * eps_pred[k]);
  if (add_noise) {
    Rng rng(noise_seed);
    const double s = std::sqrt(beta);
    for (std::size_t k = 0; k < out.numel(); ++k) out[k] += s * rng.normal();
  }
  return out;
}

Tensor diffusion_purify(const Tensor& x, const PurifierConfig& cfg,
                        const UNet& score_net, const NoiseSchedule& sched,
                        std::uint64_t seed) {
  if (cfg.M < 0 || cfg.M > sched.T)
    throw Error(ErrorCode::invalid_argument, "purifier depth M outside 0..T");
  if (cfg.M == 0) return x;

  Tensor cur = forward_perturb(x, cfg.M, sched, mix_seed(seed, 0xd1f0));
  for (int i = cfg.M; i >= 1; --i) {
    const bool noise = (i > 1) || cfg.add_final_noise;
    cur = reverse_step(cur, i, score_net, sched,
                       mix_seed(seed, 0xd200 + static_cast<std::uint64_t>(i)),
                       noise);
  }
  if (cfg.clip_range) {
    const double lo = (*cfg.clip_range)[0], hi = (*cfg.clip_range)[1];
    for (std::size_t k = 0; k < cur.numel(); ++k)
      cur[k] = std::min(hi, std::max(lo, cur[k]));
  }
  return cur;
}

namespace {

// mapped = (x - shift) / scale; scale == 0 flags a constant/degenerate image.
struct RangeMap {
  double scale = 0.0;
  double shift = 0.0;
  std::array<double, 2> range{{0.0, 1.0}};
};

RangeMap training_range_map(const Tensor& image) {
  RangeMap m;
  if (image.ndim() == 3 && image.shape()[0] == 2) {
    const std::size_t n = image.numel() / 2;
    double peak2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double re = image[i], im = image[n + i];
      peak2 = std::max(peak2, re * re + im * im);
    }
    if (peak2 > 0.0) m.scale = std::sqrt(peak2);
    m.range = {{-1.0, 1.0}};
  } else {
    double lo = image[0], hi = image[0];
    for (std::size_t i = 1; i < image.numel(); ++i) {
      lo = std::min(lo, image[i]);
      hi = std::max(hi, image[i]);
    }
    if (hi > lo) {
      m.scale = hi - lo;
      m.shift = lo;
    }
  }
  return m;
}

} // namespace

Tensor to_score_training_range(const Tensor& image) {
  const RangeMap m = training_range_map(image);
  Tensor out = image;
  if (m.scale == 0.0) {
    out.fill(0.0);
    return out;
  }
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = (out[i] - m.shift) / m.scale;
  return out;
}

Tensor purify_in_training_range(const Tensor& image, PurifierConfig cfg,
                                const UNet& score_net,
                                const NoiseSchedule& sched,
                                std::uint64_t seed) {
  if (cfg.M == 0) return image;
  const RangeMap m = training_range_map(image);
  if (m.scale == 0.0) return image;  // constant image, nothing to refine
  if (cfg.clip_range) cfg.clip_range = m.range;
  Tensor g = image;
  for (std::size_t i = 0; i < g.numel(); ++i) g[i] = (g[i] - m.shift) / m.scale;
  g = diffusion_purify(g, cfg, score_net, sched, seed);
  for (std::size_t i = 0; i < g.numel(); ++i) g[i] = g[i] * m.scale + m.shift;
  return g;
}

ScoreTrainResult train_score_model(const std::vector<Tensor>& dataset,
                                   const NoiseSchedule& sched,
                                   const ArchSpec& arch,
                                   const ScoreTrainConfig& cfg) {
  if (dataset.empty())
    throw Error(ErrorCode::invalid_argument, "score training needs a non-empty dataset");
  if (cfg.epochs < 1 || cfg.batch < 1 || cfg.lr <= 0.0)
    throw Error(ErrorCode::invalid_argument, "invalid score training config");

  UNet net = build_score_net(arch, mix_seed(cfg.seed, 0x5c0e));
  OptimizerState opt;
  opt.learning_rate = cfg.lr;
  Rng rng(mix_seed(cfg.seed, 0x5c0f));

  const std::size_t n = dataset.size();
  const int steps_per_epoch =
      static_cast<int>((n + static_cast<std::size_t>(cfg.batch) - 1) /
                       static_cast<std::size_t>(cfg.batch));
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(cfg.epochs) * steps_per_epoch);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int step = 0; step < steps_per_epoch; ++step) {
      net.zero_grads();
      double batch_loss = 0.0;
      for (int b = 0; b < cfg.batch; ++b) {
        const Tensor& x = dataset[rng.uniform_index(n)];
        const int i = 1 + static_cast<int>(rng.uniform_index(
                              static_cast<std::size_t>(sched.T)));
        const Tensor noise = randn(x.shape(), rng);
        const Tensor x_i = forward_perturb_with(x, i, sched, noise);
        const Tensor pred = net.forward(x_i, i);
        const double inv_n = 1.0 / static_cast<double>(pred.numel());
        Tensor grad(pred.shape());
        double loss = 0.0;
        for (std::size_t k = 0; k < pred.numel(); ++k) {
          const double d = pred[k] - noise[k];
          loss += d * d * inv_n;
          grad[k] = 2.0 * d * inv_n / cfg.batch;
        }
        if (!std::isfinite(loss))
          throw Error(ErrorCode::non_finite_loss, "score training loss diverged");
        batch_loss += loss / cfg.batch;
        net.backward(grad); // grads accumulate across the batch
      }
      optimizer_step(opt, net.params(), net.grads());
      trace.push_back(batch_loss);
    }
  }
  return {std::move(net), std::move(trace)};
}

} // namespace udig
