#ifndef UDIG_DIFFUSION_HPP
#define UDIG_DIFFUSION_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "udig/nets.hpp"
#include "udig/tensor.hpp"

namespace udig {

// Discrete noising schedule. One-based step indices: beta(i) and alpha_bar(i)
// are defined for i in 1..T, and alpha_bar(0) == 1 identically.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alpha_bars;
  double beta_min = 0;
  double beta_max = 0;
  std::string kind = "linear";

  double beta(int i) const;
  double alpha_bar(int i) const;
  nlohmann::json to_json() const;
};

NoiseSchedule make_schedule(int T, double beta_min, double beta_max,
                            const std::string& kind = "linear");
NoiseSchedule schedule_from_json(const nlohmann::json& j);

struct PurifierConfig {
  int M = 0;
  bool add_final_noise = false;
  std::optional<std::array<double, 2>> clip_range;
};

// x_M = sqrt(abar_M) x + sqrt(1 - abar_M) eps, with the given noise image.
Tensor forward_perturb_with(const Tensor& x, int M, const NoiseSchedule& sched,
                            const Tensor& noise);
// Same, eps drawn from the seeded stream. M = 0 returns x unchanged.
Tensor forward_perturb(const Tensor& x, int M, const NoiseSchedule& sched,
                       std::uint64_t noise_seed);

// One ancestral denoising step i -> i-1:
//   x_{i-1} = (x_i + beta_i s(x_i, i)) / sqrt(1 - beta_i) + sqrt(beta_i) eps_i
// where the score comes from the trained noise predictor,
// s(x, i) = -predict(x, i) / sqrt(1 - abar_i). eps_i is omitted when
// add_noise is false; purification always omits it at i == 1.
Tensor reverse_step(const Tensor& x_i, int i, const UNet& score_net,
                    const NoiseSchedule& sched, std::uint64_t noise_seed,
                    bool add_noise = true);

// Perturb to step M, then run M reverse steps back to 0; optional clipping.
// M = 0 is the exact identity.
Tensor diffusion_purify(const Tensor& x, const PurifierConfig& cfg,
                        const UNet& score_net, const NoiseSchedule& sched,
                        std::uint64_t seed);

// Map an image into the range score models are trained on. Single-channel
// images go through a min/max map onto [0, 1]; two-channel (complex pair)
// images are divided by their peak magnitude, which keeps zero and phase
// intact and puts both channels inside [-1, 1]. Constant (or all-zero) images
// come back as zeros.
Tensor to_score_training_range(const Tensor& image);

// diffusion_purify with the image affinely mapped into the training range
// first and back after, using the same conventions as
// to_score_training_range with parameters taken from the image itself. An
// engaged clip_range is snapped to the training range of the image's kind.
// M = 0 and constant images are returned untouched.
Tensor purify_in_training_range(const Tensor& image, PurifierConfig cfg,
                                const UNet& score_net,
                                const NoiseSchedule& sched, std::uint64_t seed);

struct ScoreTrainConfig {
  int epochs = 1;
  int batch = 4;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct ScoreTrainResult {
  UNet net;
  std::vector<double> loss_trace;  // one mean loss per optimization step
};

// Standard noise-prediction training: minimize
//   E || eps - predict(sqrt(abar_i) x + sqrt(1-abar_i) eps, i) ||^2
// over uniform i in 1..T and dataset images.
ScoreTrainResult train_score_model(const std::vector<Tensor>& dataset,
                                   const NoiseSchedule& sched,
                                   const ArchSpec& arch,
                                   const ScoreTrainConfig& cfg);

} // namespace udig

#endif // UDIG_DIFFUSION_HPP
