#include "udig/udig.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "udig/errors.hpp"
#include "udig/figures.hpp"
#include "udig/rng.hpp"

namespace udig {

namespace {

void check_config(const UdigConfig& cfg) {
  if (cfg.K < 1 || cfg.N < 1)
    throw Error(ErrorCode::invalid_argument, "K and N must be >= 1");
  if (cfg.M < 0)
    throw Error(ErrorCode::invalid_argument, "M must be >= 0");
  if (cfg.lambda < 0.0)
    throw Error(ErrorCode::invalid_argument, "lambda must be >= 0");
  if (!(cfg.lr > 0.0))
    throw Error(ErrorCode::invalid_argument, "learning rate must be positive");
  if (cfg.eval_every < 1)
    throw Error(ErrorCode::invalid_argument, "eval_every must be >= 1");
  if (cfg.base_width < 1 || cfg.depth < 1)
    throw Error(ErrorCode::invalid_argument, "network size must be positive");
}

} // namespace

double udig_loss(const Tensor& f, const Tensor& z, const Measurements& y,
                 const LinearOperator& A, double lambda) {
  if (lambda < 0.0)
    throw Error(ErrorCode::invalid_argument, "lambda must be >= 0");
  f.require_same_shape(z);
  if (f.shape() != A.image_shape)
    throw Error(ErrorCode::shape_mismatch,
                "image does not match the operator's image shape");
  Tensor r = A.forward(f);
  r -= y.data;
  double loss = squared_norm(r);
  if (lambda > 0.0) {
    double auto_term = 0.0;
    for (std::size_t i = 0; i < f.numel(); ++i) {
      const double d = f[i] - z[i];
      auto_term += d * d;
    }
    loss += lambda * auto_term;
  }
  return loss;
}

ReconTrace udig_reconstruct(const Measurements& y, const LinearOperator& A,
                            const UNet& score_net, const NoiseSchedule& schedule,
                            const UdigConfig& cfg, const Tensor* x_true) {
  check_config(cfg);
  if (cfg.M > schedule.T)
    throw Error(ErrorCode::invalid_argument,
                "purification depth exceeds the schedule length");
  const int channels = static_cast<int>(A.image_shape.at(0));
  if (cfg.M > 0 && score_net.arch().in_channels != channels)
    throw Error(ErrorCode::invalid_argument,
                "score model channel count does not match the modality");
  if (!y.operator_id.empty() && !A.id.empty() && y.operator_id != A.id)
    throw Error(ErrorCode::invalid_argument,
                "measurements were taken with operator '" + y.operator_id +
                    "', not '" + A.id + "'");
  if (y.data.shape() != A.data_shape)
    throw Error(ErrorCode::shape_mismatch,
                "measurement shape does not match the operator");

  UNet net = build_unet({channels, channels, cfg.base_width, cfg.depth, false},
                        detail::net_seed(cfg.seed));
  OptimizerState opt;
  opt.algorithm = cfg.optimizer;
  opt.learning_rate = cfg.lr;

  PurifierConfig pcfg;
  pcfg.M = cfg.M;
  pcfg.add_final_noise = false;
  // engaged clip snaps to the training range of the image's kind inside
  // purify_in_training_range
  if (cfg.purify_clip) pcfg.clip_range = {{0.0, 0.0}};

  Tensor z = A.adjoint(y.data);

  ReconTrace trace;
  detail::GradientLoop loop{&net, &opt, &A, &y.data, cfg.lambda,
                            cfg.N * cfg.K, cfg.eval_every, x_true};
  for (int k = 0; k < cfg.K; ++k) {
    if (!detail::run_gradient_steps(loop, z, k * cfg.N, cfg.N, trace)) break;
    z = purify_in_training_range(net.apply(z), pcfg, score_net, schedule,
                                 mix_seed(cfg.seed, 0xDD00 + static_cast<std::uint64_t>(k)));
  }
  trace.final_image = net.apply(z);
  detail::finalize_trace(trace);
  return trace;
}

OverfittingCurves overfitting_curve(const std::vector<MethodRunner>& methods,
                                    const std::vector<ScanCase>& scans,
                                    const std::filesystem::path& out_dir) {
  if (methods.empty() || scans.empty())
    throw Error(ErrorCode::invalid_argument,
                "overfitting curves need at least one method and one scan");
  OverfittingCurves curves;
  for (const auto& method : methods) {
    std::vector<double> mean;
    for (std::size_t s = 0; s < scans.size(); ++s) {
      const ReconTrace t = method.run(scans[s]);
      if (curves.iterations.empty()) curves.iterations = t.iterations;
      if (t.iterations != curves.iterations)
        throw Error(ErrorCode::invalid_argument,
                    "method '" + method.name +
                        "' traced a different iteration grid");
      if (mean.empty()) mean.assign(curves.iterations.size(), 0.0);
      for (std::size_t i = 0; i < mean.size(); ++i)
        mean[i] += t.psnr_db[i] / static_cast<double>(scans.size());
    }
    std::size_t arg = 0;
    for (std::size_t i = 1; i < mean.size(); ++i)
      if (mean[i] > mean[arg]) arg = i;
    curves.methods.push_back(method.name);
    curves.mean_psnr_db.push_back(std::move(mean));
    curves.peak_iteration.push_back(curves.iterations[arg]);
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir / "overfitting.csv", std::ios::binary);
    if (!out)
      throw Error(ErrorCode::io_unwritable, "cannot open overfitting.csv");
    out << "iteration";
    for (const auto& m : curves.methods) out << "," << m;
    out << "\n";
    for (std::size_t i = 0; i < curves.iterations.size(); ++i) {
      out << curves.iterations[i];
      for (const auto& curve : curves.mean_psnr_db) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", curve[i]);
        out << "," << buf;
      }
      out << "\n";
    }
    std::vector<CurveSeries> series;
    std::vector<double> xs(curves.iterations.begin(), curves.iterations.end());
    for (std::size_t m = 0; m < curves.methods.size(); ++m)
      series.push_back({curves.methods[m], xs, curves.mean_psnr_db[m]});
    save_curve_svg(out_dir / "overfitting.svg", series, "overall iteration",
                   "mean PSNR (dB)", "PSNR vs iteration");
  }
  return curves;
}

nlohmann::json udig_config_to_json(const UdigConfig& cfg) {
  return {{"K", cfg.K},
          {"N", cfg.N},
          {"M", cfg.M},
          {"lambda", cfg.lambda},
          {"lr", cfg.lr},
          {"optimizer", cfg.optimizer == OptAlgorithm::adam ? "adam" : "sgd"},
          {"seed", cfg.seed},
          {"eval_every", cfg.eval_every},
          {"base_width", cfg.base_width},
          {"depth", cfg.depth},
          {"purify_clip", cfg.purify_clip}};
}

UdigConfig udig_config_from_json(const nlohmann::json& j) {
  UdigConfig cfg;
  cfg.K = j.value("K", cfg.K);
  cfg.N = j.value("N", cfg.N);
  cfg.M = j.value("M", cfg.M);
  cfg.lambda = j.value("lambda", cfg.lambda);
  cfg.lr = j.value("lr", cfg.lr);
  if (j.contains("optimizer")) {
    const std::string name = j.at("optimizer");
    if (name == "adam") cfg.optimizer = OptAlgorithm::adam;
    else if (name == "sgd") cfg.optimizer = OptAlgorithm::sgd;
    else throw Error(ErrorCode::config_error, "unknown optimizer: " + name);
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.eval_every = j.value("eval_every", cfg.eval_every);
  cfg.base_width = j.value("base_width", cfg.base_width);
  cfg.depth = j.value("depth", cfg.depth);
  cfg.purify_clip = j.value("purify_clip", cfg.purify_clip);
  return cfg;
}

nlohmann::json dip_config_to_json(const DipConfig& cfg) {
  const char* mode = "adjoint";
  switch (cfg.input_mode) {
    case InputMode::random: mode = "random"; break;
    case InputMode::adjoint: mode = "adjoint"; break;
    case InputMode::reference: mode = "reference"; break;
    case InputMode::ground_truth_plus_noise: mode = "ground_truth_plus_noise"; break;
  }
  return {{"iters", cfg.iters},
          {"lr", cfg.lr},
          {"optimizer", cfg.optimizer == OptAlgorithm::adam ? "adam" : "sgd"},
          {"input_mode", mode},
          {"noise_sigma", cfg.noise_sigma},
          {"seed", cfg.seed},
          {"eval_every", cfg.eval_every},
          {"base_width", cfg.base_width},
          {"depth", cfg.depth}};
}

DipConfig dip_config_from_json(const nlohmann::json& j) {
  DipConfig cfg;
  cfg.iters = j.value("iters", cfg.iters);
  cfg.lr = j.value("lr", cfg.lr);
  if (j.contains("optimizer")) {
    const std::string name = j.at("optimizer");
    if (name == "adam") cfg.optimizer = OptAlgorithm::adam;
    else if (name == "sgd") cfg.optimizer = OptAlgorithm::sgd;
    else throw Error(ErrorCode::config_error, "unknown optimizer: " + name);
  }
  if (j.contains("input_mode")) {
    const std::string mode = j.at("input_mode");
    if (mode == "random") cfg.input_mode = InputMode::random;
    else if (mode == "adjoint") cfg.input_mode = InputMode::adjoint;
    else if (mode == "reference") cfg.input_mode = InputMode::reference;
    else if (mode == "ground_truth_plus_noise")
      cfg.input_mode = InputMode::ground_truth_plus_noise;
    else throw Error(ErrorCode::config_error, "unknown input_mode: " + mode);
  }
  cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.eval_every = j.value("eval_every", cfg.eval_every);
  cfg.base_width = j.value("base_width", cfg.base_width);
  cfg.depth = j.value("depth", cfg.depth);
  return cfg;
}

} // namespace udig
