#include "udig/dip.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "udig/errors.hpp"
#include "udig/figures.hpp"
#include "udig/metrics.hpp"
#include "udig/rng.hpp"

namespace udig {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_measurements(const Measurements& y, const LinearOperator& A) {
  if (!y.operator_id.empty() && !A.id.empty() && y.operator_id != A.id)
    throw Error(ErrorCode::invalid_argument,
                "measurements were taken with operator '" + y.operator_id +
                    "', not '" + A.id + "'");
  if (y.data.shape() != A.data_shape)
    throw Error(ErrorCode::shape_mismatch,
                "measurement shape does not match the operator");
}

void check_config(const DipConfig& cfg) {
  if (cfg.iters < 1)
    throw Error(ErrorCode::invalid_argument, "iters must be >= 1");
  if (cfg.noise_sigma < 0.0)
    throw Error(ErrorCode::invalid_argument, "noise_sigma must be >= 0");
  if (cfg.eval_every < 1)
    throw Error(ErrorCode::invalid_argument, "eval_every must be >= 1");
  if (!(cfg.lr > 0.0))
    throw Error(ErrorCode::invalid_argument, "learning rate must be positive");
  if (cfg.base_width < 1 || cfg.depth < 1)
    throw Error(ErrorCode::invalid_argument, "network size must be positive");
}

ReconTrace run_fixed_input(const Measurements& y, const LinearOperator& A,
                           const Tensor& z, const DipConfig& cfg,
                           const Tensor* x_true) {
  const int channels = static_cast<int>(A.image_shape.at(0));
  UNet net = build_unet({channels, channels, cfg.base_width, cfg.depth, false},
                        detail::net_seed(cfg.seed));
  OptimizerState opt;
  opt.algorithm = cfg.optimizer;
  opt.learning_rate = cfg.lr;

  ReconTrace trace;
  detail::GradientLoop loop{&net, &opt, &A, &y.data, 0.0,
                            cfg.iters, cfg.eval_every, x_true};
  detail::run_gradient_steps(loop, z, 0, cfg.iters, trace);
  trace.final_image = net.apply(z);
  detail::finalize_trace(trace);
  return trace;
}

std::string csv_cell(double v, const char* spec) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

} // namespace

namespace detail {

std::uint64_t net_seed(std::uint64_t run_seed) {
  return mix_seed(run_seed, 0xd1b0);
}

bool run_gradient_steps(GradientLoop& loop, const Tensor& z, int done,
                        int n_steps, ReconTrace& trace) {
  UNet& net = *loop.net;
  const Tensor& y = *loop.y;
  for (int k = 0; k < n_steps; ++k) {
    const int it = done + k + 1;
    net.zero_grads();
    const Tensor out = net.forward(z);
    Tensor pred = loop.A->forward(out);
    double loss = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
      pred[i] -= y[i];
      loss += pred[i] * pred[i];
    }
    Tensor grad = loop.A->adjoint(pred);
    for (std::size_t i = 0; i < grad.numel(); ++i) grad[i] *= 2.0;
    if (loop.lambda > 0.0) {
      for (std::size_t i = 0; i < out.numel(); ++i) {
        const double d = out[i] - z[i];
        loss += loop.lambda * d * d;
        grad[i] += 2.0 * loop.lambda * d;
      }
    }
    if (!std::isfinite(loss)) {
      trace.aborted = true;
      return false;
    }
    if (it == 1 || it % loop.eval_every == 0 || it == loop.total_iters) {
      trace.iterations.push_back(it);
      trace.data_loss.push_back(loss);
      if (loop.x_true) {
        const ImagePairMetrics m = evaluate_reconstruction(out, *loop.x_true);
        trace.psnr_db.push_back(m.psnr_db);
        trace.ssim.push_back(m.ssim);
      } else {
        trace.psnr_db.push_back(kNaN);
        trace.ssim.push_back(kNaN);
      }
    }
    net.backward(grad);
    optimizer_step(*loop.opt, net.params(), net.grads());
  }
  return true;
}

void finalize_trace(ReconTrace& trace) {
  trace.best_psnr_db = kNaN;
  trace.best_iter = -1;
  for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
    const double p = trace.psnr_db[i];
    if (std::isfinite(p) &&
        (trace.best_iter < 0 || p > trace.best_psnr_db)) {
      trace.best_psnr_db = p;
      trace.best_iter = trace.iterations[i];
    }
  }
}

} // namespace detail

LinearOperator wrap_mri(const MriOperator& op) {
  LinearOperator A;
  A.image_shape = {2, op.rows, op.cols};
  A.data_shape = {2, op.n_coils, op.rows, op.cols};
  A.id = op.id;
  A.forward = [op](const Tensor& img) { return mri_forward_data(op, img); };
  A.adjoint = [op](const Tensor& k) { return mri_adjoint_data(op, k); };
  return A;
}

LinearOperator wrap_ct(const CtOperator& op) {
  const std::size_t H = op.rows, W = op.cols;
  LinearOperator A;
  A.image_shape = {1, H, W};
  A.data_shape = {op.angles_deg.size(), op.n_detectors};
  A.id = op.id;
  A.forward = [op, H, W](const Tensor& img) {
    return radon_forward_data(op, Tensor({H, W}, img.values()));
  };
  A.adjoint = [op, H, W](const Tensor& sino) {
    Tensor back = radon_adjoint_data(op, sino);
    return Tensor({1, H, W}, back.values());
  };
  return A;
}

LinearOperator identity_operator(std::vector<std::size_t> image_shape) {
  LinearOperator A;
  A.image_shape = image_shape;
  A.data_shape = image_shape;
  A.id = "identity";
  A.forward = [](const Tensor& x) { return x; };
  A.adjoint = [](const Tensor& x) { return x; };
  return A;
}

ReconTrace dip_reconstruct(const Measurements& y, const LinearOperator& A,
                           const DipConfig& cfg, const Tensor* x_true) {
  check_config(cfg);
  check_measurements(y, A);

  Tensor z;
  switch (cfg.input_mode) {
    case InputMode::random: {
      Rng rng(mix_seed(cfg.seed, 0x21f));
      z = randn(A.image_shape, rng);
      break;
    }
    case InputMode::adjoint:
      z = A.adjoint(y.data);
      break;
    case InputMode::ground_truth_plus_noise: {
      if (!x_true)
        throw Error(ErrorCode::invalid_argument,
                    "ground_truth_plus_noise input requires the true image");
      if (x_true->shape() != A.image_shape)
        throw Error(ErrorCode::shape_mismatch,
                    "true image does not match the operator's image shape");
      z = *x_true;
      if (cfg.noise_sigma > 0.0) {
        Rng rng(mix_seed(cfg.seed, 0x220));
        for (std::size_t i = 0; i < z.numel(); ++i)
          z[i] += cfg.noise_sigma * rng.normal();
      }
      break;
    }
    case InputMode::reference:
      throw Error(ErrorCode::invalid_argument,
                  "input_mode reference: use refg_dip_reconstruct");
  }
  return run_fixed_input(y, A, z, cfg, x_true);
}

ReconTrace refg_dip_reconstruct(const Measurements& y, const LinearOperator& A,
                                const Tensor& reference, const DipConfig& cfg,
                                const Tensor* x_true) {
  check_config(cfg);
  check_measurements(y, A);
  if (reference.shape() != A.image_shape)
    throw Error(ErrorCode::shape_mismatch,
                "reference does not match the operator's image shape");
  return run_fixed_input(y, A, reference, cfg, x_true);
}

SensitivityTable input_sensitivity_experiment(
    const Tensor& x_true, const LinearOperator& A,
    const std::vector<double>& sigmas, const DipConfig& cfg, int n_seeds,
    const std::filesystem::path& out_dir) {
  if (sigmas.empty())
    throw Error(ErrorCode::invalid_argument, "sigma grid is empty");
  for (double s : sigmas)
    if (s < 0.0 || !std::isfinite(s))
      throw Error(ErrorCode::invalid_argument, "sigma grid must be finite, >= 0");
  if (n_seeds < 1)
    throw Error(ErrorCode::invalid_argument, "n_seeds must be >= 1");

  const Measurements y{A.forward(x_true), A.id};

  SensitivityTable table;
  table.sigmas = sigmas;
  for (double sigma : sigmas) {
    double sum = 0.0, sumsq = 0.0;
    for (int j = 0; j < n_seeds; ++j) {
      DipConfig run_cfg = cfg;
      run_cfg.input_mode = InputMode::ground_truth_plus_noise;
      run_cfg.noise_sigma = sigma;
      // seed depends on the repeat only, so noise draws pair across sigmas
      run_cfg.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(j));
      const ReconTrace t = dip_reconstruct(y, A, run_cfg, &x_true);
      sum += t.best_psnr_db;
      sumsq += t.best_psnr_db * t.best_psnr_db;
    }
    const double mean = sum / n_seeds;
    const double var = std::max(0.0, sumsq / n_seeds - mean * mean);
    table.mean_best_psnr_db.push_back(mean);
    table.std_best_psnr_db.push_back(std::sqrt(var));
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_sensitivity_csv(table, out_dir / "sigma_sweep.csv");
    save_curve_svg(out_dir / "sigma_sweep.svg",
                   {{"best PSNR", table.sigmas, table.mean_best_psnr_db}},
                   "input perturbation sigma", "best PSNR (dB)",
                   "Input sensitivity");
  }
  return table;
}

void write_sensitivity_csv(const SensitivityTable& table,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorCode::io_unwritable, "cannot open " + path.string());
  out << "sigma,mean_best_psnr_db,std_best_psnr_db\n";
  for (std::size_t i = 0; i < table.sigmas.size(); ++i)
    out << csv_cell(table.sigmas[i], "%.4f") << ","
        << csv_cell(table.mean_best_psnr_db[i], "%.4f") << ","
        << csv_cell(table.std_best_psnr_db[i], "%.4f") << "\n";
  if (!out)
    throw Error(ErrorCode::io_unwritable, "short write to " + path.string());
}

void write_trace_csv(const ReconTrace& trace,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorCode::io_unwritable, "cannot open " + path.string());
  out << "iteration,psnr_db,ssim,data_loss\n";
  for (std::size_t i = 0; i < trace.iterations.size(); ++i)
    out << trace.iterations[i] << "," << csv_cell(trace.psnr_db[i], "%.4f")
        << "," << csv_cell(trace.ssim[i], "%.6f") << ","
        << csv_cell(trace.data_loss[i], "%.10e") << "\n";
  if (!out)
    throw Error(ErrorCode::io_unwritable, "short write to " + path.string());
}

ReconTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::io_unwritable, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "iteration,psnr_db,ssim,data_loss")
    throw Error(ErrorCode::io_bad_magic,
                "unexpected trace header in " + path.string());
  ReconTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4)
      throw Error(ErrorCode::io_truncated_payload,
                  "malformed trace row in " + path.string());
    trace.iterations.push_back(std::stoi(cells[0]));
    const auto num = [](const std::string& s) {
      return s == "nan" ? kNaN : std::stod(s);
    };
    trace.psnr_db.push_back(num(cells[1]));
    trace.ssim.push_back(num(cells[2]));
    trace.data_loss.push_back(num(cells[3]));
  }
  detail::finalize_trace(trace);
  return trace;
}

} // namespace udig
