#ifndef UDIG_UDIG_HPP
#define UDIG_UDIG_HPP

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "udig/diffusion.hpp"
#include "udig/dip.hpp"

namespace udig {

struct UdigConfig {
  int K = 2000;        // outer iterations
  int N = 2;           // gradient updates per outer iteration
  int M = 150;         // purification depth
  double lambda = 1.0; // autoencoding weight
  double lr = 1e-4;
  OptAlgorithm optimizer = OptAlgorithm::adam;
  std::uint64_t seed = 0;
  int eval_every = 50; // in overall iterations 1..N*K
  int base_width = 16;
  int depth = 3;
  // clip purified images to the score model's training range
  bool purify_clip = true;
};

nlohmann::json udig_config_to_json(const UdigConfig& cfg);
UdigConfig udig_config_from_json(const nlohmann::json& j);

nlohmann::json dip_config_to_json(const DipConfig& cfg);
DipConfig dip_config_from_json(const nlohmann::json& j);

// Data-consistency plus weighted autoencoding residual, both squared l2.
double udig_loss(const Tensor& f, const Tensor& z, const Measurements& y,
                 const LinearOperator& A, double lambda);

// Alternates N gradient updates of the network (input fixed) with a
// purification refresh of the input, K times; the trace covers all N*K
// updates on the shared evaluation grid.
ReconTrace udig_reconstruct(const Measurements& y, const LinearOperator& A,
                            const UNet& score_net, const NoiseSchedule& schedule,
                            const UdigConfig& cfg, const Tensor* x_true = nullptr);

struct ScanCase {
  Tensor x_true;
  Measurements y;
  LinearOperator A;
};

struct MethodRunner {
  std::string name;
  std::function<ReconTrace(const ScanCase&)> run;
};

struct OverfittingCurves {
  std::vector<int> iterations;                   // shared evaluation grid
  std::vector<std::string> methods;
  std::vector<std::vector<double>> mean_psnr_db; // [method][grid point]
  std::vector<int> peak_iteration;               // argmax of each mean curve
};

// Averages each method's PSNR trace over the scans; all traces must share
// one evaluation grid. A non-empty out_dir receives overfitting.csv and
// overfitting.svg.
OverfittingCurves overfitting_curve(const std::vector<MethodRunner>& methods,
                                    const std::vector<ScanCase>& scans,
                                    const std::filesystem::path& out_dir = {});

} // namespace udig

#endif // UDIG_UDIG_HPP
