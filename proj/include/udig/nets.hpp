#ifndef UDIG_NETS_HPP
#define UDIG_NETS_HPP

#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "udig/tensor.hpp"

namespace udig {

struct ArchSpec {
  int in_channels = 1;
  int out_channels = 1;
  int base_width = 16;
  int depth = 3;
  bool time_conditioned = false;
};

nlohmann::json arch_to_json(const ArchSpec& spec);
ArchSpec arch_from_json(const nlohmann::json& j);

namespace detail {

struct Conv2d {
  int in_ch = 0, out_ch = 0, ksize = 3, pad = 1;
  std::size_t w_off = 0, b_off = 0;
};

struct ConvBlock {
  Conv2d conv1, conv2;
  // per-channel bias from the timestep embedding, applied after conv1
  std::size_t tw_off = 0, tb_off = 0;
  bool has_time = false;
};

struct BlockCache {
  Tensor in, a1, z1, a2;
};

struct Cache {
  std::vector<BlockCache> enc;
  std::vector<Tensor> pooled;
  BlockCache bottom;
  std::vector<Tensor> up_in, up_sampled, up_a;
  std::vector<BlockCache> dec;
  Tensor head_in;
  std::vector<double> emb;
};

} // namespace detail

// Encoder-decoder network with skip connections, hand-written forward and
// reverse passes over a flat parameter vector. Channel width at level l is
// base_width * 2^l; spatial sides must be divisible by 2^depth. With
// time_conditioned set, a sinusoidal timestep embedding feeds a learned
// per-channel bias in every block.
class UNet {
public:
  UNet(const ArchSpec& spec, std::uint64_t seed);

  const ArchSpec& arch() const { return spec_; }
  std::size_t param_count() const { return params_.size(); }

  // Deterministic inference; leaves no training state behind.
  Tensor apply(const Tensor& x, int timestep = 0) const;

  // Training path: forward caches activations for the following backward.
  Tensor forward(const Tensor& x, int timestep = 0);
  // Propagates d(loss)/d(output); accumulates parameter gradients and
  // returns d(loss)/d(input).
  Tensor backward(const Tensor& grad_out);

  AlignedDoubles& params() { return params_; }
  const AlignedDoubles& params() const { return params_; }
  AlignedDoubles& grads() { return grads_; }
  void zero_grads();

  nlohmann::json arch_json() const;

private:
  Tensor run_forward(const Tensor& x, int timestep, detail::Cache& cache) const;
  Tensor run_backward(const detail::Cache& cache, const Tensor& grad_out);
  void check_input(const Tensor& x) const;

  ArchSpec spec_;
  AlignedDoubles params_;
  AlignedDoubles grads_;
  std::vector<detail::ConvBlock> enc_;
  detail::ConvBlock bottom_;
  std::vector<detail::Conv2d> up_convs_;   // indexed by level
  std::vector<detail::ConvBlock> dec_;     // indexed by level
  detail::Conv2d head_;
  detail::Cache cache_;
  bool cache_valid_ = false;
};

UNet build_unet(ArchSpec spec, std::uint64_t seed);
UNet build_score_net(ArchSpec spec, std::uint64_t seed);

// Scalar loss of the network output together with its gradient.
struct LossValueGrad {
  double value;
  Tensor grad;
};
using OutputLoss = std::function<LossValueGrad(const Tensor&)>;

// Fills net.grads() with d(loss)/d(params) for loss(net(input, timestep)).
// Throws on a non-finite loss value.
double loss_gradient(UNet& net, const Tensor& input, int timestep,
                     const OutputLoss& loss);

enum class OptAlgorithm { sgd, adam };

struct OptimizerState {
  OptAlgorithm algorithm = OptAlgorithm::adam;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  AlignedDoubles m, v;  // adam moments, sized on first step
  long step = 0;
};

void optimizer_step(OptimizerState& state, AlignedDoubles& params,
                    const AlignedDoubles& grads);

// Checkpoint = flat float32 ArrayContainer + "<path>.arch.json" sidecar.
void save_network(const std::filesystem::path& path, const UNet& net,
                  const nlohmann::json& extra_sidecar = {});
UNet load_network(const std::filesystem::path& path);
nlohmann::json load_network_sidecar(const std::filesystem::path& path);

} // namespace udig

#endif // UDIG_NETS_HPP
