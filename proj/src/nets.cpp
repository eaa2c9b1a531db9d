#include "udig/nets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/Dense>

#include "udig/persistence.hpp"

namespace udig {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using detail::BlockCache;
using detail::Conv2d;
using detail::ConvBlock;

constexpr int kTimeEmbedDim = 32;

std::size_t alloc(AlignedDoubles& v, std::size_t n) {
  const std::size_t off = v.size();
  v.resize(off + n, 0.0);
  return off;
}

inline double silu(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return x * s;
}

inline double dsilu(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

Tensor silu_map(const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = silu(a[i]);
  return out;
}

Tensor dsilu_mul(const Tensor& pre_act, const Tensor& grad) {
  Tensor out(grad.shape());
  for (std::size_t i = 0; i < grad.numel(); ++i)
    out[i] = grad[i] * dsilu(pre_act[i]);
  return out;
}

std::vector<double> time_embedding(int t) {
  const int half = kTimeEmbedDim / 2;
  std::vector<double> e(kTimeEmbedDim);
  for (int k = 0; k < half; ++k) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(k) / (half - 1));
    e[k] = std::sin(t * freq);
    e[half + k] = std::cos(t * freq);
  }
  return e;
}

// im2col for 3x3/pad-1 (or kxk/pad) convs: column j holds the receptive
// field of output pixel j, rows ordered as (in_ch, ky, kx).
void im2col(const Tensor& x, int ksize, int pad, Eigen::MatrixXd& col) {
  const int C = static_cast<int>(x.dim(0));
  const int H = static_cast<int>(x.dim(1));
  const int W = static_cast<int>(x.dim(2));
  const int N = H * W;
  col.resize(C * ksize * ksize, N);
  for (int y = 0; y < H; ++y) {
    for (int xp = 0; xp < W; ++xp) {
      const int j = y * W + xp;
      double* cptr = col.data() + static_cast<std::size_t>(j) * col.rows();
      for (int ic = 0; ic < C; ++ic) {
        const double* xc = x.data() + static_cast<std::size_t>(ic) * N;
        for (int ky = 0; ky < ksize; ++ky) {
          const int sy = y + ky - pad;
          for (int kx = 0; kx < ksize; ++kx) {
            const int sx = xp + kx - pad;
            *cptr++ = (sy >= 0 && sy < H && sx >= 0 && sx < W)
                          ? xc[sy * W + sx]
                          : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const Eigen::MatrixXd& col, int ksize, int pad, Tensor& gx) {
  const int C = static_cast<int>(gx.dim(0));
  const int H = static_cast<int>(gx.dim(1));
  const int W = static_cast<int>(gx.dim(2));
  const int N = H * W;
  for (int y = 0; y < H; ++y) {
    for (int xp = 0; xp < W; ++xp) {
      const int j = y * W + xp;
      const double* cptr = col.data() + static_cast<std::size_t>(j) * col.rows();
      for (int ic = 0; ic < C; ++ic) {
        double* gc = gx.data() + static_cast<std::size_t>(ic) * N;
        for (int ky = 0; ky < ksize; ++ky) {
          const int sy = y + ky - pad;
          for (int kx = 0; kx < ksize; ++kx) {
            const int sx = xp + kx - pad;
            if (sy >= 0 && sy < H && sx >= 0 && sx < W) gc[sy * W + sx] += *cptr;
            ++cptr;
          }
        }
      }
    }
  }
}

Tensor conv_forward(const Conv2d& conv, const AlignedDoubles& params,
                    const Tensor& x) {
  const int H = static_cast<int>(x.dim(1));
  const int W = static_cast<int>(x.dim(2));
  const int N = H * W;
  const int K = conv.in_ch * conv.ksize * conv.ksize;
  Tensor out({static_cast<std::size_t>(conv.out_ch), x.dim(1), x.dim(2)});
  Eigen::Map<const RowMat> Wm(params.data() + conv.w_off, conv.out_ch, K);
  Eigen::Map<RowMat> Om(out.data(), conv.out_ch, N);
  if (conv.ksize == 1) {
    Eigen::Map<const RowMat> Xm(x.data(), conv.in_ch, N);
    Om.noalias() = Wm * Xm;
  } else {
    Eigen::MatrixXd col;
    im2col(x, conv.ksize, conv.pad, col);
    Om.noalias() = Wm * col;
  }
  const double* b = params.data() + conv.b_off;
  for (int o = 0; o < conv.out_ch; ++o) Om.row(o).array() += b[o];
  return out;
}

Tensor conv_backward(const Conv2d& conv, const AlignedDoubles& params,
                     AlignedDoubles& grads, const Tensor& x,
                     const Tensor& grad_out) {
  const int H = static_cast<int>(x.dim(1));
  const int W = static_cast<int>(x.dim(2));
  const int N = H * W;
  const int K = conv.in_ch * conv.ksize * conv.ksize;
  Eigen::Map<const RowMat> Wm(params.data() + conv.w_off, conv.out_ch, K);
  Eigen::Map<const RowMat> G(grad_out.data(), conv.out_ch, N);
  Eigen::Map<RowMat> gW(grads.data() + conv.w_off, conv.out_ch, K);
  double* gb = grads.data() + conv.b_off;
  for (int o = 0; o < conv.out_ch; ++o) gb[o] += G.row(o).sum();

  Tensor gx(x.shape());
  if (conv.ksize == 1) {
    Eigen::Map<const RowMat> Xm(x.data(), conv.in_ch, N);
    gW.noalias() += G * Xm.transpose();
    Eigen::Map<RowMat> gXm(gx.data(), conv.in_ch, N);
    gXm.noalias() = Wm.transpose() * G;
  } else {
    Eigen::MatrixXd col;
    im2col(x, conv.ksize, conv.pad, col);
    gW.noalias() += G * col.transpose();
    Eigen::MatrixXd gcol = Wm.transpose() * G;
    col2im_add(gcol, conv.ksize, conv.pad, gx);
  }
  return gx;
}

Tensor avgpool2(const Tensor& x) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor out({C, H / 2, W / 2});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < H / 2; ++r)
      for (std::size_t q = 0; q < W / 2; ++q)
        out.at(c, r, q) = 0.25 * (x.at(c, 2 * r, 2 * q) + x.at(c, 2 * r, 2 * q + 1) +
                                  x.at(c, 2 * r + 1, 2 * q) +
                                  x.at(c, 2 * r + 1, 2 * q + 1));
  return out;
}

Tensor avgpool2_backward(const Tensor& g, std::size_t H, std::size_t W) {
  const std::size_t C = g.dim(0);
  Tensor out({C, H, W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < H / 2; ++r)
      for (std::size_t q = 0; q < W / 2; ++q) {
        const double v = 0.25 * g.at(c, r, q);
        out.at(c, 2 * r, 2 * q) = v;
        out.at(c, 2 * r, 2 * q + 1) = v;
        out.at(c, 2 * r + 1, 2 * q) = v;
        out.at(c, 2 * r + 1, 2 * q + 1) = v;
      }
  return out;
}

Tensor upsample2(const Tensor& x) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor out({C, 2 * H, 2 * W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t q = 0; q < W; ++q) {
        const double v = x.at(c, r, q);
        out.at(c, 2 * r, 2 * q) = v;
        out.at(c, 2 * r, 2 * q + 1) = v;
        out.at(c, 2 * r + 1, 2 * q) = v;
        out.at(c, 2 * r + 1, 2 * q + 1) = v;
      }
  return out;
}

Tensor upsample2_backward(const Tensor& g) {
  const std::size_t C = g.dim(0), H = g.dim(1) / 2, W = g.dim(2) / 2;
  Tensor out({C, H, W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t q = 0; q < W; ++q)
        out.at(c, r, q) = g.at(c, 2 * r, 2 * q) + g.at(c, 2 * r, 2 * q + 1) +
                          g.at(c, 2 * r + 1, 2 * q) + g.at(c, 2 * r + 1, 2 * q + 1);
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data(), a.data() + a.numel(), out.data());
  std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& g, std::size_t c_first) {
  Tensor a({c_first, g.dim(1), g.dim(2)});
  Tensor b({g.dim(0) - c_first, g.dim(1), g.dim(2)});
  std::copy(g.data(), g.data() + a.numel(), a.data());
  std::copy(g.data() + a.numel(), g.data() + g.numel(), b.data());
  return {std::move(a), std::move(b)};
}

void add_time_bias(const ConvBlock& blk, const AlignedDoubles& params,
                   const std::vector<double>& emb, Tensor& a) {
  const std::size_t C = a.dim(0), N = a.dim(1) * a.dim(2);
  for (std::size_t c = 0; c < C; ++c) {
    const double* w = params.data() + blk.tw_off + c * kTimeEmbedDim;
    double bias = params[blk.tb_off + c];
    for (int k = 0; k < kTimeEmbedDim; ++k) bias += w[k] * emb[k];
    double* ap = a.data() + c * N;
    for (std::size_t i = 0; i < N; ++i) ap[i] += bias;
  }
}

void time_bias_backward(const ConvBlock& blk, AlignedDoubles& grads,
                        const std::vector<double>& emb, const Tensor& g) {
  const std::size_t C = g.dim(0), N = g.dim(1) * g.dim(2);
  for (std::size_t c = 0; c < C; ++c) {
    const double* gp = g.data() + c * N;
    double gsum = 0.0;
    for (std::size_t i = 0; i < N; ++i) gsum += gp[i];
    grads[blk.tb_off + c] += gsum;
    double* gw = grads.data() + blk.tw_off + c * kTimeEmbedDim;
    for (int k = 0; k < kTimeEmbedDim; ++k) gw[k] += gsum * emb[k];
  }
}

Tensor block_forward(const ConvBlock& blk, const AlignedDoubles& params,
                     const Tensor& x, const std::vector<double>& emb,
                     BlockCache& cache) {
  cache.in = x;
  cache.a1 = conv_forward(blk.conv1, params, x);
  if (blk.has_time) add_time_bias(blk, params, emb, cache.a1);
  cache.z1 = silu_map(cache.a1);
  cache.a2 = conv_forward(blk.conv2, params, cache.z1);
  return silu_map(cache.a2);
}

Tensor block_backward(const ConvBlock& blk, const AlignedDoubles& params,
                      AlignedDoubles& grads, const BlockCache& cache,
                      const std::vector<double>& emb, const Tensor& grad_out) {
  const Tensor g_a2 = dsilu_mul(cache.a2, grad_out);
  const Tensor g_z1 = conv_backward(blk.conv2, params, grads, cache.z1, g_a2);
  const Tensor g_a1 = dsilu_mul(cache.a1, g_z1);
  if (blk.has_time) time_bias_backward(blk, grads, emb, g_a1);
  return conv_backward(blk.conv1, params, grads, cache.in, g_a1);
}

} // namespace

nlohmann::json arch_to_json(const ArchSpec& spec) {
  return {{"in_channels", spec.in_channels},
          {"out_channels", spec.out_channels},
          {"base_width", spec.base_width},
          {"depth", spec.depth},
          {"time_conditioned", spec.time_conditioned},
          {"activation", "silu"},
          {"block", "two_conv3x3"},
          {"pool", "avg2x2"},
          {"upsample", "nearest2x"},
          {"skip", "concat"},
          {"head", "conv1x1"},
          {"time_embed_dim", kTimeEmbedDim},
          {"init", "he_normal"}};
}

ArchSpec arch_from_json(const nlohmann::json& j) {
  ArchSpec spec;
  spec.in_channels = j.at("in_channels").get<int>();
  spec.out_channels = j.at("out_channels").get<int>();
  spec.base_width = j.at("base_width").get<int>();
  spec.depth = j.at("depth").get<int>();
  spec.time_conditioned = j.at("time_conditioned").get<bool>();
  return spec;
}

UNet::UNet(const ArchSpec& spec, std::uint64_t seed) : spec_(spec) {
  if (spec.depth < 1 || spec.base_width < 1 || spec.in_channels < 1 ||
      spec.out_channels < 1)
    throw Error(ErrorCode::invalid_argument, "invalid architecture spec");

  const auto width = [&](int level) { return spec.base_width << level; };
  const auto make_conv = [&](int in_ch, int out_ch, int ksize) {
    Conv2d c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.ksize = ksize;
    c.pad = ksize / 2;
    c.w_off = alloc(params_, static_cast<std::size_t>(out_ch) * in_ch * ksize * ksize);
    c.b_off = alloc(params_, out_ch);
    return c;
  };
  const auto make_block = [&](int in_ch, int out_ch) {
    ConvBlock b;
    b.conv1 = make_conv(in_ch, out_ch, 3);
    if (spec.time_conditioned) {
      b.has_time = true;
      b.tw_off = alloc(params_, static_cast<std::size_t>(out_ch) * kTimeEmbedDim);
      b.tb_off = alloc(params_, out_ch);
    }
    b.conv2 = make_conv(out_ch, out_ch, 3);
    return b;
  };

  for (int l = 0; l < spec.depth; ++l)
    enc_.push_back(make_block(l == 0 ? spec.in_channels : width(l - 1), width(l)));
  bottom_ = make_block(width(spec.depth - 1), width(spec.depth));
  up_convs_.resize(spec.depth);
  dec_.resize(spec.depth);
  for (int l = spec.depth - 1; l >= 0; --l) {
    up_convs_[l] = make_conv(width(l + 1), width(l), 3);
    dec_[l] = make_block(2 * width(l), width(l));
  }
  head_ = make_conv(spec.base_width, spec.out_channels, 1);
  grads_.assign(params_.size(), 0.0);

  // He-style init, visiting parameter blocks in allocation order
  Rng rng(mix_seed(seed, 0x11e7));
  const auto init_conv = [&](const Conv2d& c) {
    const double std_dev = std::sqrt(2.0 / (c.in_ch * c.ksize * c.ksize));
    for (std::size_t i = 0; i < static_cast<std::size_t>(c.out_ch) * c.in_ch *
                                    c.ksize * c.ksize; ++i)
      params_[c.w_off + i] = std_dev * rng.normal();
  };
  const auto init_block = [&](const ConvBlock& b) {
    init_conv(b.conv1);
    if (b.has_time) {
      const double std_dev = std::sqrt(1.0 / kTimeEmbedDim);
      for (std::size_t i = 0;
           i < static_cast<std::size_t>(b.conv1.out_ch) * kTimeEmbedDim; ++i)
        params_[b.tw_off + i] = std_dev * rng.normal();
    }
    init_conv(b.conv2);
  };
  for (const auto& b : enc_) init_block(b);
  init_block(bottom_);
  for (int l = spec_.depth - 1; l >= 0; --l) {
    init_conv(up_convs_[l]);
    init_block(dec_[l]);
  }
  init_conv(head_);
}

void UNet::check_input(const Tensor& x) const {
  if (x.ndim() != 3 || x.dim(0) != static_cast<std::size_t>(spec_.in_channels))
    throw Error(ErrorCode::shape_mismatch, "network input channel mismatch");
  const std::size_t div = std::size_t{1} << spec_.depth;
  if (x.dim(1) % div != 0 || x.dim(2) % div != 0 || x.dim(1) < div || x.dim(2) < div)
    throw Error(ErrorCode::shape_mismatch,
                "input sides must be divisible by 2^depth");
}

Tensor UNet::run_forward(const Tensor& x, int timestep,
                         detail::Cache& cache) const {
  check_input(x);
  cache.emb = spec_.time_conditioned ? time_embedding(timestep)
                                     : std::vector<double>{};
  const int depth = spec_.depth;
  cache.enc.resize(depth);
  cache.pooled.resize(depth);
  cache.up_sampled.resize(depth);
  cache.up_a.resize(depth);
  cache.dec.resize(depth);

  Tensor cur = x;
  std::vector<Tensor> skips(depth);
  for (int l = 0; l < depth; ++l) {
    skips[l] = block_forward(enc_[l], params_, cur, cache.emb, cache.enc[l]);
    cache.pooled[l] = avgpool2(skips[l]);
    cur = cache.pooled[l];
  }
  cur = block_forward(bottom_, params_, cur, cache.emb, cache.bottom);
  for (int l = depth - 1; l >= 0; --l) {
    cache.up_sampled[l] = upsample2(cur);
    cache.up_a[l] = conv_forward(up_convs_[l], params_, cache.up_sampled[l]);
    const Tensor act = silu_map(cache.up_a[l]);
    cur = block_forward(dec_[l], params_, concat_channels(act, skips[l]),
                        cache.emb, cache.dec[l]);
  }
  cache.head_in = cur;
  return conv_forward(head_, params_, cur);
}

Tensor UNet::apply(const Tensor& x, int timestep) const {
  detail::Cache scratch;
  return run_forward(x, timestep, scratch);
}

Tensor UNet::forward(const Tensor& x, int timestep) {
  Tensor out = run_forward(x, timestep, cache_);
  cache_valid_ = true;
  return out;
}

Tensor UNet::run_backward(const detail::Cache& cache, const Tensor& grad_out) {
  const int depth = spec_.depth;
  Tensor g = conv_backward(head_, params_, grads_, cache.head_in, grad_out);
  std::vector<Tensor> skip_grads(depth);
  for (int l = 0; l < depth; ++l) {
    g = block_backward(dec_[l], params_, grads_, cache.dec[l], cache.emb, g);
    auto [g_act, g_skip] = split_channels(
        g, static_cast<std::size_t>(spec_.base_width) << l);
    skip_grads[l] = std::move(g_skip);
    const Tensor g_a = dsilu_mul(cache.up_a[l], g_act);
    const Tensor g_us = conv_backward(up_convs_[l], params_, grads_,
                                      cache.up_sampled[l], g_a);
    g = upsample2_backward(g_us);
  }
  g = block_backward(bottom_, params_, grads_, cache.bottom, cache.emb, g);
  for (int l = depth - 1; l >= 0; --l) {
    g = avgpool2_backward(g, cache.enc[l].in.dim(1), cache.enc[l].in.dim(2));
    g += skip_grads[l];
    g = block_backward(enc_[l], params_, grads_, cache.enc[l], cache.emb, g);
  }
  return g;
}

Tensor UNet::backward(const Tensor& grad_out) {
  if (!cache_valid_)
    throw Error(ErrorCode::invalid_argument, "backward called before forward");
  return run_backward(cache_, grad_out);
}

void UNet::zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

nlohmann::json UNet::arch_json() const { return arch_to_json(spec_); }

UNet build_unet(ArchSpec spec, std::uint64_t seed) {
  spec.time_conditioned = false;
  return UNet(spec, seed);
}

UNet build_score_net(ArchSpec spec, std::uint64_t seed) {
  spec.time_conditioned = true;
  return UNet(spec, seed);
}

double loss_gradient(UNet& net, const Tensor& input, int timestep,
                     const OutputLoss& loss) {
  net.zero_grads();
  const Tensor out = net.forward(input, timestep);
  LossValueGrad lv = loss(out);
  if (!std::isfinite(lv.value))
    throw Error(ErrorCode::non_finite_loss, "loss is not finite");
  net.backward(lv.grad);
  return lv.value;
}

void optimizer_step(OptimizerState& state, AlignedDoubles& params,
                    const AlignedDoubles& grads) {
  if (params.size() != grads.size())
    throw Error(ErrorCode::shape_mismatch, "optimizer: params/grads size mismatch");
  if (state.learning_rate <= 0.0)
    throw Error(ErrorCode::invalid_argument, "learning_rate must be positive");
  if (state.algorithm == OptAlgorithm::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i)
      params[i] -= state.learning_rate * grads[i];
    ++state.step;
    return;
  }
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.eps);
  }
}

void save_network(const std::filesystem::path& path, const UNet& net,
                  const nlohmann::json& extra_sidecar) {
  Tensor flat({net.param_count()});
  std::copy(net.params().begin(), net.params().end(), flat.data());
  save_array(path, flat, Dtype::f32, "network parameters");
  nlohmann::json side;
  side["arch"] = net.arch_json();
  for (auto it = extra_sidecar.begin(); it != extra_sidecar.end(); ++it)
    side[it.key()] = it.value();
  std::ofstream out(path.string() + ".arch.json", std::ios::trunc);
  if (!out)
    throw Error(ErrorCode::io_unwritable,
                "cannot write sidecar: " + path.string() + ".arch.json");
  out << side.dump(2) << "\n";
}

nlohmann::json load_network_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path.string() + ".arch.json");
  if (!in)
    throw Error(ErrorCode::io_unwritable,
                "cannot read sidecar: " + path.string() + ".arch.json");
  return nlohmann::json::parse(in);
}

UNet load_network(const std::filesystem::path& path) {
  const nlohmann::json side = load_network_sidecar(path);
  UNet net(arch_from_json(side.at("arch")), 0);
  const LoadedArray arr = load_array(path);
  if (arr.tensor.numel() != net.param_count())
    throw Error(ErrorCode::shape_mismatch,
                "checkpoint parameter count mismatch for " + path.string());
  std::copy(arr.tensor.data(), arr.tensor.data() + arr.tensor.numel(),
            net.params().begin());
  return net;
}

} // namespace udig
