// Residual-encoder 3D U-Net with hand-written forward and backward passes.
// Templated on the scalar type: float in production, double for gradient
// checks.
#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "petseg/model.hpp"
#include "petseg/nn.hpp"
#include "petseg/rng.hpp"

namespace petseg {

template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  ParamKind kind = ParamKind::kConvWeight;
  std::vector<T> v;
};

template <typename T>
class UNet3d {
 public:
  using Map = nn::FeatureMap<T>;

  struct Workspace {
    std::vector<T> col, dcol, scratch;
  };

  struct BlockActs {
    Map u1, y;  // post-activation outputs of unit 1 and of the block
    std::vector<T> xhat1, xhat2, xhatp;
    std::vector<double> istd1, istd2, istdp;
  };
  struct DecActs {
    Map cat, v1, v2;
    std::vector<T> xhat1, xhat2;
    std::vector<double> istd1, istd2;
  };
  struct Activations {
    std::vector<std::vector<BlockActs>> enc;  // [stage][block]
    std::vector<DecActs> dec;                 // indexed by output stage
  };
  struct Output {
    Map logits;
    // Deep-supervision heads; aux[i] lives at 1/2^(i+1) resolution.
    std::vector<Map> aux;
  };

  explicit UNet3d(const ModelConfig& config) : cfg_(config) {
    cfg_.validate();
    for_each_parameter(cfg_, [&](const ParamShape& ps) {
      Param<T> p;
      p.name = ps.name;
      p.shape = ps.dims;
      p.kind = ps.kind;
      p.v.assign(static_cast<std::size_t>(ps.numel()), T(0));
      index_[p.name] = params_.size();
      params_.push_back(std::move(p));
    });
    init_params(cfg_.rng_seed);
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }
  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += static_cast<std::int64_t>(p.v.size());
    return n;
  }

  // Deterministic He initialization; every parameter gets its own stream
  // derived from (seed, name).
  void init_params(std::uint64_t seed) {
    for (auto& p : params_) {
      switch (p.kind) {
        case ParamKind::kConvWeight:
        case ParamKind::kTconvWeight: {
          std::int64_t fan_in = 1;
          if (p.kind == ParamKind::kConvWeight) {
            for (std::size_t i = 1; i < p.shape.size(); ++i) fan_in *= p.shape[i];
          } else {
            fan_in = static_cast<std::int64_t>(p.shape[0]) * 8;
          }
          const double gain =
              std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
          const double stddev = gain / std::sqrt(static_cast<double>(fan_in));
          Rng rng(mix_seed(seed, p.name));
          for (auto& w : p.v) w = static_cast<T>(rng.normal(0.0, stddev));
          break;
        }
        case ParamKind::kBias:
        case ParamKind::kNormBias:
          std::fill(p.v.begin(), p.v.end(), T(0));
          break;
        case ParamKind::kNormGain:
          std::fill(p.v.begin(), p.v.end(), T(1));
          break;
      }
    }
  }

  Output forward(const Map& input, Workspace& ws, Activations& acts) const {
    if (!(input.dims == cfg_.patch_size) ||
        input.channels != cfg_.in_channels) {
      throw std::invalid_argument("forward: input shape mismatch");
    }
    const int stages = cfg_.n_stages;
    acts.enc.assign(stages, {});
    acts.dec.assign(stages - 1, DecActs{});

    const Map* x = &input;
    for (int s = 0; s < stages; ++s) {
      const int blocks = cfg_.blocks_per_stage[s];
      acts.enc[s].resize(blocks);
      for (int j = 0; j < blocks; ++j) {
        block_forward(s, j, *x, ws, acts.enc[s][j]);
        x = &acts.enc[s][j].y;
      }
    }

    for (int d = stages - 2; d >= 0; --d) {
      const Map& deeper =
          d == stages - 2 ? acts.enc[stages - 1].back().y : acts.dec[d + 1].v2;
      dec_forward(d, deeper, acts.enc[d].back().y, ws, acts.dec[d]);
    }

    Output out;
    head_forward(param("head.w"), param("head.b"), acts.dec[0].v2, ws,
                 out.logits);
    if (cfg_.deep_supervision) {
      for (int d = 1; d <= stages - 2; ++d) {
        Map aux;
        head_forward(param(ds_name(d, "w")), param(ds_name(d, "b")),
                     acts.dec[d].v2, ws, aux);
        out.aux.push_back(std::move(aux));
      }
    }
    return out;
  }

  // grads is parallel to params() and accumulated (+=). grad_out.aux may be
  // empty even with deep supervision (those heads then receive no signal).
  void backward(const Map& input, const Activations& acts,
                const Output& grad_out, Workspace& ws,
                std::vector<std::vector<T>>& grads) const {
    const int stages = cfg_.n_stages;
    if (grads.size() != params_.size()) {
      throw std::invalid_argument("backward: grads not parallel to params");
    }

    // Head(s).
    Map d_dec0;
    d_dec0.resize(cfg_.features_per_stage[0], acts.dec[0].v2.dims);
    head_backward(param("head.w"), grad_out.logits, acts.dec[0].v2,
                  grad("head.w", grads), grad("head.b", grads), d_dec0, ws);

    std::vector<Map> d_dec(stages - 1);
    d_dec[0] = std::move(d_dec0);
    for (int d = 1; d <= stages - 2; ++d) {
      d_dec[d].resize(cfg_.features_per_stage[d], acts.dec[d].v2.dims);
    }
    if (cfg_.deep_supervision) {
      for (int d = 1; d <= stages - 2; ++d) {
        const std::size_t i = static_cast<std::size_t>(d) - 1;
        if (i < grad_out.aux.size() && grad_out.aux[i].numel() > 0) {
          head_backward(param(ds_name(d, "w")), grad_out.aux[i],
                        acts.dec[d].v2, grad(ds_name(d, "w"), grads),
                        grad(ds_name(d, "b"), grads), d_dec[d], ws);
        }
      }
    }

    // Decoder stages, shallow to deep; the skip gradients feed the encoder.
    std::vector<Map> d_enc(stages);
    for (int s = 0; s < stages; ++s) {
      d_enc[s].resize(cfg_.features_per_stage[s], acts.enc[s].back().y.dims);
    }
    for (int d = 0; d <= stages - 2; ++d) {
      const Map& deeper_in =
          d == stages - 2 ? acts.enc[stages - 1].back().y : acts.dec[d + 1].v2;
      Map d_deeper;
      d_deeper.resize(deeper_in.channels, deeper_in.dims);
      dec_backward(d, deeper_in, acts.dec[d], d_dec[d], d_deeper, d_enc[d],
                   ws, grads);
      if (d == stages - 2) {
        accumulate(d_enc[stages - 1], d_deeper);
      } else {
        accumulate(d_dec[d + 1], d_deeper);
      }
    }

    // Encoder stages, deep to shallow.
    for (int s = stages - 1; s >= 0; --s) {
      const int blocks = cfg_.blocks_per_stage[s];
      Map* dy = &d_enc[s];
      for (int j = blocks - 1; j >= 0; --j) {
        const Map& block_in = j > 0 ? acts.enc[s][j - 1].y
                              : s > 0 ? acts.enc[s - 1].back().y
                                      : input;
        const bool need_dx = !(s == 0 && j == 0);
        Map dx;
        if (need_dx) dx.resize(block_in.channels, block_in.dims);
        block_backward(s, j, block_in, acts.enc[s][j], *dy,
                       need_dx ? &dx : nullptr, ws, grads);
        if (!need_dx) break;
        if (j > 0) {
          *dy = std::move(dx);
        } else {
          accumulate(d_enc[s - 1], dx);
        }
      }
    }
  }

  const Param<T>& param(const std::string& name) const {
    return params_[index_.at(name)];
  }
  Param<T>& param(const std::string& name) {
    return params_[index_.at(name)];
  }

 private:
  std::vector<T>& grad(const std::string& name,
                       std::vector<std::vector<T>>& grads) const {
    return grads[index_.at(name)];
  }

  static std::string block_name(int s, int j, const char* leaf) {
    return "enc" + std::to_string(s) + ".b" + std::to_string(j) + "." + leaf;
  }
  static std::string dec_name(int d, const char* leaf) {
    return "dec" + std::to_string(d) + "." + leaf;
  }
  static std::string ds_name(int d, const char* leaf) {
    return "ds" + std::to_string(d) + "." + std::string(leaf);
  }

  bool block_has_proj(int s, int j) const {
    const int cin = block_cin(s, j);
    const int stride = block_stride(s, j);
    return cin != cfg_.features_per_stage[s] || stride != 1;
  }
  int block_cin(int s, int j) const {
    if (j > 0) return cfg_.features_per_stage[s];
    return s == 0 ? cfg_.in_channels : cfg_.features_per_stage[s - 1];
  }
  int block_stride(int s, int j) const { return (s > 0 && j == 0) ? 2 : 1; }

  void block_forward(int s, int j, const Map& x, Workspace& ws,
                     BlockActs& a) const {
    const int f = cfg_.features_per_stage[s];
    const int stride = block_stride(s, j);

    nn::conv3d_forward(x, param(block_name(s, j, "conv1.w")).v,
                       param(block_name(s, j, "conv1.b")).v, f, 3, stride,
                       a.u1, ws.col);
    nn::instance_norm_forward(a.u1, param(block_name(s, j, "norm1.g")).v,
                              param(block_name(s, j, "norm1.b")).v, a.xhat1,
                              a.istd1);
    nn::leaky_relu_forward(a.u1, static_cast<T>(kLeakySlope));

    nn::conv3d_forward(a.u1, param(block_name(s, j, "conv2.w")).v,
                       param(block_name(s, j, "conv2.b")).v, f, 3, 1, a.y,
                       ws.col);
    nn::instance_norm_forward(a.y, param(block_name(s, j, "norm2.g")).v,
                              param(block_name(s, j, "norm2.b")).v, a.xhat2,
                              a.istd2);

    if (block_has_proj(s, j)) {
      Map proj;
      nn::conv3d_forward(x, param(block_name(s, j, "proj.w")).v,
                         param(block_name(s, j, "proj.b")).v, f, 1, stride,
                         proj, ws.col);
      nn::instance_norm_forward(proj, param(block_name(s, j, "projnorm.g")).v,
                                param(block_name(s, j, "projnorm.b")).v,
                                a.xhatp, a.istdp);
      for (std::size_t i = 0; i < a.y.v.size(); ++i) a.y.v[i] += proj.v[i];
    } else {
      for (std::size_t i = 0; i < a.y.v.size(); ++i) a.y.v[i] += x.v[i];
    }
    nn::leaky_relu_forward(a.y, static_cast<T>(kLeakySlope));
  }

  void block_backward(int s, int j, const Map& x, const BlockActs& a,
                      const Map& dy_in, Map* dx, Workspace& ws,
                      std::vector<std::vector<T>>& grads) const {
    const int f = cfg_.features_per_stage[s];
    const int stride = block_stride(s, j);

    Map dsum = dy_in;
    nn::leaky_relu_backward(a.y, dsum, static_cast<T>(kLeakySlope));

    // Skip path.
    if (block_has_proj(s, j)) {
      Map dproj;
      nn::instance_norm_backward(a.xhatp, a.istdp,
                                 param(block_name(s, j, "projnorm.g")).v, dsum,
                                 dproj, grad(block_name(s, j, "projnorm.g"), grads),
                                 grad(block_name(s, j, "projnorm.b"), grads));
      nn::conv3d_backward(x, param(block_name(s, j, "proj.w")).v, f, 1, stride,
                          dproj, dx, grad(block_name(s, j, "proj.w"), grads),
                          grad(block_name(s, j, "proj.b"), grads), ws.col,
                          ws.dcol);
    } else if (dx != nullptr) {
      accumulate(*dx, dsum);
    }

    // Main path.
    Map dc2;
    nn::instance_norm_backward(a.xhat2, a.istd2,
                               param(block_name(s, j, "norm2.g")).v, dsum, dc2,
                               grad(block_name(s, j, "norm2.g"), grads),
                               grad(block_name(s, j, "norm2.b"), grads));
    Map du1;
    du1.resize(f, a.u1.dims);
    nn::conv3d_backward(a.u1, param(block_name(s, j, "conv2.w")).v, f, 3, 1,
                        dc2, &du1, grad(block_name(s, j, "conv2.w"), grads),
                        grad(block_name(s, j, "conv2.b"), grads), ws.col,
                        ws.dcol);
    nn::leaky_relu_backward(a.u1, du1, static_cast<T>(kLeakySlope));
    Map dc1;
    nn::instance_norm_backward(a.xhat1, a.istd1,
                               param(block_name(s, j, "norm1.g")).v, du1, dc1,
                               grad(block_name(s, j, "norm1.g"), grads),
                               grad(block_name(s, j, "norm1.b"), grads));
    nn::conv3d_backward(x, param(block_name(s, j, "conv1.w")).v, f, 3, stride,
                        dc1, dx, grad(block_name(s, j, "conv1.w"), grads),
                        grad(block_name(s, j, "conv1.b"), grads), ws.col,
                        ws.dcol);
  }

  void dec_forward(int d, const Map& deeper, const Map& skip, Workspace& ws,
                   DecActs& a) const {
    const int f = cfg_.features_per_stage[d];
    Map up;
    nn::tconv3d_forward(deeper, param(dec_name(d, "up.w")).v,
                        param(dec_name(d, "up.b")).v, f, up, ws.scratch);
    nn::concat_channels(up, skip, a.cat);

    nn::conv3d_forward(a.cat, param(dec_name(d, "conv1.w")).v,
                       param(dec_name(d, "conv1.b")).v, f, 3, 1, a.v1, ws.col);
    nn::instance_norm_forward(a.v1, param(dec_name(d, "norm1.g")).v,
                              param(dec_name(d, "norm1.b")).v, a.xhat1,
                              a.istd1);
    nn::leaky_relu_forward(a.v1, static_cast<T>(kLeakySlope));

    nn::conv3d_forward(a.v1, param(dec_name(d, "conv2.w")).v,
                       param(dec_name(d, "conv2.b")).v, f, 3, 1, a.v2, ws.col);
    nn::instance_norm_forward(a.v2, param(dec_name(d, "norm2.g")).v,
                              param(dec_name(d, "norm2.b")).v, a.xhat2,
                              a.istd2);
    nn::leaky_relu_forward(a.v2, static_cast<T>(kLeakySlope));
  }

  void dec_backward(int d, const Map& deeper_in, const DecActs& a,
                    const Map& dv2_in, Map& d_deeper, Map& d_skip,
                    Workspace& ws, std::vector<std::vector<T>>& grads) const {
    const int f = cfg_.features_per_stage[d];

    Map dv2 = dv2_in;
    nn::leaky_relu_backward(a.v2, dv2, static_cast<T>(kLeakySlope));
    Map dc2;
    nn::instance_norm_backward(a.xhat2, a.istd2, param(dec_name(d, "norm2.g")).v,
                               dv2, dc2, grad(dec_name(d, "norm2.g"), grads),
                               grad(dec_name(d, "norm2.b"), grads));
    Map dv1;
    dv1.resize(f, a.v1.dims);
    nn::conv3d_backward(a.v1, param(dec_name(d, "conv2.w")).v, f, 3, 1, dc2,
                        &dv1, grad(dec_name(d, "conv2.w"), grads),
                        grad(dec_name(d, "conv2.b"), grads), ws.col, ws.dcol);
    nn::leaky_relu_backward(a.v1, dv1, static_cast<T>(kLeakySlope));
    Map dc1;
    nn::instance_norm_backward(a.xhat1, a.istd1, param(dec_name(d, "norm1.g")).v,
                               dv1, dc1, grad(dec_name(d, "norm1.g"), grads),
                               grad(dec_name(d, "norm1.b"), grads));
    Map dcat;
    dcat.resize(a.cat.channels, a.cat.dims);
    nn::conv3d_backward(a.cat, param(dec_name(d, "conv1.w")).v, f, 3, 1, dc1,
                        &dcat, grad(dec_name(d, "conv1.w"), grads),
                        grad(dec_name(d, "conv1.b"), grads), ws.col, ws.dcol);

    Map dup;
    nn::split_channels(dcat, dup, d_skip, f);
    nn::tconv3d_backward(deeper_in, param(dec_name(d, "up.w")).v, f, dup,
                         &d_deeper, grad(dec_name(d, "up.w"), grads),
                         grad(dec_name(d, "up.b"), grads), ws.scratch);
  }

  void head_forward(const Param<T>& w, const Param<T>& b, const Map& x,
                    Workspace& ws, Map& logits) const {
    nn::conv3d_forward(x, w.v, b.v, cfg_.out_channels, 1, 1, logits, ws.col);
  }

  void head_backward(const Param<T>& w, const Map& dlogits, const Map& x,
                     std::vector<T>& dw, std::vector<T>& db, Map& dx,
                     Workspace& ws) const {
    nn::conv3d_backward(x, w.v, cfg_.out_channels, 1, 1, dlogits, &dx, dw, db,
                        ws.col, ws.dcol);
  }

  static void accumulate(Map& into, const Map& from) {
    for (std::size_t i = 0; i < into.v.size(); ++i) into.v[i] += from.v[i];
  }

  ModelConfig cfg_;
  std::vector<Param<T>> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace petseg
