#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "ccr/checkpoint.hpp"
#include "ccr/layers.hpp"
#include "ccr/losses.hpp"
#include "ccr/rng.hpp"
#include "ccr/tensor.hpp"

namespace ccr {

enum class HeadKind { kCount, kMultiLabelIdentity, kSingleLabelIdentity };

inline const char* head_kind_name(HeadKind k) {
  switch (k) {
    case HeadKind::kCount: return "count";
    case HeadKind::kMultiLabelIdentity: return "multilabel-identity";
    case HeadKind::kSingleLabelIdentity: return "single-label-identity";
  }
  return "?";
}

inline HeadKind head_kind_from_name(const std::string& s) {
  if (s == "count") return HeadKind::kCount;
  if (s == "multilabel-identity") return HeadKind::kMultiLabelIdentity;
  if (s == "single-label-identity") return HeadKind::kSingleLabelIdentity;
  throw std::runtime_error("unknown head kind: " + s);
}

struct ModelConfig {
  int input_side = 64;
  std::vector<int> channels = {8, 16, 32};
  int num_classes = 0;
  std::uint64_t seed = 0;
};

// One class's raw activation grid from the final conv feature map.
struct CamMap {
  Tensor grid;  // [h x w]
  int class_index = 0;
  enum class Source { kCountNet, kRecogNet } source = Source::kCountNet;
};

// Conv blocks (conv + ReLU + 2x2 maxpool) ending in GAP and a single linear
// head; there is deliberately nowhere to put a hidden layer between the two,
// which is what makes the CAM identity hold.
class CamNet {
 public:
  struct ConvBlock {
    Tensor kernels;  // [Cout x Cin x 3 x 3]
    Tensor bias;     // [Cout]
  };

  CamNet(const ModelConfig& config, HeadKind head_kind) : cfg_(config), head_(head_kind) {
    if (cfg_.num_classes < 1) throw std::invalid_argument("CamNet: num_classes must be >= 1");
    if (cfg_.channels.empty()) throw std::invalid_argument("CamNet: need at least one conv block");
    int side = cfg_.input_side;
    for (std::size_t b = 0; b < cfg_.channels.size(); ++b) {
      if (side % 2 != 0) {
        throw std::invalid_argument("CamNet: input side " + std::to_string(cfg_.input_side) +
                                    " not divisible by 2^" + std::to_string(cfg_.channels.size()));
      }
      side /= 2;
    }
    if (side < 4) {
      throw std::invalid_argument("CamNet: feature side " + std::to_string(side) +
                                  " < 4; use a larger input or fewer blocks");
    }
    feature_side_ = side;

    Rng rng = Rng::stream(cfg_.seed, {0xCA3Dull});
    int cin = 3;
    for (int cout : cfg_.channels) {
      ConvBlock blk;
      blk.kernels = glorot({cout, cin, 3, 3}, cin * 9, cout * 9, rng);
      blk.bias = Tensor({cout});
      blocks_.push_back(std::move(blk));
      cin = cout;
    }
    head_w_ = glorot({cfg_.num_classes, cin}, cin, cfg_.num_classes, rng);
    head_b_ = Tensor({cfg_.num_classes});
  }

  const ModelConfig& config() const { return cfg_; }
  HeadKind head_kind() const { return head_; }
  int feature_side() const { return feature_side_; }
  int feature_channels() const { return cfg_.channels.back(); }
  int num_classes() const { return cfg_.num_classes; }
  const Tensor& head_weight() const { return head_w_; }
  const Tensor& head_bias() const { return head_b_; }

  // Parameters in a fixed order; gradients use the same order.
  std::vector<Tensor*> params() {
    std::vector<Tensor*> p;
    for (auto& b : blocks_) {
      p.push_back(&b.kernels);
      p.push_back(&b.bias);
    }
    p.push_back(&head_w_);
    p.push_back(&head_b_);
    return p;
  }
  std::vector<const Tensor*> params() const {
    std::vector<const Tensor*> p;
    for (auto& b : blocks_) {
      p.push_back(&b.kernels);
      p.push_back(&b.bias);
    }
    p.push_back(&head_w_);
    p.push_back(&head_b_);
    return p;
  }

  // Every intermediate needed by backward.
  struct Activations {
    Tensor input;
    std::vector<Tensor> conv_out;   // pre-ReLU
    std::vector<Tensor> relu_out;   // post-ReLU (input of pool)
    std::vector<Tensor> block_in;   // input of each block
    Tensor features;                // final pooled map [C_feat x h x w]
    Tensor pooled;                  // GAP output [C_feat]
    Tensor logits;                  // [num_classes]
  };

  Activations forward(const Tensor& image) const {
    require_shape(image, {3, cfg_.input_side, cfg_.input_side}, "CamNet input");
    Activations a;
    a.input = image;
    Tensor x = image;
    for (const auto& blk : blocks_) {
      a.block_in.push_back(x);
      Tensor c = conv2d_forward(x, blk.kernels, blk.bias, 1, 1);
      Tensor r = relu_forward(c);
      x = maxpool2_forward(r);
      a.conv_out.push_back(std::move(c));
      a.relu_out.push_back(std::move(r));
    }
    a.features = std::move(x);
    a.pooled = gap_forward(a.features);
    a.logits = linear_forward(a.pooled, head_w_, head_b_);
    return a;
  }

  // Gradients for all parameters, ordered as params().
  std::vector<Tensor> backward(const Activations& a, const Tensor& logit_grad) const {
    LinearGrads hg = linear_backward(a.pooled, head_w_, logit_grad);
    Tensor up = gap_backward(a.features, hg.input);
    std::vector<Tensor> kernel_grads(blocks_.size());
    std::vector<Tensor> bias_grads(blocks_.size());
    for (int b = static_cast<int>(blocks_.size()) - 1; b >= 0; --b) {
      Tensor pre_pool = maxpool2_backward(a.relu_out[b], up);
      Tensor pre_relu = relu_backward(a.conv_out[b], pre_pool);
      Conv2dGrads cg = conv2d_backward(a.block_in[b], blocks_[b].kernels, pre_relu, 1, 1, b > 0);
      kernel_grads[b] = std::move(cg.kernels);
      bias_grads[b] = std::move(cg.bias);
      up = std::move(cg.input);
    }
    std::vector<Tensor> grads;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      grads.push_back(std::move(kernel_grads[b]));
      grads.push_back(std::move(bias_grads[b]));
    }
    grads.push_back(std::move(hg.weight));
    grads.push_back(std::move(hg.bias));
    return grads;
  }

  // M_c(i,j) = sum_k w[c,k] * features[k,i,j]; raw, unnormalized.
  CamMap cam(const Tensor& features, int class_index) const {
    require_shape(features, {feature_channels(), feature_side_, feature_side_}, "cam features");
    if (class_index < 0 || class_index >= cfg_.num_classes) {
      throw std::out_of_range("cam: class index " + std::to_string(class_index) + " out of range [0," +
                              std::to_string(cfg_.num_classes) + ")");
    }
    CamMap m;
    m.class_index = class_index;
    m.source = head_ == HeadKind::kCount ? CamMap::Source::kCountNet : CamMap::Source::kRecogNet;
    m.grid = Tensor({feature_side_, feature_side_});
    const int hw = feature_side_ * feature_side_;
    for (int k = 0; k < feature_channels(); ++k) {
      const double wk = head_w_.at(class_index, k);
      const double* f = features.data() + static_cast<std::size_t>(k) * hw;
      for (int i = 0; i < hw; ++i) m.grid[static_cast<std::size_t>(i)] += wk * f[i];
    }
    return m;
  }

  static int argmax_lowest(const Tensor& v) {
    int best = 0;
    for (int i = 1; i < v.dim(0); ++i)
      if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
    return best;
  }

  // Predicted count bin plus the CAM of the winning class; ties go to the
  // lowest index.
  std::pair<int, CamMap> predict_count(const Tensor& image) const {
    if (head_ != HeadKind::kCount) throw std::logic_error("predict_count: net head is not a count head");
    Activations a = forward(image);
    int n_hat = argmax_lowest(a.logits);
    return {n_hat, cam(a.features, n_hat)};
  }

  // Per-identity sigmoid scores.
  Tensor predict_identities(const Tensor& image) const {
    if (head_ != HeadKind::kMultiLabelIdentity) {
      throw std::logic_error("predict_identities: net head is not a multilabel identity head");
    }
    Activations a = forward(image);
    Tensor s({cfg_.num_classes});
    for (int i = 0; i < cfg_.num_classes; ++i) s[static_cast<std::size_t>(i)] = sigmoid(a.logits[static_cast<std::size_t>(i)]);
    return s;
  }

  Checkpoint to_checkpoint() const {
    nlohmann::ordered_json meta;
    meta["head_kind"] = head_kind_name(head_);
    meta["input_side"] = cfg_.input_side;
    meta["channels"] = cfg_.channels;
    meta["num_classes"] = cfg_.num_classes;
    meta["seed"] = cfg_.seed;
    Checkpoint c;
    c.meta = meta.dump();
    auto ps = params();
    auto names = param_names();
    for (std::size_t i = 0; i < ps.size(); ++i) c.tensors.push_back({names[i], *ps[i]});
    return c;
  }

  static CamNet from_checkpoint(const Checkpoint& c) {
    nlohmann::json meta = nlohmann::json::parse(c.meta);
    ModelConfig cfg;
    cfg.input_side = meta.at("input_side").get<int>();
    cfg.channels = meta.at("channels").get<std::vector<int>>();
    cfg.num_classes = meta.at("num_classes").get<int>();
    cfg.seed = meta.at("seed").get<std::uint64_t>();
    CamNet net(cfg, head_kind_from_name(meta.at("head_kind").get<std::string>()));
    auto ps = net.params();
    auto names = net.param_names();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const Tensor& t = c.find(names[i]);
      if (!t.same_shape(*ps[i])) {
        throw std::runtime_error("checkpoint tensor '" + names[i] + "' has shape " +
                                 shape_to_string(t.shape()) + ", expected " + shape_to_string(ps[i]->shape()));
      }
      *ps[i] = t;
    }
    return net;
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> names;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      names.push_back("conv" + std::to_string(b) + ".kernels");
      names.push_back("conv" + std::to_string(b) + ".bias");
    }
    names.push_back("head.weight");
    names.push_back("head.bias");
    return names;
  }

 private:
  static Tensor glorot(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
  }

  ModelConfig cfg_;
  HeadKind head_;
  int feature_side_ = 0;
  std::vector<ConvBlock> blocks_;
  Tensor head_w_;
  Tensor head_b_;
};

}  // namespace ccr
