#pragma once

#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "ccr/losses.hpp"
#include "ccr/model.hpp"
#include "ccr/optim.hpp"
#include "ccr/parallel.hpp"
#include "ccr/proposal.hpp"
#include "ccr/rng.hpp"
#include "ccr/synthdata.hpp"

namespace ccr {

struct AugmentParams {
  double flip_prob = 0.5;
  double color_jitter = 0.1;     // per-channel scale in [1-j, 1+j]
  double neg_crop_min = 0.6;     // random-crop scale range, negatives only
  double neg_crop_max = 1.0;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  int count_bin_cap = 3;  // N: counts of N or more share one bin
  AugmentParams augment;
};

// min(|Y|, N): all counts of N or more share the top bin.
inline int count_label(const std::vector<int>& y, int bin_cap) {
  if (bin_cap < 1) throw std::invalid_argument("count_label: N must be >= 1");
  int n = 0;
  for (int v : y) n += v ? 1 : 0;
  return std::min(n, bin_cap);
}

struct ClassWeights {
  Tensor w;            // w_i = f_max / f_i
  std::vector<int> f;  // instance counts per class
  int f_max = 0;
};

// f_i counts frames of the split where identity i is present.
inline ClassWeights class_weights(const std::vector<FrameRecord>& manifest, const std::string& split) {
  int k = -1;
  ClassWeights cw;
  for (const auto& rec : manifest) {
    if (rec.split != split) continue;
    if (k < 0) {
      k = static_cast<int>(rec.y.size());
      cw.f.assign(static_cast<std::size_t>(k), 0);
    }
    for (int i = 0; i < k; ++i) cw.f[static_cast<std::size_t>(i)] += rec.y[static_cast<std::size_t>(i)];
  }
  if (k < 0) throw std::runtime_error("class_weights: split '" + split + "' has no frames");
  for (int i = 0; i < k; ++i) {
    if (cw.f[static_cast<std::size_t>(i)] == 0) {
      throw std::runtime_error("class_weights: class " + std::to_string(i) + " absent from split '" + split + "'");
    }
    cw.f_max = std::max(cw.f_max, cw.f[static_cast<std::size_t>(i)]);
  }
  cw.w = Tensor({k});
  for (int i = 0; i < k; ++i)
    cw.w[static_cast<std::size_t>(i)] = static_cast<double>(cw.f_max) / cw.f[static_cast<std::size_t>(i)];
  return cw;
}

// Horizontal flip and channelwise color jitter for all samples; random
// cropping only on the negatives.
inline Tensor augment(const Tensor& image, bool is_negative, Rng& rng, const AugmentParams& p) {
  require_ndim(image, 3, "augment image");
  const int side = image.dim(1);
  Tensor out = image;
  if (is_negative && p.neg_crop_max > 0.0 && (p.neg_crop_min < 1.0 || p.neg_crop_max < 1.0)) {
    double scale = rng.uniform(p.neg_crop_min, p.neg_crop_max);
    int cs = std::max(1, static_cast<int>(std::lround(side * scale)));
    int ox = cs < side ? rng.below_int(side - cs + 1) : 0;
    int oy = cs < side ? rng.below_int(side - cs + 1) : 0;
    out = crop_resize(out, BBox{ox, oy, ox + cs, oy + cs}, side);
  }
  if (p.flip_prob > 0.0 && rng.bernoulli(p.flip_prob)) {
    Tensor flipped(out.shape());
    for (int c = 0; c < out.dim(0); ++c)
      for (int y = 0; y < out.dim(1); ++y)
        for (int x = 0; x < out.dim(2); ++x) flipped.at(c, y, x) = out.at(c, y, out.dim(2) - 1 - x);
    out = std::move(flipped);
  }
  if (p.color_jitter > 0.0) {
    for (int c = 0; c < out.dim(0); ++c) {
      double s = 1.0 + rng.uniform(-p.color_jitter, p.color_jitter);
      double* plane = out.data() + static_cast<std::size_t>(c) * out.dim(1) * out.dim(2);
      for (int i = 0; i < out.dim(1) * out.dim(2); ++i)
        plane[i] = std::min(1.0, std::max(0.0, plane[i] * s));
    }
  }
  return out;
}

struct CountSample {
  Tensor image;
  int label = 0;
  bool negative = false;
};

struct MultiLabelSample {
  Tensor image;
  std::vector<int> y;
};

struct SingleLabelSample {
  Tensor image;
  int label = 0;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double metric = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;

  void write_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("history: cannot open for write: " + path);
    f << "epoch,loss,metric\n";
    for (const auto& e : epochs) {
      char line[96];
      std::snprintf(line, sizeof(line), "%d,%.10g,%.10g\n", e.epoch, e.loss, e.metric);
      f << line;
    }
  }
};

namespace detail {

struct SampleResult {
  double loss = 0.0;
  double metric = 0.0;
  std::vector<Tensor> grads;
};

// Seeded-shuffle minibatch SGD. Per-sample work runs in parallel over a fixed
// partition; gradients are reduced in sample order afterwards, so the result
// is bit-identical for any thread count. The augmentation stream is keyed by
// (seed, epoch, sample index), independent of scheduling.
template <typename Sample, typename EvalFn>
TrainHistory run_sgd(CamNet& net, const std::vector<Sample>& samples, const TrainConfig& cfg,
                     int threads, EvalFn&& eval_sample) {
  if (samples.empty()) throw std::invalid_argument("training: no samples");
  if (cfg.batch_size < 1) throw std::invalid_argument("training: batch size must be >= 1");
  if (cfg.epochs < 0) throw std::invalid_argument("training: epochs must be >= 0");

  auto params = net.params();
  OptimizerState opt = OptimizerState::create(params, cfg.learning_rate, cfg.momentum);
  const std::size_t n = samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainHistory hist;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = Rng::stream(cfg.seed, {0x5F1Eull, static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = shuffle_rng.below(i);
      std::swap(order[i - 1], order[j]);
    }

    double ep_loss = 0.0, ep_metric = 0.0;
    std::vector<SampleResult> results;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t nb = std::min<std::size_t>(cfg.batch_size, n - start);
      results.assign(nb, SampleResult{});
      parallel_for(nb, threads, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b) {
          const std::size_t idx = order[start + b];
          Rng aug_rng = Rng::stream(cfg.seed, {0xA9A0ull, static_cast<std::uint64_t>(epoch),
                                               static_cast<std::uint64_t>(idx)});
          results[b] = eval_sample(samples[idx], aug_rng);
        }
      });
      std::vector<Tensor>& acc = results[0].grads;
      for (std::size_t b = 1; b < nb; ++b)
        for (std::size_t p = 0; p < acc.size(); ++p)
          for (std::size_t i = 0; i < acc[p].size(); ++i) acc[p][i] += results[b].grads[p][i];
      const double inv = 1.0 / static_cast<double>(nb);
      for (auto& g : acc)
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= inv;
      sgd_step(params, acc, opt);
      for (const auto& r : results) {
        ep_loss += r.loss;
        ep_metric += r.metric;
      }
    }
    hist.epochs.push_back({epoch, ep_loss / static_cast<double>(n), ep_metric / static_cast<double>(n)});
  }
  return hist;
}

}  // namespace detail

// Multiclass counting head, cross-entropy on the binned count.
inline TrainHistory train_counting(CamNet& net, const std::vector<CountSample>& samples,
                                   const TrainConfig& cfg, int threads = 1) {
  if (net.head_kind() != HeadKind::kCount) throw std::logic_error("train_counting: net head is not a count head");
  if (net.num_classes() != cfg.count_bin_cap + 1) {
    throw std::invalid_argument("train_counting: head has " + std::to_string(net.num_classes()) +
                                " classes, want N+1 = " + std::to_string(cfg.count_bin_cap + 1));
  }
  return detail::run_sgd(net, samples, cfg, threads, [&](const CountSample& s, Rng& rng) {
    detail::SampleResult r;
    Tensor img = augment(s.image, s.negative, rng, cfg.augment);
    CamNet::Activations act = net.forward(img);
    LossGrad lg = softmax_cross_entropy(act.logits, s.label);
    r.loss = lg.loss;
    r.metric = CamNet::argmax_lowest(act.logits) == s.label ? 1.0 : 0.0;
    r.grads = net.backward(act, lg.grad);
    return r;
  });
}

// Multilabel identity head with weighted BCE; the caller chooses whether the
// images are proposal crops (CCR) or raw resized frames (baseline). The
// metric is mean per-class accuracy at a 0.5 sigmoid threshold.
inline TrainHistory train_recognition(CamNet& net, const std::vector<MultiLabelSample>& samples,
                                      const ClassWeights& weights, const TrainConfig& cfg,
                                      int threads = 1) {
  if (net.head_kind() != HeadKind::kMultiLabelIdentity) {
    throw std::logic_error("train_recognition: net head is not a multilabel identity head");
  }
  require_shape(weights.w, {net.num_classes()}, "train_recognition class weights");
  return detail::run_sgd(net, samples, cfg, threads, [&](const MultiLabelSample& s, Rng& rng) {
    bool negative = true;
    for (int v : s.y)
      if (v) { negative = false; break; }
    detail::SampleResult r;
    Tensor img = augment(s.image, negative, rng, cfg.augment);
    CamNet::Activations act = net.forward(img);
    LossGrad lg = weighted_bce(act.logits, s.y, weights.w);
    r.loss = lg.loss;
    int hits = 0;
    for (int i = 0; i < net.num_classes(); ++i) {
      bool pred = act.logits[static_cast<std::size_t>(i)] > 0.0;
      if (pred == (s.y[static_cast<std::size_t>(i)] != 0)) ++hits;
    }
    r.metric = static_cast<double>(hits) / net.num_classes();
    r.grads = net.backward(act, lg.grad);
    return r;
  });
}

// Single-label track-crop classifier, cross-entropy on the track identity.
inline TrainHistory train_track_classifier(CamNet& net, const std::vector<SingleLabelSample>& samples,
                                           const TrainConfig& cfg, int threads = 1) {
  if (net.head_kind() != HeadKind::kSingleLabelIdentity) {
    throw std::logic_error("train_track_classifier: net head is not a single-label identity head");
  }
  return detail::run_sgd(net, samples, cfg, threads, [&](const SingleLabelSample& s, Rng& rng) {
    detail::SampleResult r;
    Tensor img = augment(s.image, false, rng, cfg.augment);
    CamNet::Activations act = net.forward(img);
    LossGrad lg = softmax_cross_entropy(act.logits, s.label);
    r.loss = lg.loss;
    r.metric = CamNet::argmax_lowest(act.logits) == s.label ? 1.0 : 0.0;
    r.grads = net.backward(act, lg.grad);
    return r;
  });
}

}  // namespace ccr
