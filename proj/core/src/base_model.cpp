// Copyright 2026 The ProtoDA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "protoda/base_model.hpp"

#include <cmath>
#include <cstring>

#include "protoda/errors.hpp"

namespace protoda {

BackboneSpec synthetic_backbone_spec() {
  BackboneSpec spec;
  spec.stages = {
      {3, 16, 3, 1, 1, true},    // 32 -> 16
      {16, 32, 3, 1, 1, true},   // 16 -> 8
      {32, 32, 3, 1, 1, true},   // 8 -> 4
      {32, 32, 3, 1, 1, false},  // 4 -> 4
  };
  spec.addon_mid = 32;
  spec.feat_d = 32;
  spec.image_side = 32;
  return spec;
}

BackboneSpec real_backbone_spec() {
  BackboneSpec spec;
  spec.stages = {
      {3, 64, 7, 2, 3, false},    // 224 -> 112
      {64, 64, 3, 2, 1, false},   // 112 -> 56
      {64, 128, 3, 2, 1, false},  // 56 -> 28
      {128, 256, 3, 2, 1, false}, // 28 -> 14
      {256, 512, 3, 2, 1, false}, // 14 -> 7
  };
  spec.addon_mid = 256;
  spec.feat_d = 128;
  spec.image_side = 224;
  return spec;
}

// -------------------------------------------------------------- ConvStack

ConvStack::ConvStack(const std::vector<StageSpec>& stages) : specs(stages) {
  for (const auto& s : stages)
    convs.emplace_back(s.in_c, s.out_c, s.k, s.stride, s.pad);
}

void ConvStack::init_params(Rng& rng) {
  for (auto& c : convs) c.init_params(rng);
}

Chw ConvStack::forward(const Chw& x, Ctx* ctx) const {
  if (ctx) {
    ctx->conv.resize(convs.size());
    ctx->relu.resize(convs.size());
    ctx->pool.resize(convs.size());
  }
  Chw cur = x;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    cur = convs[i].forward(cur, ctx ? &ctx->conv[i] : nullptr);
    cur = nn::relu_forward(cur, ctx ? &ctx->relu[i] : nullptr);
    if (specs[i].pool)
      cur = nn::MaxPool2::forward(cur, ctx ? &ctx->pool[i] : nullptr);
  }
  return cur;
}

Chw ConvStack::backward(const Chw& g_out, Ctx& ctx) {
  Chw g = g_out;
  for (std::size_t ri = convs.size(); ri-- > 0;) {
    if (specs[ri].pool) g = nn::MaxPool2::backward(g, ctx.pool[ri]);
    g = nn::relu_backward(g, ctx.relu[ri]);
    g = convs[ri].backward(g, ctx.conv[ri]);
  }
  return g;
}

void ConvStack::zero_grad() {
  for (auto& c : convs) c.zero_grad();
}

std::vector<nn::ParamRef> ConvStack::params(const std::string& prefix) {
  std::vector<nn::ParamRef> out;
  for (std::size_t i = 0; i < convs.size(); ++i)
    for (auto& p : convs[i].params(prefix + ".s" + std::to_string(i)))
      out.push_back(p);
  return out;
}

// ------------------------------------------------------------- AddOnBlock

AddOnBlock::AddOnBlock(std::size_t in_d, std::size_t mid_d, std::size_t out_d)
    : first(in_d, mid_d), second(mid_d, out_d) {}

void AddOnBlock::init_params(Rng& rng) {
  first.init_params(rng);
  second.init_params(rng);
}

Hwc AddOnBlock::forward(const Hwc& x, Ctx* ctx) const {
  Hwc mid = first.forward(x, ctx ? &ctx->a : nullptr);
  std::vector<std::uint8_t>* mask = ctx ? &ctx->relu : nullptr;
  if (mask) mask->assign(mid.v.size(), 0);
  for (std::size_t i = 0; i < mid.v.size(); ++i) {
    if (mid.v[i] > 0) {
      if (mask) (*mask)[i] = 1;
    } else {
      mid.v[i] = 0;
    }
  }
  return second.forward(mid, ctx ? &ctx->b : nullptr);
}

Hwc AddOnBlock::backward(const Hwc& g_out, Ctx& ctx) {
  Hwc g = second.backward(g_out, ctx.b);
  for (std::size_t i = 0; i < g.v.size(); ++i)
    if (!ctx.relu[i]) g.v[i] = 0;
  return first.backward(g, ctx.a);
}

void AddOnBlock::zero_grad() {
  first.zero_grad();
  second.zero_grad();
}

std::vector<nn::ParamRef> AddOnBlock::params(const std::string& prefix) {
  std::vector<nn::ParamRef> out;
  for (auto& p : first.params(prefix + ".a")) out.push_back(p);
  for (auto& p : second.params(prefix + ".b")) out.push_back(p);
  return out;
}

// -------------------------------------------------------------- BaseModel

namespace {
constexpr std::size_t kDiscHidden = 64;
}

BaseModel::BaseModel(const BackboneSpec& spec, int n_classes, NormConsts norm,
                     std::uint64_t init_seed)
    : backbone(spec.stages),
      addon(spec.stages.back().out_c, spec.addon_mid, spec.feat_d),
      spec_(spec),
      norm_(norm),
      n_classes_(n_classes) {
  // Derive the spatial geometry from one dry run over the stage specs.
  std::size_t side = spec.image_side;
  for (const auto& s : spec.stages) {
    side = (side + 2 * s.pad - s.k) / s.stride + 1;
    if (s.pool) side /= 2;
  }
  feat_h_ = feat_w_ = side;
  backbone_d_ = spec.stages.back().out_c;

  const std::size_t flat = feat_h_ * feat_w_ * spec.feat_d;
  hf = nn::Linear(flat, static_cast<std::size_t>(n_classes));
  disc_hidden = nn::Linear(flat, kDiscHidden);
  disc_out = nn::Linear(kDiscHidden, 1);

  Rng rng(mix_seed(init_seed, /*stream=*/3));
  backbone.init_params(rng);
  addon.init_params(rng);
  hf.init_params(rng);
  disc_hidden.init_params(rng);
  disc_out.init_params(rng);
}

Chw BaseModel::image_to_input(const ImageSample& img, bool flip) const {
  if (img.side != spec_.image_side)
    throw BackboneShapeError("image side " + std::to_string(img.side) +
                             " does not match backbone input side " +
                             std::to_string(spec_.image_side));
  const int side = img.side;
  Chw x(3, side, side);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < side; ++y)
      for (int px = 0; px < side; ++px) {
        const int sx = flip ? side - 1 - px : px;
        const double v = img.at(c, y, sx) / 255.0;
        x.at(c, y, px) = (v - norm_.mean[c]) / norm_.stdev[c];
      }
  return x;
}

Hwc BaseModel::backbone_volume(const Chw& input) const {
  // Unit-norm patches keep prototype distances on the scale where the log
  // similarity stays informative.
  return nn::PatchL2Norm::forward(chw_to_hwc(backbone.forward(input, nullptr)),
                                  nullptr);
}

FeatureVolume BaseModel::features_from_backbone(const Hwc& backbone_out) const {
  return addon.forward(backbone_out, nullptr);
}

FeatureVolume BaseModel::extract_features(const ImageSample& img) const {
  if (!frozen_) throw Error("extract_features requires a frozen base model");
  FeatureVolume vol =
      features_from_backbone(backbone_volume(image_to_input(img)));
  if (vol.h != feat_h_ || vol.w != feat_w_ || vol.d != spec_.feat_d)
    throw BackboneShapeError("unexpected feature volume shape");
  return vol;
}

std::vector<double> BaseModel::classify_logits(const FeatureVolume& vol) const {
  if (vol.size() != hf.in_dim)
    throw ShapeError("feature volume does not match classifier input");
  return hf.forward(vol.v, nullptr);
}

std::vector<nn::ParamRef> BaseModel::all_params() {
  std::vector<nn::ParamRef> out = backbone.params("backbone");
  for (auto& p : addon.params("addon")) out.push_back(p);
  for (auto& p : hf.params("hf")) out.push_back(p);
  for (auto& p : disc_hidden.params("disc_hidden")) out.push_back(p);
  for (auto& p : disc_out.params("disc_out")) out.push_back(p);
  return out;
}

std::uint64_t BaseModel::param_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::vector<double>& v) {
    const auto* p = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t i = 0; i < v.size() * sizeof(double); ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& c : backbone.convs) {
    mix(c.w);
    mix(c.b);
  }
  mix(addon.first.w);
  mix(addon.first.b);
  mix(addon.second.w);
  mix(addon.second.b);
  mix(hf.w);
  mix(hf.b);
  mix(disc_hidden.w);
  mix(disc_hidden.b);
  mix(disc_out.w);
  mix(disc_out.b);
  return h;
}

// ------------------------------------------------------------- train_base

namespace {

struct FullCtx {
  ConvStack::Ctx stack;
  AddOnBlock::Ctx addon;
  nn::Linear::Ctx hf;
  nn::Linear::Ctx disc_hidden;
  nn::Linear::Ctx disc_out;
  std::vector<std::uint8_t> disc_relu;
};

double eval_accuracy(const BaseModel& model, const std::vector<ImageSample>& samples,
                     const std::vector<int>& labels) {
  if (samples.empty()) return std::nan("");
  int correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Hwc vol = model.features_from_backbone(
        model.backbone_volume(model.image_to_input(samples[i])));
    const auto logits = model.hf.forward(vol.v, nullptr);
    if (nn::argmax_tie_smallest(logits) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace

BaseModel train_base(const DomainPair& pair, const BackboneSpec& spec,
                     const BaseTrainConfig& cfg, const NormConsts& norm,
                     std::vector<BaseEpochLog>* log) {
  pair.validate();
  if (pair.n_classes() < 2)
    throw Error("base DA training needs at least 2 categories");

  BaseModel model(spec, pair.n_classes(), norm, cfg.seed);
  nn::Adam opt(cfg.lr);
  opt.attach_all(model.all_params());

  BatchStream stream(pair, cfg.batch_size, mix_seed(cfg.seed, 4), cfg.flip);
  const long steps_total =
      static_cast<long>(cfg.epochs) * stream.batches_per_epoch();
  long step = 0;

  std::vector<int> src_labels(pair.source.size());
  for (std::size_t i = 0; i < pair.source.size(); ++i)
    src_labels[i] = *pair.source[i].label;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double ep_cls = 0.0, ep_dom = 0.0;
    long ep_batches = 0;
    int train_correct = 0, train_seen = 0;
    for (const MixedBatch& batch : stream.epoch(epoch)) {
      const double progress =
          steps_total > 1 ? static_cast<double>(step) / (steps_total - 1) : 1.0;
      const nn::GradientReversal grl{
          cfg.grl_max * (2.0 / (1.0 + std::exp(-cfg.grl_gamma * progress)) - 1.0)};

      model.backbone.zero_grad();
      model.addon.zero_grad();
      model.hf.zero_grad();
      model.disc_hidden.zero_grad();
      model.disc_out.zero_grad();

      const std::size_t n_src = batch.src.idx.size();
      const std::size_t n_tgt = batch.tgt.idx.size();
      const double inv_src = 1.0 / static_cast<double>(n_src);
      const double inv_dom = 1.0 / static_cast<double>(n_src + n_tgt);

      double batch_cls = 0.0, batch_dom = 0.0;

      auto run_sample = [&](const ImageSample& img, bool flip,
                            const std::optional<int>& label, double domain_lbl) {
        FullCtx ctx;
        const Chw input = model.image_to_input(img, flip);
        const Chw feat_chw = model.backbone.forward(input, &ctx.stack);
        nn::PatchL2Norm::Ctx norm_ctx;
        const Hwc backbone_out =
            nn::PatchL2Norm::forward(chw_to_hwc(feat_chw), &norm_ctx);
        AddOnBlock::Ctx addon_ctx;
        const Hwc vol = model.addon.forward(backbone_out, &addon_ctx);

        std::vector<double> g_vol(vol.size(), 0.0);

        if (label) {
          const auto logits = model.hf.forward(vol.v, &ctx.hf);
          std::vector<double> dlogits;
          batch_cls += nn::cross_entropy(logits, *label, &dlogits) * inv_src;
          for (auto& g : dlogits) g *= inv_src;
          const auto g_from_hf = model.hf.backward(dlogits, ctx.hf);
          for (std::size_t i = 0; i < g_vol.size(); ++i) g_vol[i] += g_from_hf[i];
          if (nn::argmax_tie_smallest(logits) == *label) ++train_correct;
          ++train_seen;
        }

        // Domain head; reversal flips the gradient entering the extractor.
        const auto hidden_raw = model.disc_hidden.forward(vol.v, &ctx.disc_hidden);
        const auto hidden = nn::relu_forward_vec(hidden_raw, &ctx.disc_relu);
        const auto dom_logit = model.disc_out.forward(hidden, &ctx.disc_out);
        double dz = 0.0;
        batch_dom += nn::bce_with_logit(dom_logit[0], domain_lbl, &dz) * inv_dom;
        const std::vector<double> g_dom{dz * inv_dom};
        auto g_hidden = model.disc_out.backward(g_dom, ctx.disc_out);
        g_hidden = nn::relu_backward_vec(g_hidden, ctx.disc_relu);
        const auto g_vol_disc_raw = model.disc_hidden.backward(g_hidden, ctx.disc_hidden);
        const auto g_vol_disc = grl.backward(g_vol_disc_raw);
        for (std::size_t i = 0; i < g_vol.size(); ++i) g_vol[i] += g_vol_disc[i];

        Hwc g_vol_hwc(vol.h, vol.w, vol.d);
        g_vol_hwc.v = std::move(g_vol);
        const Hwc g_normed = model.addon.backward(g_vol_hwc, addon_ctx);
        const Hwc g_backbone = nn::PatchL2Norm::backward(g_normed, norm_ctx);
        model.backbone.backward(hwc_to_chw(g_backbone), ctx.stack);
      };

      for (std::size_t i = 0; i < n_src; ++i) {
        const auto& img = pair.source[batch.src.idx[i]];
        run_sample(img, batch.src.flip[i] != 0, img.label, 0.0);
      }
      for (std::size_t i = 0; i < n_tgt; ++i) {
        const auto& img = pair.target[batch.tgt.idx[i]];
        run_sample(img, batch.tgt.flip[i] != 0, std::nullopt, 1.0);
      }

      if (!std::isfinite(batch_cls) || !std::isfinite(batch_dom))
        throw TrainingDiverged("non-finite base training loss", step);

      opt.step(1.0);  // per-sample grads already carry the batch means
      ep_cls += batch_cls;
      ep_dom += batch_dom;
      ++ep_batches;
      ++step;
    }

    if (log) {
      BaseEpochLog row;
      row.epoch = epoch;
      row.cls_loss = ep_cls / ep_batches;
      row.dom_loss = ep_dom / ep_batches;
      row.src_acc = static_cast<double>(train_correct) /
                    std::max(1, train_seen);
      row.tgt_acc = pair.has_eval_target_labels()
                        ? eval_accuracy(model, pair.target,
                                        pair.eval_only_target_labels())
                        : std::nan("");
      log->push_back(row);
    }
  }

  model.freeze();
  return model;
}

// ------------------------------------------------------------ pseudo_label

const PseudoEntry& PseudoLabels::at(const std::string& id) const {
  auto it = by_id.find(id);
  if (it == by_id.end()) throw CacheMiss("no cached pseudo-label for " + id);
  return it->second;
}

PseudoLabels pseudo_label(const BaseModel& model, const DomainPair& pair,
                          bool with_flip_variants) {
  if (!model.frozen()) throw Error("pseudo_label requires a frozen base model");
  PseudoLabels out;
  auto add = [&](const ImageSample& img, Domain domain) {
    const auto process = [&](bool flip, const std::string& key) {
      const Hwc vol = model.features_from_backbone(
          model.backbone_volume(model.image_to_input(img, flip)));
      PseudoEntry e;
      e.q = nn::softmax(model.classify_logits(vol));
      e.yhat = nn::argmax_tie_smallest(e.q);
      e.domain = domain;
      out.by_id.emplace(key, std::move(e));
    };
    process(false, img.id);
    if (with_flip_variants) process(true, PseudoLabels::flip_key(img.id));
  };
  for (const auto& s : pair.source) add(s, Domain::source);
  for (const auto& t : pair.target) add(t, Domain::target);
  return out;
}

}  // namespace protoda
