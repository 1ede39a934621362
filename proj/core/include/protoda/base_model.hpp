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

#ifndef PROTODA_BASE_MODEL_HPP
#define PROTODA_BASE_MODEL_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "protoda/datasets.hpp"
#include "protoda/image.hpp"
#include "protoda/nn.hpp"
#include "protoda/tensor.hpp"

namespace protoda {

/// H x W x D activation grid for one image, patch-major.
using FeatureVolume = Hwc;

/// Per-channel input normalization constants: (v/255 - mean) / std.
struct NormConsts {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stdev{0.5, 0.5, 0.5};
};

struct StageSpec {
  std::size_t in_c, out_c, k, stride, pad;
  bool pool;  // 2x2 max pool after the relu
};

/// Geometry of one backbone family plus its channel-reduction add-on.
struct BackboneSpec {
  std::vector<StageSpec> stages;
  std::size_t addon_mid = 0;  // hidden width of the two 1x1 convs
  std::size_t feat_d = 0;     // add-on output depth D
  int image_side = 0;
};

/// Small 4-block CNN: 32x32 input -> 4x4x32 feature volume.
BackboneSpec synthetic_backbone_spec();
/// Strided stack for 224x224 input -> 7x7x512, reduced to 7x7x128 by the
/// add-on (512 -> 256 -> 128, relu between, no output nonlinearity).
BackboneSpec real_backbone_spec();

/// Plain sequential conv stack: conv + relu (+ optional pool) per stage.
class ConvStack {
 public:
  struct Ctx {
    std::vector<nn::Conv2d::Ctx> conv;
    std::vector<std::vector<std::uint8_t>> relu;
    std::vector<nn::MaxPool2::Ctx> pool;
  };

  ConvStack() = default;
  explicit ConvStack(const std::vector<StageSpec>& stages);
  void init_params(Rng& rng);
  Chw forward(const Chw& x, Ctx* ctx) const;
  Chw backward(const Chw& g_out, Ctx& ctx);
  void zero_grad();
  std::vector<nn::ParamRef> params(const std::string& prefix);

  std::vector<StageSpec> specs;
  std::vector<nn::Conv2d> convs;
};

/// Two 1x1 convolutions with a relu in between, applied patch-wise.
class AddOnBlock {
 public:
  struct Ctx {
    nn::PatchLinear::Ctx a, b;
    std::vector<std::uint8_t> relu;
  };

  AddOnBlock() = default;
  AddOnBlock(std::size_t in_d, std::size_t mid_d, std::size_t out_d);
  void init_params(Rng& rng);
  Hwc forward(const Hwc& x, Ctx* ctx) const;
  Hwc backward(const Hwc& g_out, Ctx& ctx);
  void zero_grad();
  std::vector<nn::ParamRef> params(const std::string& prefix);

  nn::PatchLinear first, second;
};

/// Frozen product of base DA training: feature extractor (backbone +
/// add-on), feature classifier h_f, and the domain discriminator used
/// during training.
class BaseModel {
 public:
  BaseModel() = default;
  BaseModel(const BackboneSpec& spec, int n_classes, NormConsts norm,
            std::uint64_t init_seed);

  /// Normalized CHW input for an image (optionally mirrored).
  Chw image_to_input(const ImageSample& img, bool flip = false) const;

  /// Backbone output before the add-on block, patch-major.
  Hwc backbone_volume(const Chw& input) const;

  /// Full extractor output f(x) = addon(backbone(x)). Requires a frozen
  /// model; deterministic.
  FeatureVolume extract_features(const ImageSample& img) const;
  FeatureVolume features_from_backbone(const Hwc& backbone_out) const;

  /// h_f logits from a feature volume.
  std::vector<double> classify_logits(const FeatureVolume& vol) const;

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  std::uint64_t param_hash() const;
  std::vector<nn::ParamRef> all_params();

  // Geometry.
  int image_side() const { return spec_.image_side; }
  int n_classes() const { return n_classes_; }
  std::size_t feat_h() const { return feat_h_; }
  std::size_t feat_w() const { return feat_w_; }
  std::size_t feat_d() const { return spec_.feat_d; }
  std::size_t backbone_d() const { return backbone_d_; }
  const BackboneSpec& spec() const { return spec_; }
  const NormConsts& norm() const { return norm_; }

  ConvStack backbone;
  AddOnBlock addon;
  nn::Linear hf;           // flatten(feature volume) -> c logits
  nn::Linear disc_hidden;  // flatten -> 64
  nn::Linear disc_out;     // 64 -> 1 domain logit

 private:
  friend class Checkpoint;
  BackboneSpec spec_;
  NormConsts norm_;
  int n_classes_ = 0;
  std::size_t feat_h_ = 0, feat_w_ = 0, backbone_d_ = 0;
  bool frozen_ = false;
};

struct BaseTrainConfig {
  int epochs = 30;
  double lr = 1e-3;
  int batch_size = 32;
  bool flip = true;
  double grl_max = 1.0;    // reversal coefficient ceiling
  double grl_gamma = 10.0; // schedule sharpness over training progress
  std::uint64_t seed = 0;
  std::string optimizer = "adam";
};

struct BaseEpochLog {
  int epoch;
  double cls_loss, dom_loss;
  double src_acc;
  double tgt_acc;  // NaN when no eval labels exist
};

/// DANN-style base training: source cross-entropy plus adversarial domain
/// confusion through the gradient-reversal layer. Returns a frozen model.
BaseModel train_base(const DomainPair& pair, const BackboneSpec& spec,
                     const BaseTrainConfig& cfg, const NormConsts& norm,
                     std::vector<BaseEpochLog>* log = nullptr);

struct PseudoEntry {
  int yhat = 0;
  std::vector<double> q;  // softmax of h_f
  Domain domain = Domain::source;
};

/// Base-classifier predictions cached for the whole interpretive phase.
/// Keys are sample ids; mirrored variants (only present when requested)
/// use id + "#flip".
struct PseudoLabels {
  std::unordered_map<std::string, PseudoEntry> by_id;
  const PseudoEntry& at(const std::string& id) const;
  static std::string flip_key(const std::string& id) { return id + "#flip"; }
};

PseudoLabels pseudo_label(const BaseModel& model, const DomainPair& pair,
                          bool with_flip_variants = false);

}  // namespace protoda

#endif  // PROTODA_BASE_MODEL_HPP
