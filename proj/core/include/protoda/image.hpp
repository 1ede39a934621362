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

#ifndef PROTODA_IMAGE_HPP
#define PROTODA_IMAGE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "protoda/errors.hpp"

namespace protoda {

enum class Domain { source, target };

/// One image. Pixels are raw 8-bit RGB, planar channel order (R plane,
/// G plane, B plane), each plane side*side. Model-facing normalization
/// ((v/255 - mean)/std, per channel) happens at the network boundary with
/// constants carried in the config.
struct ImageSample {
  std::string id;
  int side = 0;
  std::vector<std::uint8_t> pixels;  // 3 * side * side, planar RGB
  std::optional<int> label;          // target samples never expose one here
  Domain domain = Domain::source;

  std::uint8_t at(int channel, int y, int x) const {
    return pixels[(channel * side + y) * side + x];
  }
  std::uint8_t& at(int channel, int y, int x) {
    return pixels[(channel * side + y) * side + x];
  }
  ImageSample hflip() const;
};

/// Two-domain dataset for one closed-set adaptation task. Target ground
/// truth, when the data carries it, lives only behind the eval-only
/// accessor; targets' ImageSample::label stays empty so no training path
/// can ever read it by accident.
struct DomainPair {
  std::vector<ImageSample> source;
  std::vector<ImageSample> target;
  std::vector<std::string> categories;

  /// Binary foreground masks, synthetic data only (side*side per sample,
  /// 0 = background, 1 = shape). Empty for real data.
  std::vector<std::vector<std::uint8_t>> source_masks;
  std::vector<std::vector<std::uint8_t>> target_masks;

  std::size_t n_source() const { return source.size(); }
  std::size_t n_target() const { return target.size(); }
  int n_classes() const { return static_cast<int>(categories.size()); }

  bool has_eval_target_labels() const { return !eval_target_labels_.empty(); }
  /// Held-out target ground truth. Evaluation only; never feed into a loss.
  const std::vector<int>& eval_only_target_labels() const;
  void set_eval_target_labels(std::vector<int> labels);

  /// Enforces the structural invariants (label range, category coverage,
  /// source labels present). Throws on violation.
  void validate() const;

  /// Stable digest of ids/shapes/labels, used to pair checkpoints with the
  /// dataset they were trained on.
  std::uint64_t fingerprint() const;

 private:
  std::vector<int> eval_target_labels_;
};

}  // namespace protoda

#endif  // PROTODA_IMAGE_HPP
