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

#ifndef PROTODA_DATASETS_HPP
#define PROTODA_DATASETS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "protoda/image.hpp"

namespace protoda {

/// Controls how the target domain differs from the source in the synthetic
/// benchmark. All-zero shift reproduces the source pixels exactly.
struct TargetShift {
  double hue_deg = 0.0;     // hue rotation applied to the whole image
  double noise_sigma = 0.0; // additive gaussian noise, 8-bit scale
  bool texture = false;     // checkerboard texture over the background
};

struct SyntheticSpec {
  int n_classes = 5;
  int per_class = 40;
  std::uint64_t seed = 7;
  TargetShift target_shift;
  int side = 32;
};

/// Loads `<root>/<category>/<image>.{png,jpg,...}` trees for both domains.
/// Category sets must match exactly; images are ordered lexicographically
/// by path and resized to `side`.
DomainPair load_directory_pair(const std::string& source_root,
                               const std::string& target_root, int side = 224);

/// Deterministic two-domain shape benchmark. Target sample i of class k
/// renders the same latent draw as source sample i, then applies the spec's
/// shift, so an all-zero shift yields byte-identical domains.
DomainPair generate_synthetic_pair(const SyntheticSpec& spec);

/// Index block for one domain inside a mixed batch.
struct SubBatch {
  std::vector<int> idx;            // indices into DomainPair::{source,target}
  std::vector<std::uint8_t> flip;  // 1 = horizontally mirrored this epoch
};

struct MixedBatch {
  SubBatch src;
  SubBatch tgt;
};

/// Seeded epoch iterator. Every epoch covers the domain with more steps
/// exactly once (fresh permutation); the other domain's permutation is
/// cycled within the epoch so every batch carries both domains. When the
/// domains have equal step counts -- the default synthetic setup -- each
/// epoch therefore yields every sample of both domains exactly once.
/// Flip flags are re-drawn per epoch from the seeded stream.
class BatchStream {
 public:
  /// `batch_size` is the source sub-batch size; the target sub-batch holds
  /// round(batch_size * mix) samples (mix defaults to 1:1).
  BatchStream(const DomainPair& pair, int batch_size, std::uint64_t seed,
              bool flip, double mix = 1.0);

  std::vector<MixedBatch> epoch(int epoch_index) const;
  int batches_per_epoch() const { return steps_; }
  int source_sub() const { return bs_src_; }
  int target_sub() const { return bs_tgt_; }

 private:
  const DomainPair* pair_;
  int bs_src_, bs_tgt_, steps_;
  std::uint64_t seed_;
  bool flip_;
};

}  // namespace protoda

#endif  // PROTODA_DATASETS_HPP
