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

#ifndef PROTODA_EXPLAIN_HPP
#define PROTODA_EXPLAIN_HPP

#include <optional>
#include <string>
#include <vector>

#include "protoda/trainer.hpp"

namespace protoda {

/// Similarity activations of one (image, prototype) pair over the feature
/// grid, plus the bilinear upsampling to image resolution.
struct HeatMap {
  Mat grid;       // feat_h x feat_w
  Mat upsampled;  // side x side
};

/// Smallest axis-aligned rectangle (inclusive pixel bounds) containing every
/// upsampled-heatmap pixel at or above the 95th percentile.
struct PatchBox {
  int top = 0, left = 0, bottom = 0, right = 0;
  double peak_value = 0.0;
};

struct MatchExample {
  std::string sample_id;
  int sample_index = -1;
  PatchBox box;
  double score = 0.0;
  std::optional<bool> mismatch;  // set only where ground-truth masks exist
};

/// One prototype's visual matches: its source anchor (projection patch) and
/// the top-m examples per domain, sorted by descending similarity.
struct CrossDomainMatch {
  int prototype_id = -1;
  int category = -1;
  std::string anchor_sample_id;
  int anchor_index = -1;
  PatchBox anchor_box;
  std::vector<MatchExample> sources;
  std::vector<MatchExample> targets;
};

HeatMap heatmap(const InterpretiveModel& model, const ImageSample& image,
                int prototype_id);

/// Grid math on an already-extracted volume; heatmap() delegates here.
HeatMap heatmap_from_volume(const FeatureVolume& vol, const double* prototype,
                            int dim, int side,
                            double eps = kDefaultSimEpsilon);

Mat upsample_bilinear(const Mat& grid, int side);

/// Nearest-rank percentile (q in [0,1]) of the given values.
double percentile_nearest_rank(std::vector<double> values, double q);

PatchBox bbox(const HeatMap& heat);

/// Intersection-over-union of a box with a binary mask, in image space.
double box_mask_iou(const PatchBox& box, const std::vector<std::uint8_t>& mask,
                    int side);

/// Matches for every prototype of one category. Target membership follows
/// pseudo-labels; mismatch flags are filled only for synthetic data (mask
/// IoU below tau). Emits a warning and an empty target list when no target
/// sample is pseudo-labeled with the category.
std::vector<CrossDomainMatch> match_cross_domain(const InterpretiveModel& model,
                                                 const DomainPair& pair,
                                                 int category, int m,
                                                 double tau = 0.1);

struct ReportOptions {
  int top_m = 3;
  double tau = 0.1;
};

/// Writes the full report bundle:
///   out_dir/index.html
///   out_dir/matches.json
///   out_dir/<category>/panel.png
///   out_dir/<category>/proto_<j>/card.png
///   out_dir/<category>/proto_<j>/{source|target}_<rank>.png
void emit_report(const InterpretiveModel& model, const DomainPair& pair,
                 const std::string& out_dir, const ReportOptions& opts = {});

}  // namespace protoda

#endif  // PROTODA_EXPLAIN_HPP
