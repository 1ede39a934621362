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

#ifndef PROTODA_INSPECT_HPP
#define PROTODA_INSPECT_HPP

#include <set>
#include <string>
#include <vector>

#include "protoda/trainer.hpp"

namespace protoda {

struct SpearmanResult {
  double rho = 0.0;  // NaN when undefined
  bool defined = false;
  std::string reason;  // set when undefined
};

/// Average-rank transform followed by Pearson correlation. Undefined (NaN
/// with reason) when either sequence has zero rank variance.
SpearmanResult spearman(const std::vector<double>& a,
                        const std::vector<double>& b);

/// The category's K prototype ids sorted by descending head weight into the
/// category; ties break toward the smaller prototype index.
std::vector<int> rank_prototypes(const InterpretiveModel& model, int category);

/// Non-destructive masked view of the head: masked prototypes contribute
/// nothing to the logits. Masking the same id twice is a no-op.
class MaskedView {
 public:
  explicit MaskedView(const InterpretiveModel& model) : model_(&model) {}

  void mask(int prototype_id);
  const std::set<int>& masked() const { return masked_; }

  std::vector<double> logits(const std::vector<double>& scores) const;
  int predict(const std::vector<double>& scores) const;

 private:
  const InterpretiveModel* model_;
  std::set<int> masked_;
};

struct RemovalStep {
  std::vector<int> removed;  // prototypes newly masked at this step
  double acc_source = 0.0;
  double acc_target = 0.0;
};

struct RemovalCurve {
  std::string scope;  // "all" or a category name
  bool cumulative = true;
  std::vector<RemovalStep> steps;  // step 0 is the no-removal baseline
  SpearmanResult correlation;      // over per-step drops of the two domains
};

/// Masks ranked prototypes step by step (cumulative by default) and records
/// both domains' accuracies. category = -1 sweeps all classes round-robin:
/// step t removes the rank-t prototype of every class. Single-category
/// sweeps report that category's per-class accuracy; the all-classes sweep
/// reports overall accuracy. Requires eval-only target labels.
RemovalCurve removal_sweep(const InterpretiveModel& model,
                           const DomainPair& pair, int category = -1,
                           bool cumulative = true);

/// curve.csv, summary.json and curve.png under dir.
void write_removal_curve(const RemovalCurve& curve, const std::string& dir);

struct AblationResult {
  InterpretiveModel full;     // gamma as configured
  InterpretiveModel no_fid;   // gamma = 0, same seed
  Metrics full_metrics;
  Metrics no_fid_metrics;
};

/// Trains the protocol twice (with and without the fidelity term) from the
/// same seed and reports both. The gamma=0 run still logs L_Fid.
AblationResult fidelity_ablation(const BaseModel& base, const DomainPair& pair,
                                 const TrainConfig& cfg,
                                 const std::string& out_dir = "");

}  // namespace protoda

#endif  // PROTODA_INSPECT_HPP
