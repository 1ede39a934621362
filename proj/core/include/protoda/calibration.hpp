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

#ifndef PROTODA_CALIBRATION_HPP
#define PROTODA_CALIBRATION_HPP

#include <set>
#include <string>
#include <vector>

#include "protoda/base_model.hpp"
#include "protoda/protolayer.hpp"

namespace protoda {

/// Linear head over similarity scores: logits = W^T s, W is (c*K) x c.
class PrototypicalHead {
 public:
  PrototypicalHead() = default;
  PrototypicalHead(int n_protos, int n_classes);

  int n_protos() const { return n_protos_; }
  int n_classes() const { return n_classes_; }

  double weight(int proto, int klass) const {
    return w_[proto * n_classes_ + klass];
  }
  double& weight(int proto, int klass) { return w_[proto * n_classes_ + klass]; }
  std::vector<double>& raw() { return w_; }
  const std::vector<double>& raw() const { return w_; }

  std::vector<double> logits(const std::vector<double>& scores) const;

  /// Masked logits are computed as full logits minus each masked row's
  /// contribution, so the linear decomposition holds bit-exactly.
  std::vector<double> logits_masked(const std::vector<double>& scores,
                                    const std::set<int>& masked) const;

 private:
  int n_protos_ = 0, n_classes_ = 0;
  std::vector<double> w_;  // row-major (proto, class)
};

/// Warm-start weights: 1.0 from each prototype to its assigned category,
/// -0.5 everywhere else.
PrototypicalHead init_head(const PrototypeBank& bank);

/// One domain's score batch with sample identities, so the losses can fetch
/// cached base-model outputs and enforce domain preconditions.
struct ScoreBatch {
  std::vector<std::vector<double>> scores;  // per-sample c*K activations
  std::vector<std::string> ids;             // pseudo-label cache keys
};

/// Pseudo-label cross entropy: mean source CE + target_weight * mean target
/// CE against the cached base-model hard labels.
double calibration_loss(const ScoreBatch& source, const ScoreBatch& target,
                        const PrototypicalHead& head, const PseudoLabels& pseudo,
                        double target_weight = 1.0);

/// L1 distance between head softmax and cached base softmax, mean over the
/// target batch. Every id must resolve to a target-domain cache entry.
double fidelity_loss(const ScoreBatch& target, const PrototypicalHead& head,
                     const PseudoLabels& pseudo);

/// Gradient-carrying variants. grad_scores, when non-null, receives
/// dL/d(score) per sample; grad_w receives dL/dW (same layout as the head).
double calibration_loss_grad(const ScoreBatch& source, const ScoreBatch& target,
                             const PrototypicalHead& head,
                             const PseudoLabels& pseudo, double target_weight,
                             std::vector<std::vector<double>>* grad_scores_src,
                             std::vector<std::vector<double>>* grad_scores_tgt,
                             std::vector<double>* grad_w);
double fidelity_loss_grad(const ScoreBatch& target, const PrototypicalHead& head,
                          const PseudoLabels& pseudo,
                          std::vector<std::vector<double>>* grad_scores,
                          std::vector<double>* grad_w);

}  // namespace protoda

#endif  // PROTODA_CALIBRATION_HPP
