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

#ifndef PROTODA_PROTOLAYER_HPP
#define PROTODA_PROTOLAYER_HPP

#include <optional>
#include <string>
#include <vector>

#include "protoda/base_model.hpp"

namespace protoda {

constexpr double kDefaultSimEpsilon = 1e-4;

/// Where a prototype landed at its last projection.
struct Provenance {
  std::string sample_id;
  int sample_index = -1;  // index into the projection's source set
  int row = 0, col = 0;
  double distance = 0.0;
};

/// c*K prototype vectors, each 1x1xD, with fixed category ownership:
/// prototype j belongs to class j / K.
class PrototypeBank {
 public:
  PrototypeBank() = default;
  PrototypeBank(int n_classes, int k_per_class, int dim);

  int n_classes() const { return n_classes_; }
  int k_per_class() const { return k_per_class_; }
  int dim() const { return dim_; }
  int size() const { return n_classes_ * k_per_class_; }

  int class_of(int proto) const { return assignment_[proto]; }
  int first_of_class(int klass) const { return klass * k_per_class_; }

  double* vec(int proto) { return vectors_.data() + proto * dim_; }
  const double* vec(int proto) const { return vectors_.data() + proto * dim_; }
  std::vector<double>& raw() { return vectors_; }
  const std::vector<double>& raw() const { return vectors_; }

  const std::vector<int>& assignment() const { return assignment_; }
  std::vector<std::optional<Provenance>>& provenance() { return provenance_; }
  const std::vector<std::optional<Provenance>>& provenance() const {
    return provenance_;
  }

  /// Checks the class partition: exactly K prototypes per category.
  void validate() const;

  /// Fills the bank with K distinct random latent patches per class, drawn
  /// from the given source volumes.
  void init_from_patches(const std::vector<FeatureVolume>& volumes,
                         const std::vector<int>& labels, Rng& rng);

 private:
  int n_classes_ = 0, k_per_class_ = 0, dim_ = 0;
  std::vector<double> vectors_;
  std::vector<int> assignment_;
  std::vector<std::optional<Provenance>> provenance_;
};

/// Per-prototype squared L2 minima over the volume's patches, with the
/// winning location. Ties resolve to the first patch in row-major order.
struct MinDistances {
  std::vector<double> dist2;
  std::vector<int> row, col;
};

MinDistances min_distances(const FeatureVolume& volume,
                           const PrototypeBank& bank);

/// Similarity activation: log((d + 1) / (d + eps)). Strictly decreasing in
/// the squared distance; log(1/eps) at zero.
double similarity(double dist2, double eps = kDefaultSimEpsilon);
double similarity_grad(double dist2, double eps = kDefaultSimEpsilon);

/// Activation vector g(f(x)) plus the underlying distances.
struct SimilarityScores {
  std::vector<double> score;
  MinDistances dist;
};

SimilarityScores similarity_scores(const FeatureVolume& volume,
                                   const PrototypeBank& bank,
                                   double eps = kDefaultSimEpsilon);

/// Mean over source samples of the smallest squared distance between the
/// sample's patches and its own class's prototypes.
double cluster_loss(const std::vector<FeatureVolume>& volumes,
                    const std::vector<int>& labels, const PrototypeBank& bank);

/// Negated mean over source samples of the smallest squared distance to any
/// wrong-class prototype. Always <= 0; requires >= 2 categories.
double separation_loss(const std::vector<FeatureVolume>& volumes,
                       const std::vector<int>& labels,
                       const PrototypeBank& bank);

/// Loss values together with analytic gradients. Gradients route through
/// the winning (prototype, patch) pair only, the min-pooling convention.
/// grad_volumes may be null; grad_prototypes may be null.
double cluster_loss_grad(const std::vector<FeatureVolume>& volumes,
                         const std::vector<int>& labels,
                         const PrototypeBank& bank,
                         std::vector<FeatureVolume>* grad_volumes,
                         std::vector<double>* grad_prototypes);
double separation_loss_grad(const std::vector<FeatureVolume>& volumes,
                            const std::vector<int>& labels,
                            const PrototypeBank& bank,
                            std::vector<FeatureVolume>* grad_volumes,
                            std::vector<double>* grad_prototypes);

struct ProjectionReport {
  std::vector<double> movement;  // L2 moved per prototype
  double total_movement = 0.0;
};

/// Replaces every prototype with its nearest same-class source patch
/// (bit-exact copy) and records provenance. Idempotent.
ProjectionReport project_prototypes(PrototypeBank& bank,
                                    const std::vector<FeatureVolume>& volumes,
                                    const std::vector<int>& labels,
                                    const std::vector<std::string>& sample_ids);

}  // namespace protoda

#endif  // PROTODA_PROTOLAYER_HPP
