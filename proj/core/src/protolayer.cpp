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

#include "protoda/protolayer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "protoda/errors.hpp"

namespace protoda {

PrototypeBank::PrototypeBank(int n_classes, int k_per_class, int dim)
    : n_classes_(n_classes), k_per_class_(k_per_class), dim_(dim) {
  if (n_classes < 1 || k_per_class < 1 || dim < 1)
    throw AssignmentError("prototype bank needs positive (c, K, D)");
  vectors_.assign(static_cast<std::size_t>(size()) * dim_, 0.0);
  assignment_.resize(size());
  for (int j = 0; j < size(); ++j) assignment_[j] = j / k_per_class_;
  provenance_.assign(size(), std::nullopt);
}

void PrototypeBank::validate() const {
  std::vector<int> counts(n_classes_, 0);
  for (int j = 0; j < size(); ++j) {
    if (assignment_[j] < 0 || assignment_[j] >= n_classes_)
      throw AssignmentError("prototype assigned to unknown category");
    ++counts[assignment_[j]];
  }
  for (int k = 0; k < n_classes_; ++k)
    if (counts[k] != k_per_class_)
      throw AssignmentError("category " + std::to_string(k) + " owns " +
                            std::to_string(counts[k]) + " prototypes, expected " +
                            std::to_string(k_per_class_));
}

void PrototypeBank::init_from_patches(const std::vector<FeatureVolume>& volumes,
                                      const std::vector<int>& labels, Rng& rng) {
  for (int k = 0; k < n_classes_; ++k) {
    // All (sample, row, col) patches of class k.
    std::vector<std::array<int, 3>> pool;
    for (std::size_t i = 0; i < volumes.size(); ++i) {
      if (labels[i] != k) continue;
      for (std::size_t y = 0; y < volumes[i].h; ++y)
        for (std::size_t x = 0; x < volumes[i].w; ++x)
          pool.push_back({static_cast<int>(i), static_cast<int>(y),
                          static_cast<int>(x)});
    }
    if (pool.empty())
      throw EmptyClassError("no source patches for category " + std::to_string(k));
    std::shuffle(pool.begin(), pool.end(), rng);
    for (int j = 0; j < k_per_class_; ++j) {
      const auto& pick = pool[j % pool.size()];
      const double* patch = volumes[pick[0]].patch(pick[1], pick[2]);
      std::copy(patch, patch + dim_, vec(first_of_class(k) + j));
    }
  }
}

MinDistances min_distances(const FeatureVolume& volume,
                           const PrototypeBank& bank) {
  if (static_cast<int>(volume.d) != bank.dim())
    throw ShapeError("feature depth does not match prototype dimension");
  const int n = bank.size();
  MinDistances out;
  out.dist2.assign(n, std::numeric_limits<double>::infinity());
  out.row.assign(n, 0);
  out.col.assign(n, 0);
  const int d = bank.dim();
  for (int j = 0; j < n; ++j) {
    const double* p = bank.vec(j);
    double best = std::numeric_limits<double>::infinity();
    int br = 0, bc = 0;
    for (std::size_t y = 0; y < volume.h; ++y)
      for (std::size_t x = 0; x < volume.w; ++x) {
        const double* z = volume.patch(y, x);
        double acc = 0.0;
        for (int i = 0; i < d; ++i) {
          const double diff = z[i] - p[i];
          acc += diff * diff;
        }
        if (acc < best) {  // strict: first patch in row-major order wins ties
          best = acc;
          br = static_cast<int>(y);
          bc = static_cast<int>(x);
        }
      }
    out.dist2[j] = best;
    out.row[j] = br;
    out.col[j] = bc;
  }
  return out;
}

double similarity(double dist2, double eps) {
  if (dist2 < 0) throw DomainError("similarity needs a non-negative distance");
  return std::log((dist2 + 1.0) / (dist2 + eps));
}

double similarity_grad(double dist2, double eps) {
  if (dist2 < 0) throw DomainError("similarity needs a non-negative distance");
  return 1.0 / (dist2 + 1.0) - 1.0 / (dist2 + eps);
}

SimilarityScores similarity_scores(const FeatureVolume& volume,
                                   const PrototypeBank& bank, double eps) {
  SimilarityScores out;
  out.dist = min_distances(volume, bank);
  out.score.resize(out.dist.dist2.size());
  for (std::size_t j = 0; j < out.score.size(); ++j)
    out.score[j] = similarity(out.dist.dist2[j], eps);
  return out;
}

namespace {

enum class Side { own, other };

// Shared core of the clustering/separation losses: per sample, the minimum
// over the selected prototype subset of the min-over-patches distance.
double class_min_loss(const std::vector<FeatureVolume>& volumes,
                      const std::vector<int>& labels, const PrototypeBank& bank,
                      Side side, std::vector<FeatureVolume>* grad_volumes,
                      std::vector<double>* grad_prototypes, double sign) {
  if (volumes.size() != labels.size())
    throw ShapeError("volume/label count mismatch");
  if (volumes.empty()) throw ShapeError("empty batch");
  bank.validate();
  if (side == Side::other && bank.n_classes() < 2)
    throw AssignmentError("separation loss needs at least 2 categories");
  for (int lbl : labels)
    if (lbl < 0 || lbl >= bank.n_classes())
      throw AssignmentError("label outside the bank's categories");

  if (grad_volumes) {
    grad_volumes->clear();
    for (const auto& v : volumes) grad_volumes->emplace_back(v.h, v.w, v.d);
  }
  if (grad_prototypes) grad_prototypes->assign(bank.raw().size(), 0.0);

  const int d = bank.dim();
  const double inv_n = 1.0 / static_cast<double>(volumes.size());
  double total = 0.0;
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    const MinDistances md = min_distances(volumes[i], bank);
    double best = std::numeric_limits<double>::infinity();
    int best_j = -1;
    for (int j = 0; j < bank.size(); ++j) {
      const bool own = bank.class_of(j) == labels[i];
      if ((side == Side::own) != own) continue;
      if (md.dist2[j] < best) {
        best = md.dist2[j];
        best_j = j;
      }
    }
    if (best_j < 0) throw AssignmentError("no eligible prototype for sample");
    total += best;

    if (grad_volumes || grad_prototypes) {
      const double* z = volumes[i].patch(md.row[best_j], md.col[best_j]);
      const double* p = bank.vec(best_j);
      double* gz = grad_volumes
                       ? (*grad_volumes)[i].patch(md.row[best_j], md.col[best_j])
                       : nullptr;
      double* gp = grad_prototypes
                       ? grad_prototypes->data() + static_cast<std::size_t>(best_j) * d
                       : nullptr;
      for (int t = 0; t < d; ++t) {
        const double g = sign * inv_n * 2.0 * (z[t] - p[t]);
        if (gz) gz[t] += g;
        if (gp) gp[t] -= g;
      }
    }
  }
  return sign * total * inv_n;
}

}  // namespace

double cluster_loss(const std::vector<FeatureVolume>& volumes,
                    const std::vector<int>& labels, const PrototypeBank& bank) {
  return class_min_loss(volumes, labels, bank, Side::own, nullptr, nullptr, 1.0);
}

double separation_loss(const std::vector<FeatureVolume>& volumes,
                       const std::vector<int>& labels,
                       const PrototypeBank& bank) {
  return class_min_loss(volumes, labels, bank, Side::other, nullptr, nullptr,
                        -1.0);
}

double cluster_loss_grad(const std::vector<FeatureVolume>& volumes,
                         const std::vector<int>& labels,
                         const PrototypeBank& bank,
                         std::vector<FeatureVolume>* grad_volumes,
                         std::vector<double>* grad_prototypes) {
  return class_min_loss(volumes, labels, bank, Side::own, grad_volumes,
                        grad_prototypes, 1.0);
}

double separation_loss_grad(const std::vector<FeatureVolume>& volumes,
                            const std::vector<int>& labels,
                            const PrototypeBank& bank,
                            std::vector<FeatureVolume>* grad_volumes,
                            std::vector<double>* grad_prototypes) {
  return class_min_loss(volumes, labels, bank, Side::other, grad_volumes,
                        grad_prototypes, -1.0);
}

ProjectionReport project_prototypes(PrototypeBank& bank,
                                    const std::vector<FeatureVolume>& volumes,
                                    const std::vector<int>& labels,
                                    const std::vector<std::string>& sample_ids) {
  if (volumes.size() != labels.size() || volumes.size() != sample_ids.size())
    throw ShapeError("projection input size mismatch");
  bank.validate();
  for (int k = 0; k < bank.n_classes(); ++k) {
    if (std::find(labels.begin(), labels.end(), k) == labels.end())
      throw EmptyClassError("projection has no source volumes for category " +
                            std::to_string(k));
  }

  const int d = bank.dim();
  ProjectionReport report;
  report.movement.assign(bank.size(), 0.0);

  for (int j = 0; j < bank.size(); ++j) {
    const int klass = bank.class_of(j);
    const double* p = bank.vec(j);
    double best = std::numeric_limits<double>::infinity();
    int bi = -1, br = 0, bc = 0;
    for (std::size_t i = 0; i < volumes.size(); ++i) {
      if (labels[i] != klass) continue;
      for (std::size_t y = 0; y < volumes[i].h; ++y)
        for (std::size_t x = 0; x < volumes[i].w; ++x) {
          const double* z = volumes[i].patch(y, x);
          double acc = 0.0;
          for (int t = 0; t < d; ++t) {
            const double diff = z[t] - p[t];
            acc += diff * diff;
          }
          if (acc < best) {  // first (sample, row, col) wins ties
            best = acc;
            bi = static_cast<int>(i);
            br = static_cast<int>(y);
            bc = static_cast<int>(x);
          }
        }
    }
    const double* z = volumes[bi].patch(br, bc);
    double moved2 = 0.0;
    for (int t = 0; t < d; ++t) {
      const double diff = z[t] - p[t];
      moved2 += diff * diff;
    }
    report.movement[j] = std::sqrt(moved2);
    report.total_movement += report.movement[j];

    std::memcpy(bank.vec(j), z, static_cast<std::size_t>(d) * sizeof(double));
    Provenance prov;
    prov.sample_id = sample_ids[bi];
    prov.sample_index = bi;
    prov.row = br;
    prov.col = bc;
    prov.distance = best;
    bank.provenance()[j] = prov;
  }
  return report;
}

}  // namespace protoda
