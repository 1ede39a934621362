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

#include "protoda/calibration.hpp"

#include <cmath>

#include "protoda/errors.hpp"
#include "protoda/nn.hpp"

namespace protoda {

PrototypicalHead::PrototypicalHead(int n_protos, int n_classes)
    : n_protos_(n_protos), n_classes_(n_classes) {
  w_.assign(static_cast<std::size_t>(n_protos) * n_classes, 0.0);
}

std::vector<double> PrototypicalHead::logits(
    const std::vector<double>& scores) const {
  if (scores.size() != static_cast<std::size_t>(n_protos_))
    throw ShapeError("score vector length does not match head");
  std::vector<double> out(n_classes_, 0.0);
  for (int j = 0; j < n_protos_; ++j) {
    const double s = scores[j];
    const double* row = w_.data() + static_cast<std::size_t>(j) * n_classes_;
    for (int k = 0; k < n_classes_; ++k) out[k] += row[k] * s;
  }
  return out;
}

std::vector<double> PrototypicalHead::logits_masked(
    const std::vector<double>& scores, const std::set<int>& masked) const {
  std::vector<double> out = logits(scores);
  // Accumulate the masked rows' contribution in ascending prototype order
  // (the same order logits() sums in) and subtract once. Masking every
  // prototype therefore cancels to exactly zero.
  std::vector<double> removed(n_classes_, 0.0);
  for (int j : masked) {
    if (j < 0 || j >= n_protos_) throw IndexError("masked prototype id out of range");
    const double s = scores[j];
    const double* row = w_.data() + static_cast<std::size_t>(j) * n_classes_;
    for (int k = 0; k < n_classes_; ++k) removed[k] += row[k] * s;
  }
  for (int k = 0; k < n_classes_; ++k) out[k] -= removed[k];
  return out;
}

PrototypicalHead init_head(const PrototypeBank& bank) {
  bank.validate();
  PrototypicalHead head(bank.size(), bank.n_classes());
  for (int j = 0; j < bank.size(); ++j)
    for (int k = 0; k < bank.n_classes(); ++k)
      head.weight(j, k) = bank.class_of(j) == k ? 1.0 : -0.5;
  return head;
}

namespace {

void check_batch(const ScoreBatch& batch, const PrototypicalHead& head) {
  if (batch.scores.size() != batch.ids.size())
    throw ShapeError("score batch ids/scores size mismatch");
  for (const auto& s : batch.scores)
    if (s.size() != static_cast<std::size_t>(head.n_protos()))
      throw ShapeError("score vector length does not match head");
}

// dL/dW and dL/dscores for a dL/dlogits already scaled by the batch weight.
void backprop_head(const PrototypicalHead& head, const std::vector<double>& scores,
                   const std::vector<double>& dlogits,
                   std::vector<double>* grad_scores, std::vector<double>* grad_w) {
  const int c = head.n_classes();
  for (int j = 0; j < head.n_protos(); ++j) {
    double acc = 0.0;
    for (int k = 0; k < c; ++k) {
      acc += head.weight(j, k) * dlogits[k];
      if (grad_w) (*grad_w)[static_cast<std::size_t>(j) * c + k] += scores[j] * dlogits[k];
    }
    if (grad_scores) (*grad_scores)[j] += acc;
  }
}

}  // namespace

double calibration_loss(const ScoreBatch& source, const ScoreBatch& target,
                        const PrototypicalHead& head, const PseudoLabels& pseudo,
                        double target_weight) {
  return calibration_loss_grad(source, target, head, pseudo, target_weight,
                               nullptr, nullptr, nullptr);
}

double calibration_loss_grad(const ScoreBatch& source, const ScoreBatch& target,
                             const PrototypicalHead& head,
                             const PseudoLabels& pseudo, double target_weight,
                             std::vector<std::vector<double>>* grad_scores_src,
                             std::vector<std::vector<double>>* grad_scores_tgt,
                             std::vector<double>* grad_w) {
  check_batch(source, head);
  check_batch(target, head);
  if (grad_w) grad_w->assign(head.raw().size(), 0.0);

  auto run_domain = [&](const ScoreBatch& batch, double weight,
                        std::vector<std::vector<double>>* grad_scores) {
    if (batch.scores.empty()) return 0.0;
    if (grad_scores)
      grad_scores->assign(batch.scores.size(),
                          std::vector<double>(head.n_protos(), 0.0));
    const double inv = weight / static_cast<double>(batch.scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < batch.scores.size(); ++i) {
      const PseudoEntry& entry = pseudo.at(batch.ids[i]);
      const auto logits = head.logits(batch.scores[i]);
      std::vector<double> dlogits;
      total += nn::cross_entropy(logits, entry.yhat,
                                 (grad_scores || grad_w) ? &dlogits : nullptr);
      if (grad_scores || grad_w) {
        for (auto& g : dlogits) g *= inv;
        backprop_head(head, batch.scores[i], dlogits,
                      grad_scores ? &(*grad_scores)[i] : nullptr, grad_w);
      }
    }
    return weight * total / static_cast<double>(batch.scores.size());
  };

  return run_domain(source, 1.0, grad_scores_src) +
         run_domain(target, target_weight, grad_scores_tgt);
}

double fidelity_loss(const ScoreBatch& target, const PrototypicalHead& head,
                     const PseudoLabels& pseudo) {
  return fidelity_loss_grad(target, head, pseudo, nullptr, nullptr);
}

double fidelity_loss_grad(const ScoreBatch& target, const PrototypicalHead& head,
                          const PseudoLabels& pseudo,
                          std::vector<std::vector<double>>* grad_scores,
                          std::vector<double>* grad_w) {
  check_batch(target, head);
  if (target.scores.empty()) throw ShapeError("fidelity loss needs a target batch");
  if (grad_scores)
    grad_scores->assign(target.scores.size(),
                        std::vector<double>(head.n_protos(), 0.0));
  if (grad_w) grad_w->assign(head.raw().size(), 0.0);

  const double inv = 1.0 / static_cast<double>(target.scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < target.scores.size(); ++i) {
    const PseudoEntry& entry = pseudo.at(target.ids[i]);
    if (entry.domain != Domain::target)
      throw DomainError("fidelity loss received a source sample: " + target.ids[i]);
    const auto logits = head.logits(target.scores[i]);
    const auto qp = nn::softmax(logits);
    double l1 = 0.0;
    for (std::size_t k = 0; k < qp.size(); ++k) l1 += std::fabs(qp[k] - entry.q[k]);
    total += l1;

    if (grad_scores || grad_w) {
      // d|a-b|/da through the softmax jacobian:
      // dL/dz_i = a_i (s_i - sum_k s_k a_k), s = sign(a - b)
      double dot = 0.0;
      std::vector<double> sgn(qp.size());
      for (std::size_t k = 0; k < qp.size(); ++k) {
        const double diff = qp[k] - entry.q[k];
        sgn[k] = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
        dot += sgn[k] * qp[k];
      }
      std::vector<double> dlogits(qp.size());
      for (std::size_t k = 0; k < qp.size(); ++k)
        dlogits[k] = inv * qp[k] * (sgn[k] - dot);
      backprop_head(head, target.scores[i], dlogits,
                    grad_scores ? &(*grad_scores)[i] : nullptr, grad_w);
    }
  }
  return total * inv;
}

}  // namespace protoda
