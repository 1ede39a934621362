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

#ifndef PROTODA_TRAINER_HPP
#define PROTODA_TRAINER_HPP

#include <string>
#include <vector>

#include "protoda/base_model.hpp"
#include "protoda/calibration.hpp"
#include "protoda/checkpoint.hpp"
#include "protoda/protolayer.hpp"

namespace protoda {

struct TrainConfig {
  double alpha = 0.8;    // clustering weight
  double beta = 10.0;    // separation weight
  double gamma = 10.0;   // fidelity weight (100 for the office-home profile)
  double lambda = 1e-4;  // last-layer L1 weight
  double lr = 0.003;
  int epochs = 100;
  int push_every = 10;
  int last_layer_iters = 20;
  int K = 10;
  std::uint64_t seed = 0;
  int batch_size = 50;
  bool flip = false;        // augmentation during interpretive training
  bool train_addon = true;  // add-on copy trains with the prototype layer
  double sim_epsilon = kDefaultSimEpsilon;
  double batch_mix = 1.0;      // target:source sub-batch ratio
  double target_weight = 1.0;  // weight of the target CE term

  void validate() const;
};

struct LogRow {
  int epoch = 0;
  std::string stage;  // proto | push | last | eval
  double l_cls = 0, l_c = 0, l_s = 0, l_fid = 0, total = 0;
  double agreement = 0, acc_hp = 0, acc_hf = 0;  // NaN unless stage == eval

  bool operator==(const LogRow&) const = default;
};

struct Metrics {
  double acc_hp = 0;    // target accuracy of the prototypical head
  double acc_hf = 0;    // target accuracy of the base classifier
  double agreement = 0; // P(argmax h_p == argmax h_f) on target
  double mean_fidelity = 0;
};

/// Frozen base model plus everything the interpretive layer owns: the
/// add-on copy it may train, the prototype bank, the head, cached
/// pseudo-labels, and the append-only training log.
struct InterpretiveModel {
  BaseModel base;
  AddOnBlock addon;  // interpretive copy; base's own add-on never changes
  PrototypeBank bank;
  PrototypicalHead head;
  TrainConfig cfg;
  PseudoLabels pseudo;
  std::vector<LogRow> log;

  // Resume bookkeeping. RNG streams are derived from (seed, epoch counter),
  // so these counters plus the optimizer moments pin the exact run state.
  int rounds_done = 0;
  int proto_epochs_done = 0;
  int last_epochs_done = 0;
  double best_agreement = -1.0;
  int best_round = -1;
  std::uint64_t dataset_fingerprint = 0;
  std::vector<nn::Adam::SlotState> opt_proto_state, opt_head_state;
  long opt_proto_t = 0, opt_head_t = 0;

  /// Interpretive feature volume: addon copy over the frozen backbone.
  FeatureVolume features(const ImageSample& img, bool flip = false) const;
};

/// Backbone outputs cached once per run; the backbone is frozen so these
/// never change. Flipped variants are filled only when augmentation is on.
struct FeatureCache {
  std::vector<Hwc> src, tgt, src_flip, tgt_flip;
  static FeatureCache build(const BaseModel& base, const DomainPair& pair,
                            bool with_flip);
};

/// Fresh interpretive model: add-on cloned from the base, prototypes seeded
/// with distinct same-class source patches, head at the +-(1, -0.5) init,
/// pseudo-labels cached.
InterpretiveModel init_interpretive(const BaseModel& base,
                                    const DomainPair& pair,
                                    const TrainConfig& cfg);

/// Prototype-layer stage: minimizes L_Cls + alpha*L_c + beta*L_s +
/// gamma*L_Fid over prototypes (and the add-on copy when configured);
/// head and base untouched.
void stage_prototypes(InterpretiveModel& model, const DomainPair& pair,
                      const TrainConfig& cfg, int epochs);

/// Projects prototypes onto the nearest same-class source patch and logs
/// the movement.
ProjectionReport stage_push(InterpretiveModel& model, const DomainPair& pair);

/// Head-only stage: minimizes L_Cls + lambda * ||W||_1 for
/// cfg.last_layer_iters epochs; prototypes and add-on untouched.
void stage_last_layer(InterpretiveModel& model, const DomainPair& pair,
                      const TrainConfig& cfg);

/// Full protocol: epochs/push_every rounds of
/// [prototype stage x push_every -> push -> last layer], evaluating and
/// checkpointing after every round. out_dir may be empty (no files); with
/// resume=true an existing round checkpoint in out_dir continues the run.
InterpretiveModel run_protocol(const BaseModel& base, const DomainPair& pair,
                               const TrainConfig& cfg,
                               const std::string& out_dir = "",
                               bool resume = true);

Metrics evaluate(const InterpretiveModel& model, const DomainPair& pair);

/// Score vectors for every sample of both domains under the current model.
struct ScoreTable {
  ScoreBatch src, tgt;
  std::vector<int> src_labels;
};
ScoreTable compute_scores(const InterpretiveModel& model, const DomainPair& pair);

void save_interpretive(const InterpretiveModel& model, const std::string& path);
InterpretiveModel load_interpretive(const std::string& path);

/// Rebuilds the pseudo-label cache for a freshly loaded model after
/// verifying the dataset fingerprint.
void bind_dataset(InterpretiveModel& model, const DomainPair& pair);

void write_training_log_csv(const std::vector<LogRow>& log,
                            const std::string& path);

}  // namespace protoda

#endif  // PROTODA_TRAINER_HPP
