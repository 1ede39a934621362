#ifndef PROTODA_TEST_HELPERS_HPP
#define PROTODA_TEST_HELPERS_HPP

#include "protoda/config.hpp"
#include "protoda/trainer.hpp"

namespace protoda_test {

using namespace protoda;

// Small synthetic task shared across suites; trained artifacts are memoized
// so each binary pays for base training once.
inline SyntheticSpec micro_spec() {
  SyntheticSpec spec;
  spec.n_classes = 3;
  spec.per_class = 8;
  spec.seed = 21;
  spec.target_shift.hue_deg = 40.0;
  spec.target_shift.noise_sigma = 4.0;
  spec.target_shift.texture = true;
  return spec;
}

inline const DomainPair& micro_pair() {
  static const DomainPair pair = generate_synthetic_pair(micro_spec());
  return pair;
}

inline BaseTrainConfig micro_base_cfg() {
  BaseTrainConfig cfg;
  cfg.epochs = 6;
  cfg.lr = 1e-3;
  cfg.batch_size = 8;
  cfg.flip = true;
  cfg.seed = 5;
  return cfg;
}

inline const BaseModel& micro_base() {
  static const BaseModel model = train_base(
      micro_pair(), synthetic_backbone_spec(), micro_base_cfg(), NormConsts{});
  return model;
}

inline TrainConfig micro_interp_cfg() {
  TrainConfig cfg;
  cfg.K = 2;
  cfg.epochs = 4;
  cfg.push_every = 2;
  cfg.last_layer_iters = 3;
  cfg.batch_size = 8;
  cfg.seed = 2;
  cfg.gamma = 10.0;
  return cfg;
}

inline const InterpretiveModel& micro_interp() {
  static const InterpretiveModel model =
      run_protocol(micro_base(), micro_pair(), micro_interp_cfg());
  return model;
}

}  // namespace protoda_test

#endif  // PROTODA_TEST_HELPERS_HPP
