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

#include "protoda/config.hpp"

#include "protoda/errors.hpp"

namespace protoda {

Profile profile_from_string(const std::string& s) {
  if (s == "synthetic") return Profile::synthetic;
  if (s == "office-home") return Profile::office_home;
  if (s == "domainnet-126") return Profile::domainnet126;
  throw ConfigError("unknown profile: " + s +
                    " (expected synthetic|office-home|domainnet-126)");
}

std::string profile_to_string(Profile p) {
  switch (p) {
    case Profile::synthetic:
      return "synthetic";
    case Profile::office_home:
      return "office-home";
    case Profile::domainnet126:
      return "domainnet-126";
  }
  return "synthetic";
}

RunConfig default_config(Profile profile) {
  RunConfig cfg;
  cfg.profile = profile;

  // Shared interpretive defaults.
  cfg.interp.alpha = 0.8;
  cfg.interp.beta = 10.0;
  cfg.interp.lambda = 1e-4;
  cfg.interp.lr = 0.003;
  cfg.interp.K = 10;
  cfg.interp.epochs = 100;
  cfg.interp.push_every = 10;
  cfg.interp.last_layer_iters = 20;

  switch (profile) {
    case Profile::synthetic:
      cfg.data.image_side = 32;
      cfg.data.mean = {0.5, 0.5, 0.5};
      cfg.data.stdev = {0.5, 0.5, 0.5};
      cfg.interp.gamma = 10.0;
      cfg.interp.batch_size = 50;
      cfg.base.epochs = 30;
      cfg.base.lr = 1e-3;
      cfg.base.batch_size = 32;
      break;
    case Profile::office_home:
    case Profile::domainnet126:
      cfg.data.image_side = 224;
      cfg.data.mean = {0.485, 0.456, 0.406};
      cfg.data.stdev = {0.229, 0.224, 0.225};
      cfg.interp.gamma = profile == Profile::office_home ? 100.0 : 10.0;
      cfg.interp.batch_size = 32;
      cfg.base.epochs = 50;
      cfg.base.lr = 1e-3;
      cfg.base.batch_size = 16;
      break;
  }
  return cfg;
}

NormConsts norm_consts(const RunConfig& cfg) {
  NormConsts n;
  n.mean = cfg.data.mean;
  n.stdev = cfg.data.stdev;
  return n;
}

BackboneSpec backbone_for(const RunConfig& cfg) {
  return cfg.profile == Profile::synthetic ? synthetic_backbone_spec()
                                           : real_backbone_spec();
}

DomainPair build_dataset(const RunConfig& cfg) {
  if (cfg.profile == Profile::synthetic) {
    SyntheticSpec spec;
    spec.n_classes = cfg.data.n_classes;
    spec.per_class = cfg.data.per_class;
    spec.seed = cfg.seed;
    spec.side = cfg.data.image_side;
    spec.target_shift.hue_deg = cfg.data.hue_deg;
    spec.target_shift.noise_sigma = cfg.data.noise_sigma;
    spec.target_shift.texture = cfg.data.texture;
    return generate_synthetic_pair(spec);
  }
  if (cfg.data.source_root.empty() || cfg.data.target_root.empty())
    throw ConfigError("real-data profiles need data.source_root and "
                      "data.target_root");
  return load_directory_pair(cfg.data.source_root, cfg.data.target_root,
                             cfg.data.image_side);
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["profile"] = profile_to_string(profile);
  j["seed"] = seed;
  j["data"] = {{"source_root", data.source_root},
               {"target_root", data.target_root},
               {"image_side", data.image_side},
               {"n_classes", data.n_classes},
               {"per_class", data.per_class},
               {"hue_deg", data.hue_deg},
               {"noise_sigma", data.noise_sigma},
               {"texture", data.texture},
               {"mean", data.mean},
               {"stdev", data.stdev}};
  j["base"] = {{"epochs", base.epochs},
               {"lr", base.lr},
               {"batch_size", base.batch_size},
               {"flip", base.flip},
               {"grl_max", base.grl_max},
               {"grl_gamma", base.grl_gamma},
               {"optimizer", base.optimizer}};
  j["interp"] = {{"alpha", interp.alpha},
                 {"beta", interp.beta},
                 {"gamma", interp.gamma},
                 {"lambda", interp.lambda},
                 {"lr", interp.lr},
                 {"epochs", interp.epochs},
                 {"push_every", interp.push_every},
                 {"last_layer_iters", interp.last_layer_iters},
                 {"K", interp.K},
                 {"batch_size", interp.batch_size},
                 {"flip", interp.flip},
                 {"train_addon", interp.train_addon},
                 {"sim_epsilon", interp.sim_epsilon},
                 {"batch_mix", interp.batch_mix},
                 {"target_weight", interp.target_weight}};
  j["explain"] = {{"top_m", report.top_m}, {"tau", report.tau}};
  j["inspect"] = {{"scope", inspect.scope},
                  {"cumulative", inspect.cumulative},
                  {"ablation", inspect.ablation}};
  return j;
}

}  // namespace protoda
