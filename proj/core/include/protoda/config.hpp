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

#ifndef PROTODA_CONFIG_HPP
#define PROTODA_CONFIG_HPP

#include <array>
#include <string>

#include <json.hpp>

#include "protoda/base_model.hpp"
#include "protoda/datasets.hpp"
#include "protoda/explain.hpp"
#include "protoda/trainer.hpp"

namespace protoda {

enum class Profile { synthetic, office_home, domainnet126 };

Profile profile_from_string(const std::string& s);
std::string profile_to_string(Profile p);

struct DataConfig {
  std::string source_root;  // real profiles only
  std::string target_root;
  int image_side = 32;
  int n_classes = 5;
  int per_class = 40;
  double hue_deg = 50.0;
  double noise_sigma = 6.0;
  bool texture = true;
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stdev{0.5, 0.5, 0.5};
};

struct InspectConfig {
  std::string scope = "all";  // "all" or a category name
  bool cumulative = true;
  bool ablation = false;
};

/// Fully resolved run configuration; every default traces to the
/// implementation-settings table or a documented decision.
struct RunConfig {
  Profile profile = Profile::synthetic;
  std::uint64_t seed = 7;
  DataConfig data;
  BaseTrainConfig base;
  TrainConfig interp;
  ReportOptions report;
  InspectConfig inspect;

  nlohmann::json to_json() const;
};

RunConfig default_config(Profile profile);

NormConsts norm_consts(const RunConfig& cfg);
BackboneSpec backbone_for(const RunConfig& cfg);
DomainPair build_dataset(const RunConfig& cfg);

}  // namespace protoda

#endif  // PROTODA_CONFIG_HPP
