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

#ifndef PROTODA_CHECKPOINT_HPP
#define PROTODA_CHECKPOINT_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoda/base_model.hpp"

namespace protoda {

/// Single-file checkpoint: a JSON header (kind, version, metadata, tensor
/// directory, content hash) followed by raw little-endian f64 data. The
/// hash covers the data section and is verified on load.
class Archive {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  std::string kind;     // "base" or "interp"
  nlohmann::json meta;  // config snapshot and free-form metadata

  void put(const std::string& name, std::vector<std::size_t> shape,
           std::vector<double> data);
  void put_flat(const std::string& name, const std::vector<double>& data);
  const std::vector<double>& get(const std::string& name) const;
  const std::vector<std::size_t>& shape(const std::string& name) const;
  bool has(const std::string& name) const;
  std::vector<std::string> names() const;

  std::uint64_t data_hash() const;

  void save(const std::string& path) const;
  static Archive load(const std::string& path);

 private:
  struct Entry {
    std::vector<std::size_t> shape;
    std::vector<double> data;
  };
  std::map<std::string, Entry> tensors_;
};

std::uint64_t fnv1a64(const void* data, std::size_t n,
                      std::uint64_t h = 0xcbf29ce484222325ULL);

/// Base-model (de)serialization. The archive keeps the backbone geometry,
/// normalization constants, class count and every parameter tensor.
void base_to_archive(const BaseModel& model, Archive& ar,
                     const std::string& prefix = "");
BaseModel base_from_archive(const Archive& ar, const std::string& prefix = "");

}  // namespace protoda

#endif  // PROTODA_CHECKPOINT_HPP
