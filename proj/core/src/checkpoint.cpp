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

#include "protoda/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "protoda/errors.hpp"

namespace protoda {

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void Archive::put(const std::string& name, std::vector<std::size_t> shape,
                  std::vector<double> data) {
  std::size_t count = 1;
  for (auto s : shape) count *= s;
  if (count != data.size())
    throw ShapeError("archive tensor " + name + " shape/data mismatch");
  tensors_[name] = Entry{std::move(shape), std::move(data)};
}

void Archive::put_flat(const std::string& name, const std::vector<double>& data) {
  put(name, {data.size()}, data);
}

const std::vector<double>& Archive::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw IoError("archive has no tensor " + name);
  return it->second.data;
}

const std::vector<std::size_t>& Archive::shape(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw IoError("archive has no tensor " + name);
  return it->second.shape;
}

bool Archive::has(const std::string& name) const { return tensors_.count(name) > 0; }

std::vector<std::string> Archive::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : tensors_) out.push_back(k);
  return out;
}

std::uint64_t Archive::data_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, entry] : tensors_) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(entry.data.data(), entry.data.size() * sizeof(double), h);
  }
  return h;
}

namespace {
constexpr char kMagic[4] = {'P', 'D', 'A', 'K'};

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}
}  // namespace

void Archive::save(const std::string& path) const {
  nlohmann::json header;
  header["version"] = kFormatVersion;
  header["kind"] = kind;
  header["meta"] = meta;
  header["data_hash"] = hash_hex(data_hash());
  nlohmann::json dir = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, entry] : tensors_) {
    nlohmann::json t;
    t["name"] = name;
    t["shape"] = entry.shape;
    t["offset"] = offset;
    t["count"] = entry.data.size();
    dir.push_back(t);
    offset += entry.data.size();
  }
  header["tensors"] = dir;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 4);
  const std::uint32_t version = kFormatVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t hlen = header_str.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  out.write(header_str.data(), static_cast<std::streamsize>(hlen));
  for (const auto& [name, entry] : tensors_)
    out.write(reinterpret_cast<const char*>(entry.data.data()),
              static_cast<std::streamsize>(entry.data.size() * sizeof(double)));
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

Archive Archive::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact(path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a checkpoint file: " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kFormatVersion)
    throw IoError("unsupported checkpoint version in " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  std::string header_str(hlen, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw IoError("truncated checkpoint header: " + path);
  const nlohmann::json header = nlohmann::json::parse(header_str);

  Archive ar;
  ar.kind = header.at("kind").get<std::string>();
  ar.meta = header.at("meta");
  for (const auto& t : header.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    const auto count = t.at("count").get<std::size_t>();
    std::vector<double> data(count);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint data: " + path);
    ar.put(name, shape, std::move(data));
  }
  const auto expected = header.at("data_hash").get<std::string>();
  if (hash_hex(ar.data_hash()) != expected)
    throw IoError("checkpoint content hash mismatch: " + path);
  return ar;
}

// ----------------------------------------------------------- base model IO

void base_to_archive(const BaseModel& model, Archive& ar,
                     const std::string& prefix) {
  nlohmann::json geom;
  geom["image_side"] = model.spec().image_side;
  geom["addon_mid"] = model.spec().addon_mid;
  geom["feat_d"] = model.spec().feat_d;
  geom["n_classes"] = model.n_classes();
  geom["frozen"] = model.frozen();
  geom["mean"] = model.norm().mean;
  geom["stdev"] = model.norm().stdev;
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : model.spec().stages)
    stages.push_back({{"in_c", s.in_c},
                      {"out_c", s.out_c},
                      {"k", s.k},
                      {"stride", s.stride},
                      {"pad", s.pad},
                      {"pool", s.pool}});
  geom["stages"] = stages;
  ar.meta[prefix.empty() ? "base" : prefix + "base"] = geom;

  auto& m = const_cast<BaseModel&>(model);
  for (const auto& p : m.all_params()) ar.put_flat(prefix + p.name, *p.value);
}

BaseModel base_from_archive(const Archive& ar, const std::string& prefix) {
  const auto& geom = ar.meta.at(prefix.empty() ? "base" : prefix + "base");
  BackboneSpec spec;
  spec.image_side = geom.at("image_side").get<int>();
  spec.addon_mid = geom.at("addon_mid").get<std::size_t>();
  spec.feat_d = geom.at("feat_d").get<std::size_t>();
  for (const auto& s : geom.at("stages"))
    spec.stages.push_back({s.at("in_c").get<std::size_t>(),
                           s.at("out_c").get<std::size_t>(),
                           s.at("k").get<std::size_t>(),
                           s.at("stride").get<std::size_t>(),
                           s.at("pad").get<std::size_t>(),
                           s.at("pool").get<bool>()});
  NormConsts norm;
  for (int c = 0; c < 3; ++c) {
    norm.mean[c] = geom.at("mean")[c].get<double>();
    norm.stdev[c] = geom.at("stdev")[c].get<double>();
  }

  BaseModel model(spec, geom.at("n_classes").get<int>(), norm, /*init_seed=*/0);
  for (const auto& p : model.all_params()) {
    const auto& stored = ar.get(prefix + p.name);
    if (stored.size() != p.value->size())
      throw ShapeError("checkpoint tensor size mismatch for " + p.name);
    *p.value = stored;
  }
  if (geom.at("frozen").get<bool>()) model.freeze();
  return model;
}

}  // namespace protoda
