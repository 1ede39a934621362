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

#include "protoda/datasets.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "protoda/rng.hpp"

namespace fs = std::filesystem;

namespace protoda {

ImageSample ImageSample::hflip() const {
  ImageSample out = *this;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) out.at(c, y, x) = at(c, y, side - 1 - x);
  return out;
}

const std::vector<int>& DomainPair::eval_only_target_labels() const {
  if (eval_target_labels_.empty())
    throw Error("dataset carries no held-out target labels");
  return eval_target_labels_;
}

void DomainPair::set_eval_target_labels(std::vector<int> labels) {
  if (!labels.empty() && labels.size() != target.size())
    throw ShapeError("eval target label count does not match target domain size");
  eval_target_labels_ = std::move(labels);
}

void DomainPair::validate() const {
  const int c = n_classes();
  if (c < 1) throw CategoryMismatch("category list is empty");
  if (source.size() < static_cast<std::size_t>(c))
    throw Error("fewer source samples than categories");
  std::vector<int> per_class(c, 0);
  for (const auto& s : source) {
    if (!s.label) throw Error("unlabeled source sample: " + s.id);
    if (*s.label < 0 || *s.label >= c)
      throw Error("source label out of range for sample " + s.id);
    ++per_class[*s.label];
  }
  for (int k = 0; k < c; ++k)
    if (per_class[k] == 0)
      throw Error("category without source samples: " + categories[k]);
  for (const auto& t : target)
    if (t.label) throw Error("target sample exposes a training label: " + t.id);
  for (int lbl : eval_target_labels_)
    if (lbl < 0 || lbl >= c) throw Error("eval target label out of range");
}

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a_str(std::uint64_t h, const std::string& s) {
  return fnv1a(h, s.data(), s.size());
}

}  // namespace

std::uint64_t DomainPair::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& c : categories) h = fnv1a_str(h, c);
  auto mix_sample = [&h](const ImageSample& s) {
    h = fnv1a_str(h, s.id);
    const int lbl = s.label ? *s.label : -1;
    h = fnv1a(h, &lbl, sizeof lbl);
    h = fnv1a(h, &s.side, sizeof s.side);
    h = fnv1a(h, s.pixels.data(), s.pixels.size());
  };
  for (const auto& s : source) mix_sample(s);
  for (const auto& s : target) mix_sample(s);
  for (int lbl : eval_target_labels_) h = fnv1a(h, &lbl, sizeof lbl);
  return h;
}

namespace {

bool has_image_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  return e == ".png" || e == ".jpg" || e == ".jpeg" || e == ".bmp";
}

std::vector<std::string> category_dirs(const std::string& root) {
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root);
  std::vector<std::string> cats;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) cats.push_back(entry.path().filename().string());
  std::sort(cats.begin(), cats.end());
  return cats;
}

ImageSample read_sample(const fs::path& file, int side, int label, Domain domain) {
  cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw SampleDecodeError(file.string());
  cv::Mat resized;
  cv::resize(bgr, resized, cv::Size(side, side), 0.0, 0.0, cv::INTER_LINEAR);

  ImageSample s;
  s.id = file.string();
  s.side = side;
  s.domain = domain;
  if (domain == Domain::source) s.label = label;
  s.pixels.resize(3u * side * side);
  for (int y = 0; y < side; ++y) {
    const auto* row = resized.ptr<cv::Vec3b>(y);
    for (int x = 0; x < side; ++x) {
      s.at(0, y, x) = row[x][2];  // OpenCV loads BGR
      s.at(1, y, x) = row[x][1];
      s.at(2, y, x) = row[x][0];
    }
  }
  return s;
}

}  // namespace

DomainPair load_directory_pair(const std::string& source_root,
                               const std::string& target_root, int side) {
  const auto src_cats = category_dirs(source_root);
  const auto tgt_cats = category_dirs(target_root);
  if (src_cats != tgt_cats) {
    std::set<std::string> a(src_cats.begin(), src_cats.end());
    std::set<std::string> b(tgt_cats.begin(), tgt_cats.end());
    std::ostringstream os;
    os << "category sets differ between roots;";
    for (const auto& c : a)
      if (!b.count(c)) os << " only-in-source:" << c;
    for (const auto& c : b)
      if (!a.count(c)) os << " only-in-target:" << c;
    throw CategoryMismatch(os.str());
  }
  if (src_cats.empty()) throw CategoryMismatch("no category directories found");

  DomainPair pair;
  pair.categories = src_cats;
  std::vector<int> eval_labels;
  for (int k = 0; k < static_cast<int>(src_cats.size()); ++k) {
    const auto load_domain = [&](const std::string& root, Domain domain) {
      std::vector<fs::path> files;
      for (const auto& entry :
           fs::directory_iterator(fs::path(root) / src_cats[k]))
        if (entry.is_regular_file() && has_image_ext(entry.path()))
          files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        if (domain == Domain::source) {
          pair.source.push_back(read_sample(f, side, k, domain));
        } else {
          pair.target.push_back(read_sample(f, side, k, domain));
          eval_labels.push_back(k);  // directory structure doubles as ground truth
        }
      }
    };
    load_domain(source_root, Domain::source);
    load_domain(target_root, Domain::target);
  }
  pair.set_eval_target_labels(std::move(eval_labels));
  pair.validate();
  return pair;
}

BatchStream::BatchStream(const DomainPair& pair, int batch_size,
                         std::uint64_t seed, bool flip, double mix)
    : pair_(&pair), seed_(seed), flip_(flip) {
  if (pair.source.empty()) throw EmptyDomain("source domain is empty");
  if (pair.target.empty()) throw EmptyDomain("target domain is empty");
  if (batch_size < 2) throw Error("batch_size must be >= 2");
  if (mix <= 0.0) throw Error("batch mix ratio must be positive");
  bs_src_ = batch_size;
  bs_tgt_ = std::max(1, static_cast<int>(std::lround(batch_size * mix)));
  const int steps_src =
      static_cast<int>((pair.source.size() + bs_src_ - 1) / bs_src_);
  const int steps_tgt =
      static_cast<int>((pair.target.size() + bs_tgt_ - 1) / bs_tgt_);
  steps_ = std::max(steps_src, steps_tgt);
}

std::vector<MixedBatch> BatchStream::epoch(int epoch_index) const {
  Rng rng(mix_seed(seed_, /*stream=*/0x0ba7c4e5, epoch_index));

  const auto make_order = [&rng](std::size_t n) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
  };
  const std::vector<int> src_order = make_order(pair_->source.size());
  const std::vector<int> tgt_order = make_order(pair_->target.size());

  std::vector<MixedBatch> batches(steps_);
  std::size_t sp = 0, tp = 0;
  for (int b = 0; b < steps_; ++b) {
    auto& mb = batches[b];
    for (int i = 0; i < bs_src_; ++i) {
      if (sp >= src_order.size()) {
        // Source exhausted: if this is the last partial batch of the longer
        // domain, stop; otherwise cycle through the permutation again.
        if (b == steps_ - 1 && !mb.src.idx.empty()) break;
        sp = 0;
      }
      mb.src.idx.push_back(src_order[sp++]);
    }
    for (int i = 0; i < bs_tgt_; ++i) {
      if (tp >= tgt_order.size()) {
        if (b == steps_ - 1 && !mb.tgt.idx.empty()) break;
        tp = 0;
      }
      mb.tgt.idx.push_back(tgt_order[tp++]);
    }
    std::bernoulli_distribution coin(0.5);
    mb.src.flip.resize(mb.src.idx.size(), 0);
    mb.tgt.flip.resize(mb.tgt.idx.size(), 0);
    if (flip_) {
      for (auto& f : mb.src.flip) f = coin(rng) ? 1 : 0;
      for (auto& f : mb.tgt.flip) f = coin(rng) ? 1 : 0;
    }
  }
  return batches;
}

}  // namespace protoda
