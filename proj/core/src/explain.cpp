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

#include "protoda/explain.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "protoda/errors.hpp"

namespace fs = std::filesystem;

namespace protoda {

HeatMap heatmap_from_volume(const FeatureVolume& vol, const double* prototype,
                            int dim, int side, double eps) {
  if (static_cast<int>(vol.d) != dim)
    throw ShapeError("prototype dimension does not match the volume");
  HeatMap hm;
  hm.grid = Mat(vol.h, vol.w);
  for (std::size_t y = 0; y < vol.h; ++y)
    for (std::size_t x = 0; x < vol.w; ++x) {
      const double* z = vol.patch(y, x);
      double acc = 0.0;
      for (int t = 0; t < dim; ++t) {
        const double diff = z[t] - prototype[t];
        acc += diff * diff;
      }
      hm.grid.at(y, x) = similarity(acc, eps);
    }
  hm.upsampled = upsample_bilinear(hm.grid, side);
  return hm;
}

HeatMap heatmap(const InterpretiveModel& model, const ImageSample& image,
                int prototype_id) {
  if (prototype_id < 0 || prototype_id >= model.bank.size())
    throw IndexError("prototype id out of range: " + std::to_string(prototype_id));
  return heatmap_from_volume(model.features(image),
                             model.bank.vec(prototype_id), model.bank.dim(),
                             image.side, model.cfg.sim_epsilon);
}

Mat upsample_bilinear(const Mat& grid, int side) {
  Mat out(side, side);
  const double sy = static_cast<double>(grid.rows) / side;
  const double sx = static_cast<double>(grid.cols) / side;
  for (int oy = 0; oy < side; ++oy) {
    const double u = (oy + 0.5) * sy - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(u)), 0,
                              static_cast<int>(grid.rows) - 1);
    const int y1 = std::min(y0 + 1, static_cast<int>(grid.rows) - 1);
    const double fy = std::clamp(u - y0, 0.0, 1.0);
    for (int ox = 0; ox < side; ++ox) {
      const double v = (ox + 0.5) * sx - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(v)), 0,
                                static_cast<int>(grid.cols) - 1);
      const int x1 = std::min(x0 + 1, static_cast<int>(grid.cols) - 1);
      const double fx = std::clamp(v - x0, 0.0, 1.0);
      const double top = grid.at(y0, x0) * (1 - fx) + grid.at(y0, x1) * fx;
      const double bot = grid.at(y1, x0) * (1 - fx) + grid.at(y1, x1) * fx;
      out.at(oy, ox) = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

double percentile_nearest_rank(std::vector<double> values, double q) {
  if (values.empty()) throw ShapeError("percentile of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const std::size_t rank = static_cast<std::size_t>(
      std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(
                                      std::ceil(q * static_cast<double>(n))) -
                                      1));
  return values[std::min(rank, n - 1)];
}

PatchBox bbox(const HeatMap& heat) {
  const Mat& up = heat.upsampled;
  const double threshold = percentile_nearest_rank(up.v, 0.95);

  PatchBox box;
  box.top = static_cast<int>(up.rows);
  box.left = static_cast<int>(up.cols);
  box.bottom = -1;
  box.right = -1;
  double peak = -std::numeric_limits<double>::infinity();
  for (int y = 0; y < static_cast<int>(up.rows); ++y)
    for (int x = 0; x < static_cast<int>(up.cols); ++x) {
      const double v = up.at(y, x);
      peak = std::max(peak, v);
      if (v >= threshold) {
        box.top = std::min(box.top, y);
        box.left = std::min(box.left, x);
        box.bottom = std::max(box.bottom, y);
        box.right = std::max(box.right, x);
      }
    }
  box.peak_value = peak;
  return box;
}

double box_mask_iou(const PatchBox& box, const std::vector<std::uint8_t>& mask,
                    int side) {
  long inter = 0, mask_total = 0;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      if (!mask[y * side + x]) continue;
      ++mask_total;
      if (y >= box.top && y <= box.bottom && x >= box.left && x <= box.right)
        ++inter;
    }
  const long box_area = static_cast<long>(box.bottom - box.top + 1) *
                        (box.right - box.left + 1);
  const long uni = box_area + mask_total - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

std::vector<CrossDomainMatch> match_cross_domain(const InterpretiveModel& model,
                                                 const DomainPair& pair,
                                                 int category, int m,
                                                 double tau) {
  if (category < 0 || category >= pair.n_classes())
    throw IndexError("category out of range");
  if (m < 1) throw Error("top-m must be >= 1");
  const int K = model.bank.k_per_class();

  // Candidate images per domain.
  std::vector<int> src_members, tgt_members;
  for (std::size_t i = 0; i < pair.source.size(); ++i)
    if (*pair.source[i].label == category) src_members.push_back(static_cast<int>(i));
  for (std::size_t i = 0; i < pair.target.size(); ++i)
    if (model.pseudo.at(pair.target[i].id).yhat == category)
      tgt_members.push_back(static_cast<int>(i));
  if (tgt_members.empty())
    std::cerr << "[protoda] warning: no target sample pseudo-labeled as category "
              << pair.categories[category] << "; target matches will be empty\n";

  // Scores of every member image against the category's prototypes.
  auto member_scores = [&](const std::vector<ImageSample>& samples,
                           const std::vector<int>& members) {
    std::vector<std::vector<double>> out;
    out.reserve(members.size());
    for (int idx : members)
      out.push_back(
          similarity_scores(model.features(samples[idx]), model.bank,
                            model.cfg.sim_epsilon)
              .score);
    return out;
  };
  const auto src_scores = member_scores(pair.source, src_members);
  const auto tgt_scores = member_scores(pair.target, tgt_members);

  std::vector<CrossDomainMatch> matches;
  for (int jk = 0; jk < K; ++jk) {
    const int j = model.bank.first_of_class(category) + jk;
    const auto& prov = model.bank.provenance()[j];
    if (!prov)
      throw Error("prototype " + std::to_string(j) +
                  " has no provenance; run a push stage first");

    CrossDomainMatch match;
    match.prototype_id = j;
    match.category = category;
    match.anchor_sample_id = prov->sample_id;
    match.anchor_index = prov->sample_index;
    match.anchor_box = bbox(heatmap(model, pair.source[prov->sample_index], j));

    auto top_examples = [&](const std::vector<ImageSample>& samples,
                            const std::vector<int>& members,
                            const std::vector<std::vector<double>>& scores,
                            const std::vector<std::vector<std::uint8_t>>& masks)
        -> std::vector<MatchExample> {
      std::vector<int> order(members.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a][j] != scores[b][j]) return scores[a][j] > scores[b][j];
        return members[a] < members[b];
      });
      std::vector<MatchExample> out;
      for (int rank = 0; rank < m && rank < static_cast<int>(order.size());
           ++rank) {
        const int member = order[rank];
        const int idx = members[member];
        MatchExample ex;
        ex.sample_id = samples[idx].id;
        ex.sample_index = idx;
        ex.score = scores[member][j];
        ex.box = bbox(heatmap(model, samples[idx], j));
        if (!masks.empty())
          ex.mismatch = box_mask_iou(ex.box, masks[idx], samples[idx].side) < tau;
        out.push_back(std::move(ex));
      }
      return out;
    };

    match.sources = top_examples(pair.source, src_members, src_scores,
                                 std::vector<std::vector<std::uint8_t>>{});
    match.targets = top_examples(pair.target, tgt_members, tgt_scores,
                                 pair.target_masks);
    matches.push_back(std::move(match));
  }
  return matches;
}

// ----------------------------------------------------------------- report

namespace {

cv::Mat sample_to_bgr(const ImageSample& img) {
  cv::Mat out(img.side, img.side, CV_8UC3);
  for (int y = 0; y < img.side; ++y) {
    auto* row = out.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.side; ++x)
      row[x] = cv::Vec3b(img.at(2, y, x), img.at(1, y, x), img.at(0, y, x));
  }
  return out;
}

cv::Mat crop_box(const ImageSample& img, const PatchBox& box) {
  const cv::Mat full = sample_to_bgr(img);
  return full(cv::Rect(box.left, box.top, box.right - box.left + 1,
                       box.bottom - box.top + 1))
      .clone();
}

void write_png(const std::string& path, const cv::Mat& bgr) {
  if (!cv::imwrite(path, bgr)) throw IoError("failed to write " + path);
}

nlohmann::json box_to_json(const PatchBox& box) {
  return {{"top", box.top},
          {"left", box.left},
          {"bottom", box.bottom},
          {"right", box.right},
          {"peak_value", box.peak_value}};
}

// One tile of the per-category panel: the crop centered on a fixed-size
// cell with a colored border (red marks a flagged mismatch).
cv::Mat panel_cell(const cv::Mat& crop, bool flagged) {
  const int cell = 72, inner = 64;
  cv::Mat tile(cell, cell, CV_8UC3, cv::Scalar(32, 32, 32));
  cv::Mat resized;
  cv::resize(crop, resized, cv::Size(inner, inner), 0, 0, cv::INTER_NEAREST);
  resized.copyTo(tile(cv::Rect((cell - inner) / 2, (cell - inner) / 2, inner, inner)));
  const cv::Scalar border =
      flagged ? cv::Scalar(0, 0, 255) : cv::Scalar(96, 96, 96);
  cv::rectangle(tile, cv::Rect(0, 0, cell, cell), border, 3);
  return tile;
}

}  // namespace

void emit_report(const InterpretiveModel& model, const DomainPair& pair,
                 const std::string& out_dir, const ReportOptions& opts) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create report directory " + out_dir);
  if (!fs::is_directory(out_dir)) throw IoError("not a directory: " + out_dir);

  nlohmann::json meta;
  meta["format"] = 1;
  meta["top_m"] = opts.top_m;
  meta["tau"] = opts.tau;
  nlohmann::json cats = nlohmann::json::array();

  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html><head><title>prototype report</title></head>\n"
       << "<body>\n<h1>Prototype report</h1>\n";

  for (int k = 0; k < pair.n_classes(); ++k) {
    const std::string& cat = pair.categories[k];
    const fs::path cat_dir = fs::path(out_dir) / cat;
    fs::create_directories(cat_dir);
    const auto matches =
        match_cross_domain(model, pair, k, opts.top_m, opts.tau);

    html << "<h2>" << cat << "</h2>\n<p><img src=\"" << cat
         << "/panel.png\"></p>\n<ul>\n";

    const int cell = 72;
    const int cols = 1 + 2 * opts.top_m;
    cv::Mat panel(static_cast<int>(matches.size()) * cell, cols * cell, CV_8UC3,
                  cv::Scalar(16, 16, 16));

    nlohmann::json cat_json;
    cat_json["category"] = cat;
    nlohmann::json protos = nlohmann::json::array();

    for (std::size_t row = 0; row < matches.size(); ++row) {
      const auto& match = matches[row];
      const fs::path proto_dir =
          cat_dir / ("proto_" + std::to_string(match.prototype_id));
      fs::create_directories(proto_dir);

      nlohmann::json pj;
      pj["prototype_id"] = match.prototype_id;
      pj["anchor"] = {{"sample_id", match.anchor_sample_id},
                      {"box", box_to_json(match.anchor_box)},
                      {"file", cat + "/proto_" + std::to_string(match.prototype_id) +
                                   "/card.png"}};

      const cv::Mat anchor_crop =
          crop_box(pair.source[match.anchor_index], match.anchor_box);
      write_png((proto_dir / "card.png").string(), anchor_crop);
      panel_cell(anchor_crop, false)
          .copyTo(panel(cv::Rect(0, static_cast<int>(row) * cell, cell, cell)));

      auto emit_side = [&](const std::vector<MatchExample>& examples,
                           const std::vector<ImageSample>& samples,
                           const std::string& tag, int col0) {
        nlohmann::json arr = nlohmann::json::array();
        for (std::size_t r = 0; r < examples.size(); ++r) {
          const auto& ex = examples[r];
          const std::string file = tag + "_" + std::to_string(r) + ".png";
          const cv::Mat crop = crop_box(samples[ex.sample_index], ex.box);
          write_png((proto_dir / file).string(), crop);
          const bool flagged = ex.mismatch.value_or(false);
          panel_cell(crop, flagged)
              .copyTo(panel(cv::Rect((col0 + static_cast<int>(r)) * cell,
                                     static_cast<int>(row) * cell, cell, cell)));
          nlohmann::json ej;
          ej["sample_id"] = ex.sample_id;
          ej["box"] = box_to_json(ex.box);
          ej["score"] = ex.score;
          ej["file"] = cat + "/proto_" + std::to_string(match.prototype_id) +
                       "/" + file;
          if (ex.mismatch.has_value())
            ej["mismatch"] = *ex.mismatch;
          else
            ej["mismatch"] = nullptr;
          arr.push_back(ej);
        }
        return arr;
      };
      pj["sources"] = emit_side(match.sources, pair.source, "source", 1);
      pj["targets"] =
          emit_side(match.targets, pair.target, "target", 1 + opts.top_m);
      protos.push_back(pj);

      html << "<li>prototype " << match.prototype_id << ": <a href=\"" << cat
           << "/proto_" << match.prototype_id << "/card.png\">card</a>";
      for (std::size_t r = 0; r < match.targets.size(); ++r)
        html << " t" << r << "=" << match.targets[r].score;
      html << "</li>\n";
    }
    cat_json["prototypes"] = protos;
    cats.push_back(cat_json);

    write_png((cat_dir / "panel.png").string(), panel);
    html << "</ul>\n";
  }
  meta["categories"] = cats;

  html << "</body></html>\n";
  {
    std::ofstream f(fs::path(out_dir) / "index.html", std::ios::trunc);
    if (!f) throw IoError("cannot write index.html");
    f << html.str();
  }
  {
    std::ofstream f(fs::path(out_dir) / "matches.json", std::ios::trunc);
    if (!f) throw IoError("cannot write matches.json");
    f << meta.dump(2) << "\n";
  }
}

}  // namespace protoda
