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

#include "protoda/inspect.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "protoda/errors.hpp"

namespace fs = std::filesystem;

namespace protoda {

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

SpearmanResult spearman(const std::vector<double>& a,
                        const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("spearman needs equal lengths");
  if (a.size() < 2) throw ShapeError("spearman needs length >= 2");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = ra[i] - ma, db = rb[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  SpearmanResult out;
  if (saa == 0.0 || sbb == 0.0) {
    out.rho = std::nan("");
    out.defined = false;
    out.reason = "zero-variance drops";
    return out;
  }
  out.rho = sab / std::sqrt(saa * sbb);
  out.defined = true;
  return out;
}

std::vector<int> rank_prototypes(const InterpretiveModel& model, int category) {
  if (category < 0 || category >= model.bank.n_classes())
    throw IndexError("category out of range");
  std::vector<int> ids;
  for (int j = 0; j < model.bank.size(); ++j)
    if (model.bank.class_of(j) == category) ids.push_back(j);
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    const double wa = model.head.weight(a, category);
    const double wb = model.head.weight(b, category);
    if (wa != wb) return wa > wb;
    return a < b;
  });
  return ids;
}

void MaskedView::mask(int prototype_id) {
  if (prototype_id < 0 || prototype_id >= model_->bank.size())
    throw IndexError("prototype id out of range");
  masked_.insert(prototype_id);  // re-masking is a no-op
}

std::vector<double> MaskedView::logits(const std::vector<double>& scores) const {
  return model_->head.logits_masked(scores, masked_);
}

int MaskedView::predict(const std::vector<double>& scores) const {
  return nn::argmax_tie_smallest(logits(scores));
}

namespace {

struct SweepEval {
  double acc_source, acc_target;
};

SweepEval eval_masked(const MaskedView& view, const ScoreTable& table,
                      const std::vector<int>& tgt_labels, int category) {
  long src_n = 0, src_ok = 0, tgt_n = 0, tgt_ok = 0;
  for (std::size_t i = 0; i < table.src.scores.size(); ++i) {
    if (category >= 0 && table.src_labels[i] != category) continue;
    ++src_n;
    if (view.predict(table.src.scores[i]) == table.src_labels[i]) ++src_ok;
  }
  for (std::size_t i = 0; i < table.tgt.scores.size(); ++i) {
    if (category >= 0 && tgt_labels[i] != category) continue;
    ++tgt_n;
    if (view.predict(table.tgt.scores[i]) == tgt_labels[i]) ++tgt_ok;
  }
  SweepEval out;
  out.acc_source = src_n ? static_cast<double>(src_ok) / src_n : std::nan("");
  out.acc_target = tgt_n ? static_cast<double>(tgt_ok) / tgt_n : std::nan("");
  return out;
}

}  // namespace

RemovalCurve removal_sweep(const InterpretiveModel& model,
                           const DomainPair& pair, int category,
                           bool cumulative) {
  if (!pair.has_eval_target_labels())
    throw Error("removal sweep needs held-out target labels");
  if (category >= model.bank.n_classes())
    throw IndexError("category out of range");
  const ScoreTable table = compute_scores(model, pair);
  const std::vector<int>& tgt_labels = pair.eval_only_target_labels();

  RemovalCurve curve;
  curve.scope = category < 0 ? "all" : pair.categories[category];
  curve.cumulative = cumulative;

  // Ranked removal order: one list per class (round-robin for "all").
  std::vector<std::vector<int>> ranked;
  if (category < 0) {
    for (int k = 0; k < model.bank.n_classes(); ++k)
      ranked.push_back(rank_prototypes(model, k));
  } else {
    ranked.push_back(rank_prototypes(model, category));
  }
  const int K = model.bank.k_per_class();

  MaskedView view(model);
  {
    RemovalStep baseline;
    const SweepEval e = eval_masked(view, table, tgt_labels, category);
    baseline.acc_source = e.acc_source;
    baseline.acc_target = e.acc_target;
    curve.steps.push_back(baseline);
  }

  for (int t = 0; t < K; ++t) {
    MaskedView step_view(model);
    RemovalStep step;
    for (const auto& list : ranked) step.removed.push_back(list[t]);
    if (cumulative) {
      for (int id : step.removed) view.mask(id);
    } else {
      for (int id : step.removed) step_view.mask(id);
    }
    const MaskedView& active = cumulative ? view : step_view;
    const SweepEval e = eval_masked(active, table, tgt_labels, category);
    step.acc_source = e.acc_source;
    step.acc_target = e.acc_target;
    curve.steps.push_back(step);
  }

  std::vector<double> drops_src, drops_tgt;
  for (std::size_t t = 1; t < curve.steps.size(); ++t) {
    drops_src.push_back(curve.steps[t - 1].acc_source - curve.steps[t].acc_source);
    drops_tgt.push_back(curve.steps[t - 1].acc_target - curve.steps[t].acc_target);
  }
  if (drops_src.size() >= 2) {
    curve.correlation = spearman(drops_src, drops_tgt);
  } else {
    curve.correlation.rho = std::nan("");
    curve.correlation.defined = false;
    curve.correlation.reason = "fewer than 2 removal steps";
  }
  return curve;
}

namespace {

std::string join_ids(const std::vector<int>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(ids[i]);
  }
  return out;
}

void plot_curve(const RemovalCurve& curve, const std::string& path) {
  const int w = 560, h = 360, mleft = 56, mbot = 44, mtop = 20, mright = 16;
  cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  const int n = static_cast<int>(curve.steps.size());

  const auto px = [&](int step) {
    return mleft + static_cast<int>((w - mleft - mright) *
                                    (n > 1 ? static_cast<double>(step) / (n - 1)
                                           : 0.0));
  };
  const auto py = [&](double acc) {
    return mtop + static_cast<int>((h - mtop - mbot) * (1.0 - acc));
  };

  cv::line(img, {mleft, mtop}, {mleft, h - mbot}, cv::Scalar(0, 0, 0), 1);
  cv::line(img, {mleft, h - mbot}, {w - mright, h - mbot}, cv::Scalar(0, 0, 0), 1);
  for (int g = 0; g <= 4; ++g) {
    const double acc = g / 4.0;
    cv::line(img, {mleft - 3, py(acc)}, {mleft, py(acc)}, cv::Scalar(0, 0, 0), 1);
    cv::putText(img, cv::format("%.2f", acc), {6, py(acc) + 4},
                cv::FONT_HERSHEY_SIMPLEX, 0.38, cv::Scalar(0, 0, 0), 1);
  }
  const cv::Scalar src_color(192, 64, 0), tgt_color(0, 96, 224);
  for (int t = 1; t < n; ++t) {
    cv::line(img, {px(t - 1), py(curve.steps[t - 1].acc_source)},
             {px(t), py(curve.steps[t].acc_source)}, src_color, 2);
    cv::line(img, {px(t - 1), py(curve.steps[t - 1].acc_target)},
             {px(t), py(curve.steps[t].acc_target)}, tgt_color, 2);
  }
  for (int t = 0; t < n; ++t) {
    cv::circle(img, {px(t), py(curve.steps[t].acc_source)}, 3, src_color, -1);
    cv::circle(img, {px(t), py(curve.steps[t].acc_target)}, 3, tgt_color, -1);
  }
  cv::putText(img, "source", {mleft + 8, mtop + 16}, cv::FONT_HERSHEY_SIMPLEX,
              0.45, src_color, 1);
  cv::putText(img, "target", {mleft + 8, mtop + 34}, cv::FONT_HERSHEY_SIMPLEX,
              0.45, tgt_color, 1);
  const std::string title =
      "removed prototypes (" + curve.scope + ")" +
      (curve.correlation.defined
           ? cv::format(", spearman %.3f", curve.correlation.rho)
           : ", spearman undefined");
  cv::putText(img, title, {mleft, h - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
              cv::Scalar(0, 0, 0), 1);
  if (!cv::imwrite(path, img)) throw IoError("failed to write " + path);
}

}  // namespace

void write_removal_curve(const RemovalCurve& curve, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream csv(fs::path(dir) / "curve.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write curve.csv in " + dir);
    csv.precision(17);
    csv << "step,removed_id,acc_source,acc_target\n";
    for (std::size_t t = 0; t < curve.steps.size(); ++t) {
      csv << t << ',' << join_ids(curve.steps[t].removed) << ','
          << curve.steps[t].acc_source << ',' << curve.steps[t].acc_target
          << '\n';
    }
  }
  {
    nlohmann::json j;
    j["scope"] = curve.scope;
    j["cumulative"] = curve.cumulative;
    j["steps"] = curve.steps.size();
    if (curve.correlation.defined) {
      j["spearman"] = curve.correlation.rho;
    } else {
      j["spearman"] = nullptr;
      j["spearman_undefined_reason"] = curve.correlation.reason;
    }
    std::ofstream js(fs::path(dir) / "summary.json", std::ios::trunc);
    if (!js) throw IoError("cannot write summary.json in " + dir);
    js << j.dump(2) << "\n";
  }
  plot_curve(curve, (fs::path(dir) / "curve.png").string());
}

AblationResult fidelity_ablation(const BaseModel& base, const DomainPair& pair,
                                 const TrainConfig& cfg,
                                 const std::string& out_dir) {
  TrainConfig no_fid_cfg = cfg;
  no_fid_cfg.gamma = 0.0;

  AblationResult out;
  out.full = run_protocol(base, pair, cfg,
                          out_dir.empty() ? "" : out_dir + "/full");
  out.no_fid = run_protocol(base, pair, no_fid_cfg,
                            out_dir.empty() ? "" : out_dir + "/no_fid");
  out.full_metrics = evaluate(out.full, pair);
  out.no_fid_metrics = evaluate(out.no_fid, pair);
  return out;
}

}  // namespace protoda
