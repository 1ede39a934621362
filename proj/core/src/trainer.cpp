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

#include "protoda/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "protoda/errors.hpp"

namespace fs = std::filesystem;

namespace protoda {

void TrainConfig::validate() const {
  if (alpha < 0 || lambda < 0 || beta < 0 || gamma < 0)
    throw ConfigError("loss weights must be non-negative");
  if (lr <= 0) throw ConfigError("lr must be positive");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (push_every < 1) throw ConfigError("push_every must be >= 1");
  if (epochs > 0 && epochs % push_every != 0)
    throw ConfigError("push_every must divide epochs");
  if (last_layer_iters < 1) throw ConfigError("last_layer_iters must be >= 1");
  if (K < 1) throw ConfigError("K must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (sim_epsilon <= 0 || sim_epsilon >= 1)
    throw ConfigError("sim_epsilon must be in (0, 1)");
  if (batch_mix <= 0) throw ConfigError("batch_mix must be positive");
  if (target_weight < 0) throw ConfigError("target_weight must be >= 0");
}

FeatureVolume InterpretiveModel::features(const ImageSample& img,
                                          bool flip) const {
  return addon.forward(base.backbone_volume(base.image_to_input(img, flip)),
                       nullptr);
}

FeatureCache FeatureCache::build(const BaseModel& base, const DomainPair& pair,
                                 bool with_flip) {
  FeatureCache cache;
  auto run = [&base](const std::vector<ImageSample>& samples, bool flip) {
    std::vector<Hwc> out;
    out.reserve(samples.size());
    for (const auto& s : samples)
      out.push_back(base.backbone_volume(base.image_to_input(s, flip)));
    return out;
  };
  cache.src = run(pair.source, false);
  cache.tgt = run(pair.target, false);
  if (with_flip) {
    cache.src_flip = run(pair.source, true);
    cache.tgt_flip = run(pair.target, true);
  }
  return cache;
}

namespace {

// Process-wide backbone cache for the model/pair currently being trained.
// The backbone is frozen, so entries are immutable once built.
struct CacheSlot {
  std::uint64_t base_hash = 0, pair_fp = 0;
  bool with_flip = false;
  FeatureCache cache;
};

const FeatureCache& ensure_cache(const BaseModel& base, const DomainPair& pair,
                                 bool with_flip) {
  static CacheSlot slot;
  const std::uint64_t bh = base.param_hash();
  const std::uint64_t fp = pair.fingerprint();
  if (slot.base_hash != bh || slot.pair_fp != fp ||
      (with_flip && !slot.with_flip)) {
    slot.cache = FeatureCache::build(base, pair, with_flip);
    slot.base_hash = bh;
    slot.pair_fp = fp;
    slot.with_flip = with_flip;
  }
  return slot.cache;
}

std::string id_for(const ImageSample& img, bool flip) {
  return flip ? PseudoLabels::flip_key(img.id) : img.id;
}

double nan_val() { return std::nan(""); }

}  // namespace

InterpretiveModel init_interpretive(const BaseModel& base,
                                    const DomainPair& pair,
                                    const TrainConfig& cfg) {
  cfg.validate();
  pair.validate();
  if (!base.frozen())
    throw Error("interpretive training requires a frozen base model");

  InterpretiveModel model;
  model.base = base;
  model.addon = base.addon;  // trainable copy; the base's stays untouched
  model.cfg = cfg;
  model.dataset_fingerprint = pair.fingerprint();

  const FeatureCache& cache = ensure_cache(model.base, pair, cfg.flip);
  std::vector<FeatureVolume> src_vols;
  std::vector<int> labels;
  src_vols.reserve(pair.source.size());
  for (std::size_t i = 0; i < pair.source.size(); ++i) {
    src_vols.push_back(model.addon.forward(cache.src[i], nullptr));
    labels.push_back(*pair.source[i].label);
  }

  model.bank = PrototypeBank(pair.n_classes(), cfg.K,
                             static_cast<int>(base.feat_d()));
  Rng rng(mix_seed(cfg.seed, /*stream=*/5));
  model.bank.init_from_patches(src_vols, labels, rng);
  model.head = init_head(model.bank);
  model.pseudo = pseudo_label(base, pair, cfg.flip);
  return model;
}

// ------------------------------------------------------- prototype stage

namespace {

struct ProtoOptimizer {
  std::vector<double> proto_grad;
  nn::Adam opt;

  ProtoOptimizer(InterpretiveModel& model, const TrainConfig& cfg)
      : proto_grad(model.bank.raw().size(), 0.0), opt(cfg.lr) {
    opt.attach({"bank.vectors", &model.bank.raw(), &proto_grad});
    if (cfg.train_addon) opt.attach_all(model.addon.params("iaddon"));
    opt.import_state(model.opt_proto_state, model.opt_proto_t);
  }
  void persist(InterpretiveModel& model) {
    model.opt_proto_state = opt.export_state();
    model.opt_proto_t = opt.steps_taken();
  }
};

}  // namespace

void stage_prototypes(InterpretiveModel& model, const DomainPair& pair,
                      const TrainConfig& cfg, int epochs) {
  cfg.validate();
  if (model.dataset_fingerprint != pair.fingerprint())
    throw Error("dataset does not match the one this model was initialized on");
  const FeatureCache& cache = ensure_cache(model.base, pair, cfg.flip);
  const int d = model.bank.dim();

  ProtoOptimizer state(model, cfg);
  BatchStream stream(pair, cfg.batch_size, mix_seed(cfg.seed, 6), cfg.flip,
                     cfg.batch_mix);
  long step = static_cast<long>(model.opt_proto_t);

  for (int e = 0; e < epochs; ++e) {
    double ep_cls = 0, ep_c = 0, ep_s = 0, ep_fid = 0, ep_total = 0;
    int n_batches = 0;
    for (const MixedBatch& batch : stream.epoch(model.proto_epochs_done)) {
      std::fill(state.proto_grad.begin(), state.proto_grad.end(), 0.0);
      model.addon.zero_grad();

      const std::size_t n_src = batch.src.idx.size();
      const std::size_t n_tgt = batch.tgt.idx.size();

      std::vector<AddOnBlock::Ctx> src_ctx(n_src), tgt_ctx(n_tgt);
      std::vector<FeatureVolume> src_vols(n_src), tgt_vols(n_tgt);
      std::vector<SimilarityScores> src_ss(n_src), tgt_ss(n_tgt);
      std::vector<int> src_labels(n_src);
      ScoreBatch src_sb, tgt_sb;

      for (std::size_t i = 0; i < n_src; ++i) {
        const int idx = batch.src.idx[i];
        const bool flip = batch.src.flip[i] != 0;
        const Hwc& backbone = flip ? cache.src_flip[idx] : cache.src[idx];
        src_vols[i] = model.addon.forward(
            backbone, cfg.train_addon ? &src_ctx[i] : nullptr);
        src_ss[i] = similarity_scores(src_vols[i], model.bank, cfg.sim_epsilon);
        src_labels[i] = *pair.source[idx].label;
        src_sb.scores.push_back(src_ss[i].score);
        src_sb.ids.push_back(id_for(pair.source[idx], flip));
      }
      for (std::size_t i = 0; i < n_tgt; ++i) {
        const int idx = batch.tgt.idx[i];
        const bool flip = batch.tgt.flip[i] != 0;
        const Hwc& backbone = flip ? cache.tgt_flip[idx] : cache.tgt[idx];
        tgt_vols[i] = model.addon.forward(
            backbone, cfg.train_addon ? &tgt_ctx[i] : nullptr);
        tgt_ss[i] = similarity_scores(tgt_vols[i], model.bank, cfg.sim_epsilon);
        tgt_sb.scores.push_back(tgt_ss[i].score);
        tgt_sb.ids.push_back(id_for(pair.target[idx], flip));
      }

      std::vector<FeatureVolume> gvol_c, gvol_s;
      std::vector<double> gproto_c, gproto_s;
      const double l_c = cluster_loss_grad(src_vols, src_labels, model.bank,
                                           &gvol_c, &gproto_c);
      const double l_s = separation_loss_grad(src_vols, src_labels, model.bank,
                                              &gvol_s, &gproto_s);

      std::vector<std::vector<double>> gs_src, gs_tgt, gs_fid;
      const double l_cls = calibration_loss_grad(
          src_sb, tgt_sb, model.head, model.pseudo, cfg.target_weight,
          &gs_src, &gs_tgt, nullptr);
      const double l_fid = fidelity_loss_grad(tgt_sb, model.head, model.pseudo,
                                              &gs_fid, nullptr);
      const double total =
          l_cls + cfg.alpha * l_c + cfg.beta * l_s + cfg.gamma * l_fid;
      if (!std::isfinite(total))
        throw TrainingDiverged("non-finite prototype-stage loss", step);

      // Prototype grads from the clustering/separation terms.
      for (std::size_t t = 0; t < state.proto_grad.size(); ++t)
        state.proto_grad[t] +=
            cfg.alpha * gproto_c[t] + cfg.beta * gproto_s[t];

      // Score-path grads route through the similarity activation to the
      // winning patch and its prototype.
      for (std::size_t i = 0; i < n_src; ++i) {
        FeatureVolume gvol = std::move(gvol_c[i]);
        for (std::size_t t = 0; t < gvol.v.size(); ++t)
          gvol.v[t] = cfg.alpha * gvol.v[t] + cfg.beta * gvol_s[i].v[t];
        const auto& ss = src_ss[i];
        for (int j = 0; j < model.bank.size(); ++j) {
          const double gscore = gs_src[i][j];
          if (gscore == 0.0) continue;
          const double gd =
              gscore * similarity_grad(ss.dist.dist2[j], cfg.sim_epsilon);
          const double* zv = src_vols[i].patch(ss.dist.row[j], ss.dist.col[j]);
          const double* p = model.bank.vec(j);
          double* gz = gvol.patch(ss.dist.row[j], ss.dist.col[j]);
          double* gp = state.proto_grad.data() + static_cast<std::size_t>(j) * d;
          for (int t = 0; t < d; ++t) {
            const double diff2 = 2.0 * (zv[t] - p[t]);
            gz[t] += gd * diff2;
            gp[t] -= gd * diff2;
          }
        }
        if (cfg.train_addon) model.addon.backward(gvol, src_ctx[i]);
      }
      for (std::size_t i = 0; i < n_tgt; ++i) {
        FeatureVolume gvol(tgt_vols[i].h, tgt_vols[i].w, tgt_vols[i].d);
        const auto& ss = tgt_ss[i];
        for (int j = 0; j < model.bank.size(); ++j) {
          const double gscore = gs_tgt[i][j] + cfg.gamma * gs_fid[i][j];
          if (gscore == 0.0) continue;
          const double gd =
              gscore * similarity_grad(ss.dist.dist2[j], cfg.sim_epsilon);
          const double* zv = tgt_vols[i].patch(ss.dist.row[j], ss.dist.col[j]);
          const double* p = model.bank.vec(j);
          double* gz = gvol.patch(ss.dist.row[j], ss.dist.col[j]);
          double* gp = state.proto_grad.data() + static_cast<std::size_t>(j) * d;
          for (int t = 0; t < d; ++t) {
            const double diff2 = 2.0 * (zv[t] - p[t]);
            gz[t] += gd * diff2;
            gp[t] -= gd * diff2;
          }
        }
        if (cfg.train_addon) model.addon.backward(gvol, tgt_ctx[i]);
      }

      state.opt.step(1.0);
      ++step;
      ep_cls += l_cls;
      ep_c += l_c;
      ep_s += l_s;
      ep_fid += l_fid;
      ep_total += total;
      ++n_batches;
    }

    LogRow row;
    row.epoch = model.proto_epochs_done;
    row.stage = "proto";
    row.l_cls = ep_cls / n_batches;
    row.l_c = ep_c / n_batches;
    row.l_s = ep_s / n_batches;
    row.l_fid = ep_fid / n_batches;
    row.total = ep_total / n_batches;
    row.agreement = row.acc_hp = row.acc_hf = nan_val();
    model.log.push_back(row);
    ++model.proto_epochs_done;
  }
  state.persist(model);
}

// ------------------------------------------------------------- push stage

ProjectionReport stage_push(InterpretiveModel& model, const DomainPair& pair) {
  if (model.dataset_fingerprint != pair.fingerprint())
    throw Error("dataset does not match the one this model was initialized on");
  const FeatureCache& cache = ensure_cache(model.base, pair, model.cfg.flip);
  std::vector<FeatureVolume> vols;
  std::vector<int> labels;
  std::vector<std::string> ids;
  vols.reserve(pair.source.size());
  for (std::size_t i = 0; i < pair.source.size(); ++i) {
    vols.push_back(model.addon.forward(cache.src[i], nullptr));
    labels.push_back(*pair.source[i].label);
    ids.push_back(pair.source[i].id);
  }
  const ProjectionReport report =
      project_prototypes(model.bank, vols, labels, ids);

  LogRow row;
  row.epoch = model.proto_epochs_done;
  row.stage = "push";
  row.l_cls = row.l_c = row.l_s = row.l_fid = nan_val();
  row.total = report.total_movement;
  row.agreement = row.acc_hp = row.acc_hf = nan_val();
  model.log.push_back(row);
  return report;
}

// ------------------------------------------------------- last-layer stage

void stage_last_layer(InterpretiveModel& model, const DomainPair& pair,
                      const TrainConfig& cfg) {
  cfg.validate();
  if (model.dataset_fingerprint != pair.fingerprint())
    throw Error("dataset does not match the one this model was initialized on");
  const FeatureCache& cache = ensure_cache(model.base, pair, cfg.flip);

  const std::vector<double> protos_before = model.bank.raw();

  // Prototypes and add-on are fixed here, so every sample's score vector is
  // computed once per orientation.
  auto table_for = [&](const std::vector<ImageSample>& samples,
                       const std::vector<Hwc>& backbones) {
    std::vector<std::vector<double>> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
      out[i] = similarity_scores(model.addon.forward(backbones[i], nullptr),
                                 model.bank, cfg.sim_epsilon)
                   .score;
    return out;
  };
  const auto src_scores = table_for(pair.source, cache.src);
  const auto tgt_scores = table_for(pair.target, cache.tgt);
  std::vector<std::vector<double>> src_scores_flip, tgt_scores_flip;
  if (cfg.flip) {
    src_scores_flip = table_for(pair.source, cache.src_flip);
    tgt_scores_flip = table_for(pair.target, cache.tgt_flip);
  }

  std::vector<double> head_grad(model.head.raw().size(), 0.0);
  nn::Adam opt(cfg.lr);
  opt.attach({"head.w", &model.head.raw(), &head_grad});
  opt.import_state(model.opt_head_state, model.opt_head_t);
  long step = static_cast<long>(model.opt_head_t);

  BatchStream stream(pair, cfg.batch_size, mix_seed(cfg.seed, 7), cfg.flip,
                     cfg.batch_mix);

  for (int it = 0; it < cfg.last_layer_iters; ++it) {
    double ep_cls = 0, ep_total = 0;
    int n_batches = 0;
    for (const MixedBatch& batch : stream.epoch(model.last_epochs_done)) {
      ScoreBatch src_sb, tgt_sb;
      for (std::size_t i = 0; i < batch.src.idx.size(); ++i) {
        const int idx = batch.src.idx[i];
        const bool flip = batch.src.flip[i] != 0;
        src_sb.scores.push_back(flip ? src_scores_flip[idx] : src_scores[idx]);
        src_sb.ids.push_back(id_for(pair.source[idx], flip));
      }
      for (std::size_t i = 0; i < batch.tgt.idx.size(); ++i) {
        const int idx = batch.tgt.idx[i];
        const bool flip = batch.tgt.flip[i] != 0;
        tgt_sb.scores.push_back(flip ? tgt_scores_flip[idx] : tgt_scores[idx]);
        tgt_sb.ids.push_back(id_for(pair.target[idx], flip));
      }

      std::vector<double> gw;
      const double l_cls =
          calibration_loss_grad(src_sb, tgt_sb, model.head, model.pseudo,
                                cfg.target_weight, nullptr, nullptr, &gw);
      double l1 = 0.0;
      const auto& w = model.head.raw();
      for (std::size_t t = 0; t < w.size(); ++t) {
        l1 += std::fabs(w[t]);
        gw[t] += cfg.lambda * (w[t] > 0 ? 1.0 : (w[t] < 0 ? -1.0 : 0.0));
      }
      const double total = l_cls + cfg.lambda * l1;
      if (!std::isfinite(total))
        throw TrainingDiverged("non-finite last-layer loss", step);

      head_grad = std::move(gw);
      opt.step(1.0);
      ++step;
      ep_cls += l_cls;
      ep_total += total;
      ++n_batches;
    }

    LogRow row;
    row.epoch = model.last_epochs_done;
    row.stage = "last";
    row.l_cls = ep_cls / n_batches;
    row.l_c = row.l_s = row.l_fid = nan_val();
    row.total = ep_total / n_batches;
    row.agreement = row.acc_hp = row.acc_hf = nan_val();
    model.log.push_back(row);
    ++model.last_epochs_done;
  }

  model.opt_head_state = opt.export_state();
  model.opt_head_t = opt.steps_taken();

  if (protos_before != model.bank.raw())
    throw Error("last-layer stage must not move prototypes");
}

// ------------------------------------------------------------- evaluation

ScoreTable compute_scores(const InterpretiveModel& model,
                          const DomainPair& pair) {
  const FeatureCache& cache = ensure_cache(model.base, pair, model.cfg.flip);
  ScoreTable table;
  for (std::size_t i = 0; i < pair.source.size(); ++i) {
    table.src.scores.push_back(
        similarity_scores(model.addon.forward(cache.src[i], nullptr),
                          model.bank, model.cfg.sim_epsilon)
            .score);
    table.src.ids.push_back(pair.source[i].id);
    table.src_labels.push_back(*pair.source[i].label);
  }
  for (std::size_t i = 0; i < pair.target.size(); ++i) {
    table.tgt.scores.push_back(
        similarity_scores(model.addon.forward(cache.tgt[i], nullptr),
                          model.bank, model.cfg.sim_epsilon)
            .score);
    table.tgt.ids.push_back(pair.target[i].id);
  }
  return table;
}

Metrics evaluate(const InterpretiveModel& model, const DomainPair& pair) {
  const ScoreTable table = compute_scores(model, pair);
  const std::size_t n = pair.target.size();

  int agree = 0, hp_correct = 0, hf_correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int pred_hp =
        nn::argmax_tie_smallest(model.head.logits(table.tgt.scores[i]));
    const int pred_hf = model.pseudo.at(table.tgt.ids[i]).yhat;
    if (pred_hp == pred_hf) ++agree;
    if (pair.has_eval_target_labels()) {
      const int truth = pair.eval_only_target_labels()[i];
      if (pred_hp == truth) ++hp_correct;
      if (pred_hf == truth) ++hf_correct;
    }
  }

  Metrics m;
  m.agreement = static_cast<double>(agree) / static_cast<double>(n);
  if (pair.has_eval_target_labels()) {
    m.acc_hp = static_cast<double>(hp_correct) / static_cast<double>(n);
    m.acc_hf = static_cast<double>(hf_correct) / static_cast<double>(n);
  } else {
    m.acc_hp = m.acc_hf = nan_val();
  }
  m.mean_fidelity = fidelity_loss(table.tgt, model.head, model.pseudo);
  return m;
}

// ---------------------------------------------------------- serialization

namespace {

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"alpha", cfg.alpha},
          {"beta", cfg.beta},
          {"gamma", cfg.gamma},
          {"lambda", cfg.lambda},
          {"lr", cfg.lr},
          {"epochs", cfg.epochs},
          {"push_every", cfg.push_every},
          {"last_layer_iters", cfg.last_layer_iters},
          {"K", cfg.K},
          {"seed", cfg.seed},
          {"batch_size", cfg.batch_size},
          {"flip", cfg.flip},
          {"train_addon", cfg.train_addon},
          {"sim_epsilon", cfg.sim_epsilon},
          {"batch_mix", cfg.batch_mix},
          {"target_weight", cfg.target_weight}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.alpha = j.at("alpha");
  cfg.beta = j.at("beta");
  cfg.gamma = j.at("gamma");
  cfg.lambda = j.at("lambda");
  cfg.lr = j.at("lr");
  cfg.epochs = j.at("epochs");
  cfg.push_every = j.at("push_every");
  cfg.last_layer_iters = j.at("last_layer_iters");
  cfg.K = j.at("K");
  cfg.seed = j.at("seed");
  cfg.batch_size = j.at("batch_size");
  cfg.flip = j.at("flip");
  cfg.train_addon = j.at("train_addon");
  cfg.sim_epsilon = j.at("sim_epsilon");
  cfg.batch_mix = j.at("batch_mix");
  cfg.target_weight = j.at("target_weight");
  return cfg;
}

nlohmann::json log_to_json(const std::vector<LogRow>& log) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : log) {
    auto num = [](double v) -> nlohmann::json {
      if (std::isnan(v)) return nullptr;
      return v;
    };
    out.push_back({{"epoch", r.epoch},
                   {"stage", r.stage},
                   {"l_cls", num(r.l_cls)},
                   {"l_c", num(r.l_c)},
                   {"l_s", num(r.l_s)},
                   {"l_fid", num(r.l_fid)},
                   {"total", num(r.total)},
                   {"agreement", num(r.agreement)},
                   {"acc_hp", num(r.acc_hp)},
                   {"acc_hf", num(r.acc_hf)}});
  }
  return out;
}

std::vector<LogRow> log_from_json(const nlohmann::json& j) {
  std::vector<LogRow> out;
  auto num = [](const nlohmann::json& v) {
    return v.is_null() ? std::nan("") : v.get<double>();
  };
  for (const auto& r : j) {
    LogRow row;
    row.epoch = r.at("epoch");
    row.stage = r.at("stage");
    row.l_cls = num(r.at("l_cls"));
    row.l_c = num(r.at("l_c"));
    row.l_s = num(r.at("l_s"));
    row.l_fid = num(r.at("l_fid"));
    row.total = num(r.at("total"));
    row.agreement = num(r.at("agreement"));
    row.acc_hp = num(r.at("acc_hp"));
    row.acc_hf = num(r.at("acc_hf"));
    out.push_back(row);
  }
  return out;
}

void put_opt_state(Archive& ar, const std::string& prefix,
                   const std::vector<nn::Adam::SlotState>& slots) {
  for (const auto& s : slots) {
    ar.put_flat(prefix + s.name + ".m", s.m);
    ar.put_flat(prefix + s.name + ".v", s.v);
  }
}

std::vector<nn::Adam::SlotState> get_opt_state(const Archive& ar,
                                               const std::string& prefix) {
  std::vector<nn::Adam::SlotState> out;
  for (const auto& name : ar.names()) {
    if (name.rfind(prefix, 0) != 0) continue;
    if (name.size() < 2 || name.substr(name.size() - 2) != ".m") continue;
    const std::string base = name.substr(prefix.size(), name.size() - prefix.size() - 2);
    nn::Adam::SlotState s;
    s.name = base;
    s.m = ar.get(prefix + base + ".m");
    s.v = ar.get(prefix + base + ".v");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void save_interpretive(const InterpretiveModel& model, const std::string& path) {
  Archive ar;
  ar.kind = "interp";
  base_to_archive(model.base, ar);

  auto& m = const_cast<InterpretiveModel&>(model);
  for (const auto& p : m.addon.params("iaddon")) ar.put_flat(p.name, *p.value);
  ar.put("bank.vectors",
         {static_cast<std::size_t>(model.bank.size()),
          static_cast<std::size_t>(model.bank.dim())},
         model.bank.raw());
  ar.put("head.w",
         {static_cast<std::size_t>(model.head.n_protos()),
          static_cast<std::size_t>(model.head.n_classes())},
         model.head.raw());
  put_opt_state(ar, "opt.proto.", model.opt_proto_state);
  put_opt_state(ar, "opt.head.", model.opt_head_state);

  nlohmann::json prov = nlohmann::json::array();
  for (const auto& p : model.bank.provenance()) {
    if (p)
      prov.push_back({{"sample_id", p->sample_id},
                      {"sample_index", p->sample_index},
                      {"row", p->row},
                      {"col", p->col},
                      {"distance", p->distance}});
    else
      prov.push_back(nullptr);
  }
  ar.meta["bank"] = {{"n_classes", model.bank.n_classes()},
                     {"k_per_class", model.bank.k_per_class()},
                     {"dim", model.bank.dim()},
                     {"assignment", model.bank.assignment()},
                     {"provenance", prov}};
  ar.meta["config"] = train_config_to_json(model.cfg);
  ar.meta["log"] = log_to_json(model.log);
  // RNG streams are counter-derived, so seed + counters pin the state.
  ar.meta["rng"] = {{"seed", model.cfg.seed},
                    {"rounds_done", model.rounds_done},
                    {"proto_epochs_done", model.proto_epochs_done},
                    {"last_epochs_done", model.last_epochs_done},
                    {"opt_proto_t", model.opt_proto_t},
                    {"opt_head_t", model.opt_head_t}};
  ar.meta["best"] = {{"agreement", model.best_agreement},
                     {"round", model.best_round}};
  ar.meta["dataset_fingerprint"] = model.dataset_fingerprint;
  ar.save(path);
}

InterpretiveModel load_interpretive(const std::string& path) {
  const Archive ar = Archive::load(path);
  if (ar.kind != "interp") throw IoError("not an interpretive checkpoint: " + path);

  InterpretiveModel model;
  model.base = base_from_archive(ar);
  model.cfg = train_config_from_json(ar.meta.at("config"));

  model.addon = model.base.addon;
  for (const auto& p : model.addon.params("iaddon")) *p.value = ar.get(p.name);

  const auto& bank_meta = ar.meta.at("bank");
  model.bank = PrototypeBank(bank_meta.at("n_classes").get<int>(),
                             bank_meta.at("k_per_class").get<int>(),
                             bank_meta.at("dim").get<int>());
  model.bank.raw() = ar.get("bank.vectors");
  int j = 0;
  for (const auto& p : bank_meta.at("provenance")) {
    if (!p.is_null()) {
      Provenance prov;
      prov.sample_id = p.at("sample_id");
      prov.sample_index = p.at("sample_index");
      prov.row = p.at("row");
      prov.col = p.at("col");
      prov.distance = p.at("distance");
      model.bank.provenance()[j] = prov;
    }
    ++j;
  }

  model.head =
      PrototypicalHead(model.bank.size(), model.bank.n_classes());
  model.head.raw() = ar.get("head.w");

  model.log = log_from_json(ar.meta.at("log"));
  const auto& rng = ar.meta.at("rng");
  model.rounds_done = rng.at("rounds_done");
  model.proto_epochs_done = rng.at("proto_epochs_done");
  model.last_epochs_done = rng.at("last_epochs_done");
  model.opt_proto_t = rng.at("opt_proto_t");
  model.opt_head_t = rng.at("opt_head_t");
  model.best_agreement = ar.meta.at("best").at("agreement");
  model.best_round = ar.meta.at("best").at("round");
  model.dataset_fingerprint = ar.meta.at("dataset_fingerprint");
  model.opt_proto_state = get_opt_state(ar, "opt.proto.");
  model.opt_head_state = get_opt_state(ar, "opt.head.");
  return model;
}

void bind_dataset(InterpretiveModel& model, const DomainPair& pair) {
  if (model.dataset_fingerprint != pair.fingerprint())
    throw Error("checkpoint was trained on a different dataset");
  model.pseudo = pseudo_label(model.base, pair, model.cfg.flip);
}

// ------------------------------------------------------------ run_protocol

namespace {

std::string round_ckpt_path(const std::string& dir, int round) {
  std::ostringstream os;
  os << dir << "/interp_round_" << round << ".ckpt";
  return os.str();
}

}  // namespace

InterpretiveModel run_protocol(const BaseModel& base, const DomainPair& pair,
                               const TrainConfig& cfg,
                               const std::string& out_dir, bool resume) {
  cfg.validate();
  if (!base.frozen()) throw Error("run_protocol requires a frozen base model");

  const std::uint64_t base_hash_before = base.param_hash();
  const int rounds = cfg.epochs == 0 ? 0 : cfg.epochs / cfg.push_every;

  InterpretiveModel model;
  bool resumed = false;
  if (resume && !out_dir.empty()) {
    for (int r = rounds; r >= 1 && !resumed; --r) {
      const std::string path = round_ckpt_path(out_dir, r);
      if (fs::exists(path)) {
        model = load_interpretive(path);
        bind_dataset(model, pair);
        resumed = true;
      }
    }
  }
  if (!resumed) model = init_interpretive(base, pair, cfg);

  if (cfg.epochs == 0) {
    std::cerr << "[protoda] warning: epochs == 0, returning initialized model "
                 "with un-pushed prototypes\n";
    return model;
  }

  if (!out_dir.empty()) fs::create_directories(out_dir);

  for (int r = model.rounds_done; r < rounds; ++r) {
    stage_prototypes(model, pair, cfg, cfg.push_every);
    stage_push(model, pair);
    stage_last_layer(model, pair, cfg);

    const Metrics m = evaluate(model, pair);
    LogRow row;
    row.epoch = model.proto_epochs_done;
    row.stage = "eval";
    row.l_cls = row.l_c = row.l_s = nan_val();
    row.l_fid = m.mean_fidelity;
    row.total = nan_val();
    row.agreement = m.agreement;
    row.acc_hp = m.acc_hp;
    row.acc_hf = m.acc_hf;
    model.log.push_back(row);

    model.rounds_done = r + 1;
    if (m.agreement > model.best_agreement) {
      model.best_agreement = m.agreement;
      model.best_round = r + 1;
      if (!out_dir.empty()) save_interpretive(model, out_dir + "/interp_best.ckpt");
    }
    if (!out_dir.empty()) {
      save_interpretive(model, round_ckpt_path(out_dir, r + 1));
      write_training_log_csv(model.log, out_dir + "/training_log.csv");
    }
  }

  if (!out_dir.empty()) {
    save_interpretive(model, out_dir + "/interp_final.ckpt");
    write_training_log_csv(model.log, out_dir + "/training_log.csv");
  }

  if (base.param_hash() != base_hash_before)
    throw Error("base model parameters changed during interpretive training");
  return model;
}

void write_training_log_csv(const std::vector<LogRow>& log,
                            const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write training log: " + path);
  out << "epoch,stage,L_Cls,L_c,L_s,L_Fid,total,agreement,acc_hp,acc_hf\n";
  out.precision(17);
  auto cell = [&out](double v) {
    if (std::isnan(v))
      out << "";
    else
      out << v;
  };
  for (const auto& r : log) {
    out << r.epoch << ',' << r.stage << ',';
    cell(r.l_cls);
    out << ',';
    cell(r.l_c);
    out << ',';
    cell(r.l_s);
    out << ',';
    cell(r.l_fid);
    out << ',';
    cell(r.total);
    out << ',';
    cell(r.agreement);
    out << ',';
    cell(r.acc_hp);
    out << ',';
    cell(r.acc_hf);
    out << '\n';
  }
}

}  // namespace protoda
