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

// protoda: train the base DA model, fit the interpretive prototype layer,
// and render cross-domain explanations and prototype diagnostics.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "protoda/config.hpp"
#include "protoda/errors.hpp"
#include "protoda/explain.hpp"
#include "protoda/inspect.hpp"

namespace fs = std::filesystem;
using namespace protoda;

namespace {

// Raw option storage; only values the user actually set (flag/ config file)
// override the profile defaults.
struct RawOpts {
  std::string profile = "synthetic";
  std::uint64_t seed = 7;
  std::string out;
  std::string base_path;
  std::string interp_path;
  bool print_config = false;
  bool non_cumulative = false;
  bool fresh = false;

  DataConfig data;
  std::vector<double> mean{0.5, 0.5, 0.5}, stdev{0.5, 0.5, 0.5};
  BaseTrainConfig base;
  TrainConfig interp;
  ReportOptions report;
  InspectConfig inspect;
};

std::string cache_root() {
  const char* env = std::getenv("PROTODA_CACHE");
  return env && *env ? env : "protoda_cache";
}

std::string default_out(const std::string& command, const RunConfig& cfg) {
  std::ostringstream os;
  os << cache_root() << "/" << command << "-" << profile_to_string(cfg.profile)
     << "-seed" << cfg.seed;
  return os.str();
}

std::uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return 0;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    if (!in) break;
  }
  return h;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  const std::string s = os.str();
  // Keep TOML floats unambiguous for integer-valued settings.
  return s.find_first_of(".eE") == std::string::npos ? s + ".0" : s;
}

std::string emit_toml(const RunConfig& cfg) {
  std::ostringstream os;
  os << "profile = \"" << profile_to_string(cfg.profile) << "\"\n";
  os << "seed = " << cfg.seed << "\n\n";
  os << "[data]\n";
  os << "source_root = \"" << cfg.data.source_root << "\"\n";
  os << "target_root = \"" << cfg.data.target_root << "\"\n";
  os << "image_side = " << cfg.data.image_side << "\n";
  os << "n_classes = " << cfg.data.n_classes << "\n";
  os << "per_class = " << cfg.data.per_class << "\n";
  os << "hue_deg = " << fmt_double(cfg.data.hue_deg) << "\n";
  os << "noise_sigma = " << fmt_double(cfg.data.noise_sigma) << "\n";
  os << "texture = " << (cfg.data.texture ? "true" : "false") << "\n";
  os << "mean = [" << fmt_double(cfg.data.mean[0]) << ", "
     << fmt_double(cfg.data.mean[1]) << ", " << fmt_double(cfg.data.mean[2])
     << "]\n";
  os << "stdev = [" << fmt_double(cfg.data.stdev[0]) << ", "
     << fmt_double(cfg.data.stdev[1]) << ", " << fmt_double(cfg.data.stdev[2])
     << "]\n\n";
  os << "[base]\n";
  os << "epochs = " << cfg.base.epochs << "\n";
  os << "lr = " << fmt_double(cfg.base.lr) << "\n";
  os << "batch_size = " << cfg.base.batch_size << "\n";
  os << "flip = " << (cfg.base.flip ? "true" : "false") << "\n";
  os << "grl_max = " << fmt_double(cfg.base.grl_max) << "\n";
  os << "grl_gamma = " << fmt_double(cfg.base.grl_gamma) << "\n";
  os << "optimizer = \"" << cfg.base.optimizer << "\"\n\n";
  os << "[interp]\n";
  os << "alpha = " << fmt_double(cfg.interp.alpha) << "\n";
  os << "beta = " << fmt_double(cfg.interp.beta) << "\n";
  os << "gamma = " << fmt_double(cfg.interp.gamma) << "\n";
  os << "lambda = " << fmt_double(cfg.interp.lambda) << "\n";
  os << "lr = " << fmt_double(cfg.interp.lr) << "\n";
  os << "epochs = " << cfg.interp.epochs << "\n";
  os << "push_every = " << cfg.interp.push_every << "\n";
  os << "last_layer_iters = " << cfg.interp.last_layer_iters << "\n";
  os << "k = " << cfg.interp.K << "\n";
  os << "batch_size = " << cfg.interp.batch_size << "\n";
  os << "flip = " << (cfg.interp.flip ? "true" : "false") << "\n";
  os << "train_addon = " << (cfg.interp.train_addon ? "true" : "false") << "\n";
  os << "sim_epsilon = " << fmt_double(cfg.interp.sim_epsilon) << "\n";
  os << "batch_mix = " << fmt_double(cfg.interp.batch_mix) << "\n";
  os << "target_weight = " << fmt_double(cfg.interp.target_weight) << "\n\n";
  os << "[explain]\n";
  os << "top_m = " << cfg.report.top_m << "\n";
  os << "tau = " << fmt_double(cfg.report.tau) << "\n\n";
  os << "[inspect]\n";
  os << "scope = \"" << cfg.inspect.scope << "\"\n";
  os << "cumulative = " << (cfg.inspect.cumulative ? "true" : "false") << "\n";
  os << "ablation = " << (cfg.inspect.ablation ? "true" : "false") << "\n";
  return os.str();
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const RunConfig& cfg,
                    const std::vector<std::string>& input_artifacts,
                    const std::vector<std::string>& output_artifacts) {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = cfg.to_json();
  j["seed"] = cfg.seed;
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& p : input_artifacts) {
    std::ostringstream h;
    h << std::hex << file_hash(p);
    inputs[p] = h.str();
  }
  nlohmann::json outputs = nlohmann::json::object();
  for (const auto& p : output_artifacts) {
    std::ostringstream h;
    h << std::hex << file_hash(p);
    outputs[p] = h.str();
  }
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  fs::create_directories(out_dir);
  std::ofstream f(fs::path(out_dir) / "manifest.json", std::ios::trunc);
  if (!f) throw IoError("cannot write manifest in " + out_dir);
  f << j.dump(2) << "\n";
}

nlohmann::json metrics_to_json(const Metrics& m) {
  auto num = [](double v) -> nlohmann::json {
    return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
  };
  return {{"acc_hp", num(m.acc_hp)},
          {"acc_hf", num(m.acc_hf)},
          {"agreement", m.agreement},
          {"mean_fidelity", m.mean_fidelity}};
}

struct App {
  CLI::App cli{"prototype-based explanations for unsupervised domain adaptation",
               "protoda"};
  RawOpts raw;
  std::map<std::string, CLI::Option*> opts;
  CLI::App* cmd_train_base = nullptr;
  CLI::App* cmd_train_interp = nullptr;
  CLI::App* cmd_explain = nullptr;
  CLI::App* cmd_inspect = nullptr;
  CLI::App* cmd_eval = nullptr;

  App() {
    cli.fallthrough(true);
    cli.set_config("--config", "", "TOML config file; flags override file values");
    cli.allow_config_extras(false);

    opts["profile"] = cli.add_option("--profile", raw.profile,
                                     "synthetic|office-home|domainnet-126");
    opts["seed"] = cli.add_option("--seed", raw.seed,
                                  "run seed (required for training commands)");
    opts["out"] = cli.add_option("--out", raw.out, "output directory");
    cli.add_flag("--print-config", raw.print_config,
                 "print the resolved config as TOML and exit");

    auto o = [this](const std::string& name, auto& target, const char* help) {
      opts[name] = cli.add_option("--" + name, target, help);
    };
    o("data.source_root", raw.data.source_root, "source image tree (real data)");
    o("data.target_root", raw.data.target_root, "target image tree (real data)");
    o("data.image_side", raw.data.image_side, "input resolution");
    o("data.n_classes", raw.data.n_classes, "synthetic class count");
    o("data.per_class", raw.data.per_class, "synthetic samples per class/domain");
    o("data.hue_deg", raw.data.hue_deg, "synthetic target hue rotation");
    o("data.noise_sigma", raw.data.noise_sigma, "synthetic target noise (8-bit)");
    o("data.texture", raw.data.texture, "synthetic target background texture");
    opts["data.mean"] =
        cli.add_option("--data.mean", raw.mean, "norm mean (3)")->expected(3);
    opts["data.stdev"] =
        cli.add_option("--data.stdev", raw.stdev, "norm std (3)")->expected(3);

    o("base.epochs", raw.base.epochs, "base training epochs");
    o("base.lr", raw.base.lr, "base learning rate");
    o("base.batch_size", raw.base.batch_size, "base per-domain sub-batch size");
    o("base.flip", raw.base.flip, "horizontal-flip augmentation for base");
    o("base.grl_max", raw.base.grl_max, "gradient-reversal coefficient ceiling");
    o("base.grl_gamma", raw.base.grl_gamma, "gradient-reversal schedule sharpness");
    o("base.optimizer", raw.base.optimizer, "optimizer family (adam)");

    o("interp.alpha", raw.interp.alpha, "clustering weight");
    o("interp.beta", raw.interp.beta, "separation weight");
    o("interp.gamma", raw.interp.gamma, "fidelity weight");
    o("interp.lambda", raw.interp.lambda, "last-layer L1 weight");
    o("interp.lr", raw.interp.lr, "interpretive learning rate");
    o("interp.epochs", raw.interp.epochs, "prototype-layer epochs");
    o("interp.push_every", raw.interp.push_every, "epochs between pushes");
    o("interp.last_layer_iters", raw.interp.last_layer_iters,
      "head epochs per round");
    o("interp.k", raw.interp.K, "prototypes per category");
    o("interp.batch_size", raw.interp.batch_size,
      "interpretive per-domain sub-batch size");
    o("interp.flip", raw.interp.flip, "flip augmentation during interp training");
    o("interp.train_addon", raw.interp.train_addon,
      "train the add-on copy with the prototype layer");
    o("interp.sim_epsilon", raw.interp.sim_epsilon, "similarity epsilon");
    o("interp.batch_mix", raw.interp.batch_mix, "target:source batch ratio");
    o("interp.target_weight", raw.interp.target_weight,
      "weight of the target CE term");

    o("explain.top_m", raw.report.top_m, "examples per domain per prototype");
    o("explain.tau", raw.report.tau, "mismatch IoU threshold (synthetic)");

    o("inspect.scope", raw.inspect.scope, "all | category name");
    o("inspect.cumulative", raw.inspect.cumulative, "cumulative removal");
    o("inspect.ablation", raw.inspect.ablation, "also run the fidelity ablation");

    cmd_train_base = cli.add_subcommand("train-base", "train and freeze the base DA model");
    cmd_train_interp =
        cli.add_subcommand("train-interp", "fit the interpretive prototype model");
    cmd_explain = cli.add_subcommand("explain", "render the cross-domain report");
    cmd_inspect = cli.add_subcommand("inspect", "removal sweeps and diagnostics");
    cmd_eval = cli.add_subcommand("eval", "fidelity/accuracy metrics");

    cmd_train_interp->add_option("--base", raw.base_path,
                                 "base checkpoint (file or train-base out dir)");
    cmd_inspect->add_option("--base", raw.base_path,
                            "base checkpoint (needed for --inspect.ablation)");
    cmd_inspect->add_flag("--non-cumulative", raw.non_cumulative,
                          "mask each step's prototypes in isolation");
    for (CLI::App* c : {cmd_explain, cmd_inspect, cmd_eval})
      c->add_option("--interp", raw.interp_path,
                    "interpretive checkpoint (file or train-interp out dir)");
    for (CLI::App* c :
         {cmd_train_base, cmd_train_interp, cmd_explain, cmd_inspect, cmd_eval})
      c->fallthrough(true);
    cli.add_flag("--fresh", raw.fresh, "ignore existing checkpoints (no resume)");
    cli.require_subcommand(0, 1);
  }

  bool set(const std::string& name) const {
    auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }

  RunConfig resolve() const {
    RunConfig cfg = default_config(profile_from_string(raw.profile));
    cfg.seed = raw.seed;

    auto apply = [this](const std::string& name, auto& dst, const auto& src) {
      if (set(name)) dst = src;
    };
    apply("data.source_root", cfg.data.source_root, raw.data.source_root);
    apply("data.target_root", cfg.data.target_root, raw.data.target_root);
    apply("data.image_side", cfg.data.image_side, raw.data.image_side);
    apply("data.n_classes", cfg.data.n_classes, raw.data.n_classes);
    apply("data.per_class", cfg.data.per_class, raw.data.per_class);
    apply("data.hue_deg", cfg.data.hue_deg, raw.data.hue_deg);
    apply("data.noise_sigma", cfg.data.noise_sigma, raw.data.noise_sigma);
    apply("data.texture", cfg.data.texture, raw.data.texture);
    if (set("data.mean"))
      for (int c = 0; c < 3; ++c) cfg.data.mean[c] = raw.mean[c];
    if (set("data.stdev"))
      for (int c = 0; c < 3; ++c) cfg.data.stdev[c] = raw.stdev[c];

    apply("base.epochs", cfg.base.epochs, raw.base.epochs);
    apply("base.lr", cfg.base.lr, raw.base.lr);
    apply("base.batch_size", cfg.base.batch_size, raw.base.batch_size);
    apply("base.flip", cfg.base.flip, raw.base.flip);
    apply("base.grl_max", cfg.base.grl_max, raw.base.grl_max);
    apply("base.grl_gamma", cfg.base.grl_gamma, raw.base.grl_gamma);
    apply("base.optimizer", cfg.base.optimizer, raw.base.optimizer);

    apply("interp.alpha", cfg.interp.alpha, raw.interp.alpha);
    apply("interp.beta", cfg.interp.beta, raw.interp.beta);
    apply("interp.gamma", cfg.interp.gamma, raw.interp.gamma);
    apply("interp.lambda", cfg.interp.lambda, raw.interp.lambda);
    apply("interp.lr", cfg.interp.lr, raw.interp.lr);
    apply("interp.epochs", cfg.interp.epochs, raw.interp.epochs);
    apply("interp.push_every", cfg.interp.push_every, raw.interp.push_every);
    apply("interp.last_layer_iters", cfg.interp.last_layer_iters,
          raw.interp.last_layer_iters);
    apply("interp.k", cfg.interp.K, raw.interp.K);
    apply("interp.batch_size", cfg.interp.batch_size, raw.interp.batch_size);
    apply("interp.flip", cfg.interp.flip, raw.interp.flip);
    apply("interp.train_addon", cfg.interp.train_addon, raw.interp.train_addon);
    apply("interp.sim_epsilon", cfg.interp.sim_epsilon, raw.interp.sim_epsilon);
    apply("interp.batch_mix", cfg.interp.batch_mix, raw.interp.batch_mix);
    apply("interp.target_weight", cfg.interp.target_weight,
          raw.interp.target_weight);

    apply("explain.top_m", cfg.report.top_m, raw.report.top_m);
    apply("explain.tau", cfg.report.tau, raw.report.tau);
    apply("inspect.scope", cfg.inspect.scope, raw.inspect.scope);
    apply("inspect.cumulative", cfg.inspect.cumulative, raw.inspect.cumulative);
    apply("inspect.ablation", cfg.inspect.ablation, raw.inspect.ablation);
    if (raw.non_cumulative) cfg.inspect.cumulative = false;

    cfg.base.seed = cfg.seed;
    cfg.interp.seed = cfg.seed;
    return cfg;
  }
};

std::string locate_ckpt(std::string path, const std::string& filename) {
  if (path.empty()) return path;
  if (fs::is_directory(path)) return (fs::path(path) / filename).string();
  return path;
}

void require_seed(const App& app, const std::string& command) {
  if (!app.set("seed"))
    throw ConfigError("--seed is required for " + command);
}

int run_train_base(const App& app, const RunConfig& cfg) {
  const std::string out = app.raw.out.empty() ? default_out("train-base", cfg)
                                              : app.raw.out;
  fs::create_directories(out);
  const std::string ckpt = out + "/base.ckpt";

  if (!app.raw.fresh && fs::exists(ckpt)) {
    const Archive ar = Archive::load(ckpt);  // also verifies the content hash
    std::cout << "base checkpoint already present: " << ckpt << "\n";
    write_manifest(out, "train-base", cfg, {}, {ckpt});
    return 0;
  }

  const DomainPair pair = build_dataset(cfg);
  std::vector<BaseEpochLog> log;
  const BaseModel model =
      train_base(pair, backbone_for(cfg), cfg.base, norm_consts(cfg), &log);

  Archive ar;
  ar.kind = "base";
  base_to_archive(model, ar);
  ar.meta["config"] = cfg.to_json();
  ar.meta["dataset_fingerprint"] = pair.fingerprint();
  ar.save(ckpt);

  {
    std::ofstream f(out + "/base_log.csv", std::ios::trunc);
    f << "epoch,cls_loss,dom_loss,src_acc,tgt_acc\n";
    f.precision(17);
    for (const auto& row : log)
      f << row.epoch << ',' << row.cls_loss << ',' << row.dom_loss << ','
        << row.src_acc << ',' << row.tgt_acc << '\n';
  }
  write_manifest(out, "train-base", cfg, {}, {ckpt});
  if (!log.empty())
    std::cout << "base model trained: src_acc=" << log.back().src_acc
              << " tgt_acc=" << log.back().tgt_acc << "\n";
  std::cout << "wrote " << ckpt << "\n";
  return 0;
}

int run_train_interp(const App& app, const RunConfig& cfg) {
  const std::string base_path = locate_ckpt(
      app.raw.base_path.empty() ? default_out("train-base", cfg)
                                : app.raw.base_path,
      "base.ckpt");
  if (!fs::exists(base_path)) throw MissingArtifact(base_path);

  const std::string out = app.raw.out.empty() ? default_out("train-interp", cfg)
                                              : app.raw.out;
  fs::create_directories(out);

  const Archive base_ar = Archive::load(base_path);
  const BaseModel base = base_from_archive(base_ar);
  const DomainPair pair = build_dataset(cfg);

  const InterpretiveModel model =
      run_protocol(base, pair, cfg.interp, out, /*resume=*/!app.raw.fresh);
  const Metrics m = evaluate(model, pair);
  std::cout << "interpretive model: agreement=" << m.agreement
            << " acc_hp=" << m.acc_hp << " acc_hf=" << m.acc_hf
            << " mean_fidelity=" << m.mean_fidelity << "\n";

  write_manifest(out, "train-interp", cfg, {base_path},
                 {out + "/interp_final.ckpt", out + "/interp_best.ckpt",
                  out + "/training_log.csv"});
  return 0;
}

InterpretiveModel load_bound_model(const App& app, const RunConfig& cfg,
                                   std::string* used_path) {
  const std::string path = locate_ckpt(
      app.raw.interp_path.empty() ? default_out("train-interp", cfg)
                                  : app.raw.interp_path,
      "interp_final.ckpt");
  if (!fs::exists(path)) throw MissingArtifact(path);
  InterpretiveModel model = load_interpretive(path);
  const DomainPair pair = build_dataset(cfg);
  bind_dataset(model, pair);
  if (used_path) *used_path = path;
  return model;
}

int run_eval(const App& app, const RunConfig& cfg) {
  std::string path;
  const InterpretiveModel model = load_bound_model(app, cfg, &path);
  const DomainPair pair = build_dataset(cfg);
  const Metrics m = evaluate(model, pair);
  const nlohmann::json j = metrics_to_json(m);
  std::cout << j.dump(2) << "\n";
  if (!app.raw.out.empty()) {
    fs::create_directories(app.raw.out);
    std::ofstream f(fs::path(app.raw.out) / "metrics.json", std::ios::trunc);
    f << j.dump(2) << "\n";
    write_manifest(app.raw.out, "eval", cfg, {path},
                   {app.raw.out + "/metrics.json"});
  }
  return 0;
}

int run_explain(const App& app, const RunConfig& cfg) {
  std::string path;
  const InterpretiveModel model = load_bound_model(app, cfg, &path);
  const DomainPair pair = build_dataset(cfg);
  const std::string out =
      app.raw.out.empty() ? default_out("explain", cfg) : app.raw.out;
  emit_report(model, pair, out + "/report", cfg.report);
  write_manifest(out, "explain", cfg, {path}, {out + "/report/matches.json"});
  std::cout << "report written to " << out << "/report\n";
  return 0;
}

int run_inspect(const App& app, const RunConfig& cfg) {
  std::string path;
  const InterpretiveModel model = load_bound_model(app, cfg, &path);
  const DomainPair pair = build_dataset(cfg);
  const std::string out =
      app.raw.out.empty() ? default_out("inspect", cfg) : app.raw.out;
  fs::create_directories(out);

  int category = -1;
  if (cfg.inspect.scope != "all") {
    const auto it = std::find(pair.categories.begin(), pair.categories.end(),
                              cfg.inspect.scope);
    if (it == pair.categories.end())
      throw ConfigError("inspect.scope is neither 'all' nor a category name: " +
                        cfg.inspect.scope);
    category = static_cast<int>(it - pair.categories.begin());
  }

  const RemovalCurve curve =
      removal_sweep(model, pair, category, cfg.inspect.cumulative);
  const std::string curve_dir = out + "/sweep_" + curve.scope;
  write_removal_curve(curve, curve_dir);
  std::cout << "sweep (" << curve.scope << "): spearman="
            << (curve.correlation.defined ? std::to_string(curve.correlation.rho)
                                          : "undefined (" +
                                                curve.correlation.reason + ")")
            << "\n";

  std::vector<std::string> outputs{curve_dir + "/curve.csv",
                                   curve_dir + "/summary.json"};
  std::vector<std::string> inputs{path};

  if (cfg.inspect.ablation) {
    const std::string base_path = locate_ckpt(
        app.raw.base_path.empty() ? default_out("train-base", cfg)
                                  : app.raw.base_path,
        "base.ckpt");
    if (!fs::exists(base_path)) throw MissingArtifact(base_path);
    inputs.push_back(base_path);
    const BaseModel base = base_from_archive(Archive::load(base_path));

    const AblationResult ab =
        fidelity_ablation(base, pair, cfg.interp, out + "/ablation");
    const RemovalCurve full_curve = removal_sweep(ab.full, pair, category,
                                                  cfg.inspect.cumulative);
    const RemovalCurve nofid_curve = removal_sweep(ab.no_fid, pair, category,
                                                   cfg.inspect.cumulative);
    write_removal_curve(full_curve, out + "/ablation/full/sweep");
    write_removal_curve(nofid_curve, out + "/ablation/no_fid/sweep");
    nlohmann::json j;
    j["full"] = metrics_to_json(ab.full_metrics);
    j["no_fid"] = metrics_to_json(ab.no_fid_metrics);
    std::ofstream f(out + "/ablation/metrics.json", std::ios::trunc);
    f << j.dump(2) << "\n";
    outputs.push_back(out + "/ablation/metrics.json");
    std::cout << "ablation: full fidelity=" << ab.full_metrics.mean_fidelity
              << " no-fid fidelity=" << ab.no_fid_metrics.mean_fidelity << "\n";
  }

  write_manifest(out, "inspect", cfg, inputs, outputs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  App app;
  try {
    app.cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.cli.exit(e);
  }

  try {
    const RunConfig cfg = app.resolve();

    if (app.raw.print_config) {
      std::cout << emit_toml(cfg);
      return 0;
    }

    if (app.cmd_train_base->parsed()) {
      require_seed(app, "train-base");
      return run_train_base(app, cfg);
    }
    if (app.cmd_train_interp->parsed()) {
      require_seed(app, "train-interp");
      return run_train_interp(app, cfg);
    }
    if (app.cmd_eval->parsed()) return run_eval(app, cfg);
    if (app.cmd_explain->parsed()) return run_explain(app, cfg);
    if (app.cmd_inspect->parsed()) return run_inspect(app, cfg);

    std::cout << app.cli.help();
    return 1;
  } catch (const MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
