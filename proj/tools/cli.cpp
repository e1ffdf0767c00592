// Copyright 2026 The GazeKit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gazekit/atomic_file.hpp"
#include "gazekit/data_model.hpp"
#include "gazekit/density.hpp"
#include "gazekit/kde.hpp"
#include "gazekit/metrics.hpp"
#include "gazekit/trainer.hpp"

namespace gazekit::cli {

namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
  write_atomically(path, [&](const fs::path& tmp) {
    std::ofstream out(tmp, std::ios::trunc);
    out << text;
    if (!out) throw Error("cannot write '" + path.string() + "'");
  });
}

std::vector<double> parse_reals(const std::string& text, const char* what) {
  std::vector<double> values;
  std::istringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ValidationError(std::string("cannot parse ") + what + " entry '" + part + "'");
    }
  }
  if (values.empty()) throw ValidationError(std::string(what) + " list is empty");
  return values;
}

// Written before any other artifact of the command.
void write_manifest(const fs::path& out_dir, const std::string& command, const std::string& config,
                    const std::map<std::string, std::string>& inputs, std::uint64_t seed) {
  fs::create_directories(out_dir);
  nlohmann::ordered_json manifest;
  manifest["command"] = command;
  manifest["config"] = config;
  manifest["inputs"] = inputs;
  manifest["seed"] = seed;
  manifest["tool_version"] = kToolVersion;
  manifest["output_dir"] = out_dir.string();
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

FixationDataset load_joined(const FeatureStore& store, const fs::path& fixations, std::ostream& err) {
  FixationLoadResult loaded = load_fixations_csv(fixations, [&](const std::string& id) { return store.grid(id); });
  if (!loaded.dangling.empty()) {
    throw ValidationError("fixation file references " + std::to_string(loaded.dangling.size()) +
                          " image(s) without features, first '" + loaded.dangling.front() + "'");
  }
  if (loaded.out_of_bounds > 0) {
    err << "warning: dropped " << loaded.out_of_bounds << " out-of-bounds fixation(s)\n";
  }
  if (loaded.dataset.empty()) throw ValidationError("no usable fixations in '" + fixations.string() + "'");
  return std::move(loaded.dataset);
}

std::map<std::string, ImageSample> load_samples(const FeatureStore& store, const FixationDataset& dataset,
                                                const std::vector<int>& channels) {
  std::map<std::string, ImageSample> samples;
  for (const auto& id : dataset.image_ids()) {
    FeatureStack stack = store.load(id);
    if (!channels.empty()) stack = stack.select_channels(channels);
    samples[id] = ImageSample{std::make_shared<const FeatureStack>(std::move(stack)), dataset.fixations(id)};
  }
  return samples;
}

std::vector<ImageSample> values_of(const std::map<std::string, ImageSample>& samples) {
  std::vector<ImageSample> out;
  for (const auto& [_, s] : samples) out.push_back(s);
  return out;
}

void apply_ablation(const std::string& ablation, TrainConfig& cfg) {
  if (ablation.empty() || ablation == "none") return;
  if (ablation == "linear-readout") {
    cfg.readout = ReadoutKind::kLinear;
  } else if (ablation == "no-pretrain") {
    cfg.pretrain = false;
  } else if (ablation.rfind("feature-subset=", 0) == 0) {
    cfg.feature_channels = parse_channel_list(ablation.substr(15));
  } else {
    throw ValidationError("unknown ablation '" + ablation + "'");
  }
}

PredictMode parse_mode(const std::string& mode) {
  if (mode == "mixture") return PredictMode::mixture();
  if (mode == "leave-out") return PredictMode::leave_out();
  if (mode.rfind("single:", 0) == 0) return PredictMode::single(std::stoi(mode.substr(7)));
  throw ValidationError("unknown prediction mode '" + mode + "'");
}

struct FitBaselineArgs {
  std::string fixations, features, out, bandwidths = "1,2,3,4,6,8,12";
  int height = 0, width = 0;
  std::uint64_t seed = 0;
};

int fit_baseline(const FitBaselineArgs& a, std::ostream& out, std::ostream& err) {
  write_manifest(a.out, "fit-baseline", "",
                 {{"fixations", a.fixations}, {"features", a.features}, {"bandwidths", a.bandwidths}}, a.seed);
  GridShape shape{a.height, a.width};
  std::optional<FeatureStore> store;
  if (!a.features.empty()) store.emplace(a.features);
  if (shape.height <= 0 || shape.width <= 0) {
    if (!store || store->image_ids().empty()) {
      throw ValidationError("fit-baseline needs --height/--width or a non-empty --features directory");
    }
    shape = *store->grid(store->image_ids().front());
    for (const auto& id : store->image_ids())
      if (*store->grid(id) != shape) throw ValidationError("feature grids differ; pass --height/--width");
  }
  const GridLookup lookup = [&](const std::string& id) -> std::optional<GridShape> {
    if (store) return store->grid(id);
    return shape;
  };
  FixationLoadResult loaded = load_fixations_csv(a.fixations, lookup);
  if (loaded.out_of_bounds > 0) err << "warning: dropped " << loaded.out_of_bounds << " out-of-bounds fixation(s)\n";
  if (!loaded.dangling.empty()) {
    throw ValidationError("fixation file references images without features, first '" + loaded.dangling.front() + "'");
  }
  const CenterBiasPrior prior =
      fit_center_bias(loaded.dataset, shape, parse_reals(a.bandwidths, "bandwidth"), a.seed);
  save_center_bias(prior, fs::path(a.out) / "centerbias.fmap");
  out << "center bias " << shape.height << "x" << shape.width << " fitted with bandwidth "
      << format_double(prior.bandwidth) << " on " << loaded.dataset.size() << " fixations\n";
  return kOk;
}

struct TrainArgs {
  std::string features, fixations, centerbias, config, out, ablation = "none";
  std::string pretrain_features, pretrain_fixations;
  std::optional<std::uint64_t> seed;
  std::optional<int> folds;
};

int train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.folds) cfg.folds = *a.folds;
  apply_ablation(a.ablation, cfg);
  cfg.validate();

  write_manifest(a.out, "train", a.config,
                 {{"features", a.features},
                  {"fixations", a.fixations},
                  {"centerbias", a.centerbias},
                  {"pretrain_features", a.pretrain_features},
                  {"pretrain_fixations", a.pretrain_fixations},
                  {"ablation", a.ablation},
                  {"effective_config", format_train_config(cfg)}},
                 cfg.seed);

  if (!fs::exists(a.centerbias)) throw ValidationError("center bias '" + a.centerbias + "' does not exist");
  const CenterBiasPrior prior = load_center_bias(a.centerbias);
  const FeatureStore store(a.features);
  const FixationDataset dataset = load_joined(store, a.fixations, err);
  const auto samples = load_samples(store, dataset, cfg.feature_channels);
  const std::vector<ImageSample> finetune_set = values_of(samples);

  std::vector<TrainLogRow> log;
  ReadoutParams start;
  if (cfg.pretrain) {
    std::vector<ImageSample> pretrain_set = finetune_set;
    if (!a.pretrain_fixations.empty()) {
      const FeatureStore pre_store(a.pretrain_features.empty() ? a.features : a.pretrain_features);
      pretrain_set = values_of(load_samples(pre_store, load_joined(pre_store, a.pretrain_fixations, err),
                                            cfg.feature_channels));
    } else {
      err << "warning: no --pretrain-fixations given; pretraining on the fine-tuning set\n";
    }
    TrainRun run = pretrain(pretrain_set, finetune_set, prior, cfg);
    for (const auto& e : run.history.epochs) log.push_back({"pretrain", e.epoch, e.train_ll, e.val_ll});
    out << "pretraining stopped after " << run.history.epochs.size() << " epochs (best " << run.best_epoch << ")\n";
    start = std::move(run.params);
  } else {
    start = init_params(channel_plan_for(cfg, finetune_set.front().features->channels()), cfg.seed);
  }

  ModelBundle bundle = finetune_cv(samples, start, prior, cfg, cfg.folds);
  log.insert(log.end(), bundle.train_log.begin(), bundle.train_log.end());
  bundle.train_log = std::move(log);
  save_bundle(bundle, a.out);
  write_text(fs::path(a.out) / "config.txt", format_train_config(cfg));
  for (int f = 0; f < bundle.fold_count(); ++f) {
    out << "fold " << f << ": " << bundle.fold_histories[static_cast<std::size_t>(f)].epochs.size() << " epochs\n";
  }
  return kOk;
}

struct EvalArgs {
  std::string bundle, features, fixations, out, centerbias, model = "bundle";
  std::string gold_bandwidths = "1,1.5,2,3,4,6,8", gold_eps = "0,0.001,0.01,0.05,0.1,0.2,0.4";
  bool allow_mixture = false;
  std::uint64_t seed = 0;
};

int eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  write_manifest(a.out, "eval", "",
                 {{"bundle", a.bundle},
                  {"features", a.features},
                  {"fixations", a.fixations},
                  {"centerbias", a.centerbias},
                  {"model", a.model},
                  {"gold_bandwidths", a.gold_bandwidths},
                  {"gold_eps", a.gold_eps},
                  {"allow_mixture", a.allow_mixture ? "true" : "false"}},
                 a.seed);
  if (a.model != "bundle" && a.model != "baseline") throw ValidationError("--model must be bundle or baseline");

  const FeatureStore store(a.features);
  const FixationDataset dataset = load_joined(store, a.fixations, err);
  std::optional<ModelBundle> bundle;
  if (a.model == "bundle" || a.centerbias.empty()) bundle = load_bundle(a.bundle);
  const CenterBiasPrior baseline = a.centerbias.empty() ? bundle->prior : load_center_bias(a.centerbias);

  std::size_t mixture_images = 0;
  if (a.model == "bundle") {
    for (const auto& id : dataset.image_ids())
      if (!bundle->folds.count(id)) ++mixture_images;
    if (mixture_images > 0 && !a.allow_mixture) {
      throw ValidationError(std::to_string(mixture_images) +
                            " evaluated image(s) are outside the bundle's fold map; pass --allow-mixture");
    }
    if (mixture_images > 0) err << "warning: " << mixture_images << " image(s) evaluated with the model mixture\n";
  }

  const ModelFn model = [&](const std::string& id) {
    const GridShape shape = dataset.grid(id);
    if (a.model == "baseline") {
      return ModelMaps{baseline.density_for(shape, id), Grid::Zero(shape.height, shape.width)};
    }
    const FeatureStack features = store.load(id);
    const PredictMode mode = bundle->folds.count(id) ? PredictMode::leave_out() : PredictMode::mixture();
    return ModelMaps{predict(*bundle, features, mode, true), predict(*bundle, features, mode, false).p};
  };

  const KdeModel gold = learn_gold_bandwidth(dataset, parse_reals(a.gold_bandwidths, "gold bandwidth"),
                                             parse_reals(a.gold_eps, "gold eps"), baseline);
  const EvalReport report = build_eval_report(model, dataset, baseline, gold, a.seed);
  write_eval_report(report, a.out);
  write_text(fs::path(a.out) / "gold.txt", "bandwidth=" + format_double(gold.bandwidth) +
                                               "\nmix_eps=" + format_double(gold.mix_eps) +
                                               "\nmixture_images=" + std::to_string(mixture_images) + "\n");

  const EvalSummary& s = report.summary;
  out << "IG " << format_double(s.ig_model) << " bits/fix, gold IG " << format_double(s.ig_gold)
      << " bits/fix, IG explained "
      << (s.ig_explained ? format_double(*s.ig_explained) + "%" : std::string("undefined")) << ", AUC "
      << format_double(s.auc) << ", sAUC " << format_double(s.sauc) << "\n";
  return kOk;
}

struct ExportArgs {
  std::string bundle, features, out, mode = "mixture";
  bool with_center_bias = false, uniform_center_bias = false;
};

int export_benchmark(const ExportArgs& a, std::ostream& out, std::ostream&) {
  if (a.with_center_bias == a.uniform_center_bias) {
    throw ValidationError("pass exactly one of --with-center-bias or --uniform-center-bias");
  }
  write_manifest(a.out, "export-benchmark", "",
                 {{"bundle", a.bundle},
                  {"features", a.features},
                  {"mode", a.mode},
                  {"center_bias", a.with_center_bias ? "fitted" : "uniform"}},
                 0);
  const ModelBundle bundle = load_bundle(a.bundle);
  const FeatureStore store(a.features);
  const PredictMode mode = parse_mode(a.mode);
  for (const auto& id : store.image_ids()) {
    const DensityMap density = predict(bundle, store.load(id), mode, a.with_center_bias);
    const LevelGrid levels = quantize_equal_mass_256(density.p.array().log());
    write_atomically(fs::path(a.out) / (id + ".pgm"), [&](const fs::path& tmp) { write_pgm(levels, tmp); });
  }
  out << "exported " << store.image_ids().size() << " map(s)\n";
  return kOk;
}

struct SampleArgs {
  std::string bundle, features, out, mode = "mixture";
  long long n = 0;
  std::uint64_t seed = 0;
};

int sample(const SampleArgs& a, std::ostream& out, std::ostream&) {
  if (a.n < 0) throw ValidationError("-n must be non-negative");
  write_manifest(a.out, "sample", "",
                 {{"bundle", a.bundle}, {"features", a.features}, {"mode", a.mode}, {"n", std::to_string(a.n)}},
                 a.seed);
  const ModelBundle bundle = load_bundle(a.bundle);
  const FeatureStore store(a.features);
  const PredictMode mode = parse_mode(a.mode);

  std::ostringstream samples, contours;
  samples << "image_id,x,y\n";
  contours << "image_id,t1,t2,t3\n";
  const auto& ids = store.image_ids();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const DensityMap density = predict(bundle, store.load(ids[i]), mode, true);
    for (const auto& p : sample_fixations(density, static_cast<std::size_t>(a.n), a.seed + i)) {
      samples << ids[i] << ',' << p.x << ',' << p.y << '\n';
    }
    const ContourThresholds t = contour_thresholds(density);
    contours << ids[i] << ',' << format_double(t.t1) << ',' << format_double(t.t2) << ',' << format_double(t.t3)
             << '\n';
  }
  write_text(fs::path(a.out) / "samples.csv", samples.str());
  write_text(fs::path(a.out) / "contours.csv", contours.str());
  out << "sampled " << a.n << " fixation(s) for " << ids.size() << " image(s)\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"gazekit: fixation density models trained by maximum likelihood"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  FitBaselineArgs fb;
  auto* fit_cmd = app.add_subcommand("fit-baseline", "Fit the image-independent center bias");
  fit_cmd->add_option("--fixations", fb.fixations, "Fixation CSV")->required();
  fit_cmd->add_option("--features", fb.features, "Feature directory (grid size source)");
  fit_cmd->add_option("--height", fb.height, "Grid height");
  fit_cmd->add_option("--width", fb.width, "Grid width");
  fit_cmd->add_option("--bandwidths", fb.bandwidths, "Comma-separated candidate bandwidths (grid cells)");
  fit_cmd->add_option("--seed", fb.seed, "Seed for the hold-out split");
  fit_cmd->add_option("--out", fb.out, "Output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Pretrain and cross-validate the readout network");
  train_cmd->add_option("--features", tr.features, "Feature directory")->required();
  train_cmd->add_option("--fixations", tr.fixations, "Fine-tuning fixation CSV")->required();
  train_cmd->add_option("--centerbias", tr.centerbias, "Center bias FMAP")->required();
  train_cmd->add_option("--config", tr.config, "key=value training config");
  train_cmd->add_option("--out", tr.out, "Bundle directory")->required();
  train_cmd->add_option("--seed", tr.seed, "Overrides the config seed");
  train_cmd->add_option("--folds", tr.folds, "Overrides the config fold count");
  train_cmd->add_option("--ablation", tr.ablation, "none, linear-readout, no-pretrain or feature-subset=LIST");
  train_cmd->add_option("--pretrain-features", tr.pretrain_features, "Feature directory of the pretraining set");
  train_cmd->add_option("--pretrain-fixations", tr.pretrain_fixations, "Fixation CSV of the pretraining set");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Information gain, AUC and sAUC report");
  eval_cmd->add_option("--bundle", ev.bundle, "Bundle directory")->required();
  eval_cmd->add_option("--features", ev.features, "Feature directory")->required();
  eval_cmd->add_option("--fixations", ev.fixations, "Fixation CSV")->required();
  eval_cmd->add_option("--centerbias", ev.centerbias, "Baseline FMAP (defaults to the bundle's)");
  eval_cmd->add_option("--model", ev.model, "bundle or baseline");
  eval_cmd->add_option("--gold-bandwidths", ev.gold_bandwidths, "Gold standard bandwidth candidates");
  eval_cmd->add_option("--gold-eps", ev.gold_eps, "Gold standard center-bias mixture weights");
  eval_cmd->add_flag("--allow-mixture", ev.allow_mixture, "Score images outside the fold map with the mixture");
  eval_cmd->add_option("--seed", ev.seed, "Seed for shuffled AUC negatives");
  eval_cmd->add_option("--out", ev.out, "Report directory")->required();

  ExportArgs ex;
  auto* export_cmd = app.add_subcommand("export-benchmark", "Equal-mass 8-bit PGM maps");
  export_cmd->add_option("--bundle", ex.bundle, "Bundle directory")->required();
  export_cmd->add_option("--features", ex.features, "Feature directory")->required();
  export_cmd->add_flag("--with-center-bias", ex.with_center_bias, "Use the bundle's center bias");
  export_cmd->add_flag("--uniform-center-bias", ex.uniform_center_bias, "Use a uniform center bias");
  export_cmd->add_option("--mode", ex.mode, "mixture, leave-out or single:I");
  export_cmd->add_option("--out", ex.out, "Output directory")->required();

  SampleArgs sa;
  auto* sample_cmd = app.add_subcommand("sample", "Sample fixations and compute contour thresholds");
  sample_cmd->add_option("--bundle", sa.bundle, "Bundle directory")->required();
  sample_cmd->add_option("--features", sa.features, "Feature directory")->required();
  sample_cmd->add_option("-n", sa.n, "Samples per image")->required();
  sample_cmd->add_option("--seed", sa.seed, "Sampling seed");
  sample_cmd->add_option("--mode", sa.mode, "mixture, leave-out or single:I");
  sample_cmd->add_option("--out", sa.out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*fit_cmd) return fit_baseline(fb, out, err);
    if (*train_cmd) return train(tr, out, err);
    if (*eval_cmd) return eval(ev, out, err);
    if (*export_cmd) return export_benchmark(ex, out, err);
    if (*sample_cmd) return sample(sa, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kValidation;
}

}  // namespace gazekit::cli
