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

#include "gazekit/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "gazekit/atomic_file.hpp"
#include "gazekit/parallel.hpp"

namespace gazekit {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

int parse_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty()) throw ValidationError("config key '" + key + "': not an integer: " + value);
  return v;
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty()) throw ValidationError("config key '" + key + "': not a number: " + value);
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || end != value.data() + value.size() || value.empty()) {
    throw ValidationError("config key '" + key + "': not an unsigned integer: " + value);
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ValidationError("config key '" + key + "': not a boolean: " + value);
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

struct ImageTerm {
  double log_likelihood = 0.0;  // nats, summed over the image's fixations
  ParamGradients grads;         // of the negative log-likelihood
};

ImageTerm image_term(const ImageSample& sample, const ReadoutParams& params, const CenterBiasPrior& prior,
                     bool want_grads) {
  const FeatureStack& features = *sample.features;
  if (sample.fixations.empty()) {
    throw ValidationError("image '" + features.image_id + "' has no fixations");
  }
  const double sigma = params.sigma();
  const ReadoutOutput forward = readout_forward(features, params);
  const Grid log_p = log_softmax2d(gaussian_blur(forward.O, sigma) + prior.log_density_for(features.shape()));

  ImageTerm term;
  Grid counts = Grid::Zero(log_p.rows(), log_p.cols());
  for (const auto& q : sample.fixations) {
    if (q.x < 0 || q.y < 0 || q.x >= log_p.cols() || q.y >= log_p.rows()) {
      throw ValidationError("fixation outside the grid of image '" + features.image_id + "'");
    }
    term.log_likelihood += log_p(q.y, q.x);
    counts(q.y, q.x) += 1.0;
  }
  if (!want_grads) return term;

  // d(-sum log p)/dS' = N p - counts
  const Grid grad_scores = static_cast<double>(sample.fixations.size()) * log_p.array().exp() - counts.array();
  const BlurGradients blur = blur_backward(grad_scores, forward.O, sigma);
  term.grads = readout_backward(forward.cache, params, blur.grad_O);
  term.grads.rho = blur.grad_rho;
  return term;
}

std::vector<ImageTerm> image_terms(std::span<const ImageSample> batch, const ReadoutParams& params,
                                   const CenterBiasPrior& prior, bool want_grads) {
  std::vector<ImageTerm> terms(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) { terms[i] = image_term(batch[i], params, prior, want_grads); });
  return terms;
}

std::size_t count_fixations(std::span<const ImageSample> batch) {
  std::size_t n = 0;
  for (const auto& s : batch) n += s.fixations.size();
  return n;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_atomically(path, [&](const std::filesystem::path& tmp) {
    std::ofstream out(tmp, std::ios::trunc);
    out << text;
    if (!out) throw Error("cannot write '" + path.string() + "'");
  });
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size_pretrain <= 0 || batch_size_finetune <= 0) throw ValidationError("batch sizes must be positive");
  if (window <= 0 || lookback <= 0) throw ValidationError("window and lookback must be positive");
  if (window > lookback) throw ValidationError("window must not exceed lookback");
  if (min_epochs < window + lookback) throw ValidationError("min_epochs must be at least window + lookback");
  if (max_epochs < min_epochs) throw ValidationError("max_epochs must be at least min_epochs");
  if (!(learning_rate > 0.0) || !(lr_decay > 0.0)) throw ValidationError("learning rate and decay must be positive");
  if (lbfgs_iterations < 0) throw ValidationError("lbfgs_iterations must be non-negative");
  if (folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
}

std::vector<int> parse_channel_list(const std::string& text) {
  std::vector<int> channels;
  std::istringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      channels.push_back(parse_int("feature_channels", part));
    } else {
      const int lo = parse_int("feature_channels", trim(part.substr(0, dash)));
      const int hi = parse_int("feature_channels", trim(part.substr(dash + 1)));
      if (hi < lo) throw ValidationError("bad channel range '" + part + "'");
      for (int c = lo; c <= hi; ++c) channels.push_back(c);
    }
  }
  for (int c : channels)
    if (c < 0) throw ValidationError("channel indices must be non-negative");
  if (channels.empty()) throw ValidationError("empty channel list '" + text + "'");
  return channels;
}

TrainConfig parse_train_config(const std::string& text, TrainConfig cfg) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "batch_size_pretrain") cfg.batch_size_pretrain = parse_int(key, value);
    else if (key == "batch_size_finetune") cfg.batch_size_finetune = parse_int(key, value);
    else if (key == "min_epochs") cfg.min_epochs = parse_int(key, value);
    else if (key == "max_epochs") cfg.max_epochs = parse_int(key, value);
    else if (key == "lookback") cfg.lookback = parse_int(key, value);
    else if (key == "window") cfg.window = parse_int(key, value);
    else if (key == "learning_rate") cfg.learning_rate = parse_real(key, value);
    else if (key == "lr_decay") cfg.lr_decay = parse_real(key, value);
    else if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "lbfgs_iterations") cfg.lbfgs_iterations = parse_int(key, value);
    else if (key == "folds") cfg.folds = parse_int(key, value);
    else if (key == "pretrain") cfg.pretrain = parse_bool(key, value);
    else if (key == "optimizer") {
      if (value == "adam") cfg.optimizer = OptimizerKind::kAdam;
      else if (value == "adam+lbfgs") cfg.optimizer = OptimizerKind::kAdamLbfgs;
      else throw ValidationError("config key 'optimizer': expected adam or adam+lbfgs");
    } else if (key == "readout") {
      if (value == "full") cfg.readout = ReadoutKind::kFull;
      else if (value == "linear") cfg.readout = ReadoutKind::kLinear;
      else throw ValidationError("config key 'readout': expected full or linear");
    } else if (key == "feature_channels") {
      cfg.feature_channels = value.empty() || value == "all" ? std::vector<int>{} : parse_channel_list(value);
    } else {
      throw ValidationError("unknown config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
  std::stringstream text;
  text << in.rdbuf();
  return parse_train_config(text.str(), std::move(base));
}

std::string format_train_config(const TrainConfig& cfg) {
  std::ostringstream out;
  out << "batch_size_pretrain=" << cfg.batch_size_pretrain << '\n'
      << "batch_size_finetune=" << cfg.batch_size_finetune << '\n'
      << "min_epochs=" << cfg.min_epochs << '\n'
      << "max_epochs=" << cfg.max_epochs << '\n'
      << "lookback=" << cfg.lookback << '\n'
      << "window=" << cfg.window << '\n'
      << "learning_rate=" << format_double(cfg.learning_rate) << '\n'
      << "lr_decay=" << format_double(cfg.lr_decay) << '\n'
      << "seed=" << cfg.seed << '\n'
      << "optimizer=" << (cfg.optimizer == OptimizerKind::kAdam ? "adam" : "adam+lbfgs") << '\n'
      << "lbfgs_iterations=" << cfg.lbfgs_iterations << '\n'
      << "folds=" << cfg.folds << '\n'
      << "readout=" << (cfg.readout == ReadoutKind::kFull ? "full" : "linear") << '\n'
      << "pretrain=" << (cfg.pretrain ? "true" : "false") << '\n'
      << "feature_channels=";
  for (std::size_t i = 0; i < cfg.feature_channels.size(); ++i) out << (i ? "," : "") << cfg.feature_channels[i];
  out << '\n';
  return out.str();
}

bool should_stop(const EpochHistory& history, const TrainConfig& cfg) {
  const auto& h = history.epochs;
  const int epochs = static_cast<int>(h.size());
  if (epochs < cfg.min_epochs) return false;
  if (epochs >= cfg.max_epochs) return true;
  for (int k = 0; k < cfg.window; ++k) {
    const int recent = epochs - 1 - k;
    const int before = recent - cfg.lookback;
    if (before < 0 || !(h[recent].val_ll < h[before].val_ll)) return false;
  }
  return true;
}

Grid model_log_density(const FeatureStack& features, const ReadoutParams& params, const Grid& prior_log_p) {
  const ReadoutOutput forward = readout_forward(features, params);
  return log_softmax2d(add_center_bias(gaussian_blur(forward.O, params.sigma()),
                                       CenterBiasPrior{prior_log_p, false, 0.0}));
}

LossAndGrads nll_loss_and_grads(std::span<const ImageSample> batch, const ReadoutParams& params,
                                const CenterBiasPrior& prior) {
  if (batch.empty()) throw ValidationError("empty training batch");
  const auto terms = image_terms(batch, params, prior, true);
  LossAndGrads out;
  out.fixations = count_fixations(batch);
  out.grads = params.zeros_like();
  double ll = 0.0;
  for (const auto& t : terms) {
    ll += t.log_likelihood;
    out.grads += t.grads;
  }
  const double scale = 1.0 / (static_cast<double>(out.fixations) * std::numbers::ln2);
  out.loss = -ll * scale;
  out.grads *= scale;
  return out;
}

double nll_loss(std::span<const ImageSample> batch, const ReadoutParams& params, const CenterBiasPrior& prior) {
  if (batch.empty()) throw ValidationError("empty evaluation set");
  const auto terms = image_terms(batch, params, prior, false);
  double ll = 0.0;
  for (const auto& t : terms) ll += t.log_likelihood;
  return -ll / (static_cast<double>(count_fixations(batch)) * std::numbers::ln2);
}

TrainRun train_readout(ReadoutParams start, std::span<const ImageSample> train, std::span<const ImageSample> val,
                       const CenterBiasPrior& prior, const TrainConfig& cfg, int batch_size, std::uint64_t seed,
                       const ValidationFn& validation) {
  cfg.validate();
  start.validate();
  if (train.empty()) throw ValidationError("training set is empty");
  if (val.empty() && !validation) throw ValidationError("stopping set is empty");
  if (batch_size <= 0) throw ValidationError("batch size must be positive");

  const auto validate_params = [&](const ReadoutParams& p, int epoch) {
    return validation ? validation(p, epoch) : -nll_loss(val, p, prior);
  };

  TrainRun run;
  run.params = start;
  ReadoutParams params = std::move(start);
  AdamState adam(params.parameter_count());
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best_val = -std::numeric_limits<double>::infinity();

  for (int epoch = 1;; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, epoch - 1);
    double ll_sum = 0.0;
    std::size_t ll_count = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
      std::vector<ImageSample> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) batch.push_back(train[order[i]]);
      const LossAndGrads lg = nll_loss_and_grads(batch, params, prior);
      ll_sum -= lg.loss * static_cast<double>(lg.fixations);
      ll_count += lg.fixations;
      params = optimizer_step(adam, params, lg.grads, lr);
    }

    const double val_ll = validate_params(params, epoch);
    run.history.epochs.push_back({epoch, ll_sum / static_cast<double>(ll_count), val_ll});
    if (val_ll > best_val) {
      best_val = val_ll;
      run.params = params;
      run.best_epoch = epoch;
    }
    if (should_stop(run.history, cfg)) break;
  }

  if (cfg.optimizer == OptimizerKind::kAdamLbfgs && cfg.lbfgs_iterations > 0) {
    const ReadoutParams like = run.params;
    const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
      const LossAndGrads lg = nll_loss_and_grads(train, unflatten(x, like), prior);
      grad = flatten(lg.grads);
      return lg.loss;
    };
    const LbfgsResult refined = lbfgs_minimize(objective, flatten(run.params), cfg.lbfgs_iterations);
    const ReadoutParams candidate = unflatten(refined.x, like);
    if (validate_params(candidate, run.history.epochs.back().epoch) > best_val) run.params = candidate;
  }
  return run;
}

std::vector<int> channel_plan_for(const TrainConfig& cfg, int input_channels) {
  if (cfg.readout == ReadoutKind::kLinear) return {input_channels, 1};
  return default_channel_plan(input_channels);
}

TrainRun pretrain(std::span<const ImageSample> train, std::span<const ImageSample> val, const CenterBiasPrior& prior,
                  const TrainConfig& cfg) {
  if (train.empty() || val.empty()) throw ValidationError("pretraining needs non-empty training and stopping sets");
  const ReadoutParams start = init_params(channel_plan_for(cfg, train.front().features->channels()), cfg.seed);
  return train_readout(start, train, val, prior, cfg, cfg.batch_size_pretrain, cfg.seed);
}

std::map<std::string, int> assign_folds(std::vector<std::string> image_ids, int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("cross-validation needs at least 2 folds, got " + std::to_string(k));
  if (image_ids.size() < static_cast<std::size_t>(k)) {
    throw ValidationError("cannot split " + std::to_string(image_ids.size()) + " images into " + std::to_string(k) +
                          " folds");
  }
  std::sort(image_ids.begin(), image_ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(image_ids.begin(), image_ids.end(), rng);
  std::map<std::string, int> folds;
  for (std::size_t i = 0; i < image_ids.size(); ++i) folds[image_ids[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return folds;
}

ModelBundle finetune_cv(const std::map<std::string, ImageSample>& dataset, const ReadoutParams& pretrained,
                        const CenterBiasPrior& prior, const TrainConfig& cfg, int k) {
  std::vector<std::string> ids;
  for (const auto& [id, _] : dataset) ids.push_back(id);

  ModelBundle bundle;
  bundle.pretrained = pretrained;
  bundle.prior = prior;
  bundle.feature_channels = cfg.feature_channels;
  bundle.folds = assign_folds(ids, k, cfg.seed);

  for (int f = 0; f < k; ++f) {
    std::vector<ImageSample> train, val;
    for (const auto& [id, sample] : dataset) (bundle.folds.at(id) == f ? val : train).push_back(sample);
    TrainRun run = train_readout(pretrained, train, val, prior, cfg, cfg.batch_size_finetune,
                                 cfg.seed + 1 + static_cast<std::uint64_t>(f));
    for (const auto& e : run.history.epochs) {
      bundle.train_log.push_back({"fold_" + std::to_string(f), e.epoch, e.train_ll, e.val_ll});
    }
    bundle.fold_models.push_back(std::move(run.params));
    bundle.fold_histories.push_back(std::move(run.history));
  }
  return bundle;
}

DensityMap predict(const ModelBundle& bundle, const FeatureStack& image, PredictMode mode, bool with_center_bias) {
  if (bundle.fold_models.empty()) throw ValidationError("model bundle has no fold models");
  const FeatureStack selected = bundle.feature_channels.empty() ? image : image.select_channels(bundle.feature_channels);
  const Grid prior_log_p = with_center_bias ? bundle.prior.log_density_for(image.shape())
                                            : CenterBiasPrior::make_uniform(image.shape()).log_p;

  const auto single = [&](int i) {
    Grid p = model_log_density(selected, bundle.fold_models[static_cast<std::size_t>(i)], prior_log_p).array().exp();
    return DensityMap{image.image_id, p / p.sum()};
  };

  switch (mode.kind) {
    case PredictMode::Kind::kSingle:
      if (mode.index < 0 || mode.index >= bundle.fold_count()) {
        throw ValidationError("model index " + std::to_string(mode.index) + " out of range");
      }
      return single(mode.index);
    case PredictMode::Kind::kLeaveOut: {
      auto it = bundle.folds.find(image.image_id);
      if (it == bundle.folds.end()) {
        throw ValidationError("image '" + image.image_id + "' is not in the bundle's fold map");
      }
      return single(it->second);
    }
    case PredictMode::Kind::kMixture:
      break;
  }
  Grid sum = Grid::Zero(image.height, image.width);
  for (int i = 0; i < bundle.fold_count(); ++i) sum += single(i).p;
  sum /= static_cast<double>(bundle.fold_count());
  return {image.image_id, sum / sum.sum()};
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto save_rpar = [](const ReadoutParams& p, const std::filesystem::path& path) {
    write_atomically(path, [&](const std::filesystem::path& tmp) { save_params(p, tmp); });
  };
  save_rpar(bundle.pretrained, dir / "pretrained.rpar");
  for (int i = 0; i < bundle.fold_count(); ++i) {
    save_rpar(bundle.fold_models[static_cast<std::size_t>(i)], dir / ("fold_" + std::to_string(i) + ".rpar"));
  }

  std::ostringstream folds;
  folds << "image_id,fold\n";
  for (const auto& [id, f] : bundle.folds) folds << id << ',' << f << '\n';
  write_text(dir / "folds.csv", folds.str());

  save_center_bias(bundle.prior, dir / "centerbias.fmap");

  std::ostringstream log;
  log << "run,epoch,train_ll,val_ll\n";
  for (const auto& r : bundle.train_log) {
    log << r.run << ',' << r.epoch << ',' << format_double(r.train_ll) << ',' << format_double(r.val_ll) << '\n';
  }
  write_text(dir / "train_log.csv", log.str());

  if (!bundle.feature_channels.empty()) {
    std::ostringstream channels;
    for (std::size_t i = 0; i < bundle.feature_channels.size(); ++i) {
      channels << (i ? "," : "") << bundle.feature_channels[i];
    }
    channels << '\n';
    write_text(dir / "channels.txt", channels.str());
  }
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ValidationError("bundle directory '" + dir.string() + "' does not exist");
  ModelBundle bundle;
  bundle.pretrained = load_params(dir / "pretrained.rpar");
  for (int i = 0;; ++i) {
    const auto path = dir / ("fold_" + std::to_string(i) + ".rpar");
    if (!std::filesystem::exists(path)) break;
    bundle.fold_models.push_back(load_params(path));
  }
  if (bundle.fold_models.empty()) throw ValidationError("bundle '" + dir.string() + "' has no fold models");

  std::ifstream folds(dir / "folds.csv");
  if (!folds) throw ValidationError("bundle '" + dir.string() + "' has no folds.csv");
  std::string line;
  std::getline(folds, line);
  while (std::getline(folds, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw FormatError("folds.csv: malformed line '" + line + "'");
    const int f = parse_int("fold", line.substr(comma + 1));
    if (f < 0 || f >= bundle.fold_count()) throw FormatError("folds.csv: fold index out of range in '" + line + "'");
    bundle.folds[line.substr(0, comma)] = f;
  }

  bundle.prior = load_center_bias(dir / "centerbias.fmap");

  std::ifstream log(dir / "train_log.csv");
  if (log) {
    std::getline(log, line);
    while (std::getline(log, line)) {
      std::istringstream row(line);
      TrainLogRow r;
      std::string epoch, train_ll, val_ll;
      if (std::getline(row, r.run, ',') && std::getline(row, epoch, ',') && std::getline(row, train_ll, ',') &&
          std::getline(row, val_ll)) {
        r.epoch = parse_int("epoch", trim(epoch));
        r.train_ll = parse_real("train_ll", trim(train_ll));
        r.val_ll = parse_real("val_ll", trim(val_ll));
        bundle.train_log.push_back(std::move(r));
      }
    }
  }

  std::ifstream channels(dir / "channels.txt");
  if (channels && std::getline(channels, line) && !trim(line).empty()) {
    bundle.feature_channels = parse_channel_list(trim(line));
  }
  return bundle;
}

}  // namespace gazekit
