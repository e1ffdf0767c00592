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

#include "gazekit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gazekit/atomic_file.hpp"
#include "gazekit/parallel.hpp"

namespace gazekit {

namespace {

const DensityMap& density_of(const DensitySet& set, const std::string& image_id) {
  auto it = set.find(image_id);
  if (it == set.end()) throw ValidationError("no density for image '" + image_id + "'");
  return it->second;
}

void check_inside(const Grid& g, GridPoint p) {
  if (p.x < 0 || p.y < 0 || p.x >= g.cols() || p.y >= g.rows()) {
    throw ValidationError("fixation (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") outside a " +
                          std::to_string(g.rows()) + "x" + std::to_string(g.cols()) + " map");
  }
}

std::vector<double> positive_scores(const Grid& saliency, std::span<const GridPoint> fixations,
                                    std::set<Eigen::Index>* cells) {
  std::set<Eigen::Index> unique;
  for (const auto& p : fixations) {
    check_inside(saliency, p);
    unique.insert(static_cast<Eigen::Index>(p.y) * saliency.cols() + p.x);
  }
  std::vector<double> scores;
  for (Eigen::Index c : unique) scores.push_back(saliency(c / saliency.cols(), c % saliency.cols()));
  if (cells) *cells = std::move(unique);
  return scores;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

double log_likelihood_nats(const Grid& density, std::span<const GridPoint> fixations) {
  double ll = 0.0;
  for (const auto& p : fixations) {
    check_inside(density, p);
    ll += std::log(density(p.y, p.x));
  }
  return ll;
}

LogLikelihood avg_log_likelihood(const DensitySet& model, const FixationDataset& fixations) {
  if (fixations.empty()) throw ValidationError("log-likelihood of an empty fixation set");
  LogLikelihood out;
  double ll = 0.0;
  for (const auto& id : fixations.image_ids()) {
    const auto& points = fixations.fixations(id);
    const double image_ll = log_likelihood_nats(density_of(model, id).p, points);
    if (image_ll == -std::numeric_limits<double>::infinity() && !out.zero_density_image) {
      out.zero_density_image = id;
    }
    ll += image_ll;
    out.fixations += points.size();
  }
  out.bits_per_fixation = ll / (static_cast<double>(out.fixations) * std::numbers::ln2);
  return out;
}

double information_gain(const DensitySet& model, const DensitySet& baseline, const FixationDataset& fixations) {
  return avg_log_likelihood(model, fixations).bits_per_fixation -
         avg_log_likelihood(baseline, fixations).bits_per_fixation;
}

double ig_explained(double ig_model, double ig_gold) {
  if (!(ig_gold > 0.0)) {
    throw ValidationError("information gain explained is undefined: gold standard IG is " + format_double(ig_gold));
  }
  return 100.0 * (ig_model / ig_gold);
}

double ig_explained(const DensitySet& model, const DensitySet& gold, const DensitySet& baseline,
                    const FixationDataset& fixations) {
  return ig_explained(information_gain(model, baseline, fixations), information_gain(gold, baseline, fixations));
}

double auc_from_scores(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) throw ValidationError("AUC needs positives and negatives");
  std::vector<std::pair<double, bool>> scored;
  scored.reserve(positives.size() + negatives.size());
  for (double s : positives) scored.emplace_back(s, true);
  for (double s : negatives) scored.emplace_back(s, false);
  for (const auto& [s, _] : scored)
    if (std::isnan(s)) throw ValidationError("AUC scores contain NaN");
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  // Sweep tie groups in ascending order: a positive beats every negative in
  // lower groups and half of the negatives in its own group.
  double wins = 0.0;
  double negatives_below = 0.0;
  for (std::size_t i = 0; i < scored.size();) {
    std::size_t j = i;
    double pos = 0.0, neg = 0.0;
    while (j < scored.size() && scored[j].first == scored[i].first) {
      (scored[j].second ? pos : neg) += 1.0;
      ++j;
    }
    wins += pos * negatives_below + 0.5 * pos * neg;
    negatives_below += neg;
    i = j;
  }
  return wins / (static_cast<double>(positives.size()) * static_cast<double>(negatives.size()));
}

double auc(const Grid& saliency, std::span<const GridPoint> fixations) {
  if (fixations.empty()) throw ValidationError("AUC needs at least one fixation");
  std::set<Eigen::Index> fixated;
  const auto pos = positive_scores(saliency, fixations, &fixated);
  if (static_cast<Eigen::Index>(fixated.size()) == saliency.size()) {
    throw ValidationError("AUC is undefined when every cell is fixated");
  }
  std::vector<double> neg;
  neg.reserve(static_cast<std::size_t>(saliency.size()) - fixated.size());
  for (Eigen::Index c = 0; c < saliency.size(); ++c)
    if (!fixated.count(c)) neg.push_back(saliency(c / saliency.cols(), c % saliency.cols()));
  return auc_from_scores(pos, neg);
}

double shuffled_auc(const Grid& saliency, std::span<const GridPoint> fixations, std::span<const GridPoint> pool,
                    std::uint64_t seed) {
  if (fixations.empty()) throw ValidationError("shuffled AUC needs at least one fixation");
  if (pool.empty()) throw ValidationError("shuffled AUC needs a non-empty pool of other-image fixations");
  const auto pos = positive_scores(saliency, fixations, nullptr);
  const std::size_t draws = std::min(100 * pos.size(), pool.size());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<double> neg;
  neg.reserve(draws);
  for (std::size_t i = 0; i < draws; ++i) {
    const GridPoint q = pool[pick(rng)];
    check_inside(saliency, q);
    neg.push_back(saliency(q.y, q.x));
  }
  return auc_from_scores(pos, neg);
}

EvalReport assemble_report(std::vector<EvalRow> rows) {
  EvalReport report;
  report.rows = std::move(rows);
  EvalSummary& s = report.summary;
  s.images = report.rows.size();
  for (const auto& r : report.rows) {
    const auto n = static_cast<double>(r.n_fixations);
    s.fixations += r.n_fixations;
    s.ll_model += n * r.ll_model;
    s.ll_baseline += n * r.ll_baseline;
    s.ll_gold += n * r.ll_gold;
    s.ig_model += n * r.ig_model;
    s.ig_gold += n * r.ig_gold;
    s.auc += r.auc;
    s.sauc += r.sauc;
  }
  if (s.fixations > 0) {
    const auto n = static_cast<double>(s.fixations);
    s.ll_model /= n;
    s.ll_baseline /= n;
    s.ll_gold /= n;
    s.ig_model /= n;
    s.ig_gold /= n;
  }
  if (s.images > 0) {
    s.auc /= static_cast<double>(s.images);
    s.sauc /= static_cast<double>(s.images);
  }
  if (s.ig_gold > 0.0) s.ig_explained = ig_explained(s.ig_model, s.ig_gold);
  return report;
}

EvalReport build_eval_report(const ModelFn& model, const FixationDataset& dataset, const CenterBiasPrior& baseline,
                             const GoldFn& gold, std::uint64_t seed) {
  const auto& ids = dataset.image_ids();
  if (ids.empty()) throw ValidationError("evaluation dataset is empty");
  std::vector<EvalRow> rows(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    const std::string& id = ids[i];
    const GridShape shape = dataset.grid(id);
    const auto& fixations = dataset.fixations(id);
    const double to_bits = 1.0 / (static_cast<double>(fixations.size()) * std::numbers::ln2);

    std::vector<GridPoint> pool;
    for (const auto& other : ids) {
      if (other == id) continue;
      for (const auto& p : dataset.fixations(other))
        if (auto q = regrid(p, dataset.grid(other), shape)) pool.push_back(*q);
    }

    const ModelMaps maps = model(id);
    EvalRow& row = rows[i];
    row.image_id = id;
    row.n_fixations = fixations.size();
    row.ll_model = log_likelihood_nats(maps.with_center_bias.p, fixations) * to_bits;
    row.ll_baseline = log_likelihood_nats(baseline.density_for(shape).p, fixations) * to_bits;
    row.ll_gold = gold(id) * to_bits;
    row.ig_model = row.ll_model - row.ll_baseline;
    row.ig_gold = row.ll_gold - row.ll_baseline;
    row.auc = auc(maps.with_center_bias.p, fixations);
    row.sauc = pool.empty() ? 0.5 : shuffled_auc(maps.without_center_bias, fixations, pool, seed + i);
  });
  return assemble_report(std::move(rows));
}

EvalReport build_eval_report(const ModelFn& model, const FixationDataset& dataset, const CenterBiasPrior& baseline,
                             const KdeModel& gold, std::uint64_t seed) {
  const GoldFn gold_fn = [&](const std::string& id) { return gold_log_likelihood(dataset, id, gold, baseline); };
  return build_eval_report(model, dataset, baseline, gold_fn, seed);
}

void write_eval_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto write_text = [](const std::filesystem::path& path, const std::string& text) {
    write_atomically(path, [&](const std::filesystem::path& tmp) {
      std::ofstream out(tmp, std::ios::trunc);
      out << text;
      if (!out) throw Error("cannot write '" + path.string() + "'");
    });
  };

  std::ostringstream rows, scatter;
  rows << "image_id,n_fixations,ll_model,ll_baseline,ll_gold,ig_model,ig_gold,auc,sauc\n";
  scatter << "image_id,ig_gold,ig_model\n";
  for (const auto& r : report.rows) {
    rows << r.image_id << ',' << r.n_fixations << ',' << format_double(r.ll_model) << ','
         << format_double(r.ll_baseline) << ',' << format_double(r.ll_gold) << ',' << format_double(r.ig_model)
         << ',' << format_double(r.ig_gold) << ',' << format_double(r.auc) << ',' << format_double(r.sauc) << '\n';
    scatter << r.image_id << ',' << format_double(r.ig_gold) << ',' << format_double(r.ig_model) << '\n';
  }
  write_text(dir / "per_image.csv", rows.str());
  write_text(dir / "scatter.csv", scatter.str());

  const EvalSummary& s = report.summary;
  nlohmann::ordered_json summary;
  summary["images"] = s.images;
  summary["fixations"] = s.fixations;
  summary["ll_model"] = s.ll_model;
  summary["ll_baseline"] = s.ll_baseline;
  summary["ll_gold"] = s.ll_gold;
  summary["ig_model"] = s.ig_model;
  summary["ig_gold"] = s.ig_gold;
  summary["ig_explained"] = s.ig_explained ? nlohmann::ordered_json(*s.ig_explained) : nlohmann::ordered_json(nullptr);
  summary["auc"] = s.auc;
  summary["sauc"] = s.sauc;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
}

}  // namespace gazekit
