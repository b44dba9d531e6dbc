#include "alfm/eval.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "alfm/error.hpp"
#include "json.hpp"

namespace alfm {

double rmse(std::span<const PredictionPair> predictions) {
  if (predictions.empty()) throw ContractError("rmse: empty prediction list");
  double s = 0.0;
  for (const auto& p : predictions) {
    const double e = p.predicted - p.actual;
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(predictions.size()));
}

std::vector<double> predict_all(const AlfmModel& model, const AtmPosterior& posterior,
                                std::span<const Rating> pairs, const FeatureTable* cache) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& r : pairs) {
    double pred;
    if (cache && cache->contains(r.user, r.item)) {
      pred = predict(model, *cache, r.user, r.item);
    } else {
      const PairFeatures f = pair_features(posterior, r.user, r.item);
      pred = predict(model, f.importance, f.match, r.user, r.item);
    }
    if (model.hyper.clamp_predictions) pred = clamp_rating(pred);
    out.push_back(pred);
  }
  return out;
}

std::vector<double> predict_all_bmf(const BmfModel& model, std::span<const Rating> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& r : pairs) {
    double pred = predict_bmf(model, r.user, r.item);
    if (model.hyper.clamp_predictions) pred = clamp_rating(pred);
    out.push_back(pred);
  }
  return out;
}

std::map<int, BucketGain> cold_start_buckets(std::span<const Rating> test,
                                             std::span<const double> model_predictions,
                                             std::span<const double> baseline_predictions,
                                             std::span<const std::uint32_t> train_count_per_user,
                                             int max_bucket) {
  if (model_predictions.size() != test.size() || baseline_predictions.size() != test.size())
    throw ContractError("cold_start_buckets: prediction sets must cover the same test pairs");

  struct Acc {
    double model_sq = 0.0;
    double base_sq = 0.0;
    std::size_t pairs = 0;
    std::unordered_map<std::uint32_t, char> users;
  };
  std::map<int, Acc> acc;
  for (std::size_t j = 0; j < test.size(); ++j) {
    const auto& r = test[j];
    const std::uint32_t c = train_count_per_user[r.user];
    if (c < 1 || c > static_cast<std::uint32_t>(max_bucket)) continue;
    auto& a = acc[static_cast<int>(c)];
    const double me = model_predictions[j] - r.value;
    const double be = baseline_predictions[j] - r.value;
    a.model_sq += me * me;
    a.base_sq += be * be;
    ++a.pairs;
    a.users.emplace(r.user, 1);
  }

  std::map<int, BucketGain> out;
  for (const auto& [b, a] : acc) {
    BucketGain g;
    g.model_rmse = std::sqrt(a.model_sq / static_cast<double>(a.pairs));
    g.baseline_rmse = std::sqrt(a.base_sq / static_cast<double>(a.pairs));
    g.gain = g.baseline_rmse - g.model_rmse;
    g.n_pairs = a.pairs;
    g.n_users = a.users.size();
    out.emplace(b, g);
  }
  return out;
}

SweepGrid sweep(const ProcessedCorpus& corpus, const CorpusSplit& split,
                std::span<const int> factor_values, std::span<const int> topic_values,
                const AtmHyperparams& atm_base, const AlfmHyperparams& alfm_base,
                bool rescale_alpha_with_topics) {
  SweepGrid grid;
  grid.factor_values.assign(factor_values.begin(), factor_values.end());
  grid.topic_values.assign(topic_values.begin(), topic_values.end());
  grid.valid_rmse.assign(factor_values.size() * topic_values.size(), 0.0);

  const auto valid_ratings = collect_ratings(corpus, split.valid);
  for (std::size_t ki = 0; ki < topic_values.size(); ++ki) {
    AtmHyperparams atm = atm_base;
    atm.topics = topic_values[ki];
    if (rescale_alpha_with_topics) {
      atm.alpha_user = 50.0 / atm.topics;
      atm.alpha_item = 50.0 / atm.topics;
    }
    const AtmPosterior posterior = fit_atm(corpus, atm, split.train);
    for (std::size_t fi = 0; fi < factor_values.size(); ++fi) {
      AlfmHyperparams alfm = alfm_base;
      alfm.factors = factor_values[fi];
      double cell;
      try {
        FeatureTable features;
        const AlfmModel model = train(corpus, split, posterior, alfm, &features);
        const auto preds = predict_all(model, posterior, valid_ratings, &features);
        std::vector<PredictionPair> pp(valid_ratings.size());
        for (std::size_t j = 0; j < pp.size(); ++j)
          pp[j] = {preds[j], valid_ratings[j].value};
        cell = rmse(pp);
      } catch (const Error&) {
        // diverged cell: reported as +inf instead of aborting the grid
        cell = std::numeric_limits<double>::infinity();
      }
      grid.valid_rmse[fi * topic_values.size() + ki] = cell;
    }
  }
  return grid;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["rmse"] = report.rmse;
  j["n_predictions"] = report.n_predictions;
  if (report.baseline_rmse >= 0.0) j["baseline_rmse"] = report.baseline_rmse;
  if (!report.buckets.empty()) {
    nlohmann::json buckets = nlohmann::json::object();
    for (const auto& [b, g] : report.buckets) {
      buckets[std::to_string(b)] = {{"gain", g.gain},
                                    {"baseline_rmse", g.baseline_rmse},
                                    {"model_rmse", g.model_rmse},
                                    {"n_users", g.n_users},
                                    {"n_pairs", g.n_pairs}};
    }
    j["buckets"] = buckets;
  }
  if (!report.grid.empty()) {
    nlohmann::json grid;
    grid["factor_values"] = report.grid.factor_values;
    grid["topic_values"] = report.grid.topic_values;
    grid["valid_rmse"] = report.grid.valid_rmse;
    j["grid"] = grid;
  }
  return j.dump(2);
}

std::string report_to_text(const EvalReport& report) {
  std::ostringstream os;
  os << "rmse: " << report.rmse << "  (n=" << report.n_predictions << ")\n";
  if (report.baseline_rmse >= 0.0) os << "baseline rmse: " << report.baseline_rmse << "\n";
  if (!report.buckets.empty()) {
    os << "\ncold-start gain by training-rating count\n";
    os << "bucket    gain  baseline     model  users  pairs\n";
    char line[128];
    for (const auto& [b, g] : report.buckets) {
      std::snprintf(line, sizeof line, "%6d %7.4f %9.4f %9.4f %6zu %6zu\n", b, g.gain,
                    g.baseline_rmse, g.model_rmse, g.n_users, g.n_pairs);
      os << line;
    }
  }
  if (!report.grid.empty()) {
    os << "\nvalidation rmse grid (rows: factors, cols: topics)\n        ";
    for (int k : report.grid.topic_values) {
      char cell[32];
      std::snprintf(cell, sizeof cell, "K=%-7d", k);
      os << cell;
    }
    os << "\n";
    for (std::size_t fi = 0; fi < report.grid.factor_values.size(); ++fi) {
      char head[32];
      std::snprintf(head, sizeof head, "f=%-6d", report.grid.factor_values[fi]);
      os << head;
      for (std::size_t ki = 0; ki < report.grid.topic_values.size(); ++ki) {
        char cell[32];
        std::snprintf(cell, sizeof cell, " %8.4f", report.grid.at(fi, ki));
        os << cell;
      }
      os << "\n";
    }
  }
  return os.str();
}

std::string grid_to_csv(const SweepGrid& grid) {
  std::ostringstream os;
  os << "factors,topics,valid_rmse\n";
  for (std::size_t fi = 0; fi < grid.factor_values.size(); ++fi)
    for (std::size_t ki = 0; ki < grid.topic_values.size(); ++ki)
      os << grid.factor_values[fi] << "," << grid.topic_values[ki] << "," << grid.at(fi, ki)
         << "\n";
  return os.str();
}

}  // namespace alfm
