#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "alfm/alfm.hpp"

namespace alfm {

struct PredictionPair {
  double predicted = 0.0;
  double actual = 0.0;
};

// sqrt(mean squared error); throws ContractError on an empty list
double rmse(std::span<const PredictionPair> predictions);

// Batch prediction over rating pairs; clamps to [1,5] when the model was
// trained with clamp_predictions. Features are computed on the fly for pairs
// missing from the optional cache.
std::vector<double> predict_all(const AlfmModel& model, const AtmPosterior& posterior,
                                std::span<const Rating> pairs,
                                const FeatureTable* cache = nullptr);
std::vector<double> predict_all_bmf(const BmfModel& model, std::span<const Rating> pairs);

struct BucketGain {
  double gain = 0.0;  // baseline rmse - model rmse
  double baseline_rmse = 0.0;
  double model_rmse = 0.0;
  std::size_t n_users = 0;
  std::size_t n_pairs = 0;
};

// Per training-rating-count bucket b in [1, max_bucket]: RMSE difference of
// the two prediction sets restricted to users with exactly b training
// ratings. Empty buckets are absent from the map.
std::map<int, BucketGain> cold_start_buckets(std::span<const Rating> test,
                                             std::span<const double> model_predictions,
                                             std::span<const double> baseline_predictions,
                                             std::span<const std::uint32_t> train_count_per_user,
                                             int max_bucket = 10);

struct SweepGrid {
  std::vector<int> factor_values;
  std::vector<int> topic_values;
  std::vector<double> valid_rmse;  // [fi * topic_values.size() + ki]

  double at(std::size_t fi, std::size_t ki) const {
    return valid_rmse[fi * topic_values.size() + ki];
  }
  bool empty() const { return valid_rmse.empty(); }
};

// Validation RMSE over the (factors, topics) grid. The ATM fit is reused
// across factor values for each topic count. When rescale_alpha_with_topics
// is set, alpha_user/alpha_item follow the 50/K heuristic per cell.
SweepGrid sweep(const ProcessedCorpus& corpus, const CorpusSplit& split,
                std::span<const int> factor_values, std::span<const int> topic_values,
                const AtmHyperparams& atm_base, const AlfmHyperparams& alfm_base,
                bool rescale_alpha_with_topics = true);

struct EvalReport {
  double rmse = 0.0;
  std::size_t n_predictions = 0;
  double baseline_rmse = -1.0;  // < 0 when no baseline was evaluated
  std::map<int, BucketGain> buckets;
  SweepGrid grid;
};

std::string report_to_json(const EvalReport& report);
std::string report_to_text(const EvalReport& report);
std::string grid_to_csv(const SweepGrid& grid);

}  // namespace alfm
