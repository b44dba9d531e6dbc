#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "alfm/atm.hpp"
#include "alfm/corpus.hpp"

namespace alfm {

struct Rating {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double value = 0.0;
};

std::vector<Rating> collect_ratings(const ProcessedCorpus& corpus,
                                    std::span<const std::uint32_t> review_indices);

// Jensen-Shannon divergence, base-2 logs so the result lies in [0,1].
// Inputs must be equal-length distributions (sum 1 within 1e-6).
double jsd(std::span<const double> p, std::span<const double> q);

// s[a] = 1 - JSD(theta_{u,a}, psi_{i,a})
std::vector<double> aspect_match(const AtmPosterior& posterior, std::uint32_t u, std::uint32_t i);

// rho[a] = pi_u * lambda_{u,a} + (1 - pi_u) * lambda_{i,a}; sums to 1
std::vector<double> aspect_importance(const AtmPosterior& posterior, std::uint32_t u,
                                      std::uint32_t i);

// Per-pair aspect importance and match vectors, precomputed before SGD.
struct PairFeatures {
  std::vector<double> importance;  // rho, length A
  std::vector<double> match;       // s, length A
};

PairFeatures pair_features(const AtmPosterior& posterior, std::uint32_t u, std::uint32_t i);

struct FeatureTable {
  int aspects = 0;
  std::unordered_map<std::uint64_t, std::uint32_t> index;
  std::vector<double> importance;  // rows * A
  std::vector<double> match;       // rows * A

  static std::uint64_t key(std::uint32_t u, std::uint32_t i) {
    return (static_cast<std::uint64_t>(u) << 32) | i;
  }
  bool contains(std::uint32_t u, std::uint32_t i) const {
    return index.count(key(u, i)) != 0;
  }
  std::span<const double> importance_at(std::uint32_t u, std::uint32_t i) const;
  std::span<const double> match_at(std::uint32_t u, std::uint32_t i) const;
  void insert(std::uint32_t u, std::uint32_t i, const PairFeatures& f);
};

FeatureTable build_feature_table(const AtmPosterior& posterior, std::span<const Rating> ratings);

struct AlfmHyperparams {
  int factors = 5;  // f
  double reg_user = 0.1;           // mu_u
  double reg_item = 0.1;           // mu_i
  double reg_aspect_weight = 0.01; // mu_w (l1)
  double reg_bias = 0.1;           // mu_b
  double l1_epsilon = 1e-6;        // smoothing inside sqrt(w^2 + eps)
  double learn_rate = 0.01;
  double lr_decay = 0.9;
  int max_epochs = 100;
  int patience = 5;
  bool clamp_predictions = false;  // clip to [1,5] at evaluation time only
  bool train_aspect_weights = true;
  // factor init: zero-mean normal by default; nonnegative shifts the draws
  // into the positive orthant (helps on positive-affinity rating data)
  bool nonnegative_init = false;
  std::uint64_t seed = 42;

  void validate() const;
};

struct AlfmModel {
  int factors = 0;
  int aspects = 0;
  std::uint32_t n_users = 0;
  std::uint32_t n_items = 0;
  std::vector<double> user_factors;    // M*f, p_u rows
  std::vector<double> item_factors;    // N*f, q_i rows
  std::vector<double> aspect_weights;  // A*f, w_a rows
  std::vector<double> user_bias;       // M
  std::vector<double> item_bias;       // N
  double global_bias = 0.0;            // b_0, the training mean rating
  AlfmHyperparams hyper;

  std::span<const double> user_row(std::uint32_t u) const {
    return {user_factors.data() + static_cast<std::size_t>(u) * factors,
            static_cast<std::size_t>(factors)};
  }
  std::span<const double> item_row(std::uint32_t i) const {
    return {item_factors.data() + static_cast<std::size_t>(i) * factors,
            static_cast<std::size_t>(factors)};
  }
  std::span<const double> aspect_row(int a) const {
    return {aspect_weights.data() + static_cast<std::size_t>(a) * factors,
            static_cast<std::size_t>(factors)};
  }
};

// (w_a . p_u)^T (w_a . q_i), elementwise products
double aspect_factor_term(const AlfmModel& model, std::uint32_t u, std::uint32_t i, int a);

// r_{u,i,a} = s_a * factor term
double aspect_rating(const AlfmModel& model, const PairFeatures& features, std::uint32_t u,
                     std::uint32_t i, int a);

// rhat = sum_a rho_a s_a (w_a.p_u)^T(w_a.q_i) + b_u + b_i + b_0 (unclamped)
double predict(const AlfmModel& model, std::span<const double> importance,
               std::span<const double> match, std::uint32_t u, std::uint32_t i);
double predict(const AlfmModel& model, const FeatureTable& features, std::uint32_t u,
               std::uint32_t i);

double clamp_rating(double r);

// Eq-6-style full objective over a rating set (smoothed l1 on W)
double objective(const AlfmModel& model, std::span<const Rating> ratings,
                 const FeatureTable& features);

// One shuffled SGD pass; returns mean squared training error of the pass.
// The learning rate is hyper.learn_rate * hyper.lr_decay^epoch_index.
double sgd_epoch(AlfmModel& model, std::span<const Rating> ratings, const FeatureTable& features,
                 int epoch_index, Rng& rng);

struct TrainLog {
  std::vector<double> train_mse;
  std::vector<double> valid_rmse;
  std::vector<double> objective;  // full objective after each epoch
  int best_epoch = -1;
};

AlfmModel train(const ProcessedCorpus& corpus, const CorpusSplit& split,
                const AtmPosterior& posterior, const AlfmHyperparams& hyper,
                FeatureTable* features_out = nullptr, TrainLog* log = nullptr);

// Biased MF baseline: rhat = b0 + b_u + b_i + p_u^T q_i, same SGD scheme.
struct BmfModel {
  int factors = 0;
  std::uint32_t n_users = 0;
  std::uint32_t n_items = 0;
  std::vector<double> user_factors;
  std::vector<double> item_factors;
  std::vector<double> user_bias;
  std::vector<double> item_bias;
  double global_bias = 0.0;
  AlfmHyperparams hyper;
};

BmfModel train_bmf(const ProcessedCorpus& corpus, const CorpusSplit& split,
                   const AlfmHyperparams& hyper, TrainLog* log = nullptr);

double predict_bmf(const BmfModel& model, std::uint32_t u, std::uint32_t i);

}  // namespace alfm
