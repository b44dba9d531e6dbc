#pragma once

// Test-only fixtures and independent oracles. Everything here is written
// straight from first principles so it can disagree with the library.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "alfm/alfm.hpp"
#include "alfm/atm.hpp"
#include "alfm/corpus.hpp"

namespace testutil {

using namespace alfm;

// ---- corpus oracles ----

// naive repeat-scan peeling
std::vector<RawReview> k_core_oracle(std::vector<RawReview> reviews, int k);

// ---- atm oracles ----

// Exact collapsed log-joint of a full assignment (lgamma form, integrates
// every Dirichlet/Beta out). Counts are rebuilt from the given triples.
double collapsed_log_joint(const AtmState& shape, const std::vector<std::uint8_t>& side,
                           const std::vector<std::uint16_t>& aspect,
                           const std::vector<std::uint16_t>& topic);

// Conditional over one sentence's 2*A*K triples from the joint, normalized.
std::vector<double> enumeration_conditional(const AtmState& state, std::size_t sentence);

// direct mixture sum per sentence, linear space
double log_likelihood_oracle(const AtmPosterior& posterior, const ProcessedCorpus& corpus);

// ---- alfm oracles ----

double objective_oracle(const AlfmModel& model, std::span<const Rating> ratings,
                        const FeatureTable& features);

// ---- statistics ----

double total_variation(std::span<const double> p, std::span<const double> q);
double pearson(std::span<const double> x, std::span<const double> y);

// Greedy one-to-one matching of fitted to true topic rows by TV distance;
// returns the mean matched distance.
double greedy_matched_tv(const AtmPosterior& fitted, const AtmPosterior& truth);

// ---- synthetic rated corpora ----

struct PlantedSpec {
  std::uint32_t users = 50;
  std::uint32_t items = 40;
  int reviews_per_user = 8;
  // heavy-tail mode: per-user counts 5 + Exp(mean reviews_per_user - 5),
  // items drawn Zipf-weighted without replacement (popular items get most
  // of the reviews, like real corpora)
  bool heavy_tail = false;
  int sentences_per_review = 4;
  int words_per_sentence = 8;
  std::uint32_t vocab = 300;
  AtmHyperparams text;   // generation concentrations (topics/aspects included)
  int factors = 5;
  double factor_scale = 0.7;
  double factor_shift = 0.0;          // > 0: factors are shift + |N(0, scale)|
  bool rank1_factors = false;  // per-entity positive scale times small jitter
  double factor_jitter = 0.15;
  bool identity_aspect_weights = false;  // true: w_a one-hot; false: all-ones
  double bias_scale = 0.3;
  double noise = 0.3;
  double base_rating = 3.5;
  std::uint64_t seed = 1;
};

struct PlantedDataset {
  ProcessedCorpus corpus;  // ratings planted, unique (user,item) pairs
  AtmPosterior text_truth;
  AlfmModel planted;
};

PlantedDataset generate_rated_corpus(const PlantedSpec& spec);

// Detokenized line-per-review file the CLI can ingest (tsv format):
// user \t item \t rating \t text \t timestamp
void write_review_tsv(const std::filesystem::path& path, const ProcessedCorpus& corpus);

// small deterministic raw-review fixtures
std::vector<RawReview> review_fixture_20();

// fresh temp dir under the system temp root
std::filesystem::path temp_dir(const std::string& tag);

}  // namespace testutil
