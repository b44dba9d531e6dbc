#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace alfm {

struct RawReview {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;  // stars in [1,5]
  std::string text;
  std::optional<std::int64_t> timestamp;  // epoch seconds
};

enum class ReviewFormat { AmazonJson, YelpJson, Tsv };

ReviewFormat review_format_from_name(std::string_view name);

// JSON key names for the line-oriented input; presets per format,
// overridable from the run config.
struct FieldMap {
  std::string user_key = "user_id";
  std::string item_key = "item_id";
  std::string rating_key = "rating";
  std::string text_key = "text";
  std::string time_key = "timestamp";

  static FieldMap for_format(ReviewFormat format);
};

struct ParseStats {
  std::size_t parsed = 0;
  std::size_t skipped = 0;
};

// One review per well-formed line; malformed lines (bad JSON, missing keys,
// rating outside [1,5], empty ids) are counted and skipped.
std::vector<RawReview> parse_reviews(std::istream& in, ReviewFormat format,
                                     const FieldMap& fields, ParseStats* stats = nullptr);
std::vector<RawReview> parse_reviews(std::istream& in, ReviewFormat format,
                                     ParseStats* stats = nullptr);

// Keep one review per (user, item): latest timestamp wins, ties broken by
// input order (last wins). Missing timestamps sort before any present one.
std::vector<RawReview> dedupe(std::vector<RawReview> reviews);

// Maximal k-core of the user-item review multigraph by iterative peeling.
std::vector<RawReview> k_core_filter(std::vector<RawReview> reviews, int k);

struct TokenizerConfig {
  std::unordered_set<std::string> stopwords;  // see default_stopwords()
  std::size_t min_token_len = 2;
};

const std::unordered_set<std::string>& default_stopwords();
std::unordered_set<std::string> load_stopwords(const std::string& path);

// Sentences split on . ! ? and newlines; tokens lowercased with
// non-alphabetic characters stripped; stopwords and short tokens dropped;
// empty sentences dropped.
std::vector<std::vector<std::string>> tokenize_and_segment(std::string_view text,
                                                           const TokenizerConfig& config);

struct Vocabulary {
  std::vector<std::string> tokens;        // id -> token
  std::vector<std::uint64_t> frequency;   // id -> corpus frequency
  std::unordered_map<std::string, std::uint32_t> ids;

  std::uint32_t size() const { return static_cast<std::uint32_t>(tokens.size()); }
  std::optional<std::uint32_t> id_of(const std::string& token) const {
    auto it = ids.find(token);
    if (it == ids.end()) return std::nullopt;
    return it->second;
  }
};

struct ProcessedReview {
  std::uint32_t user_idx = 0;
  std::uint32_t item_idx = 0;
  double rating = 0.0;
  // Empty when the review text had no in-vocabulary token; the rating is
  // still used for factor training.
  std::vector<std::vector<std::uint32_t>> sentences;
};

struct ProcessedCorpus {
  Vocabulary vocab;
  std::vector<std::string> user_ids;  // dense index -> original id
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, std::uint32_t> user_index;
  std::unordered_map<std::string, std::uint32_t> item_index;
  std::vector<ProcessedReview> reviews;

  std::uint32_t n_users() const { return static_cast<std::uint32_t>(user_ids.size()); }
  std::uint32_t n_items() const { return static_cast<std::uint32_t>(item_ids.size()); }
};

// Pre: reviews already deduped and k-core filtered. Vocabulary keeps tokens
// with corpus frequency >= min_term_count; user/item indices assigned in
// first-appearance order. Throws ConfigError if the vocabulary is empty.
ProcessedCorpus build_corpus(const std::vector<RawReview>& reviews,
                             const TokenizerConfig& tokenizer,
                             std::uint64_t min_term_count);

enum class SplitMode { PerUser, Global };

struct CorpusSplit {
  SplitMode mode = SplitMode::PerUser;
  std::uint64_t seed = 0;
  // indices into corpus.reviews
  std::vector<std::uint32_t> train;
  std::vector<std::uint32_t> valid;
  std::vector<std::uint32_t> test;
  // per user, number of training reviews (bucket analysis)
  std::vector<std::uint32_t> train_count_per_user;
};

// Per-user 80/10/10 with minimums 3/1/1; every user must have >= 5 reviews.
CorpusSplit split_per_user(const ProcessedCorpus& corpus, double train_ratio,
                           double valid_ratio, std::uint64_t seed);

// Global shuffle and ratio cut; users with no training review have their
// validation/test reviews dropped.
CorpusSplit split_global(const ProcessedCorpus& corpus, double train_ratio,
                         double valid_ratio, std::uint64_t seed);

}  // namespace alfm
