#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alfm/alfm.hpp"
#include "alfm/atm.hpp"
#include "alfm/corpus.hpp"

namespace alfm {

// Flat key=value run configuration with sections; every field has a default
// and the fully-resolved config is written next to every output.
struct RunConfig {
  // [input]
  std::string input_format = "amazon_json";
  std::string user_key, item_key, rating_key, text_key, time_key;  // empty -> format preset

  // [corpus]
  std::uint64_t min_term_count = 5;
  std::uint64_t min_token_len = 2;
  std::string stopword_file;
  int k_core = 5;

  // [split]
  std::string split_mode = "per_user";  // per_user | global
  double train_ratio = 0.8;
  double valid_ratio = 0.1;
  std::uint64_t split_seed = 42;

  // [atm]; alpha < 0 means the 50/topics heuristic
  AtmHyperparams atm = [] {
    AtmHyperparams h;
    h.alpha_user = -1.0;
    h.alpha_item = -1.0;
    return h;
  }();

  // [alfm]
  AlfmHyperparams alfm;

  // [sweep]
  std::vector<int> sweep_factors = {5, 10, 15, 20, 25};
  std::vector<int> sweep_topics = {5, 10, 15, 20, 25};

  // [explain]
  int top_words_n = 10;
  int background_threshold = 3;
  std::string label_file;

  static RunConfig from_file(const std::string& path);
  // dotted key, e.g. "atm.topics=10"
  void apply_override(const std::string& assignment);
  void apply_seed(std::uint64_t seed);  // split, atm, and alfm seeds at once

  std::string resolved_ini() const;
  AtmHyperparams resolved_atm() const;
  TokenizerConfig tokenizer_config() const;
  FieldMap field_map() const;
  ReviewFormat format() const;
  SplitMode resolved_split_mode() const;
};

}  // namespace alfm
