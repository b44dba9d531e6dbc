#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alfm/alfm.hpp"

namespace alfm {

enum class Subject { User, Item };

// P(word | aspect) = sum_k theta[u][a][k] * phi[k][w] (psi for items);
// a proper distribution over the vocabulary.
std::vector<double> aspect_word_distribution(const AtmPosterior& posterior, Subject kind,
                                             std::uint32_t subject, int a);

struct RankedWord {
  std::uint32_t token = 0;
  double probability = 0.0;
};

struct AspectWordReport {
  Subject kind = Subject::User;
  std::uint32_t subject = 0;
  std::vector<std::vector<RankedWord>> per_aspect;  // background removed
  std::vector<std::uint32_t> background_tokens;
};

// Top-n words per aspect. A token is background when it appears in the
// pre-filter top-n lists of more than background_threshold aspects; filtered
// lists are re-extended to n where possible. Ties break by token id.
AspectWordReport top_words(const AtmPosterior& posterior, Subject kind, std::uint32_t subject,
                           int n, int background_threshold = 3);

struct PairExplanation {
  std::vector<double> importance;   // rho, sums to 1
  std::vector<double> match;        // s in [0,1]
  std::vector<double> factor_term;  // (w_a.p_u)^T(w_a.q_i)
  std::vector<int> polarity;        // sign of factor_term: -1 / 0 / +1
  double predicted = 0.0;
  std::optional<double> actual;
};

PairExplanation explain_pair(const AlfmModel& model, const AtmPosterior& posterior,
                             std::uint32_t u, std::uint32_t i);

std::string aspect_words_to_text(const AspectWordReport& report, const Vocabulary& vocab,
                                 std::span<const std::string> aspect_labels = {});
std::string explanation_to_text(const PairExplanation& explanation,
                                std::span<const std::string> aspect_labels = {});

// Optional "aspect index<TAB>label" map file
std::vector<std::string> load_aspect_labels(const std::string& path, int aspects);

}  // namespace alfm
