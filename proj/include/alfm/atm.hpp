#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "alfm/corpus.hpp"
#include "alfm/rng.hpp"

namespace alfm {

struct AtmHyperparams {
  int topics = 5;   // K
  int aspects = 5;  // A
  // Beta prior on the per-user switch (user-side vs item-side sentences)
  double eta0 = 1.0;
  double eta1 = 1.0;
  // symmetric Dirichlet concentrations
  double alpha_user = 10.0;  // aspect-topic, user side (50/K by default)
  double alpha_item = 10.0;  // aspect-topic, item side
  double gamma_user = 1.0;   // aspect distribution, user side
  double gamma_item = 1.0;   // aspect distribution, item side
  double beta = 0.01;        // topic-word
  int sweeps = 1000;
  int burn_in = 800;
  bool average_samples = false;  // average thinned posteriors after burn-in
  int sample_thinning = 10;
  std::uint64_t seed = 42;

  static AtmHyperparams with_defaults(int topics, int aspects, std::uint64_t seed = 42);
  void validate() const;
};

// Gibbs sampler state: per-sentence (switch, aspect, topic) assignments plus
// every sufficient-statistic count table. The sentence table is flattened
// from the corpus at init and never changes.
struct AtmState {
  AtmHyperparams hyper;
  std::uint32_t n_users = 0;
  std::uint32_t n_items = 0;
  std::uint32_t vocab_size = 0;

  // flattened sentences (CSR)
  std::vector<std::uint32_t> sent_user;
  std::vector<std::uint32_t> sent_item;
  std::vector<std::uint32_t> word_begin;  // size S+1
  std::vector<std::uint32_t> words;
  std::vector<std::uint32_t> uniq_begin;  // size S+1; (word, multiplicity) runs
  std::vector<std::uint32_t> uniq_word;
  std::vector<std::uint16_t> uniq_count;

  // assignments
  std::vector<std::uint8_t> side;     // y
  std::vector<std::uint16_t> aspect;  // a
  std::vector<std::uint16_t> topic;   // z

  // count tables
  std::vector<std::int32_t> user_side_sents;    // M, sentences with y=0 per user
  std::vector<std::int32_t> item_side_sents;    // M, sentences with y=1 per user
  std::vector<std::int32_t> user_aspect;        // M*A
  std::vector<std::int32_t> item_aspect;        // N*A
  std::vector<std::int32_t> item_aspect_total;  // N, sum over aspects
  std::vector<std::int32_t> user_aspect_topic;  // M*A*K
  std::vector<std::int32_t> item_aspect_topic;  // N*A*K
  std::vector<std::int32_t> topic_word;         // K*V
  std::vector<std::int32_t> topic_total;        // K

  Rng rng;

  std::size_t n_sentences() const { return sent_user.size(); }
  std::size_t sentence_len(std::size_t s) const { return word_begin[s + 1] - word_begin[s]; }
};

// Point estimates of every ATM parameter (smoothed count ratios).
struct AtmPosterior {
  int topics = 0;   // K
  int aspects = 0;  // A
  std::uint32_t n_users = 0;
  std::uint32_t n_items = 0;
  std::uint32_t vocab_size = 0;

  std::vector<double> theta;        // M*A*K  user aspect-topic
  std::vector<double> psi;          // N*A*K  item aspect-topic
  std::vector<double> lambda_user;  // M*A
  std::vector<double> lambda_item;  // N*A
  std::vector<double> pi;           // M, P(y=0) per user
  std::vector<double> phi;          // K*V topic-word

  std::span<const double> theta_at(std::uint32_t u, int a) const {
    return {theta.data() + (static_cast<std::size_t>(u) * aspects + a) * topics,
            static_cast<std::size_t>(topics)};
  }
  std::span<const double> psi_at(std::uint32_t i, int a) const {
    return {psi.data() + (static_cast<std::size_t>(i) * aspects + a) * topics,
            static_cast<std::size_t>(topics)};
  }
  std::span<const double> lambda_user_at(std::uint32_t u) const {
    return {lambda_user.data() + static_cast<std::size_t>(u) * aspects,
            static_cast<std::size_t>(aspects)};
  }
  std::span<const double> lambda_item_at(std::uint32_t i) const {
    return {lambda_item.data() + static_cast<std::size_t>(i) * aspects,
            static_cast<std::size_t>(aspects)};
  }
  std::span<const double> phi_at(int k) const {
    return {phi.data() + static_cast<std::size_t>(k) * vocab_size,
            static_cast<std::size_t>(vocab_size)};
  }
};

// Uniform random assignments over the given reviews (all reviews when the
// subset is empty); count tables sized for the whole corpus so entities
// without training text fall back to prior means at estimation.
AtmState init_state(const ProcessedCorpus& corpus, const AtmHyperparams& hyper);
AtmState init_state(const ProcessedCorpus& corpus, const AtmHyperparams& hyper,
                    std::span<const std::uint32_t> review_subset);

// Unnormalized block conditional over the 2*A*K triples (y,a,z) for one
// sentence, indexed [(y*A + a)*K + z]. Pre: the sentence's current assignment
// has been decremented from the counts.
std::vector<double> sentence_conditional(const AtmState& state, std::size_t sentence);

// Decrement, draw the triple from its block conditional, increment.
void resample_sentence(AtmState& state, std::size_t sentence);

// One pass resampling every sentence in index order.
void gibbs_sweep(AtmState& state);

AtmPosterior estimate_posterior(const AtmState& state);

// Sort every entity's aspect slots into the canonical order that
// estimate_posterior emits (by each aspect-topic row's dominant topic, ties
// by aspect weight then index). Aspect slot labels are exchangeable in the
// model, so cross-entity comparisons need a fixed gauge.
void canonicalize_posterior(AtmPosterior& posterior);

// True iff every count table equals a from-scratch recount of assignments.
bool verify_counts(const AtmState& state);

// Sum over sentences of log sum_{y,a,z} P(y)P(a)P(z) prod_w phi[z][w].
double log_likelihood(const AtmPosterior& posterior, const ProcessedCorpus& corpus);
double log_likelihood(const AtmPosterior& posterior, const ProcessedCorpus& corpus,
                      std::span<const std::uint32_t> review_subset);

using SweepCallback = std::function<void(int sweep, const AtmState&)>;

// init + sweeps + posterior (single final sample, or thinned average when
// hyper.average_samples is set).
AtmPosterior fit_atm(const ProcessedCorpus& corpus, const AtmHyperparams& hyper,
                     std::span<const std::uint32_t> review_subset = {},
                     const SweepCallback& on_sweep = nullptr);

// Synthetic corpus drawn exactly from the generative process; returns the
// sampled ground-truth parameters and the per-sentence assignments in corpus
// sentence order.
struct GeneratedCorpus {
  ProcessedCorpus corpus;
  AtmPosterior truth;
  std::vector<std::uint8_t> side;
  std::vector<std::uint16_t> aspect;
  std::vector<std::uint16_t> topic;
};

GeneratedCorpus generate_corpus(const AtmHyperparams& hyper, std::uint32_t n_users,
                                std::uint32_t n_items, int reviews_per_user,
                                int sentences_per_review, int words_per_sentence,
                                std::uint32_t vocab_size, std::uint64_t seed);

}  // namespace alfm
