#include "alfm/atm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "alfm/error.hpp"

namespace alfm {

AtmHyperparams AtmHyperparams::with_defaults(int topics, int aspects, std::uint64_t seed) {
  AtmHyperparams h;
  h.topics = topics;
  h.aspects = aspects;
  h.alpha_user = 50.0 / topics;
  h.alpha_item = 50.0 / topics;
  h.seed = seed;
  return h;
}

void AtmHyperparams::validate() const {
  if (topics < 1 || aspects < 1) throw ConfigError("atm: topics and aspects must be >= 1");
  if (eta0 <= 0 || eta1 <= 0 || alpha_user <= 0 || alpha_item <= 0 || gamma_user <= 0 ||
      gamma_item <= 0 || beta <= 0)
    throw ConfigError("atm: all concentrations must be > 0");
  if (burn_in >= sweeps) throw ConfigError("atm: burn_in must be < sweeps");
}

namespace {

struct Scratch {
  std::vector<double> table;  // 2*A*K
  std::vector<double> log_w;  // K
  std::vector<double> lin_w;  // K
};

Scratch& scratch_for(const AtmState& state) {
  thread_local Scratch s;
  const std::size_t k = static_cast<std::size_t>(state.hyper.topics);
  s.table.resize(2 * static_cast<std::size_t>(state.hyper.aspects) * k);
  s.log_w.resize(k);
  s.lin_w.resize(k);
  return s;
}

// Polya-urn block term for assigning the whole sentence to topic z, shared
// across (y, a); log space, then shifted by the max before exponentiating.
void word_term(const AtmState& state, std::size_t s, std::span<double> log_w,
               std::span<double> lin_w) {
  const int K = state.hyper.topics;
  const std::uint32_t V = state.vocab_size;
  const double beta = state.hyper.beta;
  const double vbeta = V * beta;
  const std::size_t len = state.sentence_len(s);

  for (int z = 0; z < K; ++z) {
    double lw = 0.0;
    const std::int32_t* row = state.topic_word.data() + static_cast<std::size_t>(z) * V;
    for (std::uint32_t q = state.uniq_begin[s]; q < state.uniq_begin[s + 1]; ++q) {
      const double base = row[state.uniq_word[q]] + beta;
      for (int j = 0; j < state.uniq_count[q]; ++j) lw += std::log(base + j);
    }
    const double total = state.topic_total[z] + vbeta;
    for (std::size_t j = 0; j < len; ++j) lw -= std::log(total + j);
    log_w[z] = lw;
  }
  double mx = *std::max_element(log_w.begin(), log_w.end());
  for (int z = 0; z < K; ++z) lin_w[z] = std::exp(log_w[z] - mx);
}

void conditional_into(const AtmState& state, std::size_t s, std::span<double> out,
                      std::span<double> log_w, std::span<double> lin_w) {
  const int K = state.hyper.topics;
  const int A = state.hyper.aspects;
  const auto& h = state.hyper;
  const std::uint32_t u = state.sent_user[s];
  const std::uint32_t i = state.sent_item[s];

  word_term(state, s, log_w, lin_w);

  const double n0 = state.user_side_sents[u];
  const double n1 = state.item_side_sents[u];
  const double switch_den = n0 + n1 + h.eta0 + h.eta1;
  const double switch0 = (n0 + h.eta0) / switch_den;
  const double switch1 = (n1 + h.eta1) / switch_den;
  const double aspect_den0 = n0 + A * h.gamma_user;
  const double aspect_den1 = state.item_aspect_total[i] + A * h.gamma_item;

  for (int a = 0; a < A; ++a) {
    const std::size_t ua = static_cast<std::size_t>(u) * A + a;
    const std::size_t ia = static_cast<std::size_t>(i) * A + a;
    const double c_u = state.user_aspect[ua];
    const double c_i = state.item_aspect[ia];
    const double f0 = switch0 * ((c_u + h.gamma_user) / aspect_den0) / (c_u + K * h.alpha_user);
    const double f1 = switch1 * ((c_i + h.gamma_item) / aspect_den1) / (c_i + K * h.alpha_item);
    const std::int32_t* tu = state.user_aspect_topic.data() + ua * K;
    const std::int32_t* ti = state.item_aspect_topic.data() + ia * K;
    double* out0 = out.data() + static_cast<std::size_t>(a) * K;
    double* out1 = out.data() + (static_cast<std::size_t>(A) + a) * K;
    for (int z = 0; z < K; ++z) {
      out0[z] = f0 * (tu[z] + h.alpha_user) * lin_w[z];
      out1[z] = f1 * (ti[z] + h.alpha_item) * lin_w[z];
    }
  }
}

void apply_counts(AtmState& st, std::size_t s, int delta) {
  const int K = st.hyper.topics;
  const int A = st.hyper.aspects;
  const std::uint32_t u = st.sent_user[s];
  const std::uint32_t i = st.sent_item[s];
  const int a = st.aspect[s];
  const int z = st.topic[s];
  if (st.side[s] == 0) {
    st.user_side_sents[u] += delta;
    st.user_aspect[static_cast<std::size_t>(u) * A + a] += delta;
    st.user_aspect_topic[(static_cast<std::size_t>(u) * A + a) * K + z] += delta;
  } else {
    st.item_side_sents[u] += delta;
    st.item_aspect[static_cast<std::size_t>(i) * A + a] += delta;
    st.item_aspect_total[i] += delta;
    st.item_aspect_topic[(static_cast<std::size_t>(i) * A + a) * K + z] += delta;
  }
  std::int32_t* row = st.topic_word.data() + static_cast<std::size_t>(z) * st.vocab_size;
  for (std::uint32_t q = st.word_begin[s]; q < st.word_begin[s + 1]; ++q) row[st.words[q]] += delta;
  st.topic_total[z] += delta * static_cast<std::int32_t>(st.sentence_len(s));
}

}  // namespace

AtmState init_state(const ProcessedCorpus& corpus, const AtmHyperparams& hyper) {
  return init_state(corpus, hyper, {});
}

AtmState init_state(const ProcessedCorpus& corpus, const AtmHyperparams& hyper,
                    std::span<const std::uint32_t> review_subset) {
  hyper.validate();
  AtmState st;
  st.hyper = hyper;
  st.n_users = corpus.n_users();
  st.n_items = corpus.n_items();
  st.vocab_size = corpus.vocab.size();

  std::vector<std::uint32_t> all;
  if (review_subset.empty()) {
    all.resize(corpus.reviews.size());
    for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
    review_subset = all;
  }

  st.word_begin.push_back(0);
  st.uniq_begin.push_back(0);
  for (std::uint32_t ri : review_subset) {
    const auto& r = corpus.reviews[ri];
    for (const auto& sent : r.sentences) {
      st.sent_user.push_back(r.user_idx);
      st.sent_item.push_back(r.item_idx);
      st.words.insert(st.words.end(), sent.begin(), sent.end());
      st.word_begin.push_back(static_cast<std::uint32_t>(st.words.size()));
      // multiplicity runs over a sorted copy
      std::vector<std::uint32_t> sorted(sent);
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t j = 0; j < sorted.size();) {
        std::size_t j2 = j;
        while (j2 < sorted.size() && sorted[j2] == sorted[j]) ++j2;
        st.uniq_word.push_back(sorted[j]);
        st.uniq_count.push_back(static_cast<std::uint16_t>(j2 - j));
        j = j2;
      }
      st.uniq_begin.push_back(static_cast<std::uint32_t>(st.uniq_word.size()));
    }
  }

  const std::size_t S = st.n_sentences();
  const int K = hyper.topics;
  const int A = hyper.aspects;
  st.side.resize(S);
  st.aspect.resize(S);
  st.topic.resize(S);
  st.user_side_sents.assign(st.n_users, 0);
  st.item_side_sents.assign(st.n_users, 0);
  st.user_aspect.assign(static_cast<std::size_t>(st.n_users) * A, 0);
  st.item_aspect.assign(static_cast<std::size_t>(st.n_items) * A, 0);
  st.item_aspect_total.assign(st.n_items, 0);
  st.user_aspect_topic.assign(static_cast<std::size_t>(st.n_users) * A * K, 0);
  st.item_aspect_topic.assign(static_cast<std::size_t>(st.n_items) * A * K, 0);
  st.topic_word.assign(static_cast<std::size_t>(K) * st.vocab_size, 0);
  st.topic_total.assign(K, 0);

  st.rng = Rng(hyper.seed);
  for (std::size_t s = 0; s < S; ++s) {
    st.side[s] = static_cast<std::uint8_t>(st.rng.uniform_int(2));
    st.aspect[s] = static_cast<std::uint16_t>(st.rng.uniform_int(A));
    st.topic[s] = static_cast<std::uint16_t>(st.rng.uniform_int(K));
    apply_counts(st, s, +1);
  }
  return st;
}

std::vector<double> sentence_conditional(const AtmState& state, std::size_t sentence) {
  const std::size_t n = 2 * static_cast<std::size_t>(state.hyper.aspects) * state.hyper.topics;
  std::vector<double> out(n);
  std::vector<double> log_w(state.hyper.topics), lin_w(state.hyper.topics);
  conditional_into(state, sentence, out, log_w, lin_w);
  return out;
}

void resample_sentence(AtmState& state, std::size_t sentence) {
  auto& sc = scratch_for(state);
  apply_counts(state, sentence, -1);
  conditional_into(state, sentence, sc.table, sc.log_w, sc.lin_w);
  const std::size_t pick = state.rng.discrete(sc.table);
  const int K = state.hyper.topics;
  const int A = state.hyper.aspects;
  state.side[sentence] = static_cast<std::uint8_t>(pick / (static_cast<std::size_t>(A) * K));
  state.aspect[sentence] = static_cast<std::uint16_t>((pick / K) % A);
  state.topic[sentence] = static_cast<std::uint16_t>(pick % K);
  apply_counts(state, sentence, +1);
}

void gibbs_sweep(AtmState& state) {
  for (std::size_t s = 0; s < state.n_sentences(); ++s) resample_sentence(state, s);
}

namespace {

// The likelihood is invariant under per-entity permutations of aspect slots
// (nothing couples a user's slot a to an item's slot a), so raw slot labels
// are not comparable across entities. Put every entity's slots into a
// canonical order keyed by the dominant topic of each aspect-topic row; rows
// concentrated on the same topics then land in the same slot everywhere.
void canonicalize_aspects(std::span<double> topic_rows, std::span<double> aspect_weights,
                          int aspects, int topics) {
  std::vector<int> order(aspects);
  for (int a = 0; a < aspects; ++a) order[a] = a;
  auto key = [&](int a) {
    const double* row = topic_rows.data() + static_cast<std::size_t>(a) * topics;
    int arg = 0;
    for (int z = 1; z < topics; ++z)
      if (row[z] > row[arg]) arg = z;
    return arg;
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const int ka = key(a), kb = key(b);
    if (ka != kb) return ka < kb;
    if (aspect_weights[a] != aspect_weights[b]) return aspect_weights[a] > aspect_weights[b];
    return a < b;
  });
  std::vector<double> rows(topic_rows.begin(), topic_rows.end());
  std::vector<double> weights(aspect_weights.begin(), aspect_weights.end());
  for (int a = 0; a < aspects; ++a) {
    aspect_weights[a] = weights[order[a]];
    for (int z = 0; z < topics; ++z)
      topic_rows[static_cast<std::size_t>(a) * topics + z] =
          rows[static_cast<std::size_t>(order[a]) * topics + z];
  }
}

}  // namespace

AtmPosterior estimate_posterior(const AtmState& st) {
  const auto& h = st.hyper;
  const int K = h.topics;
  const int A = h.aspects;
  AtmPosterior p;
  p.topics = K;
  p.aspects = A;
  p.n_users = st.n_users;
  p.n_items = st.n_items;
  p.vocab_size = st.vocab_size;
  p.theta.resize(static_cast<std::size_t>(st.n_users) * A * K);
  p.psi.resize(static_cast<std::size_t>(st.n_items) * A * K);
  p.lambda_user.resize(static_cast<std::size_t>(st.n_users) * A);
  p.lambda_item.resize(static_cast<std::size_t>(st.n_items) * A);
  p.pi.resize(st.n_users);
  p.phi.resize(static_cast<std::size_t>(K) * st.vocab_size);

  for (std::uint32_t u = 0; u < st.n_users; ++u) {
    const double n0 = st.user_side_sents[u];
    const double n1 = st.item_side_sents[u];
    p.pi[u] = (n0 + h.eta0) / (n0 + n1 + h.eta0 + h.eta1);
    for (int a = 0; a < A; ++a) {
      const std::size_t ua = static_cast<std::size_t>(u) * A + a;
      const double c = st.user_aspect[ua];
      p.lambda_user[ua] = (c + h.gamma_user) / (n0 + A * h.gamma_user);
      for (int z = 0; z < K; ++z)
        p.theta[ua * K + z] = (st.user_aspect_topic[ua * K + z] + h.alpha_user) / (c + K * h.alpha_user);
    }
  }
  for (std::uint32_t i = 0; i < st.n_items; ++i) {
    const double tot = st.item_aspect_total[i];
    for (int a = 0; a < A; ++a) {
      const std::size_t ia = static_cast<std::size_t>(i) * A + a;
      const double c = st.item_aspect[ia];
      p.lambda_item[ia] = (c + h.gamma_item) / (tot + A * h.gamma_item);
      for (int z = 0; z < K; ++z)
        p.psi[ia * K + z] = (st.item_aspect_topic[ia * K + z] + h.alpha_item) / (c + K * h.alpha_item);
    }
  }
  for (int z = 0; z < K; ++z) {
    const double nk = st.topic_total[z];
    for (std::uint32_t w = 0; w < st.vocab_size; ++w)
      p.phi[static_cast<std::size_t>(z) * st.vocab_size + w] =
          (st.topic_word[static_cast<std::size_t>(z) * st.vocab_size + w] + h.beta) /
          (nk + st.vocab_size * h.beta);
  }
  canonicalize_posterior(p);
  return p;
}

void canonicalize_posterior(AtmPosterior& p) {
  const int K = p.topics;
  const int A = p.aspects;
  for (std::uint32_t u = 0; u < p.n_users; ++u)
    canonicalize_aspects({p.theta.data() + static_cast<std::size_t>(u) * A * K,
                          static_cast<std::size_t>(A) * K},
                         {p.lambda_user.data() + static_cast<std::size_t>(u) * A,
                          static_cast<std::size_t>(A)},
                         A, K);
  for (std::uint32_t i = 0; i < p.n_items; ++i)
    canonicalize_aspects({p.psi.data() + static_cast<std::size_t>(i) * A * K,
                          static_cast<std::size_t>(A) * K},
                         {p.lambda_item.data() + static_cast<std::size_t>(i) * A,
                          static_cast<std::size_t>(A)},
                         A, K);
}

bool verify_counts(const AtmState& st) {
  AtmState fresh = st;
  std::fill(fresh.user_side_sents.begin(), fresh.user_side_sents.end(), 0);
  std::fill(fresh.item_side_sents.begin(), fresh.item_side_sents.end(), 0);
  std::fill(fresh.user_aspect.begin(), fresh.user_aspect.end(), 0);
  std::fill(fresh.item_aspect.begin(), fresh.item_aspect.end(), 0);
  std::fill(fresh.item_aspect_total.begin(), fresh.item_aspect_total.end(), 0);
  std::fill(fresh.user_aspect_topic.begin(), fresh.user_aspect_topic.end(), 0);
  std::fill(fresh.item_aspect_topic.begin(), fresh.item_aspect_topic.end(), 0);
  std::fill(fresh.topic_word.begin(), fresh.topic_word.end(), 0);
  std::fill(fresh.topic_total.begin(), fresh.topic_total.end(), 0);
  for (std::size_t s = 0; s < fresh.n_sentences(); ++s) apply_counts(fresh, s, +1);
  return fresh.user_side_sents == st.user_side_sents &&
         fresh.item_side_sents == st.item_side_sents &&
         fresh.user_aspect == st.user_aspect && fresh.item_aspect == st.item_aspect &&
         fresh.item_aspect_total == st.item_aspect_total &&
         fresh.user_aspect_topic == st.user_aspect_topic &&
         fresh.item_aspect_topic == st.item_aspect_topic &&
         fresh.topic_word == st.topic_word && fresh.topic_total == st.topic_total;
}

double log_likelihood(const AtmPosterior& p, const ProcessedCorpus& corpus) {
  return log_likelihood(p, corpus, {});
}

double log_likelihood(const AtmPosterior& p, const ProcessedCorpus& corpus,
                      std::span<const std::uint32_t> review_subset) {
  std::vector<std::uint32_t> all;
  if (review_subset.empty()) {
    all.resize(corpus.reviews.size());
    for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
    review_subset = all;
  }
  const int K = p.topics;
  const int A = p.aspects;
  std::vector<double> log_words(K), mix(K);
  double total = 0.0;
  for (std::uint32_t ri : review_subset) {
    const auto& r = corpus.reviews[ri];
    for (const auto& sent : r.sentences) {
      for (int z = 0; z < K; ++z) {
        double lw = 0.0;
        const double* row = p.phi.data() + static_cast<std::size_t>(z) * p.vocab_size;
        for (std::uint32_t w : sent) lw += std::log(row[w]);
        log_words[z] = lw;
      }
      const double pi_u = p.pi[r.user_idx];
      for (int z = 0; z < K; ++z) {
        double m = 0.0;
        for (int a = 0; a < A; ++a) {
          m += pi_u * p.lambda_user_at(r.user_idx)[a] * p.theta_at(r.user_idx, a)[z] +
               (1.0 - pi_u) * p.lambda_item_at(r.item_idx)[a] * p.psi_at(r.item_idx, a)[z];
        }
        mix[z] = m;
      }
      const double mx = *std::max_element(log_words.begin(), log_words.end());
      if (!std::isfinite(mx)) return -std::numeric_limits<double>::infinity();
      double acc = 0.0;
      for (int z = 0; z < K; ++z) acc += mix[z] * std::exp(log_words[z] - mx);
      total += mx + std::log(acc);
    }
  }
  return total;
}

AtmPosterior fit_atm(const ProcessedCorpus& corpus, const AtmHyperparams& hyper,
                     std::span<const std::uint32_t> review_subset, const SweepCallback& on_sweep) {
  AtmState state = init_state(corpus, hyper, review_subset);
  AtmPosterior averaged;
  std::size_t n_samples = 0;
  for (int sweep = 0; sweep < hyper.sweeps; ++sweep) {
    gibbs_sweep(state);
    if (on_sweep) on_sweep(sweep, state);
    if (hyper.average_samples && sweep >= hyper.burn_in &&
        (sweep - hyper.burn_in) % hyper.sample_thinning == 0) {
      AtmPosterior sample = estimate_posterior(state);
      if (n_samples == 0) {
        averaged = std::move(sample);
      } else {
        auto add = [](std::vector<double>& acc, const std::vector<double>& x) {
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
        };
        add(averaged.theta, sample.theta);
        add(averaged.psi, sample.psi);
        add(averaged.lambda_user, sample.lambda_user);
        add(averaged.lambda_item, sample.lambda_item);
        add(averaged.pi, sample.pi);
        add(averaged.phi, sample.phi);
      }
      ++n_samples;
    }
  }
  if (hyper.average_samples && n_samples > 0) {
    auto scale = [&](std::vector<double>& v) {
      for (double& x : v) x /= static_cast<double>(n_samples);
    };
    scale(averaged.theta);
    scale(averaged.psi);
    scale(averaged.lambda_user);
    scale(averaged.lambda_item);
    scale(averaged.pi);
    scale(averaged.phi);
    return averaged;
  }
  return estimate_posterior(state);
}

GeneratedCorpus generate_corpus(const AtmHyperparams& hyper, std::uint32_t n_users,
                                std::uint32_t n_items, int reviews_per_user,
                                int sentences_per_review, int words_per_sentence,
                                std::uint32_t vocab_size, std::uint64_t seed) {
  hyper.validate();
  if (n_users < 1 || n_items < 1 || reviews_per_user < 1 || sentences_per_review < 1 ||
      words_per_sentence < 1 || vocab_size < 1)
    throw ContractError("generate_corpus: all sizes must be >= 1");

  const int K = hyper.topics;
  const int A = hyper.aspects;
  Rng rng(seed);

  GeneratedCorpus gen;
  AtmPosterior& truth = gen.truth;
  truth.topics = K;
  truth.aspects = A;
  truth.n_users = n_users;
  truth.n_items = n_items;
  truth.vocab_size = vocab_size;
  truth.phi.reserve(static_cast<std::size_t>(K) * vocab_size);
  for (int z = 0; z < K; ++z) {
    auto row = rng.dirichlet(hyper.beta, vocab_size);
    truth.phi.insert(truth.phi.end(), row.begin(), row.end());
  }
  for (std::uint32_t u = 0; u < n_users; ++u) {
    auto lam = rng.dirichlet(hyper.gamma_user, A);
    truth.lambda_user.insert(truth.lambda_user.end(), lam.begin(), lam.end());
  }
  for (std::uint32_t i = 0; i < n_items; ++i) {
    auto lam = rng.dirichlet(hyper.gamma_item, A);
    truth.lambda_item.insert(truth.lambda_item.end(), lam.begin(), lam.end());
  }
  for (std::uint32_t u = 0; u < n_users; ++u)
    for (int a = 0; a < A; ++a) {
      auto row = rng.dirichlet(hyper.alpha_user, K);
      truth.theta.insert(truth.theta.end(), row.begin(), row.end());
    }
  for (std::uint32_t i = 0; i < n_items; ++i)
    for (int a = 0; a < A; ++a) {
      auto row = rng.dirichlet(hyper.alpha_item, K);
      truth.psi.insert(truth.psi.end(), row.begin(), row.end());
    }
  for (std::uint32_t u = 0; u < n_users; ++u) truth.pi.push_back(rng.beta(hyper.eta0, hyper.eta1));

  ProcessedCorpus& corpus = gen.corpus;
  corpus.vocab.tokens.reserve(vocab_size);
  corpus.vocab.frequency.assign(vocab_size, 0);
  for (std::uint32_t w = 0; w < vocab_size; ++w) {
    std::string tok = "w" + std::to_string(w);
    corpus.vocab.ids.emplace(tok, w);
    corpus.vocab.tokens.push_back(std::move(tok));
  }
  for (std::uint32_t u = 0; u < n_users; ++u) {
    std::string id = "u" + std::to_string(u);
    corpus.user_index.emplace(id, u);
    corpus.user_ids.push_back(std::move(id));
  }
  for (std::uint32_t i = 0; i < n_items; ++i) {
    std::string id = "i" + std::to_string(i);
    corpus.item_index.emplace(id, i);
    corpus.item_ids.push_back(std::move(id));
  }

  for (std::uint32_t u = 0; u < n_users; ++u) {
    for (int r = 0; r < reviews_per_user; ++r) {
      ProcessedReview pr;
      pr.user_idx = u;
      pr.item_idx = static_cast<std::uint32_t>(rng.uniform_int(n_items));
      pr.rating = 3.0;
      for (int sidx = 0; sidx < sentences_per_review; ++sidx) {
        const bool item_side = !rng.bernoulli(truth.pi[u]);
        int a, z;
        if (!item_side) {
          a = static_cast<int>(rng.discrete(truth.lambda_user_at(u)));
          z = static_cast<int>(rng.discrete(truth.theta_at(u, a)));
        } else {
          a = static_cast<int>(rng.discrete(truth.lambda_item_at(pr.item_idx)));
          z = static_cast<int>(rng.discrete(truth.psi_at(pr.item_idx, a)));
        }
        gen.side.push_back(item_side ? 1 : 0);
        gen.aspect.push_back(static_cast<std::uint16_t>(a));
        gen.topic.push_back(static_cast<std::uint16_t>(z));
        std::vector<std::uint32_t> sent(words_per_sentence);
        for (auto& w : sent) {
          w = static_cast<std::uint32_t>(rng.discrete(truth.phi_at(z)));
          ++corpus.vocab.frequency[w];
        }
        pr.sentences.push_back(std::move(sent));
      }
      corpus.reviews.push_back(std::move(pr));
    }
  }
  return gen;
}

}  // namespace alfm
