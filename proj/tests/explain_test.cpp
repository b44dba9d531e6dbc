#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "alfm/explain.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace alfm;

namespace {

AtmPosterior simple_posterior(int topics, int aspects, std::uint32_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  AtmPosterior p;
  p.topics = topics;
  p.aspects = aspects;
  p.n_users = 2;
  p.n_items = 2;
  p.vocab_size = vocab;
  auto rows = [&](std::vector<double>& flat, std::size_t n, std::size_t len, double conc) {
    for (std::size_t r = 0; r < n; ++r) {
      auto row = rng.dirichlet(conc, len);
      flat.insert(flat.end(), row.begin(), row.end());
    }
  };
  rows(p.theta, 2 * aspects, topics, 0.5);
  rows(p.psi, 2 * aspects, topics, 0.5);
  rows(p.lambda_user, 2, aspects, 1.0);
  rows(p.lambda_item, 2, aspects, 1.0);
  rows(p.phi, topics, vocab, 0.4);
  p.pi = {0.4, 0.7};
  return p;
}

}  // namespace

TEST_CASE("aspect_word_distribution: single topic returns phi regardless of theta") {
  auto p = simple_posterior(1, 3, 6, 1);
  auto d = aspect_word_distribution(p, Subject::User, 0, 1);
  for (std::uint32_t w = 0; w < 6; ++w) CHECK(d[w] == doctest::Approx(p.phi[w]).epsilon(1e-15));
}

TEST_CASE("aspect_word_distribution: one-hot theta picks out a topic row") {
  auto p = simple_posterior(3, 2, 5, 2);
  // user 1, aspect 0 -> one-hot on topic 2
  const std::size_t off = (1 * 2 + 0) * 3;
  p.theta[off] = 0.0;
  p.theta[off + 1] = 0.0;
  p.theta[off + 2] = 1.0;
  auto d = aspect_word_distribution(p, Subject::User, 1, 0);
  for (std::uint32_t w = 0; w < 5; ++w)
    CHECK(d[w] == doctest::Approx(p.phi_at(2)[w]).epsilon(1e-15));
}

TEST_CASE("aspect_word_distribution: matches a direct matrix-vector oracle and normalizes") {
  auto p = simple_posterior(4, 3, 8, 3);
  for (int a = 0; a < 3; ++a) {
    for (auto kind : {Subject::User, Subject::Item}) {
      auto d = aspect_word_distribution(p, kind, 1, a);
      double sum = 0.0;
      for (std::uint32_t w = 0; w < 8; ++w) {
        double expect = 0.0;
        for (int k = 0; k < 4; ++k) {
          const double weight = (kind == Subject::User) ? p.theta_at(1, a)[k] : p.psi_at(1, a)[k];
          expect += weight * p.phi_at(k)[w];
        }
        CHECK(d[w] == doctest::Approx(expect).epsilon(1e-12));
        sum += d[w];
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("top_words: single aspect never has background words") {
  auto p = simple_posterior(2, 1, 10, 4);
  auto rep = top_words(p, Subject::User, 0, 5, 3);
  CHECK(rep.background_tokens.empty());
  REQUIRE(rep.per_aspect.size() == 1);
  CHECK(rep.per_aspect[0].size() == 5);
  // ranked by the aspect distribution
  auto d = aspect_word_distribution(p, Subject::User, 0, 0);
  for (std::size_t j = 1; j < rep.per_aspect[0].size(); ++j)
    CHECK(rep.per_aspect[0][j - 1].probability >= rep.per_aspect[0][j].probability);
  CHECK(rep.per_aspect[0][0].probability ==
        doctest::Approx(*std::max_element(d.begin(), d.end())).epsilon(1e-12));
}

TEST_CASE("top_words: token leading every aspect is removed as background") {
  // construct a posterior where token 0 dominates every aspect: K=1 so the
  // aspect distribution is phi itself in all 5 aspects
  auto p = simple_posterior(1, 5, 6, 5);
  p.phi = {0.5, 0.2, 0.1, 0.1, 0.06, 0.04};
  auto rep = top_words(p, Subject::User, 0, 3, 3);
  REQUIRE(rep.background_tokens.size() == 3);  // tokens 0,1,2 top-3 in all 5 aspects
  for (const auto& list : rep.per_aspect)
    for (const auto& rw : list) {
      CHECK(rw.token != 0);
      CHECK(rw.token != 1);
      CHECK(rw.token != 2);
    }
  // lists re-extended to n from the remaining vocabulary
  for (const auto& list : rep.per_aspect) CHECK(list.size() == 3);
}

TEST_CASE("top_words: deterministic and never contains flagged background tokens") {
  auto p = simple_posterior(3, 5, 30, 6);
  auto a = top_words(p, Subject::Item, 1, 10, 3);
  auto b = top_words(p, Subject::Item, 1, 10, 3);
  REQUIRE(a.per_aspect.size() == b.per_aspect.size());
  for (std::size_t i = 0; i < a.per_aspect.size(); ++i) {
    REQUIRE(a.per_aspect[i].size() == b.per_aspect[i].size());
    for (std::size_t j = 0; j < a.per_aspect[i].size(); ++j)
      CHECK(a.per_aspect[i][j].token == b.per_aspect[i][j].token);
  }
  std::set<std::uint32_t> bg(a.background_tokens.begin(), a.background_tokens.end());
  for (const auto& list : a.per_aspect)
    for (const auto& rw : list) CHECK(bg.count(rw.token) == 0);
}

TEST_CASE("explain_pair: importance row sums to one (table schema)") {
  // a typical five-aspect importance row is a probability distribution
  const std::vector<double> sample_row{0.621, 0.042, 0.241, 0.001, 0.095};
  double sum = 0.0;
  for (double x : sample_row) sum += x;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-3));

  auto p = simple_posterior(3, 5, 8, 7);
  AlfmHyperparams h;
  h.factors = 3;
  AlfmModel m;
  m.factors = 3;
  m.aspects = 5;
  m.n_users = 2;
  m.n_items = 2;
  m.hyper = h;
  Rng rng(8);
  m.user_factors.resize(6);
  m.item_factors.resize(6);
  m.aspect_weights.resize(15);
  for (auto& x : m.user_factors) x = rng.normal();
  for (auto& x : m.item_factors) x = rng.normal();
  for (auto& x : m.aspect_weights) x = rng.normal();
  m.user_bias = {0.1, -0.2};
  m.item_bias = {0.0, 0.3};
  m.global_bias = 3.6;

  auto e = explain_pair(m, p, 0, 1);
  double isum = 0.0;
  for (double x : e.importance) isum += x;
  CHECK(isum == doctest::Approx(1.0).epsilon(1e-9));
  for (double x : e.match) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }
}

TEST_CASE("explain_pair: zero factors give zero polarity and bias-only prediction") {
  auto p = simple_posterior(2, 3, 5, 9);
  AlfmHyperparams h;
  h.factors = 2;
  AlfmModel m;
  m.factors = 2;
  m.aspects = 3;
  m.n_users = 2;
  m.n_items = 2;
  m.hyper = h;
  m.user_factors.assign(4, 0.0);
  m.item_factors.assign(4, 0.0);
  m.aspect_weights.assign(6, 1.0);
  m.user_bias = {0.2, 0.0};
  m.item_bias = {0.0, -0.1};
  m.global_bias = 3.0;
  auto e = explain_pair(m, p, 0, 1);
  for (int pol : e.polarity) CHECK(pol == 0);
  CHECK(e.predicted == doctest::Approx(3.0 + 0.2 - 0.1).epsilon(1e-15));
}

TEST_CASE("explain_pair: recombination reproduces predict") {
  auto p = simple_posterior(4, 4, 10, 10);
  AlfmHyperparams h;
  h.factors = 5;
  AlfmModel m;
  m.factors = 5;
  m.aspects = 4;
  m.n_users = 2;
  m.n_items = 2;
  m.hyper = h;
  Rng rng(11);
  m.user_factors.resize(10);
  m.item_factors.resize(10);
  m.aspect_weights.resize(20);
  for (auto& x : m.user_factors) x = rng.normal();
  for (auto& x : m.item_factors) x = rng.normal();
  for (auto& x : m.aspect_weights) x = rng.normal();
  m.user_bias = {0.15, -0.34};
  m.item_bias = {0.4, 0.05};
  m.global_bias = 3.2;

  for (std::uint32_t u = 0; u < 2; ++u)
    for (std::uint32_t i = 0; i < 2; ++i) {
      auto e = explain_pair(m, p, u, i);
      double acc = 0.0;
      for (int a = 0; a < 4; ++a) acc += e.importance[a] * e.match[a] * e.factor_term[a];
      acc += m.user_bias[u] + m.item_bias[i] + m.global_bias;
      CHECK(std::abs(acc - e.predicted) <= 1e-9);
      PairFeatures f = pair_features(p, u, i);
      CHECK(e.predicted == predict(m, f.importance, f.match, u, i));
    }
}

TEST_CASE("report rendering stays aligned with labels") {
  auto p = simple_posterior(2, 2, 6, 12);
  auto rep = top_words(p, Subject::User, 0, 3, 3);
  Vocabulary vocab;
  for (std::uint32_t w = 0; w < 6; ++w) {
    vocab.tokens.push_back("tok" + std::to_string(w));
    vocab.frequency.push_back(1);
    vocab.ids.emplace(vocab.tokens.back(), w);
  }
  std::vector<std::string> labels{"value", "comfort"};
  const std::string text = aspect_words_to_text(rep, vocab, labels);
  CHECK(text.find("value") != std::string::npos);
  CHECK(text.find("comfort") != std::string::npos);
}

TEST_CASE("aspect label map file loads by index") {
  auto dir = testutil::temp_dir("labels");
  {
    std::ofstream out(dir / "labels.tsv");
    out << "0\tvalue\n2\tshoes\n9\tignored\n";
  }
  auto labels = load_aspect_labels((dir / "labels.tsv").string(), 3);
  REQUIRE(labels.size() == 3);
  CHECK(labels[0] == "value");
  CHECK(labels[1].empty());
  CHECK(labels[2] == "shoes");
  std::filesystem::remove_all(dir);
}
