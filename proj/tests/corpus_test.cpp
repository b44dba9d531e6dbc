#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sstream>

#include "alfm/corpus.hpp"
#include "alfm/error.hpp"
#include "alfm/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace alfm;

namespace {

RawReview rr(const std::string& u, const std::string& i, double rating = 4.0,
             std::optional<std::int64_t> t = std::nullopt, const std::string& text = "") {
  return {u, i, rating, text, t};
}

std::string pair_set(const std::vector<RawReview>& rs) {
  std::vector<std::string> keys;
  for (const auto& r : rs) keys.push_back(r.user_id + "|" + r.item_id);
  std::sort(keys.begin(), keys.end());
  std::string out;
  for (const auto& k : keys) out += k + ";";
  return out;
}

}  // namespace

TEST_CASE("parse_reviews: empty stream") {
  std::istringstream in("");
  ParseStats st;
  auto rs = parse_reviews(in, ReviewFormat::Tsv, &st);
  CHECK(rs.empty());
  CHECK(st.skipped == 0);
}

TEST_CASE("parse_reviews: rating outside [1,5] is skipped and counted") {
  std::istringstream in("u1\ti1\t6\tfine product\t100\n");
  ParseStats st;
  auto rs = parse_reviews(in, ReviewFormat::Tsv, &st);
  CHECK(rs.empty());
  CHECK(st.skipped == 1);
}

TEST_CASE("parse_reviews: well-formed lines round-trip field values") {
  const std::string fixture =
      "{\"reviewerID\":\"A1X\",\"asin\":\"B002\",\"overall\":5.0,\"reviewText\":\"Great "
      "strings. Loved it!\",\"unixReviewTime\":1365811200}\n"
      "{\"reviewerID\":\"A2Y\",\"asin\":\"B003\",\"overall\":1.5,\"reviewText\":\"meh\"}\n"
      "{\"reviewerID\":\"A3Z\",\"asin\":\"B002\",\"overall\":3,\"reviewText\":\"ok tone\","
      "\"unixReviewTime\":1365897600}\n";
  std::istringstream in(fixture);
  ParseStats st;
  auto rs = parse_reviews(in, ReviewFormat::AmazonJson, &st);
  REQUIRE(rs.size() == 3);
  CHECK(st.skipped == 0);
  CHECK(rs[0].user_id == "A1X");
  CHECK(rs[0].item_id == "B002");
  CHECK(rs[0].rating == 5.0);
  CHECK(rs[0].text == "Great strings. Loved it!");
  CHECK(rs[0].timestamp == 1365811200);
  CHECK(!rs[1].timestamp.has_value());
  CHECK(rs[2].rating == 3.0);
}

TEST_CASE("parse_reviews: yelp preset and malformed json lines") {
  const std::string fixture =
      "{\"user_id\":\"ua\",\"business_id\":\"ba\",\"stars\":4,\"text\":\"nice\",\"date\":"
      "\"2016-03-01\"}\n"
      "not json at all\n"
      "{\"user_id\":\"ub\",\"business_id\":\"bb\",\"stars\":2,\"text\":\"\"}\n";
  std::istringstream in(fixture);
  ParseStats st;
  auto rs = parse_reviews(in, ReviewFormat::YelpJson, &st);
  REQUIRE(rs.size() == 2);
  CHECK(st.skipped == 1);
  REQUIRE(rs[0].timestamp.has_value());
  CHECK(*rs[0].timestamp == 1456790400);  // 2016-03-01 UTC
}

TEST_CASE("dedupe: two identical pairs collapse to one") {
  auto out = dedupe({rr("u", "i"), rr("u", "i")});
  CHECK(out.size() == 1);
}

TEST_CASE("dedupe: distinct pairs unchanged") {
  auto in = std::vector<RawReview>{rr("u", "i1"), rr("u", "i2"), rr("v", "i1")};
  auto out = dedupe(in);
  CHECK(pair_set(out) == pair_set(in));
  CHECK(out.size() == 3);
}

TEST_CASE("dedupe: latest timestamp wins") {
  auto out = dedupe({rr("u", "i", 2.0, 9), rr("u", "i", 4.0, 5)});
  REQUIRE(out.size() == 1);
  CHECK(out[0].timestamp == 9);
  CHECK(out[0].rating == 2.0);

  // oracle: group-by + max timestamp over a random batch
  Rng rng(11);
  std::vector<RawReview> batch;
  for (int n = 0; n < 200; ++n)
    batch.push_back(rr("u" + std::to_string(rng.uniform_int(6)),
                       "i" + std::to_string(rng.uniform_int(6)), 3.0,
                       static_cast<std::int64_t>(rng.uniform_int(50))));
  std::map<std::string, std::int64_t> max_ts;
  for (const auto& r : batch) {
    auto key = r.user_id + "|" + r.item_id;
    auto it = max_ts.find(key);
    if (it == max_ts.end() || *r.timestamp >= it->second) max_ts[key] = *r.timestamp;
  }
  auto deduped = dedupe(batch);
  CHECK(deduped.size() == max_ts.size());
  for (const auto& r : deduped) CHECK(*r.timestamp == max_ts[r.user_id + "|" + r.item_id]);
}

TEST_CASE("dedupe: ties broken by input order, last wins") {
  auto out = dedupe({rr("u", "i", 1.0, 7), rr("u", "i", 2.0, 7), rr("u", "i", 3.0, 7)});
  REQUIRE(out.size() == 1);
  CHECK(out[0].rating == 3.0);
}

TEST_CASE("dedupe is idempotent and output pairs are unique") {
  Rng rng(3);
  std::vector<RawReview> batch;
  for (int n = 0; n < 120; ++n)
    batch.push_back(rr("u" + std::to_string(rng.uniform_int(8)),
                       "i" + std::to_string(rng.uniform_int(8)), 3.0,
                       static_cast<std::int64_t>(rng.uniform_int(20))));
  auto once = dedupe(batch);
  auto twice = dedupe(once);
  CHECK(pair_set(once) == pair_set(twice));
  CHECK(once.size() == twice.size());
  std::set<std::string> uniq;
  for (const auto& r : once) CHECK(uniq.insert(r.user_id + "|" + r.item_id).second);
}

TEST_CASE("k_core_filter: fixed point when everything already qualifies") {
  std::vector<RawReview> batch;
  for (int u = 0; u < 3; ++u)
    for (int i = 0; i < 3; ++i) batch.push_back(rr("u" + std::to_string(u), "i" + std::to_string(i)));
  auto out = k_core_filter(batch, 3);
  CHECK(out.size() == batch.size());
}

TEST_CASE("k_core_filter: single user below k peels everything") {
  std::vector<RawReview> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(rr("u", "i" + std::to_string(i)));
  auto out = k_core_filter(batch, 5);
  CHECK(out.empty());
}

TEST_CASE("k_core_filter: cascading chain matches the peeling oracle") {
  auto batch = testutil::review_fixture_20();
  auto out = k_core_filter(batch, 3);
  auto expect = testutil::k_core_oracle(batch, 3);
  CHECK(pair_set(out) == pair_set(expect));
  // the hanging chain must be gone, the 3x3 core intact
  CHECK(out.size() == 9);
}

TEST_CASE("k_core_filter matches oracle on random bipartite fixtures") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    Rng rng(seed);
    std::vector<RawReview> batch;
    const int edges = 20 + static_cast<int>(rng.uniform_int(81));
    for (int n = 0; n < edges; ++n)
      batch.push_back(rr("u" + std::to_string(rng.uniform_int(10)),
                         "i" + std::to_string(rng.uniform_int(10))));
    const int k = 2 + static_cast<int>(rng.uniform_int(3));
    auto out = k_core_filter(batch, k);
    auto expect = testutil::k_core_oracle(batch, k);
    CHECK(pair_set(out) == pair_set(expect));
    // idempotence
    auto again = k_core_filter(out, k);
    CHECK(pair_set(again) == pair_set(out));
  }
}

TEST_CASE("tokenize_and_segment: empty text") {
  TokenizerConfig cfg;
  cfg.stopwords.clear();
  CHECK(tokenize_and_segment("", cfg).empty());
}

TEST_CASE("tokenize_and_segment: basic splitting and cleaning") {
  TokenizerConfig cfg;
  cfg.stopwords.clear();
  cfg.min_token_len = 2;
  auto sents = tokenize_and_segment("Great shoes. Bad fit!", cfg);
  REQUIRE(sents.size() == 2);
  CHECK(sents[0] == std::vector<std::string>{"great", "shoes"});
  CHECK(sents[1] == std::vector<std::string>{"bad", "fit"});
}

TEST_CASE("tokenize_and_segment: golden fixture with default stopwords") {
  TokenizerConfig cfg;
  cfg.stopwords = default_stopwords();
  cfg.min_token_len = 2;
  const std::string text =
      "I love the warm tone of this guitar!\n"
      "The strings don't buzz at all. Setup was easy... really easy.";
  auto sents = tokenize_and_segment(text, cfg);
  // hand-tokenized: stopwords (i, love? no - love stays, the, of, this, dont,
  // at, all, was) removed, "don't" -> "dont" (stopword)
  REQUIRE(sents.size() == 4);
  CHECK(sents[0] == std::vector<std::string>{"love", "warm", "tone", "guitar"});
  CHECK(sents[1] == std::vector<std::string>{"strings", "buzz"});
  CHECK(sents[2] == std::vector<std::string>{"setup", "easy"});
  CHECK(sents[3] == std::vector<std::string>{"really", "easy"});
}

TEST_CASE("build_corpus: single review, repeated token") {
  TokenizerConfig cfg;
  cfg.stopwords.clear();
  auto corpus = build_corpus({rr("u", "i", 4.0, {}, "good good")}, cfg, 1);
  REQUIRE(corpus.vocab.size() == 1);
  CHECK(corpus.vocab.tokens[0] == "good");
  CHECK(corpus.vocab.frequency[0] == 2);
  REQUIRE(corpus.reviews.size() == 1);
  REQUIRE(corpus.reviews[0].sentences.size() == 1);
  CHECK(corpus.reviews[0].sentences[0] == std::vector<std::uint32_t>{0, 0});
}

TEST_CASE("build_corpus: min_term_count above every frequency is fatal") {
  TokenizerConfig cfg;
  cfg.stopwords.clear();
  CHECK_THROWS_AS(build_corpus({rr("u", "i", 4.0, {}, "good stuff")}, cfg, 99), ConfigError);
}

TEST_CASE("build_corpus: vocabulary equals the frequency-count oracle") {
  TokenizerConfig cfg;
  cfg.stopwords.clear();
  std::vector<RawReview> batch;
  const char* texts[10] = {"alpha beta gamma", "beta gamma",        "gamma delta. alpha",
                           "epsilon zeta",     "zeta zeta epsilon", "alpha beta",
                           "eta theta",        "theta iota",        "kappa. kappa",
                           "iota theta"};
  for (int n = 0; n < 10; ++n)
    batch.push_back(rr("u" + std::to_string(n), "i" + std::to_string(n), 3.0, {}, texts[n]));
  auto corpus = build_corpus(batch, cfg, 2);

  std::map<std::string, int> freq;
  for (const auto& r : batch) {
    for (const auto& sent : tokenize_and_segment(r.text, cfg))
      for (const auto& t : sent) ++freq[t];
  }
  std::set<std::string> expected;
  for (const auto& [t, f] : freq)
    if (f >= 2) expected.insert(t);
  std::set<std::string> got(corpus.vocab.tokens.begin(), corpus.vocab.tokens.end());
  CHECK(got == expected);
  for (std::uint32_t w = 0; w < corpus.vocab.size(); ++w)
    CHECK(corpus.vocab.frequency[w] == static_cast<std::uint64_t>(freq[corpus.vocab.tokens[w]]));
}

TEST_CASE("build_corpus: vocabulary bijection") {
  TokenizerConfig cfg;
  cfg.stopwords.clear();
  std::vector<RawReview> batch;
  for (int n = 0; n < 10; ++n)
    batch.push_back(rr("u", "i", 3.0, {},
                       "one two three four five six seven eight nine ten word" +
                           std::to_string(n)));
  auto corpus = build_corpus(batch, cfg, 1);
  for (std::uint32_t w = 0; w < corpus.vocab.size(); ++w) {
    auto id = corpus.vocab.id_of(corpus.vocab.tokens[w]);
    REQUIRE(id.has_value());
    CHECK(*id == w);
  }
}

namespace {

ProcessedCorpus ratings_only_corpus(const std::vector<std::pair<int, int>>& pairs) {
  std::vector<RawReview> batch;
  for (auto [u, i] : pairs)
    batch.push_back(rr("u" + std::to_string(u), "i" + std::to_string(i), 3.0, {}, "filler text"));
  TokenizerConfig cfg;
  cfg.stopwords.clear();
  return build_corpus(batch, cfg, 1);
}

}  // namespace

TEST_CASE("split_per_user: 5 reviews give 3/1/1") {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < 5; ++i) pairs.emplace_back(0, i);
  auto corpus = ratings_only_corpus(pairs);
  auto split = split_per_user(corpus, 0.8, 0.1, 7);
  CHECK(split.train.size() == 3);
  CHECK(split.valid.size() == 1);
  CHECK(split.test.size() == 1);
  CHECK(split.train_count_per_user[0] == 3);
}

TEST_CASE("split_per_user: 10 reviews give 8/1/1") {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < 10; ++i) pairs.emplace_back(0, i);
  auto corpus = ratings_only_corpus(pairs);
  auto split = split_per_user(corpus, 0.8, 0.1, 7);
  CHECK(split.train.size() == 8);
  CHECK(split.valid.size() == 1);
  CHECK(split.test.size() == 1);
}

TEST_CASE("split_per_user: deterministic for a fixed seed, partitions per user") {
  Rng rng(5);
  std::vector<std::pair<int, int>> pairs;
  for (int u = 0; u < 8; ++u) {
    const int n = 5 + static_cast<int>(rng.uniform_int(9));
    for (int i = 0; i < n; ++i) pairs.emplace_back(u, 100 * u + i);
  }
  auto corpus = ratings_only_corpus(pairs);
  auto s1 = split_per_user(corpus, 0.8, 0.1, 99);
  auto s2 = split_per_user(corpus, 0.8, 0.1, 99);
  CHECK(s1.train == s2.train);
  CHECK(s1.valid == s2.valid);
  CHECK(s1.test == s2.test);

  // per-user counts partition with minimums
  std::map<std::uint32_t, std::array<int, 3>> counts;
  for (auto i : s1.train) counts[corpus.reviews[i].user_idx][0]++;
  for (auto i : s1.valid) counts[corpus.reviews[i].user_idx][1]++;
  for (auto i : s1.test) counts[corpus.reviews[i].user_idx][2]++;
  std::map<std::uint32_t, int> totals;
  for (const auto& r : corpus.reviews) totals[r.user_idx]++;
  for (auto& [u, c] : counts) {
    CHECK(c[0] >= 3);
    CHECK(c[1] >= 1);
    CHECK(c[2] >= 1);
    CHECK(c[0] + c[1] + c[2] == totals[u]);
  }
  // disjoint and complete
  std::set<std::uint32_t> all;
  for (auto part : {&s1.train, &s1.valid, &s1.test})
    for (auto i : *part) CHECK(all.insert(i).second);
  CHECK(all.size() == corpus.reviews.size());
}

TEST_CASE("split_per_user: user below 5 reviews is fatal") {
  auto corpus = ratings_only_corpus({{0, 0}, {0, 1}, {0, 2}, {0, 3}});
  CHECK_THROWS_AS(split_per_user(corpus, 0.8, 0.1, 1), DataError);
}

TEST_CASE("split_global: 10 reviews cut 8/1/1 before orphan removal") {
  std::vector<std::pair<int, int>> pairs;
  for (int n = 0; n < 10; ++n) pairs.emplace_back(n, n);
  auto corpus = ratings_only_corpus(pairs);
  auto split = split_global(corpus, 0.8, 0.1, 3);
  CHECK(split.train.size() == 8);
  CHECK(split.train.size() + split.valid.size() + split.test.size() <= 10);
}

TEST_CASE("split_global: user with no training rating is removed from valid/test") {
  // single-review users: whoever lands outside train must be dropped
  std::vector<std::pair<int, int>> pairs;
  for (int n = 0; n < 20; ++n) pairs.emplace_back(n, n % 7);
  auto corpus = ratings_only_corpus(pairs);
  auto split = split_global(corpus, 0.8, 0.1, 12);
  for (auto part : {&split.valid, &split.test})
    for (auto i : *part) CHECK(split.train_count_per_user[corpus.reviews[i].user_idx] > 0);
  // with one review per user, valid and test must be empty
  CHECK(split.valid.empty());
  CHECK(split.test.empty());
}

TEST_CASE("split_global: deterministic") {
  std::vector<std::pair<int, int>> pairs;
  for (int u = 0; u < 10; ++u)
    for (int i = 0; i < 6; ++i) pairs.emplace_back(u, i);
  auto corpus = ratings_only_corpus(pairs);
  auto s1 = split_global(corpus, 0.8, 0.1, 4);
  auto s2 = split_global(corpus, 0.8, 0.1, 4);
  CHECK(s1.train == s2.train);
  CHECK(s1.valid == s2.valid);
  CHECK(s1.test == s2.test);
}
