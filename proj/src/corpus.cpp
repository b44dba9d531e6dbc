#include "alfm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "alfm/error.hpp"
#include "alfm/rng.hpp"
#include "json.hpp"

namespace alfm {

namespace {

using nlohmann::json;

// "YYYY-MM-DD[ HH:MM:SS]" -> epoch seconds (UTC), days-from-civil
std::optional<std::int64_t> parse_date(const std::string& s) {
  int y, mo, d, h = 0, mi = 0, se = 0;
  int n = std::sscanf(s.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &se);
  if (n < 3) return std::nullopt;
  std::int64_t yy = y - (mo <= 2 ? 1 : 0);
  std::int64_t era = (yy >= 0 ? yy : yy - 399) / 400;
  std::int64_t yoe = yy - era * 400;
  std::int64_t doy = (153 * (mo + (mo > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  std::int64_t days = era * 146097 + doe - 719468;
  return days * 86400 + h * 3600 + mi * 60 + se;
}

std::optional<std::int64_t> extract_timestamp(const json& j, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end()) return std::nullopt;
  if (it->is_number_integer()) return it->get<std::int64_t>();
  if (it->is_number_float()) return static_cast<std::int64_t>(it->get<double>());
  if (it->is_string()) return parse_date(it->get<std::string>());
  return std::nullopt;
}

bool parse_json_line(const std::string& line, const FieldMap& f, RawReview& out) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return false;
  auto u = j.find(f.user_key);
  auto i = j.find(f.item_key);
  auto r = j.find(f.rating_key);
  if (u == j.end() || i == j.end() || r == j.end()) return false;
  if (!u->is_string() || !i->is_string() || !r->is_number()) return false;
  out.user_id = u->get<std::string>();
  out.item_id = i->get<std::string>();
  out.rating = r->get<double>();
  auto t = j.find(f.text_key);
  out.text = (t != j.end() && t->is_string()) ? t->get<std::string>() : std::string();
  out.timestamp = extract_timestamp(j, f.time_key);
  return true;
}

bool parse_tsv_line(const std::string& line, RawReview& out) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  if (cols.size() < 4 || cols.size() > 5) return false;
  out.user_id = cols[0];
  out.item_id = cols[1];
  try {
    std::size_t pos = 0;
    out.rating = std::stod(cols[2], &pos);
    if (pos != cols[2].size()) return false;
  } catch (const std::exception&) {
    return false;
  }
  out.text = cols[3];
  out.timestamp.reset();
  if (cols.size() == 5 && !cols[4].empty()) {
    try {
      out.timestamp = std::stoll(cols[4]);
    } catch (const std::exception&) {
      auto t = parse_date(cols[4]);
      if (!t) return false;
      out.timestamp = t;
    }
  }
  return true;
}

bool valid_review(const RawReview& r) {
  return std::isfinite(r.rating) && r.rating >= 1.0 && r.rating <= 5.0 &&
         !r.user_id.empty() && !r.item_id.empty();
}

}  // namespace

ReviewFormat review_format_from_name(std::string_view name) {
  if (name == "amazon_json" || name == "amazon") return ReviewFormat::AmazonJson;
  if (name == "yelp_json" || name == "yelp") return ReviewFormat::YelpJson;
  if (name == "tsv") return ReviewFormat::Tsv;
  throw ConfigError("unknown review format: " + std::string(name));
}

FieldMap FieldMap::for_format(ReviewFormat format) {
  FieldMap f;
  switch (format) {
    case ReviewFormat::AmazonJson:
      f.user_key = "reviewerID";
      f.item_key = "asin";
      f.rating_key = "overall";
      f.text_key = "reviewText";
      f.time_key = "unixReviewTime";
      break;
    case ReviewFormat::YelpJson:
      f.user_key = "user_id";
      f.item_key = "business_id";
      f.rating_key = "stars";
      f.text_key = "text";
      f.time_key = "date";
      break;
    case ReviewFormat::Tsv:
      break;
  }
  return f;
}

std::vector<RawReview> parse_reviews(std::istream& in, ReviewFormat format,
                                     const FieldMap& fields, ParseStats* stats) {
  if (!in.good()) throw DataError("parse_reviews: unreadable input stream");
  std::vector<RawReview> out;
  ParseStats st;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    RawReview r;
    bool ok = (format == ReviewFormat::Tsv) ? parse_tsv_line(line, r)
                                            : parse_json_line(line, fields, r);
    if (ok && valid_review(r)) {
      out.push_back(std::move(r));
      ++st.parsed;
    } else {
      ++st.skipped;
    }
  }
  if (in.bad()) throw DataError("parse_reviews: I/O error while reading input");
  if (stats) *stats = st;
  return out;
}

std::vector<RawReview> parse_reviews(std::istream& in, ReviewFormat format, ParseStats* stats) {
  return parse_reviews(in, format, FieldMap::for_format(format), stats);
}

std::vector<RawReview> dedupe(std::vector<RawReview> reviews) {
  // (timestamp, input index) ordering; absent timestamps sort lowest
  struct Best {
    std::int64_t ts;
    std::size_t idx;
  };
  std::unordered_map<std::string, Best> best;
  best.reserve(reviews.size());
  for (std::size_t i = 0; i < reviews.size(); ++i) {
    const auto& r = reviews[i];
    std::string key = r.user_id + '\x1f' + r.item_id;
    std::int64_t ts = r.timestamp.value_or(INT64_MIN);
    auto it = best.find(key);
    if (it == best.end() || ts > it->second.ts ||
        (ts == it->second.ts && i > it->second.idx)) {
      best[key] = {ts, i};
    }
  }
  std::vector<std::size_t> keep;
  keep.reserve(best.size());
  for (const auto& [key, b] : best) keep.push_back(b.idx);
  std::sort(keep.begin(), keep.end());
  std::vector<RawReview> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(std::move(reviews[i]));
  return out;
}

std::vector<RawReview> k_core_filter(std::vector<RawReview> reviews, int k) {
  if (k < 1) throw ContractError("k_core_filter: k must be >= 1");
  std::unordered_map<std::string, int> user_deg, item_deg;
  for (const auto& r : reviews) {
    ++user_deg[r.user_id];
    ++item_deg[r.item_id];
  }
  bool changed = true;
  std::vector<char> alive(reviews.size(), 1);
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < reviews.size(); ++i) {
      if (!alive[i]) continue;
      const auto& r = reviews[i];
      if (user_deg[r.user_id] < k || item_deg[r.item_id] < k) {
        alive[i] = 0;
        --user_deg[r.user_id];
        --item_deg[r.item_id];
        changed = true;
      }
    }
  }
  std::vector<RawReview> out;
  for (std::size_t i = 0; i < reviews.size(); ++i)
    if (alive[i]) out.push_back(std::move(reviews[i]));
  return out;
}

const std::unordered_set<std::string>& default_stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",       "about",   "above",  "after",   "again",  "against", "all",
      "am",      "an",      "and",    "any",     "are",    "arent",   "as",
      "at",      "be",      "because", "been",   "before", "being",   "below",
      "between", "both",    "but",    "by",      "cant",   "cannot",  "could",
      "couldnt", "did",     "didnt",  "do",      "does",   "doesnt",  "doing",
      "dont",    "down",    "during", "each",    "few",    "for",     "from",
      "further", "had",     "hadnt",  "has",     "hasnt",  "have",    "havent",
      "having",  "he",      "hed",    "hell",    "hes",    "her",     "here",
      "heres",   "hers",    "herself", "him",    "himself", "his",    "how",
      "hows",    "i",       "id",     "ill",     "im",     "ive",     "if",
      "in",      "into",    "is",     "isnt",    "it",     "its",     "itself",
      "lets",    "me",      "more",   "most",    "mustnt", "my",      "myself",
      "no",      "nor",     "not",    "of",      "off",    "on",      "once",
      "only",    "or",      "other",  "ought",   "our",    "ours",    "ourselves",
      "out",     "over",    "own",    "same",    "shant",  "she",     "shed",
      "shell",   "shes",    "should", "shouldnt", "so",    "some",    "such",
      "than",    "that",    "thats",  "the",     "their",  "theirs",  "them",
      "themselves", "then", "there",  "theres",  "these",  "they",    "theyd",
      "theyll",  "theyre",  "theyve", "this",    "those",  "through", "to",
      "too",     "under",   "until",  "up",      "very",   "was",     "wasnt",
      "we",      "wed",     "well",   "were",    "weve",   "werent",  "what",
      "whats",   "when",    "whens",  "where",   "wheres", "which",   "while",
      "who",     "whos",    "whom",   "why",     "whys",   "with",    "wont",
      "would",   "wouldnt", "you",    "youd",    "youll",  "youre",   "youve",
      "your",    "yours",   "yourself", "yourselves", "will", "just", "can"};
  return words;
}

std::unordered_set<std::string> load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open stopword file: " + path);
  std::unordered_set<std::string> words;
  std::string w;
  while (in >> w) words.insert(w);
  return words;
}

std::vector<std::vector<std::string>> tokenize_and_segment(std::string_view text,
                                                           const TokenizerConfig& config) {
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::string> current;
  std::string token;

  auto flush_token = [&] {
    if (token.size() >= config.min_token_len && !config.stopwords.count(token))
      current.push_back(token);
    token.clear();
  };
  auto flush_sentence = [&] {
    flush_token();
    if (!current.empty()) sentences.push_back(std::move(current));
    current.clear();
  };

  for (char c : text) {
    if (c == '.' || c == '!' || c == '?' || c == '\n') {
      flush_sentence();
    } else if (std::isalpha(static_cast<unsigned char>(c))) {
      token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      flush_token();
    }
    // any other character is stripped, token continues
  }
  flush_sentence();
  return sentences;
}

ProcessedCorpus build_corpus(const std::vector<RawReview>& reviews,
                             const TokenizerConfig& tokenizer,
                             std::uint64_t min_term_count) {
  // pass 1: tokenize, count frequencies, record first-appearance order
  std::vector<std::vector<std::vector<std::string>>> tokenized(reviews.size());
  std::unordered_map<std::string, std::uint64_t> freq;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < reviews.size(); ++i) {
    tokenized[i] = tokenize_and_segment(reviews[i].text, tokenizer);
    for (const auto& sent : tokenized[i])
      for (const auto& tok : sent) {
        auto [it, inserted] = freq.try_emplace(tok, 0);
        if (inserted) order.push_back(tok);
        ++it->second;
      }
  }

  ProcessedCorpus corpus;
  for (const auto& tok : order) {
    std::uint64_t f = freq[tok];
    if (f >= min_term_count) {
      corpus.vocab.ids.emplace(tok, corpus.vocab.size());
      corpus.vocab.tokens.push_back(tok);
      corpus.vocab.frequency.push_back(f);
    }
  }
  if (corpus.vocab.size() == 0)
    throw ConfigError("build_corpus: empty vocabulary (min_term_count=" +
                      std::to_string(min_term_count) + " drops every token)");

  // pass 2: re-encode reviews, assign dense indices in first-appearance order
  corpus.reviews.reserve(reviews.size());
  for (std::size_t i = 0; i < reviews.size(); ++i) {
    const auto& r = reviews[i];
    ProcessedReview pr;
    auto [uit, unew] = corpus.user_index.try_emplace(r.user_id, corpus.n_users());
    if (unew) corpus.user_ids.push_back(r.user_id);
    pr.user_idx = uit->second;
    auto [iit, inew] = corpus.item_index.try_emplace(r.item_id, corpus.n_items());
    if (inew) corpus.item_ids.push_back(r.item_id);
    pr.item_idx = iit->second;
    pr.rating = r.rating;
    for (const auto& sent : tokenized[i]) {
      std::vector<std::uint32_t> ids;
      ids.reserve(sent.size());
      for (const auto& tok : sent) {
        auto id = corpus.vocab.id_of(tok);
        if (id) ids.push_back(*id);
      }
      if (!ids.empty()) pr.sentences.push_back(std::move(ids));
    }
    corpus.reviews.push_back(std::move(pr));
  }
  return corpus;
}

namespace {

long round_nearest(double x) { return std::lround(x); }

}  // namespace

CorpusSplit split_per_user(const ProcessedCorpus& corpus, double train_ratio,
                           double valid_ratio, std::uint64_t seed) {
  CorpusSplit split;
  split.mode = SplitMode::PerUser;
  split.seed = seed;
  split.train_count_per_user.assign(corpus.n_users(), 0);

  std::vector<std::vector<std::uint32_t>> by_user(corpus.n_users());
  for (std::uint32_t i = 0; i < corpus.reviews.size(); ++i)
    by_user[corpus.reviews[i].user_idx].push_back(i);

  Rng rng(seed);
  for (std::uint32_t u = 0; u < corpus.n_users(); ++u) {
    auto& revs = by_user[u];
    const std::size_t n = revs.size();
    if (n < 5)
      throw DataError("split_per_user: user " + corpus.user_ids[u] + " has " +
                      std::to_string(n) + " reviews (< 5); run 5-core filtering first");
    rng.shuffle(revs);
    std::size_t n_valid = std::max<long>(1, round_nearest(valid_ratio * n));
    std::size_t n_test = std::max<long>(1, round_nearest((1.0 - train_ratio - valid_ratio) * n));
    // minimums enforced in order train -> valid -> test
    while (n - n_valid - n_test < 3 && n_valid > 1) --n_valid;
    while (n - n_valid - n_test < 3 && n_test > 1) --n_test;
    std::size_t n_train = n - n_valid - n_test;
    for (std::size_t j = 0; j < n; ++j) {
      if (j < n_train)
        split.train.push_back(revs[j]);
      else if (j < n_train + n_valid)
        split.valid.push_back(revs[j]);
      else
        split.test.push_back(revs[j]);
    }
    split.train_count_per_user[u] = static_cast<std::uint32_t>(n_train);
  }
  return split;
}

CorpusSplit split_global(const ProcessedCorpus& corpus, double train_ratio,
                         double valid_ratio, std::uint64_t seed) {
  CorpusSplit split;
  split.mode = SplitMode::Global;
  split.seed = seed;
  split.train_count_per_user.assign(corpus.n_users(), 0);

  std::vector<std::uint32_t> idx(corpus.reviews.size());
  for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);

  const std::size_t n = idx.size();
  std::size_t n_train = round_nearest(train_ratio * n);
  std::size_t n_valid = round_nearest(valid_ratio * n);
  if (n_train + n_valid > n) n_valid = n - n_train;

  for (std::size_t j = 0; j < n; ++j) {
    std::uint32_t i = idx[j];
    if (j < n_train) {
      split.train.push_back(i);
      ++split.train_count_per_user[corpus.reviews[i].user_idx];
    } else if (j < n_train + n_valid) {
      split.valid.push_back(i);
    } else {
      split.test.push_back(i);
    }
  }
  // users absent from training contribute nothing at evaluation time
  auto has_training = [&](std::uint32_t i) {
    return split.train_count_per_user[corpus.reviews[i].user_idx] > 0;
  };
  std::erase_if(split.valid, [&](std::uint32_t i) { return !has_training(i); });
  std::erase_if(split.test, [&](std::uint32_t i) { return !has_training(i); });
  return split;
}

}  // namespace alfm
