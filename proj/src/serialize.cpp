#include "alfm/serialize.hpp"

#include <cstring>
#include <fstream>

#include "alfm/error.hpp"

namespace alfm {

namespace fs = std::filesystem;

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

struct ByteSink {
  std::vector<std::uint8_t> bytes;
  void u16(std::uint16_t v) {
    bytes.push_back(v & 0xff);
    bytes.push_back((v >> 8) & 0xff);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back((v >> (8 * i)) & 0xff);
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back((v >> (8 * i)) & 0xff);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    bytes.insert(bytes.end(), s.begin(), s.end());
    bytes.push_back(0);
  }
};

struct ByteSource {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
  bool exhausted() const { return pos >= bytes.size(); }
  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw DataError("binary file truncated");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = bytes[pos] | (std::uint16_t(bytes[pos + 1]) << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open: " + path.string());
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw DataError("read failed: " + path.string());
  return bytes;
}

void encode_reviews(ByteSink& sink, const ProcessedCorpus& corpus) {
  for (const auto& r : corpus.reviews) {
    sink.u32(r.user_idx);
    sink.u32(r.item_idx);
    sink.f64(r.rating);
    sink.u16(static_cast<std::uint16_t>(r.sentences.size()));
    for (const auto& sent : r.sentences) {
      sink.u16(static_cast<std::uint16_t>(sent.size()));
      for (std::uint32_t w : sent) sink.u32(w);
    }
  }
}

std::string tsv_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '\t' || c == '\n' || c == '\r') out.push_back(' ');
    else out.push_back(c);
  }
  return out;
}

}  // namespace

std::uint64_t corpus_hash(const ProcessedCorpus& corpus) {
  ByteSink sink;
  encode_reviews(sink, corpus);
  for (std::uint32_t w = 0; w < corpus.vocab.size(); ++w) {
    sink.str(corpus.vocab.tokens[w]);
    sink.u64(corpus.vocab.frequency[w]);
  }
  for (const auto& id : corpus.user_ids) sink.str(id);
  for (const auto& id : corpus.item_ids) sink.str(id);
  return fnv1a(sink.bytes);
}

std::uint64_t split_hash(const CorpusSplit& split) {
  ByteSink sink;
  sink.u32(split.mode == SplitMode::PerUser ? 0 : 1);
  sink.u64(split.seed);
  for (auto part : {&split.train, &split.valid, &split.test}) {
    sink.u64(part->size());
    for (std::uint32_t i : *part) sink.u32(i);
  }
  return fnv1a(sink.bytes);
}

std::uint64_t posterior_hash(const AtmPosterior& p) {
  ByteSink sink;
  sink.u32(static_cast<std::uint32_t>(p.topics));
  sink.u32(static_cast<std::uint32_t>(p.aspects));
  sink.u32(p.n_users);
  sink.u32(p.n_items);
  sink.u32(p.vocab_size);
  for (const auto* v : {&p.theta, &p.psi, &p.lambda_user, &p.lambda_item, &p.pi, &p.phi})
    for (double x : *v) sink.f64(x);
  return fnv1a(sink.bytes);
}

void write_array(const fs::path& path, const char magic[4], std::span<const std::uint32_t> dims,
                 std::span<const double> data) {
  ByteSink sink;
  sink.bytes.insert(sink.bytes.end(), magic, magic + 4);
  sink.u32(static_cast<std::uint32_t>(dims.size()));
  std::size_t expect = 1;
  for (std::uint32_t d : dims) {
    sink.u32(d);
    expect *= d;
  }
  if (expect != data.size()) throw ContractError("write_array: dims do not match payload");
  for (double x : data) sink.f64(x);
  write_file(path, sink.bytes);
}

std::vector<double> read_array(const fs::path& path, const char magic[4],
                               std::vector<std::uint32_t>& dims) {
  auto bytes = read_file(path);
  ByteSource src{bytes};
  src.need(4);
  if (std::memcmp(bytes.data(), magic, 4) != 0)
    throw DataError("bad magic in " + path.string());
  src.pos = 4;
  const std::uint32_t ndims = src.u32();
  dims.resize(ndims);
  std::size_t count = 1;
  for (auto& d : dims) {
    d = src.u32();
    count *= d;
  }
  std::vector<double> data(count);
  for (auto& x : data) x = src.f64();
  return data;
}

void write_meta(const fs::path& path, const MetaMap& meta) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  for (const auto& [k, v] : meta) out << k << "=" << v << "\n";
}

MetaMap read_meta(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  MetaMap meta;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

void save_corpus(const fs::path& dir, const ProcessedCorpus& corpus) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "vocab.tsv");
    if (!out) throw DataError("cannot write vocab.tsv under " + dir.string());
    for (std::uint32_t w = 0; w < corpus.vocab.size(); ++w)
      out << w << "\t" << tsv_escape(corpus.vocab.tokens[w]) << "\t" << corpus.vocab.frequency[w]
          << "\n";
  }
  {
    std::ofstream out(dir / "users.tsv");
    for (std::uint32_t u = 0; u < corpus.n_users(); ++u)
      out << u << "\t" << tsv_escape(corpus.user_ids[u]) << "\n";
  }
  {
    std::ofstream out(dir / "items.tsv");
    for (std::uint32_t i = 0; i < corpus.n_items(); ++i)
      out << i << "\t" << tsv_escape(corpus.item_ids[i]) << "\n";
  }
  ByteSink sink;
  encode_reviews(sink, corpus);
  write_file(dir / "reviews.bin", sink.bytes);
}

namespace {

void load_id_tsv(const fs::path& path, std::vector<std::string>& ids,
                 std::unordered_map<std::string, std::uint32_t>& index) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("malformed line in " + path.string());
    std::string id = line.substr(tab + 1);
    index.emplace(id, static_cast<std::uint32_t>(ids.size()));
    ids.push_back(std::move(id));
  }
}

}  // namespace

ProcessedCorpus load_corpus(const fs::path& dir) {
  ProcessedCorpus corpus;
  {
    std::ifstream in(dir / "vocab.tsv");
    if (!in) throw DataError("cannot open: " + (dir / "vocab.tsv").string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto t1 = line.find('\t');
      const auto t2 = line.rfind('\t');
      if (t1 == std::string::npos || t2 == t1) throw DataError("malformed vocab.tsv line");
      std::string tok = line.substr(t1 + 1, t2 - t1 - 1);
      corpus.vocab.ids.emplace(tok, corpus.vocab.size());
      corpus.vocab.tokens.push_back(std::move(tok));
      corpus.vocab.frequency.push_back(std::stoull(line.substr(t2 + 1)));
    }
  }
  load_id_tsv(dir / "users.tsv", corpus.user_ids, corpus.user_index);
  load_id_tsv(dir / "items.tsv", corpus.item_ids, corpus.item_index);

  auto bytes = read_file(dir / "reviews.bin");
  ByteSource src{bytes};
  while (!src.exhausted()) {
    ProcessedReview r;
    r.user_idx = src.u32();
    r.item_idx = src.u32();
    r.rating = src.f64();
    const std::uint16_t n_sent = src.u16();
    r.sentences.resize(n_sent);
    for (auto& sent : r.sentences) {
      const std::uint16_t len = src.u16();
      sent.resize(len);
      for (auto& w : sent) {
        w = src.u32();
        if (w >= corpus.vocab.size()) throw DataError("token id out of vocabulary range");
      }
    }
    if (r.user_idx >= corpus.n_users() || r.item_idx >= corpus.n_items())
      throw DataError("review index out of range");
    corpus.reviews.push_back(std::move(r));
  }
  return corpus;
}

namespace {

void save_ids(const fs::path& path, std::span<const std::uint32_t> ids) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  for (std::uint32_t i : ids) out << i << "\n";
}

std::vector<std::uint32_t> load_ids(const fs::path& path, std::size_t limit) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  std::vector<std::uint32_t> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const unsigned long v = std::stoul(line);
    if (v >= limit) throw DataError("review index out of range in " + path.string());
    ids.push_back(static_cast<std::uint32_t>(v));
  }
  return ids;
}

}  // namespace

void save_split(const fs::path& dir, const CorpusSplit& split) {
  fs::create_directories(dir);
  save_ids(dir / "train.ids", split.train);
  save_ids(dir / "valid.ids", split.valid);
  save_ids(dir / "test.ids", split.test);
  write_meta(dir / "split.meta",
             {{"mode", split.mode == SplitMode::PerUser ? "per_user" : "global"},
              {"seed", std::to_string(split.seed)}});
}

CorpusSplit load_split(const fs::path& dir, const ProcessedCorpus& corpus) {
  CorpusSplit split;
  const auto meta = read_meta(dir / "split.meta");
  split.mode = (meta.at("mode") == "global") ? SplitMode::Global : SplitMode::PerUser;
  split.seed = std::stoull(meta.at("seed"));
  split.train = load_ids(dir / "train.ids", corpus.reviews.size());
  split.valid = load_ids(dir / "valid.ids", corpus.reviews.size());
  split.test = load_ids(dir / "test.ids", corpus.reviews.size());
  split.train_count_per_user.assign(corpus.n_users(), 0);
  for (std::uint32_t i : split.train) ++split.train_count_per_user[corpus.reviews[i].user_idx];
  return split;
}

namespace {

constexpr char kAtmMagic[4] = {'A', 'T', 'M', '1'};
constexpr char kAlfmMagic[4] = {'A', 'L', 'F', 'M'};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_posterior(const fs::path& dir, const AtmPosterior& p, const AtmHyperparams& h,
                    std::uint64_t corpus_hash_value) {
  fs::create_directories(dir);
  const auto M = p.n_users, N = p.n_items, V = p.vocab_size;
  const auto A = static_cast<std::uint32_t>(p.aspects);
  const auto K = static_cast<std::uint32_t>(p.topics);
  write_array(dir / "theta.bin", kAtmMagic, std::vector<std::uint32_t>{M, A, K}, p.theta);
  write_array(dir / "psi.bin", kAtmMagic, std::vector<std::uint32_t>{N, A, K}, p.psi);
  write_array(dir / "lambda_user.bin", kAtmMagic, std::vector<std::uint32_t>{M, A}, p.lambda_user);
  write_array(dir / "lambda_item.bin", kAtmMagic, std::vector<std::uint32_t>{N, A}, p.lambda_item);
  write_array(dir / "pi.bin", kAtmMagic, std::vector<std::uint32_t>{M}, p.pi);
  write_array(dir / "phi.bin", kAtmMagic, std::vector<std::uint32_t>{K, V}, p.phi);
  write_meta(dir / "atm.meta",
             {{"topics", std::to_string(p.topics)},
              {"aspects", std::to_string(p.aspects)},
              {"n_users", std::to_string(M)},
              {"n_items", std::to_string(N)},
              {"vocab_size", std::to_string(V)},
              {"eta0", fmt_double(h.eta0)},
              {"eta1", fmt_double(h.eta1)},
              {"alpha_user", fmt_double(h.alpha_user)},
              {"alpha_item", fmt_double(h.alpha_item)},
              {"gamma_user", fmt_double(h.gamma_user)},
              {"gamma_item", fmt_double(h.gamma_item)},
              {"beta", fmt_double(h.beta)},
              {"sweeps", std::to_string(h.sweeps)},
              {"burn_in", std::to_string(h.burn_in)},
              {"average_samples", h.average_samples ? "1" : "0"},
              {"sample_thinning", std::to_string(h.sample_thinning)},
              {"seed", std::to_string(h.seed)},
              {"corpus_hash", std::to_string(corpus_hash_value)}});
}

LoadedPosterior load_posterior(const fs::path& dir) {
  LoadedPosterior out;
  const auto meta = read_meta(dir / "atm.meta");
  AtmPosterior& p = out.posterior;
  p.topics = std::stoi(meta.at("topics"));
  p.aspects = std::stoi(meta.at("aspects"));
  p.n_users = std::stoul(meta.at("n_users"));
  p.n_items = std::stoul(meta.at("n_items"));
  p.vocab_size = std::stoul(meta.at("vocab_size"));
  out.corpus_hash = std::stoull(meta.at("corpus_hash"));
  AtmHyperparams& h = out.hyper;
  h.topics = p.topics;
  h.aspects = p.aspects;
  h.eta0 = std::stod(meta.at("eta0"));
  h.eta1 = std::stod(meta.at("eta1"));
  h.alpha_user = std::stod(meta.at("alpha_user"));
  h.alpha_item = std::stod(meta.at("alpha_item"));
  h.gamma_user = std::stod(meta.at("gamma_user"));
  h.gamma_item = std::stod(meta.at("gamma_item"));
  h.beta = std::stod(meta.at("beta"));
  h.sweeps = std::stoi(meta.at("sweeps"));
  h.burn_in = std::stoi(meta.at("burn_in"));
  h.average_samples = meta.at("average_samples") == "1";
  h.sample_thinning = std::stoi(meta.at("sample_thinning"));
  h.seed = std::stoull(meta.at("seed"));

  std::vector<std::uint32_t> dims;
  p.theta = read_array(dir / "theta.bin", kAtmMagic, dims);
  p.psi = read_array(dir / "psi.bin", kAtmMagic, dims);
  p.lambda_user = read_array(dir / "lambda_user.bin", kAtmMagic, dims);
  p.lambda_item = read_array(dir / "lambda_item.bin", kAtmMagic, dims);
  p.pi = read_array(dir / "pi.bin", kAtmMagic, dims);
  p.phi = read_array(dir / "phi.bin", kAtmMagic, dims);
  return out;
}

void save_model(const fs::path& dir, const AlfmModel& m, std::uint64_t posterior_hash_value) {
  fs::create_directories(dir);
  const auto M = m.n_users, N = m.n_items;
  const auto F = static_cast<std::uint32_t>(m.factors);
  const auto A = static_cast<std::uint32_t>(m.aspects);
  write_array(dir / "user_factors.bin", kAlfmMagic, std::vector<std::uint32_t>{M, F},
              m.user_factors);
  write_array(dir / "item_factors.bin", kAlfmMagic, std::vector<std::uint32_t>{N, F},
              m.item_factors);
  write_array(dir / "aspect_weights.bin", kAlfmMagic, std::vector<std::uint32_t>{A, F},
              m.aspect_weights);
  write_array(dir / "user_bias.bin", kAlfmMagic, std::vector<std::uint32_t>{M}, m.user_bias);
  write_array(dir / "item_bias.bin", kAlfmMagic, std::vector<std::uint32_t>{N}, m.item_bias);
  write_array(dir / "global_bias.bin", kAlfmMagic, std::vector<std::uint32_t>{1},
              std::vector<double>{m.global_bias});
  const auto& h = m.hyper;
  write_meta(dir / "alfm.meta",
             {{"factors", std::to_string(m.factors)},
              {"aspects", std::to_string(m.aspects)},
              {"n_users", std::to_string(M)},
              {"n_items", std::to_string(N)},
              {"reg_user", fmt_double(h.reg_user)},
              {"reg_item", fmt_double(h.reg_item)},
              {"reg_aspect_weight", fmt_double(h.reg_aspect_weight)},
              {"reg_bias", fmt_double(h.reg_bias)},
              {"l1_epsilon", fmt_double(h.l1_epsilon)},
              {"learn_rate", fmt_double(h.learn_rate)},
              {"lr_decay", fmt_double(h.lr_decay)},
              {"max_epochs", std::to_string(h.max_epochs)},
              {"patience", std::to_string(h.patience)},
              {"clamp_predictions", h.clamp_predictions ? "1" : "0"},
              {"train_aspect_weights", h.train_aspect_weights ? "1" : "0"},
              {"nonnegative_init", h.nonnegative_init ? "1" : "0"},
              {"seed", std::to_string(h.seed)},
              {"posterior_hash", std::to_string(posterior_hash_value)}});
}

LoadedModel load_model(const fs::path& dir) {
  LoadedModel out;
  const auto meta = read_meta(dir / "alfm.meta");
  AlfmModel& m = out.model;
  m.factors = std::stoi(meta.at("factors"));
  m.aspects = std::stoi(meta.at("aspects"));
  m.n_users = std::stoul(meta.at("n_users"));
  m.n_items = std::stoul(meta.at("n_items"));
  out.posterior_hash = std::stoull(meta.at("posterior_hash"));
  AlfmHyperparams& h = m.hyper;
  h.factors = m.factors;
  h.reg_user = std::stod(meta.at("reg_user"));
  h.reg_item = std::stod(meta.at("reg_item"));
  h.reg_aspect_weight = std::stod(meta.at("reg_aspect_weight"));
  h.reg_bias = std::stod(meta.at("reg_bias"));
  h.l1_epsilon = std::stod(meta.at("l1_epsilon"));
  h.learn_rate = std::stod(meta.at("learn_rate"));
  h.lr_decay = std::stod(meta.at("lr_decay"));
  h.max_epochs = std::stoi(meta.at("max_epochs"));
  h.patience = std::stoi(meta.at("patience"));
  h.clamp_predictions = meta.at("clamp_predictions") == "1";
  h.train_aspect_weights = meta.at("train_aspect_weights") == "1";
  if (meta.count("nonnegative_init")) h.nonnegative_init = meta.at("nonnegative_init") == "1";
  h.seed = std::stoull(meta.at("seed"));

  std::vector<std::uint32_t> dims;
  m.user_factors = read_array(dir / "user_factors.bin", kAlfmMagic, dims);
  m.item_factors = read_array(dir / "item_factors.bin", kAlfmMagic, dims);
  m.aspect_weights = read_array(dir / "aspect_weights.bin", kAlfmMagic, dims);
  m.user_bias = read_array(dir / "user_bias.bin", kAlfmMagic, dims);
  m.item_bias = read_array(dir / "item_bias.bin", kAlfmMagic, dims);
  const auto gb = read_array(dir / "global_bias.bin", kAlfmMagic, dims);
  m.global_bias = gb.at(0);
  return out;
}

void save_features(const fs::path& path, const FeatureTable& features,
                   std::uint64_t posterior_hash_value, std::uint64_t split_hash_value) {
  ByteSink sink;
  sink.bytes.insert(sink.bytes.end(), {'F', 'E', 'A', '1'});
  sink.u64(posterior_hash_value);
  sink.u64(split_hash_value);
  sink.u32(static_cast<std::uint32_t>(features.aspects));
  sink.u64(features.index.size());
  // rows in row order for a stable file
  std::vector<std::uint64_t> keys(features.index.size());
  for (const auto& [key, row] : features.index) keys[row] = key;
  for (std::uint32_t row = 0; row < keys.size(); ++row) {
    sink.u32(static_cast<std::uint32_t>(keys[row] >> 32));
    sink.u32(static_cast<std::uint32_t>(keys[row] & 0xffffffffu));
    const std::size_t off = static_cast<std::size_t>(row) * features.aspects;
    for (int a = 0; a < features.aspects; ++a) sink.f64(features.importance[off + a]);
    for (int a = 0; a < features.aspects; ++a) sink.f64(features.match[off + a]);
  }
  write_file(path, sink.bytes);
}

LoadedFeatures load_features(const fs::path& path) {
  auto bytes = read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "FEA1", 4) != 0)
    throw DataError("bad magic in " + path.string());
  ByteSource src{bytes, 4};
  LoadedFeatures out;
  out.posterior_hash = src.u64();
  out.split_hash = src.u64();
  out.features.aspects = static_cast<int>(src.u32());
  const std::uint64_t count = src.u64();
  for (std::uint64_t r = 0; r < count; ++r) {
    const std::uint32_t u = src.u32();
    const std::uint32_t i = src.u32();
    PairFeatures f;
    f.importance.resize(out.features.aspects);
    f.match.resize(out.features.aspects);
    for (auto& x : f.importance) x = src.f64();
    for (auto& x : f.match) x = src.f64();
    out.features.insert(u, i, f);
  }
  return out;
}

}  // namespace alfm
