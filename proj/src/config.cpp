#include "alfm/config.hpp"

#include <fstream>
#include <sstream>

#include "alfm/error.hpp"

namespace alfm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("not a boolean: " + v);
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(std::stoi(part));
  }
  if (out.empty()) throw ConfigError("empty list: " + v);
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must be section.key=value: " + assignment);
  const std::string key = trim(assignment.substr(0, eq));
  const std::string v = trim(assignment.substr(eq + 1));
  try {
    if (key == "input.format") input_format = v;
    else if (key == "input.user_key") user_key = v;
    else if (key == "input.item_key") item_key = v;
    else if (key == "input.rating_key") rating_key = v;
    else if (key == "input.text_key") text_key = v;
    else if (key == "input.time_key") time_key = v;
    else if (key == "corpus.min_term_count") min_term_count = std::stoull(v);
    else if (key == "corpus.min_token_len") min_token_len = std::stoull(v);
    else if (key == "corpus.stopword_file") stopword_file = v;
    else if (key == "corpus.k_core") k_core = std::stoi(v);
    else if (key == "split.mode") split_mode = v;
    else if (key == "split.train_ratio") train_ratio = std::stod(v);
    else if (key == "split.valid_ratio") valid_ratio = std::stod(v);
    else if (key == "split.seed") split_seed = std::stoull(v);
    else if (key == "atm.topics") atm.topics = std::stoi(v);
    else if (key == "atm.aspects") atm.aspects = std::stoi(v);
    else if (key == "atm.eta0") atm.eta0 = std::stod(v);
    else if (key == "atm.eta1") atm.eta1 = std::stod(v);
    else if (key == "atm.alpha_user") atm.alpha_user = (v == "auto") ? -1.0 : std::stod(v);
    else if (key == "atm.alpha_item") atm.alpha_item = (v == "auto") ? -1.0 : std::stod(v);
    else if (key == "atm.gamma_user") atm.gamma_user = std::stod(v);
    else if (key == "atm.gamma_item") atm.gamma_item = std::stod(v);
    else if (key == "atm.beta") atm.beta = std::stod(v);
    else if (key == "atm.sweeps") atm.sweeps = std::stoi(v);
    else if (key == "atm.burn_in") atm.burn_in = std::stoi(v);
    else if (key == "atm.average_samples") atm.average_samples = parse_bool(v);
    else if (key == "atm.sample_thinning") atm.sample_thinning = std::stoi(v);
    else if (key == "atm.seed") atm.seed = std::stoull(v);
    else if (key == "alfm.factors") alfm.factors = std::stoi(v);
    else if (key == "alfm.reg_user") alfm.reg_user = std::stod(v);
    else if (key == "alfm.reg_item") alfm.reg_item = std::stod(v);
    else if (key == "alfm.reg_aspect_weight") alfm.reg_aspect_weight = std::stod(v);
    else if (key == "alfm.reg_bias") alfm.reg_bias = std::stod(v);
    else if (key == "alfm.l1_epsilon") alfm.l1_epsilon = std::stod(v);
    else if (key == "alfm.learn_rate") alfm.learn_rate = std::stod(v);
    else if (key == "alfm.lr_decay") alfm.lr_decay = std::stod(v);
    else if (key == "alfm.max_epochs") alfm.max_epochs = std::stoi(v);
    else if (key == "alfm.patience") alfm.patience = std::stoi(v);
    else if (key == "alfm.clamp_predictions") alfm.clamp_predictions = parse_bool(v);
    else if (key == "alfm.train_aspect_weights") alfm.train_aspect_weights = parse_bool(v);
    else if (key == "alfm.nonnegative_init") alfm.nonnegative_init = parse_bool(v);
    else if (key == "alfm.seed") alfm.seed = std::stoull(v);
    else if (key == "sweep.factor_values") sweep_factors = parse_int_list(v);
    else if (key == "sweep.topic_values") sweep_topics = parse_int_list(v);
    else if (key == "explain.top_words") top_words_n = std::stoi(v);
    else if (key == "explain.background_threshold") background_threshold = std::stoi(v);
    else if (key == "explain.label_file") label_file = v;
    else throw ConfigError("unknown config key: " + key);
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad value for " + key + ": " + v);
  } catch (const std::out_of_range&) {
    throw ConfigError("value out of range for " + key + ": " + v);
  }
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  RunConfig cfg;
  std::string line, section;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed config line: " + line);
    const std::string key = trim(line.substr(0, eq));
    cfg.apply_override(section.empty() ? key + "=" + trim(line.substr(eq + 1))
                                       : section + "." + key + "=" + trim(line.substr(eq + 1)));
  }
  return cfg;
}

void RunConfig::apply_seed(std::uint64_t seed) {
  split_seed = seed;
  atm.seed = seed;
  alfm.seed = seed;
}

std::string RunConfig::resolved_ini() const {
  std::ostringstream os;
  os << "[input]\n";
  os << "format = " << input_format << "\n";
  const FieldMap fm = field_map();
  os << "user_key = " << fm.user_key << "\n";
  os << "item_key = " << fm.item_key << "\n";
  os << "rating_key = " << fm.rating_key << "\n";
  os << "text_key = " << fm.text_key << "\n";
  os << "time_key = " << fm.time_key << "\n";
  os << "\n[corpus]\n";
  os << "min_term_count = " << min_term_count << "\n";
  os << "min_token_len = " << min_token_len << "\n";
  os << "stopword_file = " << stopword_file << "\n";
  os << "k_core = " << k_core << "\n";
  os << "\n[split]\n";
  os << "mode = " << split_mode << "\n";
  os << "train_ratio = " << fmt(train_ratio) << "\n";
  os << "valid_ratio = " << fmt(valid_ratio) << "\n";
  os << "seed = " << split_seed << "\n";
  const AtmHyperparams a = resolved_atm();
  os << "\n[atm]\n";
  os << "topics = " << a.topics << "\n";
  os << "aspects = " << a.aspects << "\n";
  os << "eta0 = " << fmt(a.eta0) << "\n";
  os << "eta1 = " << fmt(a.eta1) << "\n";
  os << "alpha_user = " << fmt(a.alpha_user) << "\n";
  os << "alpha_item = " << fmt(a.alpha_item) << "\n";
  os << "gamma_user = " << fmt(a.gamma_user) << "\n";
  os << "gamma_item = " << fmt(a.gamma_item) << "\n";
  os << "beta = " << fmt(a.beta) << "\n";
  os << "sweeps = " << a.sweeps << "\n";
  os << "burn_in = " << a.burn_in << "\n";
  os << "average_samples = " << (a.average_samples ? 1 : 0) << "\n";
  os << "sample_thinning = " << a.sample_thinning << "\n";
  os << "seed = " << a.seed << "\n";
  os << "\n[alfm]\n";
  os << "factors = " << alfm.factors << "\n";
  os << "reg_user = " << fmt(alfm.reg_user) << "\n";
  os << "reg_item = " << fmt(alfm.reg_item) << "\n";
  os << "reg_aspect_weight = " << fmt(alfm.reg_aspect_weight) << "\n";
  os << "reg_bias = " << fmt(alfm.reg_bias) << "\n";
  os << "l1_epsilon = " << fmt(alfm.l1_epsilon) << "\n";
  os << "learn_rate = " << fmt(alfm.learn_rate) << "\n";
  os << "lr_decay = " << fmt(alfm.lr_decay) << "\n";
  os << "max_epochs = " << alfm.max_epochs << "\n";
  os << "patience = " << alfm.patience << "\n";
  os << "clamp_predictions = " << (alfm.clamp_predictions ? 1 : 0) << "\n";
  os << "train_aspect_weights = " << (alfm.train_aspect_weights ? 1 : 0) << "\n";
  os << "nonnegative_init = " << (alfm.nonnegative_init ? 1 : 0) << "\n";
  os << "seed = " << alfm.seed << "\n";
  os << "\n[sweep]\n";
  os << "factor_values = " << join_ints(sweep_factors) << "\n";
  os << "topic_values = " << join_ints(sweep_topics) << "\n";
  os << "\n[explain]\n";
  os << "top_words = " << top_words_n << "\n";
  os << "background_threshold = " << background_threshold << "\n";
  os << "label_file = " << label_file << "\n";
  return os.str();
}

AtmHyperparams RunConfig::resolved_atm() const {
  AtmHyperparams h = atm;
  if (h.alpha_user < 0.0) h.alpha_user = 50.0 / h.topics;
  if (h.alpha_item < 0.0) h.alpha_item = 50.0 / h.topics;
  return h;
}

TokenizerConfig RunConfig::tokenizer_config() const {
  TokenizerConfig t;
  t.min_token_len = static_cast<std::size_t>(min_token_len);
  t.stopwords = stopword_file.empty() ? default_stopwords() : load_stopwords(stopword_file);
  return t;
}

FieldMap RunConfig::field_map() const {
  FieldMap f = FieldMap::for_format(format());
  if (!user_key.empty()) f.user_key = user_key;
  if (!item_key.empty()) f.item_key = item_key;
  if (!rating_key.empty()) f.rating_key = rating_key;
  if (!text_key.empty()) f.text_key = text_key;
  if (!time_key.empty()) f.time_key = time_key;
  return f;
}

ReviewFormat RunConfig::format() const { return review_format_from_name(input_format); }

SplitMode RunConfig::resolved_split_mode() const {
  if (split_mode == "per_user") return SplitMode::PerUser;
  if (split_mode == "global") return SplitMode::Global;
  throw ConfigError("unknown split mode: " + split_mode);
}

}  // namespace alfm
