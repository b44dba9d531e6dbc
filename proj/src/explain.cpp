#include "alfm/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "alfm/error.hpp"

namespace alfm {

std::vector<double> aspect_word_distribution(const AtmPosterior& posterior, Subject kind,
                                             std::uint32_t subject, int a) {
  auto weights = (kind == Subject::User) ? posterior.theta_at(subject, a)
                                         : posterior.psi_at(subject, a);
  std::vector<double> dist(posterior.vocab_size, 0.0);
  for (int k = 0; k < posterior.topics; ++k) {
    const double wk = weights[k];
    auto phi = posterior.phi_at(k);
    for (std::uint32_t w = 0; w < posterior.vocab_size; ++w) dist[w] += wk * phi[w];
  }
  return dist;
}

namespace {

std::vector<RankedWord> ranked(const std::vector<double>& dist) {
  std::vector<RankedWord> r(dist.size());
  for (std::uint32_t w = 0; w < dist.size(); ++w) r[w] = {w, dist[w]};
  std::sort(r.begin(), r.end(), [](const RankedWord& a, const RankedWord& b) {
    if (a.probability != b.probability) return a.probability > b.probability;
    return a.token < b.token;
  });
  return r;
}

}  // namespace

AspectWordReport top_words(const AtmPosterior& posterior, Subject kind, std::uint32_t subject,
                           int n, int background_threshold) {
  if (n < 1) throw ContractError("top_words: n must be >= 1");
  AspectWordReport report;
  report.kind = kind;
  report.subject = subject;

  std::vector<std::vector<RankedWord>> rankings(posterior.aspects);
  std::unordered_map<std::uint32_t, int> membership;
  for (int a = 0; a < posterior.aspects; ++a) {
    rankings[a] = ranked(aspect_word_distribution(posterior, kind, subject, a));
    const std::size_t top = std::min<std::size_t>(n, rankings[a].size());
    for (std::size_t j = 0; j < top; ++j) ++membership[rankings[a][j].token];
  }
  std::unordered_set<std::uint32_t> background;
  for (const auto& [tok, count] : membership)
    if (count > background_threshold) background.insert(tok);
  report.background_tokens.assign(background.begin(), background.end());
  std::sort(report.background_tokens.begin(), report.background_tokens.end());

  report.per_aspect.resize(posterior.aspects);
  for (int a = 0; a < posterior.aspects; ++a) {
    auto& list = report.per_aspect[a];
    for (const auto& rw : rankings[a]) {
      if (background.count(rw.token)) continue;
      list.push_back(rw);
      if (list.size() == static_cast<std::size_t>(n)) break;
    }
  }
  return report;
}

PairExplanation explain_pair(const AlfmModel& model, const AtmPosterior& posterior,
                             std::uint32_t u, std::uint32_t i) {
  PairExplanation e;
  e.importance = aspect_importance(posterior, u, i);
  e.match = aspect_match(posterior, u, i);
  e.factor_term.resize(model.aspects);
  e.polarity.resize(model.aspects);
  for (int a = 0; a < model.aspects; ++a) {
    const double ft = aspect_factor_term(model, u, i, a);
    e.factor_term[a] = ft;
    e.polarity[a] = (std::abs(ft) < 1e-12) ? 0 : (ft > 0.0 ? 1 : -1);
  }
  e.predicted = predict(model, e.importance, e.match, u, i);
  return e;
}

namespace {

std::string label_for(std::span<const std::string> labels, int a) {
  if (a < static_cast<int>(labels.size()) && !labels[a].empty()) return labels[a];
  return "aspect " + std::to_string(a);
}

}  // namespace

std::string aspect_words_to_text(const AspectWordReport& report, const Vocabulary& vocab,
                                 std::span<const std::string> aspect_labels) {
  std::ostringstream os;
  std::size_t rows = 0;
  for (const auto& list : report.per_aspect) rows = std::max(rows, list.size());
  for (std::size_t a = 0; a < report.per_aspect.size(); ++a) {
    char cell[40];
    std::snprintf(cell, sizeof cell, "%-18s",
                  label_for(aspect_labels, static_cast<int>(a)).c_str());
    os << cell;
  }
  os << "\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (const auto& list : report.per_aspect) {
      const std::string tok = r < list.size() ? vocab.tokens[list[r].token] : "";
      char cell[40];
      std::snprintf(cell, sizeof cell, "%-18s", tok.c_str());
      os << cell;
    }
    os << "\n";
  }
  return os.str();
}

std::string explanation_to_text(const PairExplanation& e,
                                std::span<const std::string> aspect_labels) {
  std::ostringstream os;
  os << "            ";
  for (std::size_t a = 0; a < e.importance.size(); ++a) {
    char cell[40];
    std::snprintf(cell, sizeof cell, "%-14s", label_for(aspect_labels, static_cast<int>(a)).c_str());
    os << cell;
  }
  os << "\nimportance  ";
  char cell[40];
  for (double v : e.importance) {
    std::snprintf(cell, sizeof cell, "%-14.3f", v);
    os << cell;
  }
  os << "\nmatching    ";
  for (double v : e.match) {
    std::snprintf(cell, sizeof cell, "%-14.3f", v);
    os << cell;
  }
  os << "\npolarity    ";
  for (int p : e.polarity) {
    std::snprintf(cell, sizeof cell, "%-14s", p > 0 ? "+" : (p < 0 ? "-" : "0"));
    os << cell;
  }
  os << "\npredicted   " << e.predicted;
  if (e.actual) os << "\nactual      " << *e.actual;
  os << "\n";
  return os.str();
}

std::vector<std::string> load_aspect_labels(const std::string& path, int aspects) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open aspect label file: " + path);
  std::vector<std::string> labels(aspects);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    const int a = std::stoi(line.substr(0, tab));
    if (a >= 0 && a < aspects) labels[a] = line.substr(tab + 1);
  }
  return labels;
}

}  // namespace alfm
