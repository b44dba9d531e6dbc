// Pipeline driver: prepare -> train-atm -> train-alfm -> evaluate / sweep /
// explain / predict. Artifacts live under --workdir and carry provenance
// hashes; logs go to stderr, data to files or stdout.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "alfm/alfm.hpp"
#include "alfm/atm.hpp"
#include "alfm/config.hpp"
#include "alfm/corpus.hpp"
#include "alfm/error.hpp"
#include "alfm/eval.hpp"
#include "alfm/explain.hpp"
#include "alfm/serialize.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace alfm;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string workdir = ".";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run config file (key=value with sections)");
  cmd->add_option("--workdir", args.workdir, "artifact directory");
  cmd->add_option("--set", args.overrides, "override, e.g. --set atm.topics=10")
      ->take_all();
  cmd->add_option("--seed", args.seed, "override split/atm/alfm seeds at once");
  cmd->add_flag("--force", args.force, "skip provenance hash checks");
}

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty() ? RunConfig() : RunConfig::from_file(args.config_path);
  for (const auto& o : args.overrides) cfg.apply_override(o);
  if (args.seed) cfg.apply_seed(*args.seed);
  return cfg;
}

void write_resolved(const fs::path& dir, const std::string& name, const RunConfig& cfg) {
  fs::create_directories(dir);
  std::ofstream out(dir / name);
  out << cfg.resolved_ini();
}

void check_hash(const char* what, std::uint64_t expected, std::uint64_t actual, bool force) {
  if (expected == actual) return;
  std::cerr << "stale artifact: " << what << " hash mismatch (stored " << expected << ", actual "
            << actual << ")\n";
  if (!force) throw DataError(std::string("hash mismatch for ") + what + "; rerun upstream stage or pass --force");
  std::cerr << "--force given, continuing\n";
}

ProcessedCorpus load_corpus_checked(const fs::path& workdir) {
  const fs::path dir = workdir / "corpus";
  if (!fs::exists(dir / "reviews.bin"))
    throw DataError("no corpus at " + dir.string() + " (run prepare first)");
  return load_corpus(dir);
}

int cmd_prepare(const CommonArgs& args, const std::string& input) {
  const RunConfig cfg = resolve_config(args);
  const fs::path workdir(args.workdir);

  if (!fs::exists(input)) throw DataError("input path does not exist: " + input);
  std::ifstream in(input, std::ios::binary);
  if (!in) throw DataError("cannot open input: " + input);

  ParseStats stats;
  auto raw = parse_reviews(in, cfg.format(), cfg.field_map(), &stats);
  std::cerr << "parsed " << stats.parsed << " reviews, skipped " << stats.skipped << " lines\n";

  raw = dedupe(std::move(raw));
  std::cerr << "after dedup: " << raw.size() << " reviews\n";
  raw = k_core_filter(std::move(raw), cfg.k_core);
  std::cerr << "after " << cfg.k_core << "-core: " << raw.size() << " reviews\n";
  if (raw.empty()) throw DataError("no reviews left after filtering");

  const ProcessedCorpus corpus = build_corpus(raw, cfg.tokenizer_config(), cfg.min_term_count);
  const CorpusSplit split =
      cfg.resolved_split_mode() == SplitMode::PerUser
          ? split_per_user(corpus, cfg.train_ratio, cfg.valid_ratio, cfg.split_seed)
          : split_global(corpus, cfg.train_ratio, cfg.valid_ratio, cfg.split_seed);

  save_corpus(workdir / "corpus", corpus);
  save_split(workdir / "split", split);
  write_resolved(workdir, "prepare.resolved.cfg", cfg);

  nlohmann::json j;
  j["users"] = corpus.n_users();
  j["items"] = corpus.n_items();
  j["ratings"] = corpus.reviews.size();
  j["vocabulary"] = corpus.vocab.size();
  j["skipped_lines"] = stats.skipped;
  j["train"] = split.train.size();
  j["valid"] = split.valid.size();
  j["test"] = split.test.size();
  j["corpus_hash"] = corpus_hash(corpus);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_train_atm(const CommonArgs& args) {
  const RunConfig cfg = resolve_config(args);
  const fs::path workdir(args.workdir);
  const ProcessedCorpus corpus = load_corpus_checked(workdir);
  const CorpusSplit split = load_split(workdir / "split", corpus);

  AtmHyperparams hyper = cfg.resolved_atm();
  std::cerr << "fitting atm: K=" << hyper.topics << " A=" << hyper.aspects << " sweeps="
            << hyper.sweeps << " on " << split.train.size() << " training reviews\n";
  int last_log = -1;
  const AtmPosterior posterior =
      fit_atm(corpus, hyper, split.train, [&](int sweep, const AtmState& st) {
        const int pct = (sweep + 1) * 10 / hyper.sweeps;
        if (pct != last_log) {
          last_log = pct;
          std::cerr << "sweep " << (sweep + 1) << "/" << hyper.sweeps << "\n";
          (void)st;
        }
      });
  save_posterior(workdir / "atm", posterior, hyper, corpus_hash(corpus));
  write_resolved(workdir, "train-atm.resolved.cfg", cfg);
  std::cerr << "posterior saved (hash " << posterior_hash(posterior) << ")\n";
  return 0;
}

int cmd_train_alfm(const CommonArgs& args) {
  const RunConfig cfg = resolve_config(args);
  const fs::path workdir(args.workdir);
  const ProcessedCorpus corpus = load_corpus_checked(workdir);
  const CorpusSplit split = load_split(workdir / "split", corpus);
  const LoadedPosterior lp = load_posterior(workdir / "atm");
  check_hash("posterior->corpus", lp.corpus_hash, corpus_hash(corpus), args.force);

  TrainLog log;
  FeatureTable features;
  const AlfmModel model = train(corpus, split, lp.posterior, cfg.alfm, &features, &log);
  std::cerr << "trained " << log.train_mse.size() << " epochs, best validation rmse at epoch "
            << log.best_epoch << "\n";
  save_model(workdir / "alfm", model, posterior_hash(lp.posterior));
  save_features(workdir / "alfm" / "features.bin", features, posterior_hash(lp.posterior),
                split_hash(split));
  write_resolved(workdir, "train-alfm.resolved.cfg", cfg);
  return 0;
}

struct LoadedPipeline {
  ProcessedCorpus corpus;
  CorpusSplit split;
  LoadedPosterior posterior;
  LoadedModel model;
};

LoadedPipeline load_pipeline(const CommonArgs& args) {
  const fs::path workdir(args.workdir);
  LoadedPipeline p;
  p.corpus = load_corpus_checked(workdir);
  p.split = load_split(workdir / "split", p.corpus);
  p.posterior = load_posterior(workdir / "atm");
  check_hash("posterior->corpus", p.posterior.corpus_hash, corpus_hash(p.corpus), args.force);
  p.model = load_model(workdir / "alfm");
  check_hash("model->posterior", p.model.posterior_hash, posterior_hash(p.posterior.posterior),
             args.force);
  return p;
}

int cmd_evaluate(const CommonArgs& args, const std::string& subset, bool cold_start) {
  if (subset != "test" && subset != "valid")
    throw ConfigError("--subset must be test or valid, got: " + subset);
  const RunConfig cfg = resolve_config(args);
  const fs::path workdir(args.workdir);
  LoadedPipeline p = load_pipeline(args);

  const auto& indices = (subset == "valid") ? p.split.valid : p.split.test;
  if (indices.empty()) throw DataError("empty " + subset + " subset");
  const auto pairs = collect_ratings(p.corpus, indices);

  const FeatureTable* cache = nullptr;
  FeatureTable loaded_cache;
  const fs::path cache_path = workdir / "alfm" / "features.bin";
  if (fs::exists(cache_path)) {
    auto lf = load_features(cache_path);
    if (lf.posterior_hash == posterior_hash(p.posterior.posterior)) {
      loaded_cache = std::move(lf.features);
      cache = &loaded_cache;
    }
  }

  EvalReport report;
  const auto preds = predict_all(p.model.model, p.posterior.posterior, pairs, cache);
  std::vector<PredictionPair> pp(pairs.size());
  for (std::size_t j = 0; j < pairs.size(); ++j) pp[j] = {preds[j], pairs[j].value};
  report.rmse = rmse(pp);
  report.n_predictions = pairs.size();

  if (cold_start) {
    AlfmHyperparams bmf_hyper = cfg.alfm;
    bmf_hyper.factors = p.model.model.factors;
    const BmfModel bmf = train_bmf(p.corpus, p.split, bmf_hyper);
    const auto base = predict_all_bmf(bmf, pairs);
    for (std::size_t j = 0; j < pairs.size(); ++j) pp[j] = {base[j], pairs[j].value};
    report.baseline_rmse = rmse(pp);
    report.buckets =
        cold_start_buckets(pairs, preds, base, p.split.train_count_per_user);
  }

  fs::create_directories(workdir / "eval");
  {
    std::ofstream out(workdir / "eval" / "report.json");
    out << report_to_json(report) << "\n";
  }
  {
    std::ofstream out(workdir / "eval" / "report.txt");
    out << report_to_text(report);
  }
  write_resolved(workdir, "evaluate.resolved.cfg", cfg);
  std::cout << report_to_text(report);
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  const RunConfig cfg = resolve_config(args);
  const fs::path workdir(args.workdir);
  const ProcessedCorpus corpus = load_corpus_checked(workdir);
  const CorpusSplit split = load_split(workdir / "split", corpus);

  const bool auto_alpha = cfg.atm.alpha_user < 0.0;
  const SweepGrid grid = sweep(corpus, split, cfg.sweep_factors, cfg.sweep_topics,
                               cfg.resolved_atm(), cfg.alfm, auto_alpha);

  EvalReport report;
  report.grid = grid;
  std::size_t best = 0;
  for (std::size_t c = 1; c < grid.valid_rmse.size(); ++c)
    if (grid.valid_rmse[c] < grid.valid_rmse[best]) best = c;
  report.rmse = grid.valid_rmse[best];

  fs::create_directories(workdir / "eval");
  {
    std::ofstream out(workdir / "eval" / "sweep.json");
    out << report_to_json(report) << "\n";
  }
  {
    std::ofstream out(workdir / "eval" / "sweep.csv");
    out << grid_to_csv(grid);
  }
  write_resolved(workdir, "sweep.resolved.cfg", cfg);
  std::cout << report_to_text(report);
  return 0;
}

int cmd_explain(const CommonArgs& args, const std::string& user_id, const std::string& item_id,
                int top_n) {
  const RunConfig cfg = resolve_config(args);
  LoadedPipeline p = load_pipeline(args);

  auto uit = p.corpus.user_index.find(user_id);
  if (uit == p.corpus.user_index.end()) throw DataError("unknown user id: " + user_id);
  const std::uint32_t u = uit->second;

  std::vector<std::string> labels;
  if (!cfg.label_file.empty())
    labels = load_aspect_labels(cfg.label_file, p.posterior.posterior.aspects);

  const int n = top_n > 0 ? top_n : cfg.top_words_n;
  const auto report =
      top_words(p.posterior.posterior, Subject::User, u, n, cfg.background_threshold);
  std::cout << "top aspect words for user " << user_id << "\n"
            << aspect_words_to_text(report, p.corpus.vocab, labels);

  if (!item_id.empty()) {
    auto iit = p.corpus.item_index.find(item_id);
    if (iit == p.corpus.item_index.end()) throw DataError("unknown item id: " + item_id);
    PairExplanation e = explain_pair(p.model.model, p.posterior.posterior, u, iit->second);
    for (const auto& r : p.corpus.reviews)
      if (r.user_idx == u && r.item_idx == iit->second) e.actual = r.rating;
    std::cout << "\npair (" << user_id << ", " << item_id << ")\n"
              << explanation_to_text(e, labels);
  }
  return 0;
}

int cmd_predict(const CommonArgs& args, const std::string& pairs_path,
                const std::string& output_path) {
  LoadedPipeline p = load_pipeline(args);
  const AtmPosterior& post = p.posterior.posterior;
  const AlfmModel& model = p.model.model;
  const AtmHyperparams& atm_hyper = p.posterior.hyper;

  std::ifstream in(pairs_path);
  if (!in) throw DataError("cannot open pairs file: " + pairs_path);
  std::ofstream file_out;
  if (!output_path.empty()) {
    file_out.open(output_path);
    if (!file_out) throw DataError("cannot open output file: " + output_path);
  }
  std::ostream& out = output_path.empty() ? std::cout : file_out;

  const FeatureTable* cache = nullptr;
  FeatureTable loaded_cache;
  const fs::path cache_path = fs::path(args.workdir) / "alfm" / "features.bin";
  if (fs::exists(cache_path)) {
    auto lf = load_features(cache_path);
    if (lf.posterior_hash == posterior_hash(post)) {
      loaded_cache = std::move(lf.features);
      cache = &loaded_cache;
    }
  }

  // cold fallbacks for ids unseen at training time
  const std::vector<double> uniform_topics(post.topics, 1.0 / post.topics);
  const std::vector<double> uniform_aspects(post.aspects, 1.0 / post.aspects);
  const double prior_pi = atm_hyper.eta0 / (atm_hyper.eta0 + atm_hyper.eta1);

  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("malformed pair line (need user<TAB>item): " + line);
    const std::string user_id = line.substr(0, tab);
    const std::string item_id = line.substr(tab + 1);
    const auto uit = p.corpus.user_index.find(user_id);
    const auto iit = p.corpus.item_index.find(item_id);

    double pred;
    if (uit != p.corpus.user_index.end() && iit != p.corpus.item_index.end()) {
      const std::uint32_t u = uit->second, i = iit->second;
      if (cache && cache->contains(u, i)) {
        pred = predict(model, *cache, u, i);
      } else {
        const PairFeatures f = pair_features(post, u, i);
        pred = predict(model, f.importance, f.match, u, i);
      }
    } else {
      // unknown on one or both sides: prior-mean aspects, zero factors/biases
      const bool knows_u = uit != p.corpus.user_index.end();
      const bool knows_i = iit != p.corpus.item_index.end();
      const double pi_u = knows_u ? post.pi[uit->second] : prior_pi;
      std::vector<double> rho(post.aspects), s(post.aspects);
      for (int a = 0; a < post.aspects; ++a) {
        const double lu = knows_u ? post.lambda_user_at(uit->second)[a] : uniform_aspects[a];
        const double li = knows_i ? post.lambda_item_at(iit->second)[a] : uniform_aspects[a];
        rho[a] = pi_u * lu + (1.0 - pi_u) * li;
        auto th = knows_u ? post.theta_at(uit->second, a) : std::span<const double>(uniform_topics);
        auto ps = knows_i ? post.psi_at(iit->second, a) : std::span<const double>(uniform_topics);
        s[a] = std::clamp(1.0 - jsd(th, ps), 0.0, 1.0);
      }
      double acc = 0.0;
      if (knows_u && knows_i) {
        for (int a = 0; a < model.aspects; ++a)
          acc += rho[a] * (s[a] * aspect_factor_term(model, uit->second, iit->second, a));
      }
      const double bu = knows_u ? model.user_bias[uit->second] : 0.0;
      const double bi = knows_i ? model.item_bias[iit->second] : 0.0;
      pred = acc + bu + bi + model.global_bias;
    }
    if (model.hyper.clamp_predictions) pred = clamp_rating(pred);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", pred);
    out << user_id << "\t" << item_id << "\t" << buf << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aspect-aware rating prediction pipeline"};
  app.require_subcommand(1);

  CommonArgs prepare_args, atm_args, alfm_args, eval_args, sweep_args, explain_args, predict_args;
  std::string input, subset = "test", user_id, item_id, pairs_path, output_path;
  bool cold_start = false;
  int top_n = 0;

  auto* prepare = app.add_subcommand("prepare", "parse, filter, tokenize, split");
  add_common(prepare, prepare_args);
  prepare->add_option("--input", input, "raw review file (json lines or tsv)")->required();

  auto* train_atm = app.add_subcommand("train-atm", "fit the aspect topic model on training text");
  add_common(train_atm, atm_args);

  auto* train_alfm = app.add_subcommand("train-alfm", "train aspect-weighted latent factors");
  add_common(train_alfm, alfm_args);

  auto* evaluate = app.add_subcommand("evaluate", "rmse report on the held-out subset");
  add_common(evaluate, eval_args);
  evaluate->add_option("--subset", subset, "test|valid (default test)");
  evaluate->add_flag("--cold-start", cold_start, "also train the bmf baseline and bucket gains");

  auto* sweep_cmd = app.add_subcommand("sweep", "factor/topic grid over validation rmse");
  add_common(sweep_cmd, sweep_args);

  auto* explain = app.add_subcommand("explain", "aspect words and per-pair explanation");
  add_common(explain, explain_args);
  explain->add_option("--user", user_id, "user id")->required();
  explain->add_option("--item", item_id, "item id (optional, adds the pair table)");
  explain->add_option("--top", top_n, "words per aspect");

  auto* predict_cmd = app.add_subcommand("predict", "score user<TAB>item pairs");
  add_common(predict_cmd, predict_args);
  predict_cmd->add_option("--pairs", pairs_path, "input pair file")->required();
  predict_cmd->add_option("--output", output_path, "output file (default stdout)");

  try {
    app.parse(argc, argv);
    if (prepare->parsed()) return cmd_prepare(prepare_args, input);
    if (train_atm->parsed()) return cmd_train_atm(atm_args);
    if (train_alfm->parsed()) return cmd_train_alfm(alfm_args);
    if (evaluate->parsed()) return cmd_evaluate(eval_args, subset, cold_start);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_args);
    if (explain->parsed()) return cmd_explain(explain_args, user_id, item_id, top_n);
    if (predict_cmd->parsed()) return cmd_predict(predict_args, pairs_path, output_path);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
