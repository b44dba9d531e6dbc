#include "alfm/alfm.hpp"

#include <algorithm>
#include <cmath>

#include "alfm/error.hpp"

namespace alfm {

std::vector<Rating> collect_ratings(const ProcessedCorpus& corpus,
                                    std::span<const std::uint32_t> review_indices) {
  std::vector<Rating> out;
  out.reserve(review_indices.size());
  for (std::uint32_t i : review_indices) {
    const auto& r = corpus.reviews[i];
    out.push_back({r.user_idx, r.item_idx, r.rating});
  }
  return out;
}

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ContractError("jsd: length mismatch");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw ContractError("jsd: negative entry");
    sp += p[i];
    sq += q[i];
  }
  if (std::abs(sp - 1.0) > 1e-6 || std::abs(sq - 1.0) > 1e-6)
    throw ContractError("jsd: inputs must sum to 1");
  const double log2 = 0.6931471805599453094172321214582;
  double div = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) div += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) div += 0.5 * q[i] * std::log(q[i] / m);
  }
  return div / log2;
}

std::vector<double> aspect_match(const AtmPosterior& posterior, std::uint32_t u, std::uint32_t i) {
  std::vector<double> s(posterior.aspects);
  for (int a = 0; a < posterior.aspects; ++a) {
    double v = 1.0 - jsd(posterior.theta_at(u, a), posterior.psi_at(i, a));
    s[a] = std::clamp(v, 0.0, 1.0);
  }
  return s;
}

std::vector<double> aspect_importance(const AtmPosterior& posterior, std::uint32_t u,
                                      std::uint32_t i) {
  const double pi_u = posterior.pi[u];
  auto lu = posterior.lambda_user_at(u);
  auto li = posterior.lambda_item_at(i);
  std::vector<double> rho(posterior.aspects);
  for (int a = 0; a < posterior.aspects; ++a) rho[a] = pi_u * lu[a] + (1.0 - pi_u) * li[a];
  return rho;
}

PairFeatures pair_features(const AtmPosterior& posterior, std::uint32_t u, std::uint32_t i) {
  return {aspect_importance(posterior, u, i), aspect_match(posterior, u, i)};
}

std::span<const double> FeatureTable::importance_at(std::uint32_t u, std::uint32_t i) const {
  auto it = index.find(key(u, i));
  if (it == index.end())
    throw ContractError("feature table: no features for pair (" + std::to_string(u) + "," +
                        std::to_string(i) + ")");
  return {importance.data() + static_cast<std::size_t>(it->second) * aspects,
          static_cast<std::size_t>(aspects)};
}

std::span<const double> FeatureTable::match_at(std::uint32_t u, std::uint32_t i) const {
  auto it = index.find(key(u, i));
  if (it == index.end())
    throw ContractError("feature table: no features for pair (" + std::to_string(u) + "," +
                        std::to_string(i) + ")");
  return {match.data() + static_cast<std::size_t>(it->second) * aspects,
          static_cast<std::size_t>(aspects)};
}

void FeatureTable::insert(std::uint32_t u, std::uint32_t i, const PairFeatures& f) {
  auto [it, fresh] = index.try_emplace(key(u, i), static_cast<std::uint32_t>(index.size()));
  if (!fresh) return;
  importance.insert(importance.end(), f.importance.begin(), f.importance.end());
  match.insert(match.end(), f.match.begin(), f.match.end());
}

FeatureTable build_feature_table(const AtmPosterior& posterior, std::span<const Rating> ratings) {
  FeatureTable table;
  table.aspects = posterior.aspects;
  for (const auto& r : ratings) {
    if (table.contains(r.user, r.item)) continue;
    table.insert(r.user, r.item, pair_features(posterior, r.user, r.item));
  }
  return table;
}

void AlfmHyperparams::validate() const {
  if (factors < 0) throw ConfigError("alfm: factors must be >= 0");
  if (reg_user < 0 || reg_item < 0 || reg_aspect_weight < 0 || reg_bias < 0)
    throw ConfigError("alfm: regularization coefficients must be >= 0");
  if (l1_epsilon <= 0) throw ConfigError("alfm: l1_epsilon must be > 0");
  if (learn_rate <= 0) throw ConfigError("alfm: learn_rate must be > 0");
}

double aspect_factor_term(const AlfmModel& model, std::uint32_t u, std::uint32_t i, int a) {
  auto p = model.user_row(u);
  auto q = model.item_row(i);
  auto w = model.aspect_row(a);
  double dot = 0.0;
  for (int f = 0; f < model.factors; ++f) dot += (w[f] * p[f]) * (w[f] * q[f]);
  return dot;
}

double aspect_rating(const AlfmModel& model, const PairFeatures& features, std::uint32_t u,
                     std::uint32_t i, int a) {
  return features.match[a] * aspect_factor_term(model, u, i, a);
}

double predict(const AlfmModel& model, std::span<const double> importance,
               std::span<const double> match, std::uint32_t u, std::uint32_t i) {
  double acc = 0.0;
  for (int a = 0; a < model.aspects; ++a)
    acc += importance[a] * (match[a] * aspect_factor_term(model, u, i, a));
  return acc + model.user_bias[u] + model.item_bias[i] + model.global_bias;
}

double predict(const AlfmModel& model, const FeatureTable& features, std::uint32_t u,
               std::uint32_t i) {
  return predict(model, features.importance_at(u, i), features.match_at(u, i), u, i);
}

double clamp_rating(double r) { return std::clamp(r, 1.0, 5.0); }

namespace {

double smoothed_l1(std::span<const double> w, double eps) {
  double s = 0.0;
  for (double x : w) s += std::sqrt(x * x + eps);
  return s;
}

double sq_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

double objective(const AlfmModel& model, std::span<const Rating> ratings,
                 const FeatureTable& features) {
  const auto& h = model.hyper;
  double loss = 0.0;
  for (const auto& r : ratings) {
    const double err = r.value - predict(model, features, r.user, r.item);
    loss += 0.5 * err * err;
  }
  loss += 0.5 * h.reg_user * sq_norm(model.user_factors);
  loss += 0.5 * h.reg_item * sq_norm(model.item_factors);
  loss += h.reg_aspect_weight * smoothed_l1(model.aspect_weights, h.l1_epsilon);
  loss += 0.5 * h.reg_bias * (sq_norm(model.user_bias) + sq_norm(model.item_bias));
  return loss;
}

double sgd_epoch(AlfmModel& model, std::span<const Rating> ratings, const FeatureTable& features,
                 int epoch_index, Rng& rng) {
  const auto& h = model.hyper;
  const int F = model.factors;
  const int A = model.aspects;
  const double lr = h.learn_rate * std::pow(h.lr_decay, epoch_index);

  std::vector<std::uint32_t> order(ratings.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  std::vector<double> grad_p(F), grad_q(F), coef(A);
  double sq_err_sum = 0.0;
  for (std::uint32_t oi : order) {
    const Rating& r = ratings[oi];
    auto rho = features.importance_at(r.user, r.item);
    auto s = features.match_at(r.user, r.item);
    const double err = predict(model, rho, s, r.user, r.item) - r.value;
    sq_err_sum += err * err;
    if (!std::isfinite(err))
      throw Error("sgd_epoch: non-finite prediction error (learning rate too high?)");

    double* p = model.user_factors.data() + static_cast<std::size_t>(r.user) * F;
    double* q = model.item_factors.data() + static_cast<std::size_t>(r.item) * F;
    for (int a = 0; a < A; ++a) coef[a] = rho[a] * s[a];

    for (int f = 0; f < F; ++f) {
      double sw = 0.0;  // sum_a rho_a s_a w_af^2
      for (int a = 0; a < A; ++a) {
        const double w = model.aspect_weights[static_cast<std::size_t>(a) * F + f];
        sw += coef[a] * w * w;
      }
      grad_p[f] = err * sw * q[f] + h.reg_user * p[f];
      grad_q[f] = err * sw * p[f] + h.reg_item * q[f];
    }
    if (h.train_aspect_weights) {
      for (int a = 0; a < A; ++a) {
        double* w = model.aspect_weights.data() + static_cast<std::size_t>(a) * F;
        const double ca = 2.0 * err * coef[a];
        for (int f = 0; f < F; ++f) {
          const double g =
              ca * w[f] * p[f] * q[f] + h.reg_aspect_weight * w[f] / std::sqrt(w[f] * w[f] + h.l1_epsilon);
          w[f] -= lr * g;
        }
      }
    }
    for (int f = 0; f < F; ++f) {
      p[f] -= lr * grad_p[f];
      q[f] -= lr * grad_q[f];
    }
    model.user_bias[r.user] -= lr * (err + h.reg_bias * model.user_bias[r.user]);
    model.item_bias[r.item] -= lr * (err + h.reg_bias * model.item_bias[r.item]);
  }
  return ratings.empty() ? 0.0 : sq_err_sum / static_cast<double>(ratings.size());
}

namespace {

double mean_rating(std::span<const Rating> ratings) {
  double s = 0.0;
  for (const auto& r : ratings) s += r.value;
  return ratings.empty() ? 0.0 : s / static_cast<double>(ratings.size());
}

double validation_rmse_alfm(const AlfmModel& model, std::span<const Rating> valid,
                            const FeatureTable& features) {
  double s = 0.0;
  for (const auto& r : valid) {
    double pred = predict(model, features, r.user, r.item);
    if (model.hyper.clamp_predictions) pred = clamp_rating(pred);
    const double e = pred - r.value;
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(valid.size()));
}

}  // namespace

AlfmModel train(const ProcessedCorpus& corpus, const CorpusSplit& split,
                const AtmPosterior& posterior, const AlfmHyperparams& hyper,
                FeatureTable* features_out, TrainLog* log) {
  hyper.validate();
  auto train_ratings = collect_ratings(corpus, split.train);
  auto valid_ratings = collect_ratings(corpus, split.valid);
  if (train_ratings.empty()) throw DataError("alfm train: empty training set");

  FeatureTable features = build_feature_table(posterior, train_ratings);
  for (const auto& r : valid_ratings) {
    if (!features.contains(r.user, r.item))
      features.insert(r.user, r.item, pair_features(posterior, r.user, r.item));
  }

  AlfmModel model;
  model.factors = hyper.factors;
  model.aspects = posterior.aspects;
  model.n_users = corpus.n_users();
  model.n_items = corpus.n_items();
  model.hyper = hyper;
  model.user_factors.resize(static_cast<std::size_t>(model.n_users) * hyper.factors);
  model.item_factors.resize(static_cast<std::size_t>(model.n_items) * hyper.factors);
  model.aspect_weights.assign(static_cast<std::size_t>(model.aspects) * hyper.factors, 1.0);
  model.user_bias.assign(model.n_users, 0.0);
  model.item_bias.assign(model.n_items, 0.0);
  model.global_bias = mean_rating(train_ratings);

  Rng rng(hyper.seed);
  for (auto& x : model.user_factors)
    x = hyper.nonnegative_init ? 0.1 + std::abs(rng.normal(0.0, 0.1)) : rng.normal(0.0, 0.1);
  for (auto& x : model.item_factors)
    x = hyper.nonnegative_init ? 0.1 + std::abs(rng.normal(0.0, 0.1)) : rng.normal(0.0, 0.1);

  AlfmModel best = model;
  double best_rmse = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int stall = 0;
  for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    const double mse = sgd_epoch(model, train_ratings, features, epoch, rng);
    if (log) {
      log->train_mse.push_back(mse);
      log->objective.push_back(objective(model, train_ratings, features));
    }
    if (valid_ratings.empty()) continue;
    const double vr = validation_rmse_alfm(model, valid_ratings, features);
    if (log) log->valid_rmse.push_back(vr);
    if (vr < best_rmse) {
      best_rmse = vr;
      best = model;
      best_epoch = epoch;
      stall = 0;
    } else if (++stall >= hyper.patience) {
      break;
    }
  }
  if (log) log->best_epoch = best_epoch;
  if (features_out) *features_out = std::move(features);
  return valid_ratings.empty() ? model : best;
}

BmfModel train_bmf(const ProcessedCorpus& corpus, const CorpusSplit& split,
                   const AlfmHyperparams& hyper, TrainLog* log) {
  hyper.validate();
  auto train_ratings = collect_ratings(corpus, split.train);
  auto valid_ratings = collect_ratings(corpus, split.valid);
  if (train_ratings.empty()) throw DataError("bmf train: empty training set");

  BmfModel model;
  model.factors = hyper.factors;
  model.n_users = corpus.n_users();
  model.n_items = corpus.n_items();
  model.hyper = hyper;
  model.user_factors.resize(static_cast<std::size_t>(model.n_users) * hyper.factors);
  model.item_factors.resize(static_cast<std::size_t>(model.n_items) * hyper.factors);
  model.user_bias.assign(model.n_users, 0.0);
  model.item_bias.assign(model.n_items, 0.0);
  model.global_bias = mean_rating(train_ratings);

  Rng rng(hyper.seed);
  for (auto& x : model.user_factors)
    x = hyper.nonnegative_init ? 0.1 + std::abs(rng.normal(0.0, 0.1)) : rng.normal(0.0, 0.1);
  for (auto& x : model.item_factors)
    x = hyper.nonnegative_init ? 0.1 + std::abs(rng.normal(0.0, 0.1)) : rng.normal(0.0, 0.1);

  const int F = hyper.factors;
  std::vector<double> grad_p(F), grad_q(F);
  std::vector<std::uint32_t> order(train_ratings.size());

  BmfModel best = model;
  double best_rmse = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int stall = 0;
  for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    const double lr = hyper.learn_rate * std::pow(hyper.lr_decay, epoch);
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double sq_err_sum = 0.0;
    for (std::uint32_t oi : order) {
      const Rating& r = train_ratings[oi];
      const double err = predict_bmf(model, r.user, r.item) - r.value;
      sq_err_sum += err * err;
      if (!std::isfinite(err))
        throw Error("bmf train: non-finite prediction error (learning rate too high?)");
      double* p = model.user_factors.data() + static_cast<std::size_t>(r.user) * F;
      double* q = model.item_factors.data() + static_cast<std::size_t>(r.item) * F;
      for (int f = 0; f < F; ++f) {
        grad_p[f] = err * q[f] + hyper.reg_user * p[f];
        grad_q[f] = err * p[f] + hyper.reg_item * q[f];
      }
      for (int f = 0; f < F; ++f) {
        p[f] -= lr * grad_p[f];
        q[f] -= lr * grad_q[f];
      }
      model.user_bias[r.user] -= lr * (err + hyper.reg_bias * model.user_bias[r.user]);
      model.item_bias[r.item] -= lr * (err + hyper.reg_bias * model.item_bias[r.item]);
    }
    if (log) log->train_mse.push_back(sq_err_sum / static_cast<double>(train_ratings.size()));
    if (valid_ratings.empty()) continue;
    double s = 0.0;
    for (const auto& r : valid_ratings) {
      double pred = predict_bmf(model, r.user, r.item);
      if (hyper.clamp_predictions) pred = clamp_rating(pred);
      const double e = pred - r.value;
      s += e * e;
    }
    const double vr = std::sqrt(s / static_cast<double>(valid_ratings.size()));
    if (log) log->valid_rmse.push_back(vr);
    if (vr < best_rmse) {
      best_rmse = vr;
      best = model;
      best_epoch = epoch;
      stall = 0;
    } else if (++stall >= hyper.patience) {
      break;
    }
  }
  if (log) log->best_epoch = best_epoch;
  return valid_ratings.empty() ? model : best;
}

double predict_bmf(const BmfModel& model, std::uint32_t u, std::uint32_t i) {
  const double* p = model.user_factors.data() + static_cast<std::size_t>(u) * model.factors;
  const double* q = model.item_factors.data() + static_cast<std::size_t>(i) * model.factors;
  double acc = 0.0;
  for (int f = 0; f < model.factors; ++f) acc += p[f] * q[f];
  return acc + model.user_bias[u] + model.item_bias[i] + model.global_bias;
}

}  // namespace alfm
