#pragma once

// L2-regularized linear SVM, one-vs-rest over the four stages.
//
// Each binary problem minimizes  (1/2)|w|^2 + C * sum_i max(0, 1 - y_i (w.x_i + b)).
// The bias is handled as an extra constant feature of value 1 (and so is
// regularized with w).
//
// Solvers:
//   DualCD   coordinate descent on the dual  min (1/2) a'Qa - sum a, 0 <= a_i <= C,
//            stopping when the projected-gradient spread falls below `tol`.
//            Margins of the result are then within `tol` of the KKT conditions.
//   Pegasos  primal sub-gradient descent, step 1/(lambda t) with lambda = 1/(nC),
//            stochastic (one shuffled example per step) or full-batch with
//            backtracking, which makes the primal objective non-increasing.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagegate/corpus.hpp"
#include "stagegate/error.hpp"
#include "stagegate/features.hpp"
#include "stagegate/metrics.hpp"
#include "stagegate/util.hpp"

namespace stagegate {

enum class SvmSolver { DualCD, Pegasos, PegasosFullBatch };

struct SvmConfig {
  double C = 0.001;
  SvmSolver solver = SvmSolver::DualCD;
  std::size_t max_epochs = 1000;
  double tol = 1e-6;  // DualCD: projected-gradient spread; Pegasos: relative objective change
  std::uint64_t seed = 1;
};

struct BinarySvm {
  std::vector<double> w;
  double b = 0;
  std::vector<double> objective;  // per epoch: dual objective (DualCD) or primal (Pegasos)
  std::size_t epochs = 0;
};

namespace detail {

inline double sdot(const SparseVector& x, const std::vector<double>& w) {
  double s = 0;
  for (auto [i, v] : x.entries) s += w[i] * v;
  return s;
}

inline double primal_objective(std::span<const SparseVector> X, std::span<const int> y, const std::vector<double>& w,
                               double b, double C) {
  double reg = b * b;
  for (double v : w) reg += v * v;
  double loss = 0;
  for (std::size_t i = 0; i < X.size(); ++i) loss += std::max(0.0, 1.0 - y[i] * (sdot(X[i], w) + b));
  return 0.5 * reg + C * loss;
}

inline BinarySvm solve_dual_cd(std::span<const SparseVector> X, std::span<const int> y, std::size_t dim,
                               const SvmConfig& cfg, Rng& rng) {
  const std::size_t n = X.size();
  BinarySvm m;
  m.w.assign(dim, 0.0);
  std::vector<double> alpha(n, 0.0), q(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 1.0;  // bias feature
    for (auto& e : X[i].entries) s += e.second * e.second;
    q[i] = s;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  double sum_alpha = 0;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double pg_max = -std::numeric_limits<double>::infinity();
    double pg_min = std::numeric_limits<double>::infinity();
    for (auto i : order) {
      const double G = y[i] * (sdot(X[i], m.w) + m.b) - 1.0;
      double pg = G;
      if (alpha[i] <= 0) pg = std::min(G, 0.0);
      else if (alpha[i] >= cfg.C) pg = std::max(G, 0.0);
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (pg == 0.0) continue;
      const double old = alpha[i];
      alpha[i] = std::clamp(old - G / q[i], 0.0, cfg.C);
      const double d = (alpha[i] - old) * y[i];
      if (d == 0.0) continue;
      for (auto [j, v] : X[i].entries) m.w[j] += d * v;
      m.b += d;
      sum_alpha += alpha[i] - old;
    }
    double reg = m.b * m.b;
    for (double v : m.w) reg += v * v;
    m.objective.push_back(0.5 * reg - sum_alpha);
    m.epochs = epoch + 1;
    if (pg_max - pg_min < cfg.tol) break;
  }
  return m;
}

inline BinarySvm solve_pegasos(std::span<const SparseVector> X, std::span<const int> y, std::size_t dim,
                               const SvmConfig& cfg, Rng& rng) {
  const std::size_t n = X.size();
  const double lambda = 1.0 / (static_cast<double>(n) * cfg.C);
  BinarySvm m;
  m.w.assign(dim, 0.0);
  // w = scale * v keeps the shrink step O(1)
  std::vector<double> v(dim, 0.0);
  double scale = 1.0, vb = 0.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t t = 0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (auto i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double margin = y[i] * scale * (sdot(X[i], v) + vb);
      const double shrink = 1.0 - eta * lambda;
      if (shrink <= 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
        vb = 0.0;
        scale = 1.0;
      } else {
        scale *= shrink;
      }
      if (margin < 1.0) {
        const double step = eta * y[i] / scale;
        for (auto [j, x] : X[i].entries) v[j] += step * x;
        vb += step;
      }
      if (scale < 1e-9) {
        for (auto& x : v) x *= scale;
        vb *= scale;
        scale = 1.0;
      }
    }
    for (std::size_t j = 0; j < dim; ++j) m.w[j] = scale * v[j];
    m.b = scale * vb;
    const double obj = primal_objective(X, y, m.w, m.b, cfg.C);
    m.objective.push_back(obj);
    m.epochs = epoch + 1;
    if (std::isfinite(prev) && std::abs(prev - obj) <= cfg.tol * std::max(1.0, std::abs(prev))) break;
    prev = obj;
  }
  return m;
}

inline BinarySvm solve_pegasos_full(std::span<const SparseVector> X, std::span<const int> y, std::size_t dim,
                                    const SvmConfig& cfg) {
  const std::size_t n = X.size();
  const double lambda = 1.0 / (static_cast<double>(n) * cfg.C);
  BinarySvm m;
  m.w.assign(dim, 0.0);
  double obj = primal_objective(X, y, m.w, m.b, cfg.C);
  std::vector<double> g(dim), w2(dim);
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    // sub-gradient of the objective divided by nC: lambda*w - (1/n) sum_{margin<1} y x
    for (std::size_t j = 0; j < dim; ++j) g[j] = lambda * m.w[j];
    double gb = lambda * m.b;
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] * (sdot(X[i], m.w) + m.b) < 1.0) {
        for (auto [j, x] : X[i].entries) g[j] -= y[i] * x / static_cast<double>(n);
        gb -= y[i] / static_cast<double>(n);
      }
    }
    double eta = 1.0 / (lambda * static_cast<double>(epoch + 1));
    double next = obj;
    double b2 = m.b;
    bool improved = false;
    for (int tries = 0; tries < 60; ++tries, eta *= 0.5) {
      for (std::size_t j = 0; j < dim; ++j) w2[j] = m.w[j] - eta * g[j];
      b2 = m.b - eta * gb;
      next = primal_objective(X, y, w2, b2, cfg.C);
      if (next < obj) {
        improved = true;
        break;
      }
    }
    if (improved) {
      m.w = w2;
      m.b = b2;
    } else {
      next = obj;
    }
    const double change = obj - next;
    obj = next;
    m.objective.push_back(obj);
    m.epochs = epoch + 1;
    if (!improved || change <= cfg.tol * std::max(1.0, std::abs(obj))) break;
  }
  return m;
}

}  // namespace detail

/// Trains one binary problem with labels in {-1, +1}.
inline BinarySvm train_binary_svm(std::span<const SparseVector> X, std::span<const int> y, std::size_t dim,
                                  const SvmConfig& cfg) {
  if (!(cfg.C > 0)) throw Error(ErrorCode::InvalidConfig, "C must be > 0");
  Rng rng(derive_seed(cfg.seed, "svm"));
  switch (cfg.solver) {
    case SvmSolver::DualCD: return detail::solve_dual_cd(X, y, dim, cfg, rng);
    case SvmSolver::Pegasos: return detail::solve_pegasos(X, y, dim, cfg, rng);
    case SvmSolver::PegasosFullBatch: return detail::solve_pegasos_full(X, y, dim, cfg);
  }
  return {};
}

class SvmModel {
 public:
  std::array<std::vector<double>, kNumClasses> w;
  std::array<double, kNumClasses> b{};
  double C = 0.001;
  std::size_t dim = 0;
  std::vector<std::string> feature_names;  // optional, for decoding
  std::uint64_t space_fingerprint = 0;

  std::array<double, kNumClasses> decision_values(const SparseVector& x) const {
    if (x.dim != dim)
      throw Error(ErrorCode::DimMismatch,
                  "vector has dimension " + std::to_string(x.dim) + ", model expects " + std::to_string(dim));
    std::array<double, kNumClasses> s{};
    for (std::size_t c = 0; c < kNumClasses; ++c) s[c] = detail::sdot(x, w[c]) + b[c];
    return s;
  }

  /// Ties go to the earlier class in label order.
  StageLabel predict(const SparseVector& x) const {
    const auto s = decision_values(x);
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumClasses; ++c) {
      if (s[c] > s[best]) best = c;
    }
    return label_from_index(best);
  }

  std::vector<StageLabel> predict(std::span<const SparseVector> X) const {
    std::vector<StageLabel> out;
    out.reserve(X.size());
    for (const auto& x : X) out.push_back(predict(x));
    return out;
  }

  std::string feature_name(std::size_t i) const {
    return i < feature_names.size() ? feature_names[i] : "f" + std::to_string(i);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["C"] = C;
    j["dim"] = dim;
    j["space_fingerprint"] = std::to_string(space_fingerprint);
    j["labels"] = nlohmann::json::array();
    j["weights"] = nlohmann::json::array();
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      j["labels"].push_back(std::string(label_name(label_from_index(c))));
      j["weights"].push_back({{"bias", b[c]}, {"w", w[c]}});
    }
    return j;
  }

  static SvmModel from_json(const nlohmann::json& j) {
    SvmModel m;
    m.C = j.at("C").get<double>();
    m.dim = j.at("dim").get<std::size_t>();
    m.space_fingerprint = std::stoull(j.at("space_fingerprint").get<std::string>());
    const auto& labels = j.at("labels");
    if (labels.size() != kNumClasses) throw Error(ErrorCode::FormatError, "model must have four classes");
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (labels[c].get<std::string>() != label_name(label_from_index(c)))
        throw Error(ErrorCode::FormatError, "unexpected label order in model");
      m.b[c] = j.at("weights")[c].at("bias").get<double>();
      m.w[c] = j.at("weights")[c].at("w").get<std::vector<double>>();
      if (m.w[c].size() != m.dim) throw Error(ErrorCode::FormatError, "weight vector length differs from dim");
    }
    return m;
  }
};

inline std::size_t check_dims(std::span<const SparseVector> X) {
  const std::size_t dim = X.front().dim;
  for (const auto& x : X) {
    if (x.dim != dim) throw Error(ErrorCode::DimMismatch, "feature vectors differ in dimension");
  }
  return dim;
}

inline SvmModel train_svm(std::span<const SparseVector> X, std::span<const StageLabel> y, const SvmConfig& cfg) {
  if (X.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "X and y differ in length");
  if (X.size() < 2) throw Error(ErrorCode::SingleClassInput, "need at least two examples");
  std::array<bool, kNumClasses> seen{};
  for (auto l : y) seen[label_index(l)] = true;
  if (std::count(seen.begin(), seen.end(), true) < 2)
    throw Error(ErrorCode::SingleClassInput, "training labels contain a single class");
  SvmModel m;
  m.C = cfg.C;
  m.dim = check_dims(X);
  std::vector<int> yy(X.size());
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < y.size(); ++i) yy[i] = label_index(y[i]) == c ? 1 : -1;
    auto cc = cfg;
    cc.seed = derive_seed(cfg.seed, "ovr-" + std::to_string(c));
    auto bin = train_binary_svm(X, yy, m.dim, cc);
    m.w[c] = std::move(bin.w);
    m.b[c] = bin.b;
  }
  return m;
}

/// The k features with the largest positive weight for a class, descending.
inline std::vector<std::pair<std::string, double>> top_features(const SvmModel& m, StageLabel cls, std::size_t k) {
  const auto& w = m.w[label_index(cls)];
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] > 0) idx.push_back(i);
  }
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return w[a] != w[b] ? w[a] > w[b] : a < b; });
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t r = 0; r < k; ++r) out.emplace_back(m.feature_name(idx[r]), w[idx[r]]);
  return out;
}

struct CSelection {
  double best_C = 0;
  std::vector<std::pair<double, double>> scores;  // (C, mean weighted F1), ascending C
};

/// Stratified k-fold CV over the grid; ties go to the smaller C.
inline CSelection select_C(std::span<const SparseVector> X, std::span<const StageLabel> y, std::vector<double> grid,
                           std::size_t folds, std::uint64_t seed, SvmConfig base = {}) {
  if (grid.empty()) throw Error(ErrorCode::InvalidConfig, "C grid is empty");
  if (folds < 2) throw Error(ErrorCode::InvalidConfig, "folds must be >= 2");
  if (X.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "X and y differ in length");
  if (X.size() < folds)
    throw Error(ErrorCode::TooFewExamplesForFolds,
                std::to_string(X.size()) + " examples cannot fill " + std::to_string(folds) + " folds");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  std::vector<std::size_t> strata;
  for (auto l : y) strata.push_back(label_index(l));
  const auto split = kfold(X.size(), folds, derive_seed(seed, "select-C"), strata);
  CSelection sel;
  double best = -1;
  for (double C : grid) {
    double total = 0;
    for (const auto& f : split) {
      std::vector<SparseVector> xt, xv;
      std::vector<StageLabel> yt, yv;
      for (auto i : f.train) {
        xt.push_back(X[i]);
        yt.push_back(y[i]);
      }
      for (auto i : f.validation) {
        xv.push_back(X[i]);
        yv.push_back(y[i]);
      }
      auto cfg = base;
      cfg.C = C;
      const auto m = train_svm(xt, yt, cfg);
      const auto preds = m.predict(xv);
      total += evaluate(preds, yv).f_avg;
    }
    const double mean = total / static_cast<double>(split.size());
    sel.scores.emplace_back(C, mean);
    if (mean > best) {
      best = mean;
      sel.best_C = C;
    }
  }
  return sel;
}

}  // namespace stagegate
