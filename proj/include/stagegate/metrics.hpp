#pragma once

// Confusion matrices, per-class precision/recall/F1, support-weighted F1 and
// k-fold splitting.

#include <array>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stagegate/corpus.hpp"
#include "stagegate/error.hpp"
#include "stagegate/util.hpp"

namespace stagegate {

/// Rows = gold, columns = predicted.
struct ConfusionMatrix {
  std::size_t k = kNumClasses;
  std::vector<std::size_t> counts = std::vector<std::size_t>(kNumClasses * kNumClasses, 0);

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes) : k(classes), counts(classes * classes, 0) {}

  std::size_t& at(std::size_t gold, std::size_t pred) { return counts[gold * k + pred]; }
  std::size_t at(std::size_t gold, std::size_t pred) const { return counts[gold * k + pred]; }

  std::size_t total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }
  std::size_t support(std::size_t c) const {
    std::size_t s = 0;
    for (std::size_t p = 0; p < k; ++p) s += at(c, p);
    return s;
  }
  std::size_t predicted(std::size_t c) const {
    std::size_t s = 0;
    for (std::size_t g = 0; g < k; ++g) s += at(g, c);
    return s;
  }

  bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion_indices(std::span<const std::size_t> preds, std::span<const std::size_t> golds,
                                         std::size_t classes) {
  if (preds.size() != golds.size())
    throw Error(ErrorCode::LengthMismatch, "predictions and gold labels differ in length");
  if (preds.empty()) throw Error(ErrorCode::Empty, "no predictions to score");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= classes || golds[i] >= classes)
      throw Error(ErrorCode::InvalidClassIndex, "class index out of range");
    ++cm.at(golds[i], preds[i]);
  }
  return cm;
}

inline ConfusionMatrix confusion(std::span<const StageLabel> preds, std::span<const StageLabel> golds) {
  std::vector<std::size_t> p, g;
  for (auto l : preds) p.push_back(label_index(l));
  for (auto l : golds) g.push_back(label_index(l));
  return confusion_indices(p, g, kNumClasses);
}

struct ClassScores {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;
  bool degenerate = false;  // some ratio was 0/0 and taken as 0
};

inline std::vector<ClassScores> prf(const ConfusionMatrix& cm) {
  std::vector<ClassScores> out(cm.k);
  for (std::size_t c = 0; c < cm.k; ++c) {
    auto& s = out[c];
    const double tp = static_cast<double>(cm.at(c, c));
    const double pred = static_cast<double>(cm.predicted(c));
    const double gold = static_cast<double>(cm.support(c));
    s.support = cm.support(c);
    if (pred > 0) s.precision = tp / pred;
    else s.degenerate = true;
    if (gold > 0) s.recall = tp / gold;
    else s.degenerate = true;
    if (s.precision + s.recall > 0) s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
    else s.degenerate = true;
  }
  return out;
}

/// Support-weighted mean of per-class F1.
inline double weighted_f1(std::span<const double> f1, std::span<const std::size_t> supports) {
  if (f1.size() != supports.size()) throw Error(ErrorCode::LengthMismatch, "F1 and support lengths differ");
  double num = 0, den = 0;
  for (std::size_t c = 0; c < f1.size(); ++c) {
    num += f1[c] * static_cast<double>(supports[c]);
    den += static_cast<double>(supports[c]);
  }
  if (den == 0) throw Error(ErrorCode::ZeroSupports, "all supports are zero");
  return num / den;
}

struct EvalReport {
  ConfusionMatrix cm;
  std::vector<ClassScores> per_class;
  double f_avg = 0;
  double micro_f1 = 0;  // equals accuracy for single-label data

  std::vector<double> f1s() const {
    std::vector<double> v;
    for (auto& s : per_class) v.push_back(s.f1);
    return v;
  }
};

inline EvalReport evaluate(const ConfusionMatrix& cm) {
  EvalReport r;
  r.cm = cm;
  r.per_class = prf(cm);
  std::vector<std::size_t> sup;
  for (auto& s : r.per_class) sup.push_back(s.support);
  const auto f = r.f1s();
  r.f_avg = weighted_f1(f, sup);
  std::size_t diag = 0;
  for (std::size_t c = 0; c < cm.k; ++c) diag += cm.at(c, c);
  r.micro_f1 = static_cast<double>(diag) / static_cast<double>(cm.total());
  return r;
}

inline EvalReport evaluate(std::span<const StageLabel> preds, std::span<const StageLabel> golds) {
  return evaluate(confusion(preds, golds));
}

/// CSV with one row per class plus weighted and micro rows.
inline std::string report_csv(const EvalReport& r) {
  std::string out = "class,precision,recall,f1,support,degenerate\n";
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& s = r.per_class[c];
    const std::string name =
        r.per_class.size() == kNumClasses ? std::string(label_name(label_from_index(c))) : std::to_string(c);
    out += name + "," + format_fixed(s.precision, 6) + "," + format_fixed(s.recall, 6) + "," + format_fixed(s.f1, 6) +
           "," + std::to_string(s.support) + "," + (s.degenerate ? "1" : "0") + "\n";
  }
  out += "weighted,,," + format_fixed(r.f_avg, 6) + "," + std::to_string(r.cm.total()) + ",0\n";
  out += "micro,,," + format_fixed(r.micro_f1, 6) + "," + std::to_string(r.cm.total()) + ",0\n";
  return out;
}

inline std::string confusion_csv(const ConfusionMatrix& cm) {
  auto name = [&](std::size_t c) {
    return cm.k == kNumClasses ? std::string(label_name(label_from_index(c))) : std::to_string(c);
  };
  std::string out = "gold\\pred";
  for (std::size_t c = 0; c < cm.k; ++c) out += "," + name(c);
  out += "\n";
  for (std::size_t g = 0; g < cm.k; ++g) {
    out += name(g);
    for (std::size_t p = 0; p < cm.k; ++p) out += "," + std::to_string(cm.at(g, p));
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// k-fold

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Shuffles (per stratum when strata are given), concatenates strata in
/// order and deals items round-robin, so fold sizes differ by at most one.
inline std::vector<Fold> kfold(std::size_t n, std::size_t k, std::uint64_t seed,
                               std::span<const std::size_t> strata = {}) {
  if (k < 2) throw Error(ErrorCode::InvalidConfig, "k must be >= 2");
  if (n < k) throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " items");
  if (!strata.empty() && strata.size() != n) throw Error(ErrorCode::LengthMismatch, "strata length differs from n");
  Rng rng(derive_seed(seed, "kfold"));
  std::vector<std::size_t> order;
  if (strata.empty()) {
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
  } else {
    const std::size_t groups = *std::max_element(strata.begin(), strata.end()) + 1;
    for (std::size_t g = 0; g < groups; ++g) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i) {
        if (strata[i] == g) members.push_back(i);
      }
      rng.shuffle(members);
      order.insert(order.end(), members.begin(), members.end());
    }
  }
  std::vector<std::size_t> fold_of(n);
  for (std::size_t j = 0; j < n; ++j) fold_of[order[j]] = j % k;
  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < k; ++f) {
      (fold_of[i] == f ? folds[f].validation : folds[f].train).push_back(i);
    }
  }
  return folds;
}

/// Folds over a dataset; stratified folds use the label (unlabeled = own stratum).
inline std::vector<Fold> kfold(const Dataset& d, std::size_t k, std::uint64_t seed, bool stratified) {
  if (!stratified) return kfold(d.size(), k, seed);
  std::vector<std::size_t> strata;
  for (const auto& m : d) strata.push_back(m.label ? label_index(*m.label) : kNumClasses);
  return kfold(d.size(), k, seed, strata);
}

}  // namespace stagegate
