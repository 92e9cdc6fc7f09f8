#pragma once

// Split conformal prediction: calibrate a score quantile on labeled data,
// then admit every query label whose score does not exceed it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "confot/core_types.hpp"
#include "confot/error.hpp"
#include "confot/nonconformity.hpp"

namespace confot {

struct ConformalThreshold {
  double s_hat = std::numeric_limits<double>::infinity();
  double alpha = 0.1;
  ScoreKind kind;
  std::size_t n_calibration = 0;

  // True when the quantile rank exceeds N and every label is admitted.
  bool admits_all() const noexcept { return std::isinf(s_hat); }
};

// Sorted, duplicate-free class indices. May be empty.
class PredictionSet {
 public:
  PredictionSet() = default;

  explicit PredictionSet(std::vector<std::size_t> members) : members_(std::move(members)) {
    std::sort(members_.begin(), members_.end());
    if (std::adjacent_find(members_.begin(), members_.end()) != members_.end()) {
      throw DataError("prediction set members must be unique");
    }
  }

  static PredictionSet full(std::size_t num_classes) {
    PredictionSet s;
    s.members_.resize(num_classes);
    for (std::size_t k = 0; k < num_classes; ++k) s.members_[k] = k;
    return s;
  }

  bool contains(std::size_t k) const noexcept {
    return std::binary_search(members_.begin(), members_.end(), k);
  }
  std::size_t size() const noexcept { return members_.size(); }
  bool empty() const noexcept { return members_.empty(); }
  std::span<const std::size_t> members() const noexcept { return members_; }

  bool operator==(const PredictionSet&) const = default;

 private:
  std::vector<std::size_t> members_;
};

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie strictly inside (0, 1)");
}

// k = ceil((N + 1)(1 - alpha)). The 1e-9 slack keeps products such as
// 100 * 0.9 = 90.00000000000001 from rounding up to the next integer.
inline std::size_t conformal_rank(std::size_t n_calibration, double alpha) {
  check_alpha(alpha);
  const double target = static_cast<double>(n_calibration + 1) * (1.0 - alpha);
  return static_cast<std::size_t>(std::ceil(target - 1e-9));
}

inline ConformalThreshold calibrate_threshold(std::span<const double> cal_scores, double alpha,
                                              const ScoreKind& kind = ScoreKind::lac()) {
  check_alpha(alpha);
  if (cal_scores.empty()) throw DataError("cannot calibrate on an empty score vector");
  for (double s : cal_scores) {
    if (!std::isfinite(s)) throw DataError("non-finite calibration score");
  }
  ConformalThreshold t;
  t.alpha = alpha;
  t.kind = kind;
  t.n_calibration = cal_scores.size();

  const std::size_t k = conformal_rank(cal_scores.size(), alpha);
  if (k > cal_scores.size()) return t;  // s_hat stays +inf

  std::vector<double> scratch(cal_scores.begin(), cal_scores.end());
  const auto nth = scratch.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(scratch.begin(), nth, scratch.end());
  t.s_hat = *nth;
  return t;
}

inline PredictionSet build_prediction_set(std::span<const double> label_scores,
                                          const ConformalThreshold& threshold) {
  if (threshold.admits_all()) return PredictionSet::full(label_scores.size());
  std::vector<std::size_t> members;
  for (std::size_t k = 0; k < label_scores.size(); ++k) {
    if (label_scores[k] <= threshold.s_hat) members.push_back(k);
  }
  return PredictionSet(std::move(members));
}

// Variant that checks the scores were produced by the threshold's score kind.
inline PredictionSet build_prediction_set(std::span<const double> label_scores,
                                          const ConformalThreshold& threshold,
                                          const ScoreKind& scores_kind) {
  if (!(scores_kind == threshold.kind)) {
    throw ContractError("label scores computed with " + scores_kind.name() +
                        " but threshold calibrated with " + threshold.kind.name());
  }
  return build_prediction_set(label_scores, threshold);
}

// Score of each calibration sample at its own label.
inline std::vector<double> calibration_scores(const LabeledProbabilities& cal,
                                              std::span<const double> u, const ScoreKind& kind) {
  if (u.size() != cal.num_samples()) throw ShapeError("tie-breaker length differs from calibration size");
  std::vector<double> scores(cal.num_samples());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = score_label(cal.values.column(i), cal.labels[i], u[i], kind);
  }
  return scores;
}

// Full label-score vectors for each query sample, flattened column-major.
inline Matrix query_label_scores(const ProbabilityMatrix& query, std::span<const double> u,
                                 const ScoreKind& kind) {
  if (u.size() != query.num_samples()) throw ShapeError("tie-breaker length differs from query size");
  Matrix scores(query.num_classes(), query.num_samples());
  for (std::size_t i = 0; i < query.num_samples(); ++i) {
    const auto s = score_all_labels(query.column(i), u[i], kind);
    std::copy(s.begin(), s.end(), scores.column(i).begin());
  }
  return scores;
}

inline std::vector<PredictionSet> build_prediction_sets(const Matrix& label_scores,
                                                        const ConformalThreshold& threshold) {
  std::vector<PredictionSet> sets;
  sets.reserve(label_scores.cols());
  for (std::size_t i = 0; i < label_scores.cols(); ++i) {
    sets.push_back(build_prediction_set(label_scores.column(i), threshold));
  }
  return sets;
}

struct ConformalOutcome {
  ConformalThreshold threshold;
  std::vector<PredictionSet> sets;
};

// The three-step recipe with caller-supplied tie-breakers.
inline ConformalOutcome conformalize(const LabeledProbabilities& cal, const ProbabilityMatrix& query,
                                     const ScoreKind& kind, double alpha,
                                     std::span<const double> cal_u, std::span<const double> query_u) {
  if (cal.num_classes() != query.num_classes() && query.num_samples() > 0) {
    throw ShapeError("calibration and query class counts differ");
  }
  ConformalOutcome out;
  out.threshold = calibrate_threshold(calibration_scores(cal, cal_u, kind), alpha, kind);
  out.sets = build_prediction_sets(query_label_scores(query, query_u, kind), out.threshold);
  return out;
}

// One tie-breaker stream covers calibration samples first, then queries.
inline std::vector<PredictionSet> conformal_pipeline(const LabeledProbabilities& cal,
                                                     const ProbabilityMatrix& query,
                                                     const ScoreKind& kind, double alpha,
                                                     std::uint64_t seed) {
  const std::size_t N = cal.num_samples();
  const std::size_t M = query.num_samples();
  const auto ties = TieBreaker::from_seed(seed, N + M);
  return conformalize(cal, query, kind, alpha, ties.slice(0, N), ties.slice(N, M)).sets;
}

}  // namespace confot
