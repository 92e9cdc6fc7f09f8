#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "confot/conformal_engine.hpp"
#include "confot/core_types.hpp"
#include "confot/error.hpp"

namespace confot {

struct MetricsReport {
  double top1 = 0.0;
  double coverage = 0.0;
  double avg_size = 0.0;
  double ccv = 0.0;  // percentage points
  double alpha = 0.0;
  std::size_t n_test = 0;

  bool operator==(const MetricsReport&) const = default;
};

inline double empirical_coverage(std::span<const PredictionSet> sets,
                                 std::span<const std::size_t> labels) {
  if (sets.size() != labels.size()) throw ShapeError("set and label counts differ");
  if (sets.empty()) throw DataError("coverage of an empty test set is undefined");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) hits += sets[i].contains(labels[i]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(sets.size());
}

inline double average_set_size(std::span<const PredictionSet> sets) {
  if (sets.empty()) throw DataError("average set size of an empty list is undefined");
  std::size_t total = 0;
  for (const auto& s : sets) total += s.size();
  return static_cast<double>(total) / static_cast<double>(sets.size());
}

// Class-conditional coverage violation. Classes without test samples are
// left out of the mean.
inline double ccv(std::span<const PredictionSet> sets, std::span<const std::size_t> labels,
                  double alpha, std::size_t num_classes) {
  if (sets.size() != labels.size()) throw ShapeError("set and label counts differ");
  std::vector<std::size_t> seen(num_classes, 0);
  std::vector<std::size_t> covered(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw DataError("label out of range in CCV");
    ++seen[labels[i]];
    if (sets[i].contains(labels[i])) ++covered[labels[i]];
  }
  double gap = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (seen[k] == 0) continue;
    ++present;
    gap += std::abs(static_cast<double>(covered[k]) / static_cast<double>(seen[k]) - (1.0 - alpha));
  }
  if (present == 0) throw DataError("CCV needs at least one class present in the test labels");
  return 100.0 * gap / static_cast<double>(present);
}

inline double top1_accuracy(const ProbabilityMatrix& probs, std::span<const std::size_t> labels) {
  if (probs.num_samples() != labels.size()) throw ShapeError("probability and label counts differ");
  if (labels.empty()) throw DataError("accuracy of an empty test set is undefined");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += argmax(probs.column(i)) == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

inline MetricsReport evaluate(std::span<const PredictionSet> sets, const ProbabilityMatrix& probs,
                              std::span<const std::size_t> labels, double alpha) {
  MetricsReport m;
  m.top1 = top1_accuracy(probs, labels);
  m.coverage = empirical_coverage(sets, labels);
  m.avg_size = average_set_size(sets);
  m.ccv = ccv(sets, labels, alpha, probs.num_classes());
  m.alpha = alpha;
  m.n_test = labels.size();
  return m;
}

struct SummaryStat {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation

  bool operator==(const SummaryStat&) const = default;
};

inline SummaryStat summarize(std::span<const double> values) {
  SummaryStat s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

// Per-seed metrics for one (method, score, alpha) cell and their summary.
struct ReportRow {
  std::string method;
  std::string score;
  double alpha = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsReport> per_seed;
  SummaryStat top1, coverage, size, ccv;

  void summarize_seeds() {
    std::vector<double> a, b, c, d;
    for (const auto& m : per_seed) {
      a.push_back(m.top1);
      b.push_back(m.coverage);
      c.push_back(m.avg_size);
      d.push_back(m.ccv);
    }
    top1 = summarize(a);
    coverage = summarize(b);
    size = summarize(c);
    ccv = summarize(d);
  }
};

}  // namespace confot
