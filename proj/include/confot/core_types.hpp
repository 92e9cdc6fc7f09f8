#pragma once

// Dense containers shared by every module, plus the softmax / argmax
// transforms that turn logits into class probabilities.
//
// Matrices are class-major: row k is class k, column i is sample i. Storage
// is column-contiguous so that each sample's K values form one span.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "confot/error.hpp"

namespace confot {

inline constexpr double kStochasticTolerance = 1e-9;

class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  // `column_major` holds cols blocks of `rows` values each.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> column_major)
      : rows_(rows), cols_(cols), values_(std::move(column_major)) {
    if (values_.size() != rows_ * cols_) {
      throw ShapeError("matrix storage holds " + std::to_string(values_.size()) +
                       " values, expected " + std::to_string(rows_ * cols_));
    }
  }

  // Build from one vector per row (one per class).
  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    const std::size_t cols = rows.front().size();
    Matrix m(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != cols) throw ShapeError("ragged row input");
      for (std::size_t c = 0; c < cols; ++c) m(r, c) = rows[r][c];
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double operator()(std::size_t r, std::size_t c) const noexcept {
    return values_[c * rows_ + r];
  }
  double& operator()(std::size_t r, std::size_t c) noexcept {
    return values_[c * rows_ + r];
  }

  std::span<const double> column(std::size_t c) const noexcept {
    return {values_.data() + c * rows_, rows_};
  }
  std::span<double> column(std::size_t c) noexcept {
    return {values_.data() + c * rows_, rows_};
  }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  // Copy of columns [first, first + count).
  Matrix column_range(std::size_t first, std::size_t count) const {
    if (first + count > cols_) throw ShapeError("column range out of bounds");
    auto begin = values_.begin() + static_cast<std::ptrdiff_t>(first * rows_);
    return Matrix(rows_, count,
                  std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * rows_)));
  }

  Matrix select_columns(std::span<const std::size_t> indices) const {
    Matrix out(rows_, indices.size());
    for (std::size_t j = 0; j < indices.size(); ++j) {
      if (indices[j] >= cols_) throw IndexError("column index out of range");
      auto src = column(indices[j]);
      std::copy(src.begin(), src.end(), out.column(j).begin());
    }
    return out;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// K x n class-by-sample logits. K >= 2 and every entry finite.
// n == 0 is admitted so that an empty query batch is representable.
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;

  explicit SimilarityMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() < 2) {
      throw DataError("similarity matrix needs at least 2 classes, got " +
                      std::to_string(values_.rows()));
    }
    const auto v = values_.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i])) {
        throw DataError("non-finite logit at class " + std::to_string(i % values_.rows()) +
                        ", sample " + std::to_string(i / values_.rows()));
      }
    }
  }

  static SimilarityMatrix from_rows(const std::vector<std::vector<double>>& class_rows) {
    return SimilarityMatrix(Matrix::from_rows(class_rows));
  }

  static SimilarityMatrix empty(std::size_t num_classes) {
    return SimilarityMatrix(Matrix(num_classes, 0));
  }

  std::size_t num_classes() const noexcept { return values_.rows(); }
  std::size_t num_samples() const noexcept { return values_.cols(); }
  double operator()(std::size_t k, std::size_t i) const noexcept { return values_(k, i); }
  std::span<const double> column(std::size_t i) const noexcept { return values_.column(i); }
  const Matrix& matrix() const noexcept { return values_; }

  SimilarityMatrix column_range(std::size_t first, std::size_t count) const {
    return SimilarityMatrix(values_.column_range(first, count));
  }
  SimilarityMatrix select_columns(std::span<const std::size_t> indices) const {
    return SimilarityMatrix(values_.select_columns(indices));
  }

  bool operator==(const SimilarityMatrix&) const = default;

 private:
  Matrix values_;
};

// K x n matrix whose columns are probability vectors.
class ProbabilityMatrix {
 public:
  ProbabilityMatrix() = default;

  explicit ProbabilityMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() < 2) throw DataError("probability matrix needs at least 2 classes");
    for (std::size_t i = 0; i < values_.cols(); ++i) {
      double sum = 0.0;
      for (double p : values_.column(i)) {
        if (!(p >= 0.0 && p <= 1.0)) {
          throw DataError("probability outside [0, 1] in sample " + std::to_string(i));
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > kStochasticTolerance) {
        throw DataError("probability column " + std::to_string(i) + " sums to " +
                        std::to_string(sum));
      }
    }
  }

  static ProbabilityMatrix from_rows(const std::vector<std::vector<double>>& class_rows) {
    return ProbabilityMatrix(Matrix::from_rows(class_rows));
  }

  std::size_t num_classes() const noexcept { return values_.rows(); }
  std::size_t num_samples() const noexcept { return values_.cols(); }
  double operator()(std::size_t k, std::size_t i) const noexcept { return values_(k, i); }
  std::span<const double> column(std::size_t i) const noexcept { return values_.column(i); }
  const Matrix& matrix() const noexcept { return values_; }

  ProbabilityMatrix column_range(std::size_t first, std::size_t count) const {
    ProbabilityMatrix out;
    out.values_ = values_.column_range(first, count);
    return out;
  }
  ProbabilityMatrix select_columns(std::span<const std::size_t> indices) const {
    ProbabilityMatrix out;
    out.values_ = values_.select_columns(indices);
    return out;
  }

 private:
  Matrix values_;
};

// Probability distribution over K classes (also reused for sample marginals).
class ClassMarginal {
 public:
  ClassMarginal() = default;

  explicit ClassMarginal(std::vector<double> weights) : weights_(std::move(weights)) {
    if (weights_.empty()) throw DataError("empty marginal");
    double sum = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw DataError("marginal weight must be finite and >= 0");
      sum += w;
    }
    if (std::abs(sum - 1.0) > kStochasticTolerance) {
      throw DataError("marginal sums to " + std::to_string(sum) + ", expected 1");
    }
  }

  static ClassMarginal uniform(std::size_t size) {
    return ClassMarginal(std::vector<double>(size, 1.0 / static_cast<double>(size)));
  }

  std::size_t size() const noexcept { return weights_.size(); }
  double operator[](std::size_t k) const noexcept { return weights_[k]; }
  std::span<const double> weights() const noexcept { return weights_; }

 private:
  std::vector<double> weights_;
};

inline void check_labels(std::span<const std::size_t> labels, std::size_t num_samples,
                         std::size_t num_classes) {
  if (labels.size() != num_samples) {
    throw ShapeError("label count " + std::to_string(labels.size()) + " does not match " +
                     std::to_string(num_samples) + " samples");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw DataError("label " + std::to_string(labels[i]) + " at sample " + std::to_string(i) +
                      " is not below the class count " + std::to_string(num_classes));
    }
  }
}

// Per-sample values paired with ground-truth labels.
template <class Values>
struct Labeled {
  Values values;
  std::vector<std::size_t> labels;

  Labeled() = default;
  Labeled(Values v, std::vector<std::size_t> y) : values(std::move(v)), labels(std::move(y)) {
    check_labels(labels, values.num_samples(), values.num_classes());
  }

  std::size_t num_classes() const noexcept { return values.num_classes(); }
  std::size_t num_samples() const noexcept { return values.num_samples(); }

  Labeled subset(std::span<const std::size_t> indices) const {
    std::vector<std::size_t> y;
    y.reserve(indices.size());
    for (std::size_t i : indices) y.push_back(labels.at(i));
    return Labeled(values.select_columns(indices), std::move(y));
  }
};

using LabeledSplit = Labeled<SimilarityMatrix>;
using LabeledProbabilities = Labeled<ProbabilityMatrix>;

namespace detail {

// Stable softmax of one column, written to `out`.
inline void softmax_column(std::span<const double> logits, double temperature,
                           std::span<double> out) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp((logits[k] - top) / temperature);
    total += out[k];
  }
  for (double& v : out) v /= total;
}

}  // namespace detail

inline ProbabilityMatrix softmax_columns(const SimilarityMatrix& logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ParameterError("softmax temperature must be positive and finite");
  }
  Matrix out(logits.num_classes(), logits.num_samples());
  for (std::size_t i = 0; i < logits.num_samples(); ++i) {
    detail::softmax_column(logits.column(i), temperature, out.column(i));
  }
  return ProbabilityMatrix(std::move(out));
}

// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> values) noexcept {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return best;
}

inline std::vector<std::size_t> argmax_class(const ProbabilityMatrix& probs) {
  std::vector<std::size_t> out(probs.num_samples());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = argmax(probs.column(i));
  return out;
}

}  // namespace confot
