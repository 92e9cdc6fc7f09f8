#pragma once

// Transductive label transfer through entropic optimal transport.
//
// Calibration and query logits are stacked into one K x n similarity
// matrix S. The codes Q* = Diag(r) Q0 Diag(c) are found by Sinkhorn-Knopp
// scaling of Q0 = exp(S / tau) / sum(exp(S / tau)) so that rows carry the
// label marginal kappa and columns carry 1/n each. Columns are then
// renormalized into per-sample class distributions and scored like any
// other probability output.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "confot/conformal_engine.hpp"
#include "confot/core_types.hpp"
#include "confot/error.hpp"
#include "confot/nonconformity.hpp"

namespace confot {

enum class LabelPrior { empirical, uniform };

inline std::string to_string(LabelPrior prior) {
  return prior == LabelPrior::empirical ? "empirical" : "uniform";
}

struct TransportConfig {
  double temperature = 1.0;
  std::size_t iterations = 3;
  LabelPrior prior = LabelPrior::empirical;
  double epsilon_floor = 1e-12;
  // Add one pseudo-count per class to the empirical prior.
  bool laplace_smoothing = false;
  // When > 0, stop before `iterations` once the row-sum residual drops below it.
  double tolerance = 0.0;

  void validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
      throw ParameterError("transport temperature must be positive and finite");
    }
    if (iterations < 1) throw ParameterError("transport needs at least one iteration");
    if (!(epsilon_floor >= 0.0)) throw ParameterError("epsilon floor must be >= 0");
    if (!(tolerance >= 0.0)) throw ParameterError("tolerance must be >= 0");
  }
};

struct TransportPlan {
  ProbabilityMatrix codes;               // column-normalized Q*
  ClassMarginal row_marginal;            // kappa
  double column_marginal_mass = 0.0;     // 1/n
  std::vector<double> row_scaling;       // r after the last iteration
  std::vector<double> column_scaling;    // c after the last iteration
  std::vector<double> raw_row_sums;      // row sums of Q* before column normalization
  std::vector<double> raw_column_sums;   // column sums of Q* before column normalization
  std::size_t iterations_run = 0;
  std::vector<std::size_t> empty_classes;  // classes with kappa_k == 0 (all-zero code rows)
};

inline SimilarityMatrix assemble_joint_matrix(const SimilarityMatrix& cal,
                                              const SimilarityMatrix& query) {
  if (cal.num_classes() != query.num_classes()) {
    throw ShapeError("calibration has " + std::to_string(cal.num_classes()) +
                     " classes but query has " + std::to_string(query.num_classes()));
  }
  if (query.num_samples() == 0) return cal;
  const std::size_t K = cal.num_classes();
  std::vector<double> joint;
  joint.reserve(K * (cal.num_samples() + query.num_samples()));
  joint.insert(joint.end(), cal.matrix().values().begin(), cal.matrix().values().end());
  joint.insert(joint.end(), query.matrix().values().begin(), query.matrix().values().end());
  return SimilarityMatrix(Matrix(K, cal.num_samples() + query.num_samples(), std::move(joint)));
}

inline ClassMarginal estimate_label_marginal(std::span<const std::size_t> cal_labels,
                                             std::size_t num_classes, LabelPrior prior,
                                             bool laplace_smoothing = false) {
  if (num_classes == 0) throw ParameterError("class count must be positive");
  if (prior == LabelPrior::uniform) return ClassMarginal::uniform(num_classes);
  if (cal_labels.empty()) throw DataError("empirical label marginal needs calibration labels");

  std::vector<double> counts(num_classes, laplace_smoothing ? 1.0 : 0.0);
  for (std::size_t y : cal_labels) {
    if (y >= num_classes) throw DataError("calibration label out of range");
    counts[y] += 1.0;
  }
  const double total = static_cast<double>(cal_labels.size()) +
                       (laplace_smoothing ? static_cast<double>(num_classes) : 0.0);
  for (double& c : counts) c /= total;
  return ClassMarginal(std::move(counts));
}

namespace detail {

inline void require_finite(std::span<const double> v, const char* what, std::size_t iteration) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite ") + what + " in Sinkhorn iteration " +
                         std::to_string(iteration));
    }
  }
}

// out = Q c, accumulated column by column (storage is column-contiguous).
inline void multiply(const Matrix& Q, std::span<const double> c, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < Q.cols(); ++i) {
    const double ci = c[i];
    const auto col = Q.column(i);
    for (std::size_t k = 0; k < col.size(); ++k) out[k] += col[k] * ci;
  }
}

// out = Q^T r
inline void multiply_transposed(const Matrix& Q, std::span<const double> r, std::span<double> out) {
  for (std::size_t i = 0; i < Q.cols(); ++i) {
    const auto col = Q.column(i);
    double acc = 0.0;
    for (std::size_t k = 0; k < col.size(); ++k) acc += col[k] * r[k];
    out[i] = acc;
  }
}

}  // namespace detail

inline TransportPlan sinkhorn_codes(const SimilarityMatrix& S, const ClassMarginal& kappa,
                                    const TransportConfig& config) {
  config.validate();
  const std::size_t K = S.num_classes();
  const std::size_t n = S.num_samples();
  if (n == 0) throw DataError("transport needs at least one sample");
  if (kappa.size() != K) throw ShapeError("label marginal length differs from class count");
  const double floor = config.epsilon_floor;
  const auto clamp = [floor](double d) { return d < floor ? floor : d; };

  // Q0: globally normalized exp(S / tau), shifted by the global max.
  Matrix Q(K, n);
  {
    const auto src = S.matrix().values();
    const double top = *std::max_element(src.begin(), src.end());
    auto dst = Q.values();
    double total = 0.0;
    for (std::size_t j = 0; j < src.size(); ++j) {
      dst[j] = std::exp((src[j] - top) / config.temperature);
      total += dst[j];
    }
    for (double& v : dst) v /= total;
  }

  TransportPlan plan;
  plan.row_marginal = kappa;
  plan.column_marginal_mass = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < K; ++k) {
    if (kappa[k] == 0.0) plan.empty_classes.push_back(k);
  }

  std::vector<double> r(K, 0.0);
  std::vector<double> c(n, 1.0);
  std::vector<double> Qc(K);
  std::vector<double> Qtr(n);
  const double nu = plan.column_marginal_mass;

  std::size_t t = 1;
  for (; t <= config.iterations; ++t) {
    detail::multiply(Q, c, Qc);
    if (config.tolerance > 0.0 && t > 1) {
      // Row sums of Diag(r) Q0 Diag(c) with the previous r are r_k (Q0 c)_k.
      double residual = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        residual = std::max(residual, std::abs(r[k] * Qc[k] - kappa[k]));
      }
      if (residual <= config.tolerance) break;
    }
    for (std::size_t k = 0; k < K; ++k) r[k] = kappa[k] / clamp(Qc[k]);
    detail::require_finite(r, "row scaling", t);

    detail::multiply_transposed(Q, r, Qtr);
    for (std::size_t i = 0; i < n; ++i) c[i] = nu / clamp(Qtr[i]);
    detail::require_finite(c, "column scaling", t);
  }
  plan.iterations_run = t - 1;

  // Q* = Diag(r) Q0 Diag(c), then each column divided by its sum.
  plan.raw_row_sums.assign(K, 0.0);
  plan.raw_column_sums.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto col = Q.column(i);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      col[k] *= r[k] * c[i];
      plan.raw_row_sums[k] += col[k];
      sum += col[k];
    }
    plan.raw_column_sums[i] = sum;
    if (!(sum > 0.0) || !std::isfinite(sum)) {
      throw NumericError("code column " + std::to_string(i) +
                         " has no mass; logits span too wide a range for temperature " +
                         std::to_string(config.temperature));
    }
    for (double& v : col) v /= sum;
  }

  plan.row_scaling = std::move(r);
  plan.column_scaling = std::move(c);
  plan.codes = ProbabilityMatrix(std::move(Q));
  return plan;
}

// Codes of the calibration and query samples after one joint transduction.
struct ConfOtCodes {
  LabeledProbabilities calibration;
  ProbabilityMatrix query;
  ClassMarginal kappa;
  std::vector<std::size_t> empty_classes;
  std::size_t iterations_run = 0;
};

inline ConfOtCodes transduce(const LabeledSplit& cal, const SimilarityMatrix& query,
                             const TransportConfig& config) {
  if (cal.num_samples() == 0) throw DataError("Conf-OT needs at least one calibration sample");
  const std::size_t N = cal.num_samples();
  const std::size_t M = query.num_samples();
  auto kappa = estimate_label_marginal(cal.labels, cal.num_classes(), config.prior,
                                       config.laplace_smoothing);
  auto plan = sinkhorn_codes(assemble_joint_matrix(cal.values, query), kappa, config);

  ConfOtCodes out;
  out.calibration = LabeledProbabilities(plan.codes.column_range(0, N), cal.labels);
  out.query = plan.codes.column_range(N, M);
  out.kappa = std::move(kappa);
  out.empty_classes = std::move(plan.empty_classes);
  out.iterations_run = plan.iterations_run;
  return out;
}

inline std::vector<PredictionSet> conf_ot_pipeline(const LabeledSplit& cal,
                                                   const SimilarityMatrix& query,
                                                   const TransportConfig& config,
                                                   const ScoreKind& kind, double alpha,
                                                   std::uint64_t seed) {
  if (cal.num_classes() != query.num_classes()) throw ShapeError("class counts differ");
  if (query.num_samples() == 0) return {};
  const auto codes = transduce(cal, query, config);
  const std::size_t N = cal.num_samples();
  const std::size_t M = query.num_samples();
  const auto ties = TieBreaker::from_seed(seed, N + M);
  return conformalize(codes.calibration, codes.query, kind, alpha, ties.slice(0, N),
                      ties.slice(N, M))
      .sets;
}

}  // namespace confot
