#pragma once

// LAC, APS and RAPS non-conformity scores. Lower scores mean the label
// conforms better with the predicted distribution.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "confot/core_types.hpp"
#include "confot/error.hpp"

namespace confot {

enum class ScoreFamily { lac, aps, raps };

struct ScoreKind {
  ScoreFamily family = ScoreFamily::lac;
  double lambda = 0.0;      // RAPS penalty per extra rank
  std::size_t k_reg = 0;    // RAPS rank where the penalty starts

  static ScoreKind lac() { return {ScoreFamily::lac, 0.0, 0}; }
  static ScoreKind aps() { return {ScoreFamily::aps, 0.0, 0}; }
  static ScoreKind raps(double lambda, std::size_t k_reg) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw ParameterError("RAPS lambda must be finite and >= 0");
    }
    return {ScoreFamily::raps, lambda, k_reg};
  }

  std::string name() const {
    switch (family) {
      case ScoreFamily::lac: return "lac";
      case ScoreFamily::aps: return "aps";
      case ScoreFamily::raps: return "raps";
    }
    return "unknown";
  }

  bool operator==(const ScoreKind&) const = default;
};

// One uniform draw per sample, shared across every label of that sample.
class TieBreaker {
 public:
  TieBreaker() = default;

  explicit TieBreaker(std::vector<double> u_values) : u_(std::move(u_values)) {
    for (double u : u_) {
      if (!(u >= 0.0 && u <= 1.0)) throw ParameterError("tie-breaker value outside [0, 1]");
    }
  }

  // 53-bit uniforms in [0, 1) from a 64-bit Mersenne Twister stream.
  static TieBreaker from_seed(std::uint64_t seed, std::size_t count) {
    std::mt19937_64 gen(seed);
    std::vector<double> u(count);
    for (double& v : u) v = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    TieBreaker out;
    out.u_ = std::move(u);
    return out;
  }

  std::size_t size() const noexcept { return u_.size(); }
  double operator[](std::size_t i) const noexcept { return u_[i]; }
  std::span<const double> values() const noexcept { return u_; }

  std::span<const double> slice(std::size_t first, std::size_t count) const {
    if (first + count > u_.size()) throw IndexError("tie-breaker slice out of range");
    return std::span<const double>(u_).subspan(first, count);
  }

 private:
  std::vector<double> u_;
};

namespace detail {

inline void check_label(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) {
    throw IndexError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(probs.size()) + " classes");
  }
}

inline void check_u(double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw ParameterError("tie-breaker u must lie in [0, 1]");
}

inline double rank_penalty(std::size_t rank, double lambda, std::size_t k_reg) {
  return rank > k_reg ? lambda * static_cast<double>(rank - k_reg) : 0.0;
}

// Mass and count of entries strictly greater than `value`, summed in
// descending order. score_all_labels accumulates in the same order, so a
// single-label score and the matching entry of the full vector agree bitwise.
struct MassAbove {
  double mass = 0.0;
  std::size_t count = 0;
};

inline MassAbove mass_above(std::span<const double> probs, double value) {
  std::vector<double> sorted(probs.begin(), probs.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  MassAbove out;
  for (double p : sorted) {
    if (!(p > value)) break;
    out.mass += p;
    ++out.count;
  }
  return out;
}

}  // namespace detail

inline double lac_score(std::span<const double> probs, std::size_t label) {
  detail::check_label(probs, label);
  return 1.0 - probs[label];
}

inline double aps_score(std::span<const double> probs, std::size_t label, double u) {
  detail::check_label(probs, label);
  detail::check_u(u);
  const auto above = detail::mass_above(probs, probs[label]);
  return above.mass + probs[label] * u;
}

inline double raps_score(std::span<const double> probs, std::size_t label, double u,
                         double lambda, std::size_t k_reg) {
  if (!(lambda >= 0.0)) throw ParameterError("RAPS lambda must be >= 0");
  detail::check_label(probs, label);
  detail::check_u(u);
  const auto above = detail::mass_above(probs, probs[label]);
  const double aps = above.mass + probs[label] * u;
  return aps + detail::rank_penalty(above.count + 1, lambda, k_reg);
}

inline double score_label(std::span<const double> probs, std::size_t label, double u,
                          const ScoreKind& kind) {
  switch (kind.family) {
    case ScoreFamily::lac: return lac_score(probs, label);
    case ScoreFamily::aps: return aps_score(probs, label, u);
    case ScoreFamily::raps: return raps_score(probs, label, u, kind.lambda, kind.k_reg);
  }
  throw ParameterError("unknown score family");
}

// Score of every label for one sample, all with the same u. O(K log K).
inline std::vector<double> score_all_labels(std::span<const double> probs, double u,
                                            const ScoreKind& kind) {
  const std::size_t K = probs.size();
  std::vector<double> out(K);
  if (kind.family == ScoreFamily::lac) {
    for (std::size_t k = 0; k < K; ++k) out[k] = 1.0 - probs[k];
    return out;
  }
  detail::check_u(u);
  if (kind.family == ScoreFamily::raps && !(kind.lambda >= 0.0)) {
    throw ParameterError("RAPS lambda must be >= 0");
  }

  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });

  double acc = 0.0;
  std::size_t seen = 0;
  std::size_t g = 0;
  while (g < K) {
    // [g, end) is one group of equal probabilities; none of them is in
    // another member's strictly-greater set.
    std::size_t end = g + 1;
    while (end < K && probs[order[end]] == probs[order[g]]) ++end;
    for (std::size_t j = g; j < end; ++j) {
      const std::size_t k = order[j];
      double s = acc + probs[k] * u;
      if (kind.family == ScoreFamily::raps) {
        s += detail::rank_penalty(seen + 1, kind.lambda, kind.k_reg);
      }
      out[k] = s;
    }
    for (std::size_t j = g; j < end; ++j) acc += probs[order[j]];
    seen = end;
    g = end;
  }
  return out;
}

}  // namespace confot
