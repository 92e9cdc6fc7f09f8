#pragma once

// Gaussian class-conditional logit generator.
//
// A sample of class y has features z = separation * e_y + noise * eps with
// eps ~ N(0, I). The upstream "model" emits the Bayes logits for a uniform
// class prior, (separation / noise^2) * z, so its softmax is calibrated when
// labels really are uniform.
//
//   none         labels uniform; the model is well specified.
//   prior        labels follow pi_k ~ skew^k for calibration and test alike;
//                the model still assumes a uniform prior.
//   temperature  labels uniform; logits multiplied by temperature_factor.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "confot/core_types.hpp"
#include "confot/error.hpp"

namespace confot {

enum class SyntheticShift { none, prior, temperature };

inline std::string to_string(SyntheticShift s) {
  switch (s) {
    case SyntheticShift::none: return "none";
    case SyntheticShift::prior: return "prior";
    case SyntheticShift::temperature: return "temperature";
  }
  return "unknown";
}

struct SyntheticConfig {
  std::size_t classes = 10;
  std::size_t calibration = 500;
  std::size_t test = 500;
  SyntheticShift shift = SyntheticShift::none;
  std::uint64_t seed = 0;
  double separation = 2.0;
  double noise = 1.0;
  double skew = 0.7;
  double temperature_factor = 0.5;

  void validate() const {
    if (classes < 2) throw ParameterError("synthetic data needs at least 2 classes");
    if (calibration + test == 0) throw ParameterError("synthetic data needs at least one sample");
    if (!(noise > 0.0)) throw ParameterError("noise must be positive");
    if (!(skew > 0.0)) throw ParameterError("skew must be positive");
    if (!(temperature_factor > 0.0)) throw ParameterError("temperature factor must be positive");
  }
};

inline std::vector<double> synthetic_class_prior(const SyntheticConfig& config) {
  std::vector<double> prior(config.classes, 1.0);
  if (config.shift == SyntheticShift::prior) {
    for (std::size_t k = 1; k < prior.size(); ++k) prior[k] = prior[k - 1] * config.skew;
  }
  double total = 0.0;
  for (double p : prior) total += p;
  for (double& p : prior) p /= total;
  return prior;
}

struct SyntheticData {
  LabeledSplit calibration;
  LabeledSplit test;

  // Calibration samples followed by test samples.
  LabeledSplit combined() const {
    std::vector<double> values(calibration.values.matrix().values().begin(),
                               calibration.values.matrix().values().end());
    values.insert(values.end(), test.values.matrix().values().begin(),
                  test.values.matrix().values().end());
    std::vector<std::size_t> labels = calibration.labels;
    labels.insert(labels.end(), test.labels.begin(), test.labels.end());
    const std::size_t K = calibration.num_classes();
    const std::size_t n = labels.size();
    return LabeledSplit(SimilarityMatrix(Matrix(K, n, std::move(values))), std::move(labels));
  }
};

inline SyntheticData generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  std::mt19937_64 gen(config.seed);
  const auto prior = synthetic_class_prior(config);
  std::discrete_distribution<std::size_t> draw_label(prior.begin(), prior.end());
  std::normal_distribution<double> gauss(0.0, 1.0);

  const std::size_t K = config.classes;
  double scale = config.separation / (config.noise * config.noise);
  if (config.shift == SyntheticShift::temperature) scale *= config.temperature_factor;

  const auto make = [&](std::size_t count) {
    Matrix logits(K, count);
    std::vector<std::size_t> labels(count);
    for (std::size_t i = 0; i < count; ++i) {
      labels[i] = draw_label(gen);
      for (std::size_t k = 0; k < K; ++k) {
        const double mean = k == labels[i] ? config.separation : 0.0;
        logits(k, i) = scale * (mean + config.noise * gauss(gen));
      }
    }
    return LabeledSplit(SimilarityMatrix(std::move(logits)), std::move(labels));
  };

  SyntheticData data;
  data.calibration = make(config.calibration);
  data.test = make(config.test);
  return data;
}

}  // namespace confot
