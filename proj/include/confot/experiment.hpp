#pragma once

// Repeated-split evaluation protocol: for each seed, split the labeled pool
// into calibration and test, run the base (softmax) and Conf-OT pipelines
// on the same split and tie-breakers, and aggregate metrics across seeds.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ctime>
#include <exception>
#include <filesystem>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "confot/conformal_engine.hpp"
#include "confot/core_types.hpp"
#include "confot/dataset_io.hpp"
#include "confot/error.hpp"
#include "confot/metrics.hpp"
#include "confot/nonconformity.hpp"
#include "confot/sinkhorn_transport.hpp"

namespace confot {

enum class Method { base, conf_ot };

inline std::string to_string(Method m) { return m == Method::base ? "base" : "conf_ot"; }

// How batch-mode Conf-OT picks the threshold for each query chunk.
enum class BatchThreshold {
  per_chunk,   // recalibrate on the calibration codes of each chunk's transduction
  full_batch,  // reuse the threshold from one full-batch transduction
};

inline std::string to_string(BatchThreshold b) {
  return b == BatchThreshold::per_chunk ? "per_chunk" : "full_batch";
}

struct ExperimentConfig {
  std::filesystem::path logits_path;
  std::filesystem::path labels_path;
  std::vector<double> alphas{0.1, 0.05};
  std::vector<ScoreKind> scores{ScoreKind::lac(), ScoreKind::aps(), ScoreKind::raps(0.001, 1)};
  std::vector<Method> methods{Method::base, Method::conf_ot};
  double cal_ratio = 0.5;
  std::size_t seeds = 20;
  std::uint64_t base_seed = 0;
  TransportConfig transport;
  double base_temperature = 1.0;  // softmax temperature of the base pipeline
  std::optional<std::size_t> query_batch_size;
  BatchThreshold batch_threshold = BatchThreshold::per_chunk;
  std::size_t jobs = 1;  // worker threads; 0 = hardware concurrency
  std::filesystem::path output_path;
  ReportFormat output_format = ReportFormat::json;

  void validate() const {
    if (alphas.empty()) throw ParameterError("at least one alpha is required");
    for (double a : alphas) check_alpha(a);
    if (scores.empty()) throw ParameterError("at least one score is required");
    if (methods.empty()) throw ParameterError("at least one method is required");
    if (!(cal_ratio > 0.0 && cal_ratio < 1.0)) throw ParameterError("cal_ratio must lie strictly inside (0, 1)");
    if (seeds < 1) throw ParameterError("seeds must be >= 1");
    if (!(base_temperature > 0.0)) throw ParameterError("base temperature must be positive");
    if (query_batch_size && *query_batch_size == 0) throw ParameterError("batch size must be positive");
    transport.validate();
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["logits"] = logits_path.string();
    j["labels"] = labels_path.string();
    j["alphas"] = alphas;
    auto s = nlohmann::ordered_json::array();
    for (const auto& k : scores) {
      nlohmann::ordered_json e;
      e["name"] = k.name();
      if (k.family == ScoreFamily::raps) {
        e["lambda"] = k.lambda;
        e["k_reg"] = k.k_reg;
      }
      s.push_back(std::move(e));
    }
    j["scores"] = std::move(s);
    auto m = nlohmann::ordered_json::array();
    for (auto method : methods) m.push_back(to_string(method));
    j["methods"] = std::move(m);
    j["cal_ratio"] = cal_ratio;
    j["seeds"] = seeds;
    j["base_seed"] = base_seed;
    j["transport"] = {{"temperature", transport.temperature},
                      {"iterations", transport.iterations},
                      {"prior", to_string(transport.prior)},
                      {"epsilon_floor", transport.epsilon_floor},
                      {"laplace_smoothing", transport.laplace_smoothing},
                      {"tolerance", transport.tolerance}};
    j["base_temperature"] = base_temperature;
    if (query_batch_size) {
      j["query_batch_size"] = *query_batch_size;
    } else {
      j["query_batch_size"] = nullptr;
    }
    j["batch_threshold"] = to_string(batch_threshold);
    j["ccv_classes"] = "present_in_test_split";
    j["std_convention"] = "population";
    return j;
  }
};

struct SplitIndices {
  std::vector<std::size_t> calibration;
  std::vector<std::size_t> test;
};

// Seeded uniform permutation; the first floor(n * cal_ratio) indices calibrate.
inline SplitIndices split_indices(std::size_t n, double cal_ratio, std::uint64_t seed) {
  if (!(cal_ratio > 0.0 && cal_ratio < 1.0)) throw ParameterError("cal_ratio must lie strictly inside (0, 1)");
  if (n < 2) throw DataError("need at least 2 samples to split");
  const auto n_cal = static_cast<std::size_t>(std::floor(static_cast<double>(n) * cal_ratio));
  if (n_cal == 0 || n_cal == n) {
    throw DataError("split of " + std::to_string(n) + " samples at ratio " + std::to_string(cal_ratio) +
                    " leaves one side empty");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 gen(seed);
  std::shuffle(perm.begin(), perm.end(), gen);
  SplitIndices out;
  out.calibration.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_cal));
  out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_cal), perm.end());
  return out;
}

inline std::pair<LabeledSplit, LabeledSplit> split_cal_test(const LabeledSplit& data, double cal_ratio,
                                                            std::uint64_t seed) {
  const auto idx = split_indices(data.num_samples(), cal_ratio, seed);
  return {data.subset(idx.calibration), data.subset(idx.test)};
}

// Tie-breaker stream of a trial, decorrelated from the split permutation.
inline std::uint64_t tie_breaker_seed(std::uint64_t trial_seed) {
  std::uint64_t z = trial_seed + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct TrialCell {
  Method method = Method::base;
  ScoreKind score;
  double alpha = 0.0;
  MetricsReport metrics;
};

struct TrialResult {
  std::uint64_t seed = 0;
  std::vector<TrialCell> cells;
  std::vector<std::string> warnings;
};

namespace detail {

// Sets indexed [score][alpha][query sample].
using SetGrid = std::vector<std::vector<std::vector<PredictionSet>>>;

inline SetGrid make_grid(const ExperimentConfig& config) {
  return SetGrid(config.scores.size(), std::vector<std::vector<PredictionSet>>(config.alphas.size()));
}

// Calibrates every (score, alpha) on `cal` and appends the query sets to
// `grid`. With `fixed` thresholds given, those are used instead.
inline void append_sets(const ExperimentConfig& config, const LabeledProbabilities& cal,
                        const ProbabilityMatrix& query, std::span<const double> cal_u,
                        std::span<const double> query_u, SetGrid& grid,
                        const std::vector<std::vector<ConformalThreshold>>* fixed = nullptr) {
  for (std::size_t s = 0; s < config.scores.size(); ++s) {
    const auto& kind = config.scores[s];
    const auto query_scores = query_label_scores(query, query_u, kind);
    std::vector<double> cal_scores;
    if (!fixed) cal_scores = calibration_scores(cal, cal_u, kind);
    for (std::size_t a = 0; a < config.alphas.size(); ++a) {
      const auto threshold = fixed ? (*fixed)[s][a] : calibrate_threshold(cal_scores, config.alphas[a], kind);
      auto sets = build_prediction_sets(query_scores, threshold);
      auto& dst = grid[s][a];
      dst.insert(dst.end(), std::make_move_iterator(sets.begin()), std::make_move_iterator(sets.end()));
    }
  }
}

inline std::vector<std::vector<ConformalThreshold>> thresholds(const ExperimentConfig& config,
                                                               const LabeledProbabilities& cal,
                                                               std::span<const double> cal_u) {
  std::vector<std::vector<ConformalThreshold>> out(config.scores.size());
  for (std::size_t s = 0; s < config.scores.size(); ++s) {
    const auto scores = calibration_scores(cal, cal_u, config.scores[s]);
    for (double alpha : config.alphas) out[s].push_back(calibrate_threshold(scores, alpha, config.scores[s]));
  }
  return out;
}

inline void collect(const ExperimentConfig& config, Method method, const SetGrid& grid,
                    const ProbabilityMatrix& query_probs, std::span<const std::size_t> labels,
                    TrialResult& result) {
  for (std::size_t s = 0; s < config.scores.size(); ++s) {
    for (std::size_t a = 0; a < config.alphas.size(); ++a) {
      TrialCell cell;
      cell.method = method;
      cell.score = config.scores[s];
      cell.alpha = config.alphas[a];
      cell.metrics = evaluate(grid[s][a], query_probs, labels, config.alphas[a]);
      result.cells.push_back(std::move(cell));
    }
  }
}

inline void note_empty_classes(const ConfOtCodes& codes, TrialResult& result) {
  if (codes.empty_classes.empty()) return;
  std::string msg = "classes absent from calibration labels get all-zero codes:";
  for (std::size_t k : codes.empty_classes) msg += " " + std::to_string(k);
  result.warnings.push_back(std::move(msg));
}

}  // namespace detail

inline TrialResult run_trial(const ExperimentConfig& config, const LabeledSplit& data, std::uint64_t seed) {
  config.validate();
  const auto [cal, test] = split_cal_test(data, config.cal_ratio, seed);
  const std::size_t N = cal.num_samples();
  const std::size_t M = test.num_samples();
  const auto ties = TieBreaker::from_seed(tie_breaker_seed(seed), N + M);
  const auto cal_u = ties.slice(0, N);
  const auto test_u = ties.slice(N, M);

  TrialResult result;
  result.seed = seed;
  for (Method method : config.methods) {
    auto grid = detail::make_grid(config);
    if (method == Method::base) {
      const LabeledProbabilities cal_probs(softmax_columns(cal.values, config.base_temperature), cal.labels);
      const auto test_probs = softmax_columns(test.values, config.base_temperature);
      detail::append_sets(config, cal_probs, test_probs, cal_u, test_u, grid);
      detail::collect(config, method, grid, test_probs, test.labels, result);
      continue;
    }

    const std::size_t batch = config.query_batch_size.value_or(M);
    if (batch >= M) {
      const auto codes = transduce(cal, test.values, config.transport);
      detail::note_empty_classes(codes, result);
      detail::append_sets(config, codes.calibration, codes.query, cal_u, test_u, grid);
      detail::collect(config, method, grid, codes.query, test.labels, result);
      continue;
    }

    std::optional<std::vector<std::vector<ConformalThreshold>>> fixed;
    if (config.batch_threshold == BatchThreshold::full_batch) {
      const auto full = transduce(cal, test.values, config.transport);
      fixed = detail::thresholds(config, full.calibration, cal_u);
    }
    Matrix query_codes(cal.num_classes(), M);
    for (std::size_t first = 0; first < M; first += batch) {
      const std::size_t count = std::min(batch, M - first);
      const auto codes = transduce(cal, test.values.column_range(first, count), config.transport);
      detail::note_empty_classes(codes, result);
      detail::append_sets(config, codes.calibration, codes.query, cal_u, test_u.subspan(first, count), grid,
                          fixed ? &*fixed : nullptr);
      for (std::size_t j = 0; j < count; ++j) {
        const auto src = codes.query.column(j);
        std::copy(src.begin(), src.end(), query_codes.column(first + j).begin());
      }
    }
    detail::collect(config, method, grid, ProbabilityMatrix(std::move(query_codes)), test.labels, result);
  }
  std::sort(result.warnings.begin(), result.warnings.end());
  result.warnings.erase(std::unique(result.warnings.begin(), result.warnings.end()), result.warnings.end());
  return result;
}

inline TrialResult run_trial(const ExperimentConfig& config, std::uint64_t seed) {
  return run_trial(config, load_dataset(config.logits_path, config.labels_path), seed);
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Builds report rows from completed trials (in seed order).
inline ExperimentReport aggregate_trials(const ExperimentConfig& config, const std::vector<TrialResult>& trials) {
  ExperimentReport report;
  report.config = config.to_json();
  std::set<std::string> warnings;
  for (Method method : config.methods) {
    for (const auto& kind : config.scores) {
      for (double alpha : config.alphas) {
        ReportRow row;
        row.method = to_string(method);
        row.score = kind.name();
        row.alpha = alpha;
        for (const auto& trial : trials) {
          for (const auto& cell : trial.cells) {
            if (cell.method == method && cell.score == kind && cell.alpha == alpha) {
              row.seeds.push_back(trial.seed);
              row.per_seed.push_back(cell.metrics);
            }
          }
        }
        row.summarize_seeds();
        report.rows.push_back(std::move(row));
      }
    }
  }
  for (const auto& trial : trials) warnings.insert(trial.warnings.begin(), trial.warnings.end());
  report.warnings.assign(warnings.begin(), warnings.end());

  const bool paired = std::count(config.methods.begin(), config.methods.end(), Method::base) &&
                      std::count(config.methods.begin(), config.methods.end(), Method::conf_ot);
  if (!paired) return report;
  for (const auto& kind : config.scores) {
    for (double alpha : config.alphas) {
      std::vector<double> base, ot, diff;
      for (const auto& trial : trials) {
        std::optional<double> b, o;
        for (const auto& cell : trial.cells) {
          if (!(cell.score == kind) || cell.alpha != alpha) continue;
          (cell.method == Method::base ? b : o) = cell.metrics.avg_size;
        }
        if (b && o) {
          base.push_back(*b);
          ot.push_back(*o);
          diff.push_back(*b - *o);
        }
      }
      PairedComparison p;
      p.score = kind.name();
      p.alpha = alpha;
      p.base_size = summarize(base);
      p.conf_ot_size = summarize(ot);
      p.size_reduction = summarize(diff);
      p.relative_reduction = p.base_size.mean > 0.0 ? p.size_reduction.mean / p.base_size.mean : 0.0;
      report.paired.push_back(std::move(p));
    }
  }
  return report;
}

// Runs every seed, aggregates, and writes the report when output_path is set.
// If a trial fails, the completed trials are written with status "failed"
// and the error is rethrown.
inline ExperimentReport run_experiment(const ExperimentConfig& config, const LabeledSplit& data) {
  config.validate();
  std::vector<std::optional<TrialResult>> slots(config.seeds);
  std::vector<std::exception_ptr> errors(config.seeds);
  std::atomic<std::size_t> next{0};

  const auto worker = [&] {
    for (std::size_t t = next++; t < config.seeds; t = next++) {
      try {
        slots[t] = run_trial(config, data, config.base_seed + t);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  std::size_t jobs = config.jobs == 0 ? std::max(1u, std::thread::hardware_concurrency()) : config.jobs;
  jobs = std::min(jobs, config.seeds);
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < jobs; ++w) pool.emplace_back(worker);
  }

  std::vector<TrialResult> done;
  std::exception_ptr first_error;
  for (std::size_t t = 0; t < config.seeds; ++t) {
    if (slots[t]) done.push_back(std::move(*slots[t]));
    if (errors[t] && !first_error) first_error = errors[t];
  }
  auto report = aggregate_trials(config, done);
  report.generated_at = utc_timestamp();
  if (first_error) {
    report.status = "failed";
    try {
      std::rethrow_exception(first_error);
    } catch (const std::exception& e) {
      report.error = e.what();
    }
  }
  if (!config.output_path.empty()) write_report(report, config.output_path, config.output_format);
  if (first_error) std::rethrow_exception(first_error);
  return report;
}

inline ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  return run_experiment(config, load_dataset(config.logits_path, config.labels_path));
}

}  // namespace confot
