// Acceptance suite: one PASS / FAIL / SKIP line per criterion.
//
// Criterion 9 reads real logit dumps from $CONFOT_REFERENCE_DUMPS, where each
// dataset is stored as <name>.logits.bin and <name>.labels.csv (name as in
// reference_values.hpp, or lower-cased). Without that directory it is skipped.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "acceptance/reference_values.hpp"
#include "confot/confot.hpp"

using namespace confot;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum class Status { pass, fail, skip } status = Status::pass;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::Status::pass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::Status::fail, std::move(d)}; }
Outcome skip(std::string d) { return {Outcome::Status::skip, std::move(d)}; }

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::vector<double> random_simplex(std::mt19937_64& gen, std::size_t K) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(K);
  double total = 0.0;
  for (double& v : p) total += (v = e(gen));
  for (double& v : p) v /= total;
  return p;
}

// 1. Threshold equals the brute-force infimum over candidate thresholds.
Outcome quantile_oracle() {
  std::mt19937_64 gen(101);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::vector<std::pair<std::size_t, std::size_t>> alphas{{1, 20}, {1, 10}, {1, 5}, {1, 2}};
  std::size_t cases = 0;
  for (std::size_t N = 1; N <= 200; ++N) {
    std::vector<double> scores(N);
    for (double& s : scores) s = N % 4 == 0 ? std::floor(unif(gen) * 8) / 8 : unif(gen);
    for (auto [num, den] : alphas) {
      const std::size_t k = ((N + 1) * (den - num) + den - 1) / den;
      double best = std::numeric_limits<double>::infinity();
      for (double s : scores) {
        std::size_t count = 0;
        for (double t : scores) count += t <= s ? 1 : 0;
        if (count >= k) best = std::min(best, s);
      }
      const double alpha = static_cast<double>(num) / static_cast<double>(den);
      const double got = calibrate_threshold(scores, alpha).s_hat;
      if (got != best) return fail("N=" + std::to_string(N) + " alpha=" + fmt(alpha) + ": " + fmt(got) + " vs " + fmt(best));
      ++cases;
    }
  }
  return pass(std::to_string(cases) + " cases exact");
}

// 2. APS / RAPS against index-order accumulation; RAPS(0) == APS bitwise.
Outcome score_oracle() {
  std::mt19937_64 gen(102);
  std::uniform_int_distribution<std::size_t> dim(2, 50);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = random_simplex(gen, dim(gen));
    const double u = unif(gen);
    for (std::size_t y = 0; y < p.size(); ++y) {
      double rho = 0.0;
      std::size_t rank = 1;
      for (double v : p) {
        if (v > p[y]) {
          rho += v;
          ++rank;
        }
      }
      const double aps = rho + p[y] * u;
      const double raps = aps + 0.001 * static_cast<double>(rank > 1 ? rank - 1 : 0);
      worst = std::max({worst, std::abs(aps_score(p, y, u) - aps), std::abs(raps_score(p, y, u, 0.001, 1) - raps)});
      if (raps_score(p, y, u, 0.0, 1) != aps_score(p, y, u)) return fail("RAPS(0) differs from APS bitwise");
    }
  }
  if (worst > 1e-12) return fail("max deviation " + fmt(worst));
  return pass("max deviation " + fmt(worst) + " <= 1e-12; RAPS(0) bitwise equal");
}

// 3. Sinkhorn marginals at T=200 and T=3.
Outcome sinkhorn_convergence() {
  std::mt19937_64 gen(103);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t K = 10, n = 200;
  double worst200 = 0.0, worst3 = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Matrix S(K, n);
    for (double& v : S.values()) v = gauss(gen);
    // Every class appears, so the empirical prior is strictly positive.
    std::vector<std::size_t> labels(n);
    std::uniform_int_distribution<std::size_t> cls(0, K - 1);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i < K ? i : cls(gen);
    const auto kappa = estimate_label_marginal(labels, K, LabelPrior::empirical);
    for (std::size_t T : {200u, 3u}) {
      TransportConfig config;
      config.iterations = T;
      const auto plan = sinkhorn_codes(SimilarityMatrix(S), kappa, config);
      double res = 0.0;
      for (std::size_t k = 0; k < K; ++k) res = std::max(res, std::abs(plan.raw_row_sums[k] - kappa[k]));
      for (double c : plan.raw_column_sums) res = std::max(res, std::abs(c - 1.0 / n));
      (T == 200 ? worst200 : worst3) = std::max(T == 200 ? worst200 : worst3, res);
    }
  }
  const std::string d = "T=200 residual " + fmt(worst200) + ", T=3 residual " + fmt(worst3);
  return worst200 <= 1e-8 && worst3 <= 1e-2 ? pass(d) : fail(d);
}

LabeledSplit synthetic(std::size_t K, std::size_t n_cal, std::size_t n_test, SyntheticShift shift, std::uint64_t seed) {
  SyntheticConfig c;
  c.classes = K;
  c.calibration = n_cal;
  c.test = n_test;
  c.shift = shift;
  c.seed = seed;
  return generate_synthetic(c).combined();
}

// Runs one trial per seed on freshly generated data and returns the mean of every cell.
std::map<std::string, MetricsReport> mean_cells(const ExperimentConfig& config, SyntheticShift shift, int trials,
                                                std::map<std::string, std::vector<double>>* sizes = nullptr) {
  std::map<std::string, MetricsReport> mean;
  for (int t = 0; t < trials; ++t) {
    const auto data = synthetic(10, 500, 500, shift, 7000 + t);
    for (const auto& cell : run_trial(config, data, t).cells) {
      const std::string key = to_string(cell.method) + "/" + cell.score.name() + "/" + fmt(cell.alpha);
      auto& m = mean[key];
      m.alpha = cell.alpha;
      m.coverage += cell.metrics.coverage / trials;
      m.avg_size += cell.metrics.avg_size / trials;
      if (sizes) (*sizes)[key].push_back(cell.metrics.avg_size);
    }
  }
  return mean;
}

std::string check_coverage(const std::map<std::string, MetricsReport>& cells) {
  for (const auto& [key, m] : cells) {
    if (m.coverage < 1.0 - m.alpha - 0.015 || m.coverage > 1.0) return key + " coverage " + fmt(m.coverage);
  }
  return {};
}

// 4. Coverage on exchangeable synthetic data.
Outcome coverage_guarantee() {
  ExperimentConfig config;
  const auto cells = mean_cells(config, SyntheticShift::none, 100);
  if (auto bad = check_coverage(cells); !bad.empty()) return fail(bad);
  double lowest = 1.0;
  for (const auto& [key, m] : cells) lowest = std::min(lowest, m.coverage - (1.0 - m.alpha));
  return pass(std::to_string(cells.size()) + " cells, smallest margin over 1-alpha " + fmt(lowest, 3));
}

// 5. Smaller sets under a label-prior shift.
Outcome efficiency_direction() {
  ExperimentConfig config;
  const auto cells = mean_cells(config, SyntheticShift::prior, 100);
  if (auto bad = check_coverage(cells); !bad.empty()) return fail(bad);
  std::string detail;
  bool ok = true;
  for (const std::string score : {"lac", "aps", "raps"}) {
    const double base = cells.at("base/" + score + "/0.1").avg_size;
    const double ot = cells.at("conf_ot/" + score + "/0.1").avg_size;
    const double rel = (base - ot) / base;
    ok = ok && rel >= 0.05;
    detail += score + " " + fmt(base, 3) + "->" + fmt(ot, 3) + " (" + fmt(100 * rel, 3) + "%) ";
  }
  return ok ? pass(detail) : fail(detail);
}

// 6. Batch mode against full-batch transduction.
Outcome batch_robustness() {
  const auto data = synthetic(10, 500, 500, SyntheticShift::prior, 606);
  ExperimentConfig config;
  config.methods = {Method::conf_ot};
  config.seeds = 20;
  const auto full = run_experiment(config, data);
  double worst_cov = 0.0, worst_size = 0.0;
  for (std::size_t batch : {8u, 16u, 32u}) {
    config.query_batch_size = batch;
    const auto r = run_experiment(config, data);
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
      worst_cov = std::max(worst_cov, std::abs(r.rows[i].coverage.mean - full.rows[i].coverage.mean));
      worst_size = std::max(worst_size, std::abs(r.rows[i].size.mean - full.rows[i].size.mean) / full.rows[i].size.mean);
    }
  }
  const std::string d = "max coverage gap " + fmt(worst_cov, 3) + ", max relative size gap " + fmt(worst_size, 3);
  return worst_cov <= 0.02 && worst_size <= 0.05 ? pass(d) : fail(d);
}

// 7. Identical configs write identical CSV reports.
Outcome determinism() {
  const auto data = synthetic(10, 500, 500, SyntheticShift::prior, 707);
  const auto dir = fs::temp_directory_path() / "confot_acceptance";
  fs::create_directories(dir);
  ExperimentConfig config;
  config.seeds = 5;
  config.output_format = ReportFormat::csv;
  std::vector<std::string> text;
  for (const char* name : {"a.csv", "b.csv"}) {
    config.output_path = dir / name;
    run_experiment(config, data);
    std::ifstream in(config.output_path);
    text.emplace_back(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  fs::remove_all(dir);
  if (text[0].empty() || text[0] != text[1]) return fail("CSV reports differ");
  return pass(std::to_string(text[0].size()) + " identical bytes");
}

// 8. One transduction at K=1000, n=50000, T=3.
Outcome throughput(double& seconds) {
  const std::size_t K = 1000, N = 25000, M = 25000;
  std::mt19937_64 gen(808);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix cal(K, N), query(K, M);
  for (double& v : cal.values()) v = gauss(gen);
  for (double& v : query.values()) v = gauss(gen);
  std::vector<std::size_t> labels(N);
  for (std::size_t i = 0; i < N; ++i) labels[i] = i % K;
  const LabeledSplit split(SimilarityMatrix(std::move(cal)), std::move(labels));
  const SimilarityMatrix q(std::move(query));
  const auto start = std::chrono::steady_clock::now();
  const auto codes = transduce(split, q, TransportConfig{});
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (codes.query.num_samples() != M) return fail("wrong code shape");
  const std::string d = fmt(seconds, 3) + " s for K=1000, n=50000, T=3";
  return seconds <= 10.0 ? pass(d) : fail(d);
}

// 9. Published per-dataset numbers from real dumps.
Outcome reference_reproduction() {
  const char* env = std::getenv("CONFOT_REFERENCE_DUMPS");
  if (!env || !fs::is_directory(env)) return skip("CONFOT_REFERENCE_DUMPS not set; no real logit dumps available");
  const fs::path dir(env);
  std::map<std::string, std::pair<fs::path, fs::path>> found;
  for (const auto& cell : acceptance::kReference) {
    std::string name(cell.dataset);
    for (std::string stem : {name, [&] {
                               std::string l = name;
                               std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
                               return l;
                             }()}) {
      if (fs::exists(dir / (stem + ".logits.bin")) && fs::exists(dir / (stem + ".labels.csv"))) {
        found[name] = {dir / (stem + ".logits.bin"), dir / (stem + ".labels.csv")};
      }
    }
  }
  if (found.empty()) return skip("no recognised dumps in " + dir.string());

  std::size_t checked = 0, failed = 0;
  std::string first_failure;
  for (const auto& [name, paths] : found) {
    ExperimentConfig config;
    const auto report = run_experiment(config, load_dataset(paths.first, paths.second));
    for (const auto& ref : acceptance::kReference) {
      if (ref.dataset != name) continue;
      for (const auto& row : report.rows) {
        if (row.method != ref.method || row.score != ref.score || row.alpha != ref.alpha) continue;
        ++checked;
        const bool ok = std::abs(row.coverage.mean - ref.coverage) <= 0.005 &&
                        std::abs(row.size.mean - ref.size) <= 0.05 * ref.size &&
                        std::abs(row.ccv.mean - ref.ccv) <= 0.05 * ref.ccv;
        if (!ok && failed++ == 0) {
          first_failure = name + " " + row.method + "/" + row.score + "/" + fmt(row.alpha) + ": cov " +
                          fmt(row.coverage.mean, 3) + " size " + fmt(row.size.mean, 3) + " ccv " + fmt(row.ccv.mean, 3);
        }
      }
    }
  }
  const std::string d = std::to_string(found.size()) + " datasets, " + std::to_string(checked - failed) + "/" +
                        std::to_string(checked) + " cells within tolerance";
  return failed == 0 ? pass(d) : fail(d + "; first miss " + first_failure);
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    std::string name;
    double limit;  // seconds; 0 = no wall-clock bound beyond the check itself
    std::function<Outcome()> run;
  };
  double transduce_seconds = 0.0;
  const std::vector<Criterion> criteria{
      {1, "quantile oracle equivalence", 5, quantile_oracle},
      {2, "score oracle equivalence", 5, score_oracle},
      {3, "sinkhorn marginal convergence", 10, sinkhorn_convergence},
      {4, "marginal coverage guarantee", 60, coverage_guarantee},
      {5, "conf-ot efficiency under prior shift", 120, efficiency_direction},
      {6, "batch-mode robustness", 120, batch_robustness},
      {7, "determinism", 30, determinism},
      {8, "transduction throughput", 0, [&] { return throughput(transduce_seconds); }},
      {9, "reference reproduction", 0, reference_reproduction},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = fail(std::string("exception: ") + e.what());
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (out.status == Outcome::Status::pass && c.limit > 0 && elapsed > c.limit) {
      out = fail(out.detail + "; runtime over " + fmt(c.limit) + " s");
    }
    const char* tag = out.status == Outcome::Status::pass ? "PASS" : out.status == Outcome::Status::fail ? "FAIL" : "SKIP";
    failures += out.status == Outcome::Status::fail ? 1 : 0;
    std::cout << "criterion " << c.id << " " << tag << "  " << c.name << ": " << out.detail << " [" << fmt(elapsed, 3)
              << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
