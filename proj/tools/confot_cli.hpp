#pragma once

// `confot` command line: run | gen-synth | validate.
// Exit codes: 0 success, 1 internal failure, 2 configuration error, 3 data error.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "confot/confot.hpp"

namespace confot::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;

struct RunOptions {
  std::string logits;
  std::string labels;
  std::vector<double> alphas;
  std::vector<std::string> scores;
  std::vector<std::string> methods;
  double raps_lambda = 0.001;
  std::size_t raps_kreg = 1;
  double tau = 1.0;
  std::size_t iters = 3;
  std::string prior = "empirical";
  bool laplace = false;
  double eps_floor = 1e-12;
  double base_tau = 1.0;
  double cal_ratio = 0.5;
  std::size_t seeds = 20;
  std::uint64_t base_seed = 0;
  std::optional<std::size_t> batch_size;
  std::string batch_threshold = "per-chunk";
  std::size_t jobs = 1;
  std::string out = "report.json";
  std::string format;
};

struct SynthOptions {
  SyntheticConfig config;
  std::string shift = "none";
  std::string out_prefix;
  std::string dtype = "f64";
};

struct ValidateOptions {
  std::string logits;
  std::string labels;
};

inline ExperimentConfig to_experiment_config(const RunOptions& o) {
  ExperimentConfig c;
  c.logits_path = o.logits;
  c.labels_path = o.labels;
  if (!o.alphas.empty()) c.alphas = o.alphas;
  if (!o.scores.empty()) {
    c.scores.clear();
    for (const auto& s : o.scores) {
      if (s == "lac") c.scores.push_back(ScoreKind::lac());
      else if (s == "aps") c.scores.push_back(ScoreKind::aps());
      else c.scores.push_back(ScoreKind::raps(o.raps_lambda, o.raps_kreg));
    }
  } else {
    c.scores = {ScoreKind::lac(), ScoreKind::aps(), ScoreKind::raps(o.raps_lambda, o.raps_kreg)};
  }
  if (!o.methods.empty()) {
    c.methods.clear();
    for (const auto& m : o.methods) c.methods.push_back(m == "base" ? Method::base : Method::conf_ot);
  }
  c.transport.temperature = o.tau;
  c.transport.iterations = o.iters;
  c.transport.prior = o.prior == "uniform" ? LabelPrior::uniform : LabelPrior::empirical;
  c.transport.laplace_smoothing = o.laplace;
  c.transport.epsilon_floor = o.eps_floor;
  c.base_temperature = o.base_tau;
  c.cal_ratio = o.cal_ratio;
  c.seeds = o.seeds;
  c.base_seed = o.base_seed;
  c.query_batch_size = o.batch_size;
  c.batch_threshold = o.batch_threshold == "full" ? BatchThreshold::full_batch : BatchThreshold::per_chunk;
  c.jobs = o.jobs;
  c.output_path = o.out;
  if (o.format.empty()) {
    c.output_format = std::filesystem::path(o.out).extension() == ".csv" ? ReportFormat::csv : ReportFormat::json;
  } else {
    c.output_format = o.format == "csv" ? ReportFormat::csv : ReportFormat::json;
  }
  return c;
}

inline void print_summary(const ExperimentReport& report, std::ostream& out) {
  out << std::left << std::setw(9) << "method" << std::setw(6) << "score" << std::setw(7) << "alpha"
      << std::setw(8) << "top1" << std::setw(8) << "cov" << std::setw(8) << "size" << "ccv\n";
  out << std::fixed;
  for (const auto& r : report.rows) {
    out << std::setw(9) << r.method << std::setw(6) << r.score << std::setw(7) << std::setprecision(3) << r.alpha
        << std::setw(8) << std::setprecision(1) << 100.0 * r.top1.mean << std::setw(8) << std::setprecision(3)
        << r.coverage.mean << std::setw(8) << std::setprecision(2) << r.size.mean << std::setprecision(2)
        << r.ccv.mean << '\n';
  }
  for (const auto& p : report.paired) {
    out << "paired " << p.score << " alpha=" << std::setprecision(3) << p.alpha << ": size " << std::setprecision(3)
        << p.base_size.mean << " -> " << p.conf_ot_size.mean << " (" << std::setprecision(1)
        << 100.0 * p.relative_reduction << "% smaller)\n";
  }
  out << std::defaultfloat;
}

inline int do_run(const RunOptions& o, std::ostream& out, std::ostream& err) {
  const auto config = to_experiment_config(o);
  config.validate();
  const auto data = load_dataset(config.logits_path, config.labels_path);
  const auto report = run_experiment(config, data);
  for (const auto& w : report.warnings) err << "warning: " << w << '\n';
  print_summary(report, out);
  out << "report written to " << config.output_path.string() << '\n';
  return kExitOk;
}

inline int do_gen_synth(SynthOptions o, std::ostream& out) {
  o.config.shift = o.shift == "prior"         ? SyntheticShift::prior
                   : o.shift == "temperature" ? SyntheticShift::temperature
                                              : SyntheticShift::none;
  const auto dtype = o.dtype == "f32" ? LogitDtype::float32 : LogitDtype::float64;
  const auto data = generate_synthetic(o.config);
  const auto all = data.combined();
  const std::string p = o.out_prefix;
  save_logits(p + ".logits.bin", all.values, dtype);
  save_labels_csv(p + ".labels.csv", all.labels);
  if (data.calibration.num_samples() > 0 && data.test.num_samples() > 0) {
    save_logits(p + ".cal.logits.bin", data.calibration.values, dtype);
    save_labels_csv(p + ".cal.labels.csv", data.calibration.labels);
    save_logits(p + ".test.logits.bin", data.test.values, dtype);
    save_labels_csv(p + ".test.labels.csv", data.test.labels);
  }
  out << "wrote " << all.num_samples() << " samples x " << all.num_classes() << " classes to " << p
      << ".logits.bin / " << p << ".labels.csv\n";
  return kExitOk;
}

inline int do_validate(const ValidateOptions& o, std::ostream& out) {
  const auto bytes = detail::read_file(o.logits);
  const auto header = parse_logit_header(bytes);
  const auto data = load_dataset(o.logits, o.labels);
  std::vector<std::size_t> counts(data.num_classes(), 0);
  for (std::size_t y : data.labels) ++counts[y];
  std::size_t present = 0;
  for (auto c : counts) present += c > 0 ? 1 : 0;
  out << "ok: " << data.num_samples() << " samples, " << data.num_classes() << " classes, "
      << (header.dtype == LogitDtype::float32 ? "float32" : "float64") << " payload, " << present
      << " classes present in labels\n";
  return kExitOk;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conformal prediction sets with optimal-transport label transfer", "confot"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Repeated calibration/test evaluation of base and Conf-OT pipelines");
  run_cmd->add_option("--logits", run.logits, "Logit file (CONFOTL1 format)")->required();
  run_cmd->add_option("--labels", run.labels, "Label CSV")->required();
  run_cmd->add_option("--alpha", run.alphas, "Error level; repeat for several (default 0.1 0.05)");
  run_cmd->add_option("--score", run.scores, "Non-conformity score; repeat for several (default all)")
      ->check(CLI::IsMember({"lac", "aps", "raps"}));
  run_cmd->add_option("--raps-lambda", run.raps_lambda, "RAPS rank penalty")->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--raps-kreg", run.raps_kreg, "RAPS rank where the penalty starts");
  run_cmd->add_option("--method", run.methods, "base or conf-ot; repeat for both (default both)")
      ->check(CLI::IsMember({"base", "conf-ot"}));
  run_cmd->add_option("--tau", run.tau, "Transport temperature");
  run_cmd->add_option("--iters", run.iters, "Sinkhorn iterations");
  run_cmd->add_option("--prior", run.prior, "Label-marginal prior")->check(CLI::IsMember({"empirical", "uniform"}));
  run_cmd->add_flag("--laplace", run.laplace, "Add one pseudo-count per class to the empirical prior");
  run_cmd->add_option("--eps-floor", run.eps_floor, "Denominator floor in Sinkhorn divisions");
  run_cmd->add_option("--base-tau", run.base_tau, "Softmax temperature of the base pipeline");
  run_cmd->add_option("--cal-ratio", run.cal_ratio, "Fraction of samples used for calibration");
  run_cmd->add_option("--seeds", run.seeds, "Number of random splits");
  run_cmd->add_option("--base-seed", run.base_seed, "Seed of the first split; trial i uses base-seed + i");
  run_cmd->add_option("--batch-size", run.batch_size, "Transduce queries in chunks of this size");
  run_cmd->add_option("--batch-threshold", run.batch_threshold, "Threshold source in batch mode")
      ->check(CLI::IsMember({"per-chunk", "full"}));
  run_cmd->add_option("--jobs", run.jobs, "Worker threads (0 = all cores)");
  run_cmd->add_option("--out", run.out, "Report path");
  run_cmd->add_option("--format", run.format, "Report format (default from extension)")
      ->check(CLI::IsMember({"json", "csv"}));

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("gen-synth", "Write a synthetic Gaussian logit dataset");
  synth_cmd->add_option("--classes", synth.config.classes, "Number of classes")->required();
  synth_cmd->add_option("--cal", synth.config.calibration, "Calibration samples")->required();
  synth_cmd->add_option("--test", synth.config.test, "Test samples")->required();
  synth_cmd->add_option("--shift", synth.shift, "Distribution shift")
      ->check(CLI::IsMember({"none", "prior", "temperature"}));
  synth_cmd->add_option("--seed", synth.config.seed, "Generator seed");
  synth_cmd->add_option("--out-prefix", synth.out_prefix, "Output path prefix")->required();
  synth_cmd->add_option("--separation", synth.config.separation, "Class mean separation");
  synth_cmd->add_option("--noise", synth.config.noise, "Feature noise standard deviation");
  synth_cmd->add_option("--skew", synth.config.skew, "Geometric ratio of the skewed class prior");
  synth_cmd->add_option("--temperature-factor", synth.config.temperature_factor, "Logit scale for --shift temperature");
  synth_cmd->add_option("--dtype", synth.dtype, "Payload type")->check(CLI::IsMember({"f32", "f64"}));

  ValidateOptions val;
  auto* val_cmd = app.add_subcommand("validate", "Check a logit file and label CSV");
  val_cmd->add_option("--logits", val.logits, "Logit file")->required();
  val_cmd->add_option("--labels", val.labels, "Label CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (run_cmd->parsed()) return do_run(run, out, err);
    if (synth_cmd->parsed()) return do_gen_synth(synth, out);
    return do_validate(val, out);
  } catch (const ParameterError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const IoError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace confot::cli
