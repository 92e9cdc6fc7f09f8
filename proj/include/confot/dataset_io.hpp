#pragma once

// On-disk formats.
//
// Logit file (all integers little-endian):
//   offset  0  8 bytes  magic "CONFOTL1"
//   offset  8  u64      num_samples
//   offset 16  u64      num_classes
//   offset 24  u8       dtype (0 = float32, 1 = float64)
//   offset 25  payload  num_samples x num_classes IEEE-754 values, sample-major
//
// Labels: one non-negative integer per line, optional header line "label".
//
// Reports: JSON with per-seed arrays and the echoed configuration, or CSV
// with one summary row per (method, score, alpha).

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "confot/core_types.hpp"
#include "confot/error.hpp"
#include "confot/metrics.hpp"

namespace confot {

inline constexpr std::array<char, 8> kLogitMagic = {'C', 'O', 'N', 'F', 'O', 'T', 'L', '1'};
inline constexpr std::size_t kLogitHeaderSize = 25;

enum class LogitDtype : std::uint8_t { float32 = 0, float64 = 1 };

struct LogitFileHeader {
  std::uint64_t num_samples = 0;
  std::uint64_t num_classes = 0;
  LogitDtype dtype = LogitDtype::float64;

  std::size_t value_size() const noexcept { return dtype == LogitDtype::float32 ? 4 : 8; }
};

namespace detail {

template <class UInt>
UInt load_le(const unsigned char* p) noexcept {
  UInt v = 0;
  for (std::size_t b = 0; b < sizeof(UInt); ++b) v |= static_cast<UInt>(p[b]) << (8 * b);
  return v;
}

template <class UInt>
void store_le(UInt v, unsigned char* p) noexcept {
  for (std::size_t b = 0; b < sizeof(UInt); ++b) p[b] = static_cast<unsigned char>(v >> (8 * b));
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::ofstream open_for_write(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw NumericError("failed to format number");
  return std::string(buf.data(), end);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline LogitFileHeader parse_logit_header(std::span<const unsigned char> bytes) {
  if (bytes.size() < kLogitHeaderSize) {
    throw FormatError("file too short for the " + std::to_string(kLogitHeaderSize) +
                          "-byte header: " + std::to_string(bytes.size()) + " bytes",
                      bytes.size());
  }
  if (std::memcmp(bytes.data(), kLogitMagic.data(), kLogitMagic.size()) != 0) {
    throw FormatError("bad magic, expected CONFOTL1", 0);
  }
  LogitFileHeader h;
  h.num_samples = detail::load_le<std::uint64_t>(bytes.data() + 8);
  h.num_classes = detail::load_le<std::uint64_t>(bytes.data() + 16);
  const auto code = bytes[24];
  if (code > 1) throw FormatError("unknown dtype code " + std::to_string(code), 24);
  h.dtype = static_cast<LogitDtype>(code);
  if (h.num_samples == 0) throw FormatError("file declares zero samples", 8);
  if (h.num_classes < 2) throw FormatError("file declares fewer than 2 classes", 16);
  return h;
}

inline SimilarityMatrix decode_logits(std::span<const unsigned char> bytes) {
  const auto h = parse_logit_header(bytes);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max();
  if (h.num_samples > limit / h.num_classes ||
      h.num_samples * h.num_classes > limit / h.value_size()) {
    throw FormatError("declared dimensions overflow", 8);
  }
  const std::uint64_t expected = h.num_samples * h.num_classes * h.value_size();
  const std::uint64_t actual = bytes.size() - kLogitHeaderSize;
  if (expected != actual) {
    throw FormatError("payload length mismatch: expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(actual),
                      kLogitHeaderSize);
  }

  const std::size_t K = h.num_classes;
  const std::size_t n = h.num_samples;
  // Sample-major on disk is exactly our column-contiguous class-major layout.
  std::vector<double> values(K * n);
  const unsigned char* p = bytes.data() + kLogitHeaderSize;
  for (std::size_t j = 0; j < values.size(); ++j) {
    double v;
    if (h.dtype == LogitDtype::float32) {
      v = static_cast<double>(std::bit_cast<float>(detail::load_le<std::uint32_t>(p + 4 * j)));
    } else {
      v = std::bit_cast<double>(detail::load_le<std::uint64_t>(p + 8 * j));
    }
    if (!std::isfinite(v)) {
      throw FormatError("non-finite logit for sample " + std::to_string(j / K) + ", class " +
                            std::to_string(j % K),
                        kLogitHeaderSize + j * h.value_size());
    }
    values[j] = v;
  }
  return SimilarityMatrix(Matrix(K, n, std::move(values)));
}

inline SimilarityMatrix load_logits(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return decode_logits(bytes);
}

inline std::vector<unsigned char> encode_logits(const SimilarityMatrix& logits,
                                                LogitDtype dtype = LogitDtype::float64) {
  const std::size_t width = dtype == LogitDtype::float32 ? 4 : 8;
  const auto values = logits.matrix().values();
  std::vector<unsigned char> out(kLogitHeaderSize + values.size() * width);
  std::memcpy(out.data(), kLogitMagic.data(), kLogitMagic.size());
  detail::store_le<std::uint64_t>(logits.num_samples(), out.data() + 8);
  detail::store_le<std::uint64_t>(logits.num_classes(), out.data() + 16);
  out[24] = static_cast<unsigned char>(dtype);
  unsigned char* p = out.data() + kLogitHeaderSize;
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (dtype == LogitDtype::float32) {
      detail::store_le(std::bit_cast<std::uint32_t>(static_cast<float>(values[j])), p + 4 * j);
    } else {
      detail::store_le(std::bit_cast<std::uint64_t>(values[j]), p + 8 * j);
    }
  }
  return out;
}

inline void save_logits(const std::filesystem::path& path, const SimilarityMatrix& logits,
                        LogitDtype dtype = LogitDtype::float64) {
  const auto bytes = encode_logits(logits, dtype);
  auto out = detail::open_for_write(path, true);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

inline std::vector<std::size_t> parse_labels_csv(std::string_view text) {
  std::vector<std::size_t> labels;
  std::size_t line_no = 0;
  bool first_content = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const auto cell = detail::trim(raw);
    if (cell.empty()) continue;
    if (first_content) {
      first_content = false;
      if (cell == "label") continue;
    }
    std::uint64_t v = 0;
    auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || end != cell.data() + cell.size()) {
      throw ParseError("expected a non-negative integer label, got '" + std::string(cell) + "'",
                       line_no);
    }
    labels.push_back(static_cast<std::size_t>(v));
  }
  if (labels.empty()) throw DataError("label file contains no labels");
  return labels;
}

inline std::vector<std::size_t> load_labels_csv(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return parse_labels_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline void save_labels_csv(const std::filesystem::path& path, std::span<const std::size_t> labels) {
  auto out = detail::open_for_write(path, false);
  out << "label\n";
  for (std::size_t y : labels) out << y << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

inline LabeledSplit load_dataset(const std::filesystem::path& logits_path,
                                 const std::filesystem::path& labels_path) {
  auto logits = load_logits(logits_path);
  auto labels = load_labels_csv(labels_path);
  if (labels.size() != logits.num_samples()) {
    throw DataError("label file has " + std::to_string(labels.size()) + " rows but logit file has " +
                    std::to_string(logits.num_samples()) + " samples");
  }
  return LabeledSplit(std::move(logits), std::move(labels));
}

// ---------------------------------------------------------------------------
// Reports

// Paired base-vs-Conf-OT set-size comparison within shared splits.
struct PairedComparison {
  std::string score;
  double alpha = 0.0;
  SummaryStat base_size;
  SummaryStat conf_ot_size;
  SummaryStat size_reduction;  // base minus conf_ot, per seed
  double relative_reduction = 0.0;

  bool operator==(const PairedComparison&) const = default;
};

struct ExperimentReport {
  std::string status = "complete";  // or "failed"
  std::string error;
  std::string generated_at;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<ReportRow> rows;
  std::vector<PairedComparison> paired;
  std::vector<std::string> warnings;
};

enum class ReportFormat { json, csv };

inline const std::vector<std::string>& csv_report_columns() {
  static const std::vector<std::string> cols = {
      "method",    "score",   "alpha",    "top1_mean", "top1_std", "cov_mean",
      "cov_std",   "size_mean", "size_std", "ccv_mean",  "ccv_std",  "seeds"};
  return cols;
}

namespace detail {

inline nlohmann::ordered_json stat_json(const SummaryStat& s, const std::vector<double>& per_seed) {
  nlohmann::ordered_json j;
  j["mean"] = s.mean;
  j["std"] = s.stddev;
  j["per_seed"] = per_seed;
  return j;
}

inline SummaryStat stat_from_json(const nlohmann::ordered_json& j) {
  return {j.at("mean").get<double>(), j.at("std").get<double>()};
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const ExperimentReport& report) {
  nlohmann::ordered_json j;
  j["status"] = report.status;
  if (!report.error.empty()) j["error"] = report.error;
  j["generated_at"] = report.generated_at;
  j["config"] = report.config;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    std::vector<double> top1, cov, size, ccv_v;
    std::vector<std::size_t> n_test;
    for (const auto& m : r.per_seed) {
      top1.push_back(m.top1);
      cov.push_back(m.coverage);
      size.push_back(m.avg_size);
      ccv_v.push_back(m.ccv);
      n_test.push_back(m.n_test);
    }
    nlohmann::ordered_json row;
    row["method"] = r.method;
    row["score"] = r.score;
    row["alpha"] = r.alpha;
    row["seeds"] = r.seeds;
    row["n_test"] = n_test;
    row["top1"] = detail::stat_json(r.top1, top1);
    row["coverage"] = detail::stat_json(r.coverage, cov);
    row["size"] = detail::stat_json(r.size, size);
    row["ccv"] = detail::stat_json(r.ccv, ccv_v);
    rows.push_back(std::move(row));
  }
  j["results"] = std::move(rows);
  auto paired = nlohmann::ordered_json::array();
  for (const auto& p : report.paired) {
    nlohmann::ordered_json row;
    row["score"] = p.score;
    row["alpha"] = p.alpha;
    row["base_size"] = {{"mean", p.base_size.mean}, {"std", p.base_size.stddev}};
    row["conf_ot_size"] = {{"mean", p.conf_ot_size.mean}, {"std", p.conf_ot_size.stddev}};
    row["size_reduction"] = {{"mean", p.size_reduction.mean}, {"std", p.size_reduction.stddev}};
    row["relative_reduction"] = p.relative_reduction;
    paired.push_back(std::move(row));
  }
  j["paired"] = std::move(paired);
  j["warnings"] = report.warnings;
  return j;
}

inline ExperimentReport report_from_json(const nlohmann::ordered_json& j) {
  ExperimentReport report;
  try {
    report.status = j.at("status").get<std::string>();
    if (j.contains("error")) report.error = j.at("error").get<std::string>();
    report.generated_at = j.at("generated_at").get<std::string>();
    report.config = j.at("config");
    for (const auto& row : j.at("results")) {
      ReportRow r;
      r.method = row.at("method").get<std::string>();
      r.score = row.at("score").get<std::string>();
      r.alpha = row.at("alpha").get<double>();
      r.seeds = row.at("seeds").get<std::vector<std::uint64_t>>();
      const auto n_test = row.at("n_test").get<std::vector<std::size_t>>();
      const auto top1 = row.at("top1").at("per_seed").get<std::vector<double>>();
      const auto cov = row.at("coverage").at("per_seed").get<std::vector<double>>();
      const auto size = row.at("size").at("per_seed").get<std::vector<double>>();
      const auto ccv_v = row.at("ccv").at("per_seed").get<std::vector<double>>();
      for (std::size_t s = 0; s < top1.size(); ++s) {
        r.per_seed.push_back({top1.at(s), cov.at(s), size.at(s), ccv_v.at(s), r.alpha, n_test.at(s)});
      }
      r.top1 = detail::stat_from_json(row.at("top1"));
      r.coverage = detail::stat_from_json(row.at("coverage"));
      r.size = detail::stat_from_json(row.at("size"));
      r.ccv = detail::stat_from_json(row.at("ccv"));
      report.rows.push_back(std::move(r));
    }
    for (const auto& row : j.at("paired")) {
      PairedComparison p;
      p.score = row.at("score").get<std::string>();
      p.alpha = row.at("alpha").get<double>();
      p.base_size = detail::stat_from_json(row.at("base_size"));
      p.conf_ot_size = detail::stat_from_json(row.at("conf_ot_size"));
      p.size_reduction = detail::stat_from_json(row.at("size_reduction"));
      p.relative_reduction = row.at("relative_reduction").get<double>();
      report.paired.push_back(std::move(p));
    }
    if (j.contains("warnings")) report.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report JSON: ") + e.what());
  }
  return report;
}

inline std::string report_to_csv(const ExperimentReport& report) {
  std::ostringstream out;
  const auto& cols = csv_report_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
  out << '\n';
  using detail::format_double;
  for (const auto& r : report.rows) {
    out << r.method << ',' << r.score << ',' << format_double(r.alpha) << ','
        << format_double(r.top1.mean) << ',' << format_double(r.top1.stddev) << ','
        << format_double(r.coverage.mean) << ',' << format_double(r.coverage.stddev) << ','
        << format_double(r.size.mean) << ',' << format_double(r.size.stddev) << ','
        << format_double(r.ccv.mean) << ',' << format_double(r.ccv.stddev) << ','
        << r.per_seed.size() << '\n';
  }
  return out.str();
}

// One parsed CSV report line.
struct CsvReportRow {
  std::string method;
  std::string score;
  double alpha = 0.0;
  SummaryStat top1, coverage, size, ccv;
  std::size_t seeds = 0;

  bool operator==(const CsvReportRow&) const = default;
};

inline std::vector<CsvReportRow> parse_report_csv(std::string_view text) {
  std::vector<CsvReportRow> rows;
  std::size_t line_no = 0;
  const auto number = [&](std::string_view cell) {
    double v = 0.0;
    auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || end != cell.data() + cell.size()) {
      throw ParseError("bad number '" + std::string(cell) + "'", line_no);
    }
    return v;
  };
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = detail::trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest = line;
    for (;;) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    if (cells.size() != csv_report_columns().size()) throw ParseError("wrong column count", line_no);
    if (line_no == 1) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (cells[c] != csv_report_columns()[c]) throw ParseError("unexpected CSV header", line_no);
      }
      continue;
    }
    CsvReportRow r;
    r.method = std::string(cells[0]);
    r.score = std::string(cells[1]);
    r.alpha = number(cells[2]);
    r.top1 = {number(cells[3]), number(cells[4])};
    r.coverage = {number(cells[5]), number(cells[6])};
    r.size = {number(cells[7]), number(cells[8])};
    r.ccv = {number(cells[9]), number(cells[10])};
    r.seeds = static_cast<std::size_t>(number(cells[11]));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_report(const ExperimentReport& report, const std::filesystem::path& path,
                         ReportFormat format) {
  auto out = detail::open_for_write(path, false);
  if (format == ReportFormat::json) {
    out << report_to_json(report).dump(2) << '\n';
  } else {
    out << report_to_csv(report);
  }
  if (!out) throw IoError("short write to " + path.string());
}

inline ExperimentReport read_report_json(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  try {
    return report_from_json(nlohmann::ordered_json::parse(bytes.begin(), bytes.end()));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("report is not valid JSON: ") + e.what());
  }
}

inline std::vector<CsvReportRow> read_report_csv(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return parse_report_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace confot
