#pragma once

#include "shellflow/common.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace shellflow {

constexpr const char* kArtifactVersion = "shellflow 0.1.0";
constexpr int kReportSchemaVersion = 1;

/// A named table of numeric columns; all emitted series use this shape.
struct Table {
  std::string name;                       // file stem, e.g. "series"
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // each row has columns.size() entries

  void add_row(std::initializer_list<double> values);
};

/// Everything one experiment emits. Writers are deterministic: the same
/// bundle produces byte-identical files.
struct ReportBundle {
  nlohmann::json report;       // becomes report.json
  nlohmann::json config;       // becomes config.resolved.json
  std::vector<Table> tables;   // .csv (and plot/*.dat when requested)
};

std::string format_double(double v);

void write_csv(const std::string& path, const Table& table);
void write_plotdata(const std::string& path, const Table& table);
void write_json(const std::string& path, const nlohmann::json& doc);

/// Write the bundle under `dir` honoring the requested series format
/// ("csv" | "json" | "plotdata"). report.json and config.resolved.json are
/// always produced; plotdata additionally writes plot/<name>.dat files.
void emit_report(const ReportBundle& bundle, const std::string& dir, const std::string& format);

/// Minimal structural schema check for emitted reports; used by the tests
/// and by the CLI after writing.
void validate_report_json(const nlohmann::json& doc);

}  // namespace shellflow
