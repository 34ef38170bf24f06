#include "shellflow/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace shellflow {

void Table::add_row(std::initializer_list<double> values) {
  if (values.size() != columns.size())
    throw ConfigError("Table::add_row: arity mismatch in table '" + name + "'");
  rows.emplace_back(values);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

void write_rows(std::ofstream& out, const Table& table, char sep) {
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << sep;
      out << format_double(row[i]);
    }
    out << '\n';
  }
}

std::ofstream open_for_write(const std::string& path) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);  // binary: no platform newline surprises
  if (!out) throw ConfigError("cannot write '" + path + "'");
  return out;
}

}  // namespace

void write_csv(const std::string& path, const Table& table) {
  std::ofstream out = open_for_write(path);
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    if (i) out << ',';
    out << table.columns[i];
  }
  out << '\n';
  write_rows(out, table, ',');
}

void write_plotdata(const std::string& path, const Table& table) {
  std::ofstream out = open_for_write(path);
  for (std::size_t i = 0; i < table.columns.size(); ++i)
    out << "# column " << (i + 1) << ": " << table.columns[i] << '\n';
  write_rows(out, table, ' ');
}

void write_json(const std::string& path, const nlohmann::json& doc) {
  std::ofstream out = open_for_write(path);
  out << doc.dump(2) << '\n';
}

void emit_report(const ReportBundle& bundle, const std::string& dir, const std::string& format) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_json((fs::path(dir) / "config.resolved.json").string(), bundle.config);

  nlohmann::json report = bundle.report;
  report["artifact_version"] = kArtifactVersion;
  report["schema_version"] = kReportSchemaVersion;
  report["config"] = bundle.config;
  validate_report_json(report);
  write_json((fs::path(dir) / "report.json").string(), report);

  for (const auto& table : bundle.tables) {
    if (format == "json") {
      nlohmann::json jt;
      jt["columns"] = table.columns;
      jt["rows"] = table.rows;
      write_json((fs::path(dir) / (table.name + ".json")).string(), jt);
    } else {
      write_csv((fs::path(dir) / (table.name + ".csv")).string(), table);
      if (format == "plotdata")
        write_plotdata((fs::path(dir) / "plot" / (table.name + ".dat")).string(), table);
    }
  }
}

void validate_report_json(const nlohmann::json& doc) {
  const auto need = [&](const char* key, bool ok) {
    if (!doc.contains(key) || !ok)
      throw CheckError(std::string("report schema: bad or missing key '") + key + "'");
  };
  need("artifact_version", doc.contains("artifact_version") && doc["artifact_version"].is_string());
  need("schema_version", doc.contains("schema_version") && doc["schema_version"].is_number_integer());
  need("experiment", doc.contains("experiment") && doc["experiment"].is_string());
  need("config", doc.contains("config") && doc["config"].is_object());
  need("results", doc.contains("results") && doc["results"].is_object());
}

}  // namespace shellflow
