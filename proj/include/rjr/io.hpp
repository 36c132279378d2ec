#pragma once

// CSV tables, JSON sidecars and run manifests.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "rjr/common.hpp"
#include "rjr/config.hpp"
#include "rjr/sweep.hpp"

#ifndef RJR_VERSION
#define RJR_VERSION "0.0.0"
#endif

namespace rjr {

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  double back = 0.0;
  for (int p = 6; p <= 17; ++p) {
    std::ostringstream t;
    t << std::setprecision(p) << v;
    std::istringstream(t.str()) >> back;
    if (back == v) return t.str();
  }
  return os.str();
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Simple CSV table with a fixed header.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(std::vector<std::string> row) {
    if (row.size() != header_.size()) throw Error("csv: row width does not match header");
    rows_.push_back(std::move(row));
  }

  std::string str() const {
    std::string s;
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t k = 0; k < r.size(); ++k) s += (k ? "," : "") + csv_escape(r[k]);
      s += "\n";
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return s;
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << str();
  }

  std::size_t size() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

/// Long-format sweep table: one row per grid point and scalar observable.
/// Columns: point, <axis names>, observable, value, converged, error.
inline CsvTable sweep_table(const SweepResult& s) {
  std::vector<std::string> header{"point"};
  header.insert(header.end(), s.axis_names.begin(), s.axis_names.end());
  for (const char* c : {"observable", "value", "converged", "error"}) header.emplace_back(c);
  CsvTable t(header);
  for (const auto& p : s.points) {
    std::vector<std::pair<std::string, double>> obs;
    if (p.ok) {
      obs = scalar_rows(p.report);
      obs.emplace_back("mu", p.mu);
      obs.emplace_back("iterations", p.iterations);
    } else {
      obs.emplace_back("n_z", std::nan(""));
    }
    for (const auto& [name, value] : obs) {
      std::vector<std::string> row{std::to_string(p.index)};
      for (double c : p.coords) row.push_back(format_double(c));
      row.push_back(name);
      row.push_back(format_double(value));
      row.push_back(p.converged ? "1" : "0");
      row.push_back(p.error);
      t.add(std::move(row));
    }
  }
  return t;
}

inline nlohmann::json sweep_json(const SweepResult& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& p : s.points) {
    nlohmann::json r{{"point", p.index}, {"ok", p.ok}, {"converged", p.converged}, {"mu_meV", p.mu}};
    nlohmann::json coords;
    for (std::size_t k = 0; k < s.axis_names.size(); ++k) coords[s.axis_names[k]] = p.coords[k];
    r["coords"] = coords;
    if (p.ok) r["observables"] = to_json(p.report);
    else r["error"] = p.error;
    rows.push_back(r);
  }
  return {{"axes", s.axis_names}, {"points", rows}};
}

struct RunOptions {
  std::filesystem::path out_dir = ".";
  int workers = 1;
  std::uint64_t seed = 1;
  bool strict = false;
};

inline nlohmann::json manifest(const std::string& command, const RunConfig& cfg, const RunOptions& opt,
                               double wall_seconds, const std::vector<std::string>& outputs) {
  return {{"command", command},
          {"version", RJR_VERSION},
          {"seed", opt.seed},
          {"workers", opt.workers},
          {"strict", opt.strict},
          {"wall_time_s", wall_seconds},
          {"outputs", outputs},
          {"config", to_json(cfg)},
          {"input", cfg.source}};
}

}  // namespace rjr
