#include "invrec/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "invrec/common.hpp"

namespace invrec::report {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

Row& Row::add(std::string key, std::string value) {
  fields.emplace_back(std::move(key), std::move(value));
  return *this;
}

Row& Row::add(std::string key, double value) { return add(std::move(key), fixed6(value)); }

Row& Row::add(std::string key, long long value) { return add(std::move(key), std::to_string(value)); }

const std::string& Row::get(const std::string& key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return v;
  }
  throw Error("report row has no field '" + key + "'");
}

double Row::number(const std::string& key) const { return std::stod(get(key)); }

std::string ExperimentReport::csv() const {
  std::ostringstream os;
  if (rows.empty()) return "";
  for (std::size_t i = 0; i < rows.front().fields.size(); ++i) os << (i ? "," : "") << rows.front().fields[i].first;
  os << '\n';
  for (const auto& r : rows) {
    if (r.fields.size() != rows.front().fields.size()) throw Error("report rows have different shapes");
    for (std::size_t i = 0; i < r.fields.size(); ++i) os << (i ? "," : "") << r.fields[i].second;
    os << '\n';
  }
  return os.str();
}

std::string ExperimentReport::summary_json() const {
  Json doc;
  doc["experiment"] = experiment;
  doc["seed"] = seed;
  doc["config"] = config;
  doc["summary"] = summary;
  doc["skipped_cells"] = skip_log;
  return doc.dump(2) + "\n";
}

std::vector<std::filesystem::path> ExperimentReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const std::string stem = experiment + "_" + std::to_string(seed);
  const auto csv_path = dir / (stem + ".csv");
  const auto json_path = dir / (stem + "_summary.json");
  {
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) throw Error("cannot write " + csv_path.string());
    f << csv();
  }
  {
    std::ofstream f(json_path, std::ios::binary);
    if (!f) throw Error("cannot write " + json_path.string());
    f << summary_json();
  }
  return {csv_path, json_path};
}

std::vector<const Row*> ExperimentReport::select(const std::vector<std::pair<std::string, std::string>>& where) const {
  std::vector<const Row*> out;
  for (const auto& r : rows) {
    bool ok = true;
    for (const auto& [k, v] : where) {
      bool found = false;
      for (const auto& [rk, rv] : r.fields) {
        if (rk == k) {
          found = rv == v;
          break;
        }
      }
      if (!found) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(&r);
  }
  return out;
}

}  // namespace invrec::report
