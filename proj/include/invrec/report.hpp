#pragma once

// Experiment reports: one long-format CSV row per metric cell plus a JSON
// summary, written as <experiment>_<seed>.csv and
// <experiment>_<seed>_summary.json.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace invrec::report {

using Json = nlohmann::ordered_json;

/// Fixed six-decimal rendering used in every report file.
std::string fixed6(double v);

struct Row {
  std::vector<std::pair<std::string, std::string>> fields;

  Row& add(std::string key, std::string value);
  Row& add(std::string key, double value);
  Row& add(std::string key, long long value);
  Row& add(std::string key, int value) { return add(std::move(key), static_cast<long long>(value)); }
  Row& add(std::string key, std::size_t value) { return add(std::move(key), static_cast<long long>(value)); }
  Row& add(std::string key, const char* value) { return add(std::move(key), std::string(value)); }
  /// Value of `key`; throws when absent.
  const std::string& get(const std::string& key) const;
  double number(const std::string& key) const;
};

struct ExperimentReport {
  std::string experiment;
  std::uint64_t seed = 0;
  Json config = Json::object();
  std::vector<Row> rows;
  Json summary = Json::object();
  std::vector<std::string> skip_log;

  /// Rows must share the same keys in the same order.
  std::string csv() const;
  std::string summary_json() const;
  /// Returns the paths written.
  std::vector<std::filesystem::path> write(const std::filesystem::path& dir) const;
  /// Rows whose fields match every (key, value) pair.
  std::vector<const Row*> select(const std::vector<std::pair<std::string, std::string>>& where) const;
};

}  // namespace invrec::report
