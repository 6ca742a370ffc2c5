#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "invrec/common.hpp"

namespace invrec {

struct Column {
  std::string name;
  int arity = 2;

  bool operator==(const Column&) const = default;
};

/// Discrete samples, one row per (u, x, r, y, e) tuple. Column names follow
/// the file header convention: user columns start with `u`, item columns with
/// `x`, platform-selected columns with `r`, then `y` and `e`.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Column> columns) : columns_(std::move(columns)) {}

  const std::vector<Column>& columns() const { return columns_; }
  std::size_t rows() const { return columns_.empty() ? 0 : values_.size() / columns_.size(); }
  std::size_t cols() const { return columns_.size(); }
  bool empty() const { return values_.empty(); }

  /// Column index by name; throws Error when absent.
  std::size_t col(std::string_view name) const;
  bool has(std::string_view name) const;

  int at(std::size_t r, std::size_t c) const { return values_[r * columns_.size() + c]; }
  std::span<const int> row(std::size_t r) const { return {values_.data() + r * columns_.size(), columns_.size()}; }
  void append_row(std::span<const int> row);
  void reserve(std::size_t n) { values_.reserve(n * columns_.size()); }

  /// Rows selected by index, in the given order.
  Dataset select(std::span<const std::size_t> idx) const;
  /// Rows whose column `name` equals `value`.
  Dataset filter(std::string_view name, int value) const;
  /// Same columns, rows of `other` appended (arities widened to cover both).
  void append(const Dataset& other);

  const std::vector<int>& values() const { return values_; }
  bool operator==(const Dataset&) const = default;

 private:
  std::vector<Column> columns_;
  std::vector<int> values_;
};

/// Feature columns used by predictors: every `x*` and `r*` column, plus `u*`
/// columns when `include_user` is set, in file order.
std::vector<std::size_t> feature_columns(const Dataset& data, bool include_user = false);

/// Encodes discrete values into [-1, 1]: v -> 2v/(arity-1) - 1.
Matrix encode_features(const Dataset& data, std::span<const std::size_t> columns);
std::vector<int> labels(const Dataset& data);

void write_csv(std::ostream& out, const Dataset& data);
void write_csv(const std::filesystem::path& path, const Dataset& data);
/// Arity of each column is inferred as max(2, max value + 1).
Dataset read_csv(std::istream& in);
Dataset read_csv(const std::filesystem::path& path);

}  // namespace invrec
