#include "invrec/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace invrec {

std::size_t Dataset::col(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  throw Error("dataset has no column '" + std::string(name) + "'");
}

bool Dataset::has(std::string_view name) const {
  return std::any_of(columns_.begin(), columns_.end(), [&](const Column& c) { return c.name == name; });
}

void Dataset::append_row(std::span<const int> row) {
  if (row.size() != columns_.size()) {
    throw ShapeError("row of width " + std::to_string(row.size()) + " appended to dataset of width " +
                     std::to_string(columns_.size()));
  }
  values_.insert(values_.end(), row.begin(), row.end());
}

Dataset Dataset::select(std::span<const std::size_t> idx) const {
  Dataset out(columns_);
  out.reserve(idx.size());
  for (std::size_t i : idx) out.append_row(row(i));
  return out;
}

Dataset Dataset::filter(std::string_view name, int value) const {
  const std::size_t c = col(name);
  Dataset out(columns_);
  for (std::size_t r = 0; r < rows(); ++r) {
    if (at(r, c) == value) out.append_row(row(r));
  }
  return out;
}

void Dataset::append(const Dataset& other) {
  if (columns_.empty() && values_.empty()) {
    *this = other;
    return;
  }
  if (other.columns_.size() != columns_.size()) throw ShapeError("cannot append datasets with different columns");
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (other.columns_[i].name != columns_[i].name) {
      throw ShapeError("column mismatch: '" + columns_[i].name + "' vs '" + other.columns_[i].name + "'");
    }
    columns_[i].arity = std::max(columns_[i].arity, other.columns_[i].arity);
  }
  values_.insert(values_.end(), other.values_.begin(), other.values_.end());
}

std::vector<std::size_t> feature_columns(const Dataset& data, bool include_user) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.cols(); ++i) {
    const char lead = data.columns()[i].name.empty() ? '\0' : data.columns()[i].name.front();
    if (lead == 'x' || lead == 'r' || (include_user && lead == 'u')) out.push_back(i);
  }
  return out;
}

Matrix encode_features(const Dataset& data, std::span<const std::size_t> columns) {
  Matrix out(data.rows(), columns.size());
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      const int arity = data.columns()[columns[j]].arity;
      out(r, j) = 2.0 * data.at(r, columns[j]) / static_cast<double>(arity - 1) - 1.0;
    }
  }
  return out;
}

std::vector<int> labels(const Dataset& data) {
  const std::size_t c = data.col("y");
  std::vector<int> out(data.rows());
  for (std::size_t r = 0; r < data.rows(); ++r) out[r] = data.at(r, c);
  return out;
}

void write_csv(std::ostream& out, const Dataset& data) {
  for (std::size_t i = 0; i < data.cols(); ++i) out << (i ? "," : "") << data.columns()[i].name;
  out << '\n';
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t i = 0; i < data.cols(); ++i) out << (i ? "," : "") << data.at(r, i);
    out << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  write_csv(f, data);
}

Dataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("empty dataset file");
  std::vector<Column> cols;
  {
    std::stringstream ss(line);
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (!name.empty() && name.back() == '\r') name.pop_back();
      cols.push_back({name, 2});
    }
  }
  if (cols.empty()) throw Error("dataset header has no columns");
  Dataset data(cols);
  std::vector<int> row(cols.size());
  std::vector<int> max_value(cols.size(), 1);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::size_t c = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (c < cols.size()) {
      int v = 0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || v < 0) throw Error("line " + std::to_string(line_no) + ": expected a nonnegative integer");
      row[c] = v;
      max_value[c] = std::max(max_value[c], v);
      ++c;
      p = next;
      if (c < cols.size()) {
        if (p == end || *p != ',') throw Error("line " + std::to_string(line_no) + ": expected " + std::to_string(cols.size()) + " fields");
        ++p;
      }
    }
    if (p != end && *p != '\r') throw Error("line " + std::to_string(line_no) + ": too many fields");
    data.append_row(row);
  }
  for (std::size_t c = 0; c < cols.size(); ++c) cols[c].arity = std::max(2, max_value[c] + 1);
  Dataset out(cols);
  out.append(data);
  return out;
}

Dataset read_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path.string());
  return read_csv(f);
}

}  // namespace invrec
