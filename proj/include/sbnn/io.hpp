#pragma once

// CSV and JSON persistence shared by every module. Doubles are written in
// shortest round-trip form so reloaded artifacts are bit-identical.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sbnn/common.hpp"

namespace sbnn {

using json = nlohmann::ordered_json;

struct NamedMatrix {
  std::vector<std::string> columns;
  RowMatrix values;
};

inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& columns,
                      const Eigen::Ref<const RowMatrix>& values) {
  require(static_cast<Eigen::Index>(columns.size()) == values.cols(), "CSV header does not match column count");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << '\n';
  std::string line;
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    line.clear();
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) line += ',';
      line += format_double(values(r, c));
    }
    line += '\n';
    out << line;
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline NamedMatrix read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  NamedMatrix m;
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument(path.string() + ": empty CSV");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) m.columns.push_back(cell);
  }
  std::vector<double> flat;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t cols = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      double v = 0;
      auto [ptr, ec] = std::from_chars(p, comma, v);
      if (ec != std::errc() || ptr != comma)
        throw InvalidArgument(path.string() + ": malformed number on data row " + std::to_string(rows + 1));
      flat.push_back(v);
      ++cols;
      p = comma + 1;
    }
    if (cols != m.columns.size())
      throw InvalidArgument(path.string() + ": row " + std::to_string(rows + 1) + " has wrong column count");
    ++rows;
  }
  m.values = Eigen::Map<RowMatrix>(flat.data(), static_cast<Eigen::Index>(rows),
                                   static_cast<Eigen::Index>(m.columns.size()));
  return m;
}

inline json to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Vector vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Row-major flat array.
inline json to_json(const Matrix& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  return json(flat);
}

inline Matrix matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols) {
  const auto v = j.get<std::vector<double>>();
  require(static_cast<Eigen::Index>(v.size()) == rows * cols, "matrix JSON has wrong element count");
  return Eigen::Map<const RowMatrix>(v.data(), rows, cols);
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

}  // namespace sbnn
