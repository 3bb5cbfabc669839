#ifndef VPFB_CSV_HPP
#define VPFB_CSV_HPP

// Minimal CSV reading and writing for point sets and numeric tables.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vpfb/data.hpp"
#include "vpfb/error.hpp"

namespace vpfb {

namespace fs = std::filesystem;

inline void ensure_parent_dir(const fs::path& path) {
  const fs::path parent = path.parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw IoError("cannot create directory " + parent.string() + ": " + ec.message());
}

/// Streams rows of numbers under a fixed header. Doubles are written with
/// round-trip precision. In append mode an existing file keeps its header.
class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header, bool append = false)
      : path_(path), columns_(header.size()) {
    ensure_parent_dir(path);
    const bool resume = append && fs::exists(path);
    out_.open(path, resume ? std::ios::app : std::ios::trunc);
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
    out_ << std::setprecision(17);
    if (resume) return;
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
  }

  void row(const std::vector<double>& values) {
    detail::require(values.size() == columns_, "CsvWriter: row width does not match header of " + path_.string());
    for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << values[i];
    out_ << '\n';
    if (!out_) throw IoError("write failed on " + path_.string());
  }

  void flush() { out_.flush(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::size_t columns_;
  std::ofstream out_;
};

/// Writes points with header x1..xn, plus a label column when labels are given.
inline void write_points_csv(const fs::path& path, const Matrix& points, const std::vector<int>& labels = {}) {
  detail::require(labels.empty() || static_cast<Eigen::Index>(labels.size()) == points.rows(),
                  "write_points_csv: one label per point required");
  std::vector<std::string> header;
  for (Eigen::Index j = 0; j < points.cols(); ++j) header.push_back("x" + std::to_string(j + 1));
  if (!labels.empty()) header.push_back("label");
  CsvWriter w(path, header);
  std::vector<double> row(header.size());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) row[static_cast<std::size_t>(j)] = points(i, j);
    if (!labels.empty()) row.back() = labels[static_cast<std::size_t>(i)];
    w.row(row);
  }
}

/// Reads a table with a header line. Returns the header and the numeric rows.
inline std::pair<std::vector<std::string>, std::vector<std::vector<double>>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty file " + path.string());
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      header.push_back(cell);
    }
  }
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const char* b = cell.data();
      const char* e = cell.data() + cell.size();
      while (b < e && *b == ' ') ++b;
      double v = 0.0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || p != e) {
        throw IoError(path.string() + ":" + std::to_string(lineno) + ": not a number '" + cell + "'");
      }
      row.push_back(v);
    }
    if (row.size() != header.size()) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                    " columns");
    }
    rows.push_back(std::move(row));
  }
  return {header, rows};
}

/// Reads points written by write_points_csv. Extra columns other than
/// x1..xn and label are rejected.
inline LabelledPoints read_points_csv(const fs::path& path) {
  auto [header, rows] = read_csv(path);
  std::size_t n = 0;
  while (n < header.size() && header[n] == "x" + std::to_string(n + 1)) ++n;
  const bool labelled = n + 1 == header.size() && header[n] == "label";
  if (n == 0 || (n != header.size() && !labelled)) {
    throw IoError(path.string() + ": header must be x1,...,xn[,label]");
  }
  LabelledPoints out;
  out.points.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j) out.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    if (labelled) out.labels.push_back(static_cast<int>(rows[i][n]));
  }
  return out;
}

}  // namespace vpfb

#endif  // VPFB_CSV_HPP
