// csv.hpp — small deterministic CSV/number formatting helpers shared by
// the result writers and the calibration target loader.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fmflink {

/// Shortest decimal representation that round-trips a double exactly.
std::string format_number(double value);

/// One CSV line from cells (no quoting; cells must not contain commas).
std::string csv_line(const std::vector<std::string>& cells);

/// Writes `text` to `path` atomically: a sibling temp file is renamed
/// into place so readers never observe partial output.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

/// Reads a rectangular CSV of numbers. `header_lines` rows are skipped;
/// empty cells and the tokens "nan"/"-inf" map to NaN / -infinity.
Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& path,
                                int header_lines = 0);

/// Writes a matrix as CSV, one row per line. NaN cells are left empty,
/// -inf cells become "-inf".
void write_csv_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header = {});

}  // namespace fmflink
