#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "kronest/models.hpp"

namespace kronest {

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// One sample per row. Header: x_1..x_m,y (scalar response, m = p*q, X column-major)
/// or x_1..x_m,y_1..y_r (bilinear, m = q1*q2, r = p1*p2, X and Y column-major).
Dataset read_dataset_csv(const std::filesystem::path& path, ModelFamily family, const KroneckerShape& shape);
Dataset parse_dataset_csv(std::string_view text, ModelFamily family, const KroneckerShape& shape);
std::string dataset_to_csv(const Dataset& data);

/// Plain numeric matrix, one row per line, no header.
std::string matrix_to_csv(const Matrix& m);

} // namespace kronest
