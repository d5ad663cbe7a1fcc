#pragma once

#include "harmscope/core.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace harmscope::io {

// Predictions CSV
//   subject_id,dataset_id,model_id,task,dimension,truth,prediction[,obs][,context:<name>...]
// task is "cls" or "reg". Without an obs column, repeated keys are numbered
// in file order; with one, a repeated (key, obs) is an error.
std::vector<PredictionRecord> parse_predictions(std::string_view text, std::string_view source = "<input>");
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path);
std::string format_predictions(std::span<const PredictionRecord> records);

// Cohort CSV
//   #attribute,<name>,<level;level;...>,<protected-or-reference level>
//   ...
//   subject_id,<attr1>,<attr2>,...
// Two levels make a binary attribute (designated = protected); more make a
// categorical factor (designated = reference). Blank cells mean "unknown".
CohortTable parse_cohort(std::string_view text, std::string_view source = "<input>");
CohortTable load_cohort(const std::filesystem::path& path);
std::string format_cohort(const CohortTable& cohort);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

/// Shortest decimal that round-trips to the same double, "C" locale.
std::string format_number(double value);

/// Strict parse of a whole field; throws InputError on trailing garbage.
double parse_number(std::string_view text);

/// Splits one CSV line, honoring double-quoted fields.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace harmscope::io
