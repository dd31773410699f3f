#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "attnlip/attention.hpp"
#include "attnlip/error.hpp"

namespace attnlip::cli {

using Json = nlohmann::ordered_json;

// Unreadable or unwritable file. Exit code 1.
class IoError : public Error {
 public:
  using Error::Error;
};

// Input that parses but violates the file schema or its dimensions. Exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

struct LabeledHead {
  std::size_t layer = 0;
  std::size_t head = 0;
  AttentionHeadWeights weights;
};

// {model_dim, head_dim, heads: [{layer, head, w_q, w_k, w_v, bias_q?, bias_k?, bias_v?}]}
// with row-major nested arrays.
struct WeightsFile {
  Eigen::Index model_dim = 0;
  Eigen::Index head_dim = 0;
  std::vector<LabeledHead> heads;
};

WeightsFile parse_weights(const Json& doc);
Json weights_to_json(const WeightsFile& w);

// {x: [[...]], radius?: R}
InputSequence parse_input(const Json& doc);
Json input_to_json(const InputSequence& x);

// Row-major nested array of the given shape. `context` prefixes error messages.
Matrix parse_matrix(const Json& value, Eigen::Index rows, Eigen::Index cols, const std::string& context);
Json matrix_to_json(const Matrix& m);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

// %.17g, which round-trips every finite double.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  // Empty cells read as NaN.
  double number(std::size_t row, const std::string& name) const;
};

// Plain comma-separated values; no quoting is ever emitted or accepted.
CsvTable parse_csv(const std::string& text);
CsvTable read_csv_file(const std::filesystem::path& path);
std::string to_csv(const CsvTable& table);

}  // namespace attnlip::cli
