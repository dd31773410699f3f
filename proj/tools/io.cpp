#include "io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace attnlip::cli {
namespace {

std::optional<Vector> parse_bias(const Json& head, const char* key, Eigen::Index d, const std::string& context) {
  if (!head.contains(key) || head.at(key).is_null()) return std::nullopt;
  const Json& b = head.at(key);
  if (!b.is_array() || static_cast<Eigen::Index>(b.size()) != d)
    throw ValidationError(context + ": " + key + " must be an array of length " + std::to_string(d));
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const Json& e = b[static_cast<std::size_t>(i)];
    if (!e.is_number()) throw ValidationError(context + ": " + key + " has a non-numeric entry");
    v(i) = e.get<double>();
  }
  return v;
}

std::size_t index_field(const Json& obj, const char* key, const std::string& context) {
  if (!obj.contains(key) || !obj.at(key).is_number_unsigned())
    throw ValidationError(context + ": missing or invalid '" + key + "'");
  return obj.at(key).get<std::size_t>();
}

}  // namespace

Matrix parse_matrix(const Json& value, Eigen::Index rows, Eigen::Index cols, const std::string& context) {
  if (!value.is_array() || static_cast<Eigen::Index>(value.size()) != rows)
    throw ValidationError(context + ": expected " + std::to_string(rows) + " rows");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = value[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ValidationError(context + ": row " + std::to_string(i) + " is ragged (expected " +
                            std::to_string(cols) + " columns)");
    for (Eigen::Index j = 0; j < cols; ++j) {
      const Json& e = row[static_cast<std::size_t>(j)];
      if (!e.is_number()) throw ValidationError(context + ": non-numeric entry at (" + std::to_string(i) + ", " +
                                                std::to_string(j) + ")");
      m(i, j) = e.get<double>();
    }
  }
  return m;
}

Json matrix_to_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

WeightsFile parse_weights(const Json& doc) {
  if (!doc.is_object()) throw ValidationError("weights: top level must be an object");
  WeightsFile out;
  const std::size_t dm = index_field(doc, "model_dim", "weights");
  const std::size_t dh = index_field(doc, "head_dim", "weights");
  if (dm == 0 || dh == 0) throw ValidationError("weights: model_dim and head_dim must be positive");
  out.model_dim = static_cast<Eigen::Index>(dm);
  out.head_dim = static_cast<Eigen::Index>(dh);
  if (!doc.contains("heads") || !doc.at("heads").is_array() || doc.at("heads").empty())
    throw ValidationError("weights: 'heads' must be a nonempty array");
  std::size_t position = 0;
  for (const Json& h : doc.at("heads")) {
    const std::string where = "weights: heads[" + std::to_string(position++) + "]";
    if (!h.is_object()) throw ValidationError(where + " is not an object");
    const std::size_t layer = index_field(h, "layer", where);
    const std::size_t head = index_field(h, "head", where);
    const std::string ctx = "weights (layer " + std::to_string(layer) + ", head " + std::to_string(head) + ")";
    for (const char* key : {"w_q", "w_k", "w_v"})
      if (!h.contains(key)) throw ValidationError(ctx + ": missing " + key);
    try {
      out.heads.push_back({layer, head,
                           AttentionHeadWeights(parse_matrix(h.at("w_q"), out.model_dim, out.head_dim, ctx + " w_q"),
                                                parse_matrix(h.at("w_k"), out.model_dim, out.head_dim, ctx + " w_k"),
                                                parse_matrix(h.at("w_v"), out.model_dim, out.head_dim, ctx + " w_v"),
                                                parse_bias(h, "bias_q", out.head_dim, ctx),
                                                parse_bias(h, "bias_k", out.head_dim, ctx),
                                                parse_bias(h, "bias_v", out.head_dim, ctx))});
    } catch (const ValidationError&) {
      throw;
    } catch (const Error& e) {
      throw ValidationError(ctx + ": " + e.what());
    }
  }
  return out;
}

Json weights_to_json(const WeightsFile& w) {
  Json doc;
  doc["model_dim"] = w.model_dim;
  doc["head_dim"] = w.head_dim;
  Json heads = Json::array();
  for (const auto& h : w.heads) {
    Json j;
    j["layer"] = h.layer;
    j["head"] = h.head;
    j["w_q"] = matrix_to_json(h.weights.w_q());
    j["w_k"] = matrix_to_json(h.weights.w_k());
    j["w_v"] = matrix_to_json(h.weights.w_v());
    auto put_bias = [&j](const char* key, const std::optional<Vector>& b) {
      if (!b) return;
      Json arr = Json::array();
      for (Eigen::Index i = 0; i < b->size(); ++i) arr.push_back((*b)(i));
      j[key] = std::move(arr);
    };
    put_bias("bias_q", h.weights.bias_q());
    put_bias("bias_k", h.weights.bias_k());
    put_bias("bias_v", h.weights.bias_v());
    heads.push_back(std::move(j));
  }
  doc["heads"] = std::move(heads);
  return doc;
}

InputSequence parse_input(const Json& doc) {
  if (!doc.is_object() || !doc.contains("x") || !doc.at("x").is_array() || doc.at("x").empty())
    throw ValidationError("input: 'x' must be a nonempty array of rows");
  const Json& x = doc.at("x");
  if (!x[0].is_array() || x[0].empty()) throw ValidationError("input: rows of 'x' must be nonempty arrays");
  Matrix m = parse_matrix(x, static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(x[0].size()), "input x");
  std::optional<double> radius;
  if (doc.contains("radius") && !doc.at("radius").is_null()) {
    if (!doc.at("radius").is_number()) throw ValidationError("input: 'radius' must be a number");
    radius = doc.at("radius").get<double>();
  }
  try {
    return InputSequence(std::move(m), radius);
  } catch (const Error& e) {
    throw ValidationError(std::string("input: ") + e.what());
  }
}

Json input_to_json(const InputSequence& x) {
  Json doc;
  doc["x"] = matrix_to_json(x.x());
  if (x.radius()) doc["radius"] = *x.radius();
  return doc;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ValidationError("csv: no column '" + name + "'");
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  const std::string& cell = rows.at(row).at(column(name));
  if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size()) throw ValidationError("csv: '" + cell + "' in column " + name + " is not a number");
  return v;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line)) throw ValidationError("csv: missing header");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size())
      throw ValidationError("csv: row " + std::to_string(t.rows.size() + 1) + " has wrong cell count");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

std::string to_csv(const CsvTable& table) {
  std::string out;
  auto append_row = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  append_row(table.header);
  for (const auto& r : table.rows) append_row(r);
  return out;
}

}  // namespace attnlip::cli
