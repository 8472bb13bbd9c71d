#include "bpnp/io.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace bpnp {
namespace {

Json Rows(const Eigen::VectorXd& v, int width) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < v.size() / width; ++i) {
    Json row = Json::array();
    for (int k = 0; k < width; ++k) row.push_back(v[width * i + k]);
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::VectorXd FromRows(const Json& rows, int width, const char* key) {
  if (!rows.is_array()) {
    throw InvalidInput(std::string("\"") + key + "\" must be an array");
  }
  Eigen::VectorXd v(width * static_cast<Eigen::Index>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    const Json& row = rows[i];
    if (!row.is_array() || static_cast<int>(row.size()) != width) {
      throw InvalidInput(std::string("\"") + key + "\" entry " +
                         std::to_string(i) + " must have " +
                         std::to_string(width) + " numbers");
    }
    for (int k = 0; k < width; ++k) {
      if (!row[k].is_number()) {
        throw InvalidInput(std::string("\"") + key + "\" entry " +
                           std::to_string(i) + " is not numeric");
      }
      v[width * static_cast<Eigen::Index>(i) + k] = row[k].get<double>();
    }
  }
  return v;
}

const Json& Field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw InvalidInput(std::string("missing field \"") + key + "\"");
  }
  return j.at(key);
}

std::string FormatNumber(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename Fn>
auto WithPath(const std::filesystem::path& path, Fn&& fn) {
  try {
    return fn();
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace

Json PointsToJson(const Eigen::VectorXd& pts3d) {
  return Json{{"points", Rows(pts3d, 3)}};
}

Eigen::VectorXd PointsFromJson(const Json& j) {
  return FromRows(Field(j, "points"), 3, "points");
}

Eigen::VectorXd ReadPoints(const std::filesystem::path& path) {
  const Json j = ReadJson(path);
  return WithPath(path, [&] { return PointsFromJson(j); });
}

void WritePoints(const std::filesystem::path& path,
                 const Eigen::VectorXd& pts3d) {
  WriteJson(path, PointsToJson(pts3d));
}

Json IntrinsicsToJson(const Intrinsics& k) {
  return Json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}};
}

Intrinsics IntrinsicsFromJson(const Json& j) {
  Intrinsics k;
  double* dst[4] = {&k.fx, &k.fy, &k.cx, &k.cy};
  const char* names[4] = {"fx", "fy", "cx", "cy"};
  for (int i = 0; i < 4; ++i) {
    const Json& v = Field(j, names[i]);
    if (!v.is_number()) {
      throw InvalidInput(std::string("\"") + names[i] + "\" is not numeric");
    }
    *dst[i] = v.get<double>();
  }
  return k;
}

Json CorrespondencesToJson(const CorrespondenceFile& file) {
  Json j{{"x2d", Rows(file.corrs.x2d, 2)}, {"z3d", Rows(file.corrs.pts3d, 3)}};
  if (file.intrinsics) j["K"] = IntrinsicsToJson(*file.intrinsics);
  return j;
}

CorrespondenceFile CorrespondencesFromJson(const Json& j) {
  CorrespondenceFile f;
  f.corrs.x2d = FromRows(Field(j, "x2d"), 2, "x2d");
  f.corrs.pts3d = FromRows(Field(j, "z3d"), 3, "z3d");
  if (f.corrs.x2d.size() / 2 != f.corrs.pts3d.size() / 3) {
    throw InvalidInput("\"x2d\" and \"z3d\" have different lengths");
  }
  if (j.contains("K")) f.intrinsics = IntrinsicsFromJson(j.at("K"));
  return f;
}

CorrespondenceFile ReadCorrespondences(const std::filesystem::path& path) {
  const Json j = ReadJson(path);
  return WithPath(path, [&] { return CorrespondencesFromJson(j); });
}

void WriteCorrespondences(const std::filesystem::path& path,
                          const CorrespondenceFile& file) {
  WriteJson(path, CorrespondencesToJson(file));
}

int CsvTable::Column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::string FormatCsv(const CsvTable& table) {
  std::string out;
  for (size_t i = 0; i < table.header.size(); ++i) {
    if (i) out += ',';
    out += table.header[i];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) {
      throw InvalidInput("CSV row width does not match the header");
    }
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += FormatNumber(row[i]);
    }
    out += '\n';
  }
  return out;
}

CsvTable ParseCsv(const std::string& text) {
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
  if (!std::getline(in, line) || line.empty()) {
    throw InvalidInput("CSV has no header row");
  }
  t.header = split(line);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != t.header.size()) {
      throw InvalidInput("CSV line " + std::to_string(lineno) + " has " +
                         std::to_string(cells.size()) + " cells, expected " +
                         std::to_string(t.header.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const std::string& c : cells) {
      double v = 0.0;
      const char* end = c.data() + c.size();
      const auto [ptr, ec] = std::from_chars(c.data(), end, v);
      if (c.empty() || ec != std::errc() || ptr != end) {
        throw InvalidInput("CSV line " + std::to_string(lineno) +
                           ": not a number: \"" + c + "\"");
      }
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable ReadCsv(const std::filesystem::path& path) {
  const std::string text = ReadText(path);
  return WithPath(path, [&] { return ParseCsv(text); });
}

void WriteCsv(const std::filesystem::path& path, const CsvTable& table) {
  WriteText(path, FormatCsv(table));
}

Json ReadJson(const std::filesystem::path& path) {
  const std::string text = ReadText(path);
  return WithPath(path, [&] { return Json::parse(text); });
}

void WriteJson(const std::filesystem::path& path, const Json& j) {
  WriteText(path, j.dump(2) + "\n");
}

std::string ReadText(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << text;
  if (!out.flush()) throw IoError(path.string() + ": write failed");
}

}  // namespace bpnp
