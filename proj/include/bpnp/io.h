#ifndef BPNP_IO_H_
#define BPNP_IO_H_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "bpnp/errors.h"
#include "bpnp/geometry.h"

namespace bpnp {

using Json = nlohmann::ordered_json;

// Unreadable, unwritable or malformed files. The message names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

// {"points": [[x, y, z], ...]}
Json PointsToJson(const Eigen::VectorXd& pts3d);
Eigen::VectorXd PointsFromJson(const Json& j);
Eigen::VectorXd ReadPoints(const std::filesystem::path& path);
void WritePoints(const std::filesystem::path& path,
                 const Eigen::VectorXd& pts3d);

// {"x2d": [[u, v], ...], "z3d": [[x, y, z], ...],
//  "K": {"fx": .., "fy": .., "cx": .., "cy": ..}}. K is optional.
struct CorrespondenceFile {
  Correspondences corrs;
  std::optional<Intrinsics> intrinsics;
};

Json CorrespondencesToJson(const CorrespondenceFile& file);
CorrespondenceFile CorrespondencesFromJson(const Json& j);
CorrespondenceFile ReadCorrespondences(const std::filesystem::path& path);
void WriteCorrespondences(const std::filesystem::path& path,
                          const CorrespondenceFile& file);

Json IntrinsicsToJson(const Intrinsics& k);
Intrinsics IntrinsicsFromJson(const Json& j);

// Numeric table with a header row. Values are written with 17 significant
// digits so they read back bit-identical.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int Column(const std::string& name) const;  // -1 when absent
};

std::string FormatCsv(const CsvTable& table);
CsvTable ParseCsv(const std::string& text);
CsvTable ReadCsv(const std::filesystem::path& path);
void WriteCsv(const std::filesystem::path& path, const CsvTable& table);

Json ReadJson(const std::filesystem::path& path);
void WriteJson(const std::filesystem::path& path, const Json& j);

std::string ReadText(const std::filesystem::path& path);
void WriteText(const std::filesystem::path& path, const std::string& text);

}  // namespace bpnp

#endif  // BPNP_IO_H_
