#include "bpnp/io.h"

#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

namespace bpnp {
namespace {

namespace fs = std::filesystem;

fs::path TempDir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bpnp_io_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Points, RoundTripIsExact) {
  const fs::path dir = TempDir("points");
  Eigen::VectorXd z(6);
  z << 0.1, -2.0 / 3.0, 1e-300, 12345.678901234567, -0.0, 7.0;
  WritePoints(dir / "p.json", z);
  EXPECT_EQ(ReadPoints(dir / "p.json"), z);
}

TEST(Points, RejectsMalformedRows) {
  EXPECT_THROW(PointsFromJson(Json::parse(R"({"points": [[1, 2]]})")),
               InvalidInput);
  EXPECT_THROW(PointsFromJson(Json::parse(R"({"points": [[1, 2, "a"]]})")),
               InvalidInput);
  EXPECT_THROW(PointsFromJson(Json::parse(R"({"pts": []})")), InvalidInput);
  EXPECT_EQ(PointsFromJson(Json::parse(R"({"points": []})")).size(), 0);
}

TEST(Points, ErrorsNameThePath) {
  const fs::path dir = TempDir("bad");
  try {
    ReadPoints(dir / "missing.json");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("missing.json"), std::string::npos);
  }
  WriteText(dir / "broken.json", "{\"points\": [[1,2,3]");
  try {
    ReadPoints(dir / "broken.json");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("broken.json"), std::string::npos);
  }
  WriteText(dir / "short.json", "{\"points\": [[1,2]]}");
  EXPECT_THROW(ReadPoints(dir / "short.json"), IoError);
}

TEST(Correspondences, RoundTripWithAndWithoutIntrinsics) {
  const fs::path dir = TempDir("corrs");
  CorrespondenceFile f;
  f.corrs = Correspondences(Eigen::Vector4d(1.5, 2.25, -3.0, 4.0),
                            (Eigen::VectorXd(6) << 1, 2, 3, 4, 5, 6).finished());
  WriteCorrespondences(dir / "a.json", f);
  CorrespondenceFile back = ReadCorrespondences(dir / "a.json");
  EXPECT_EQ(back.corrs.x2d, f.corrs.x2d);
  EXPECT_EQ(back.corrs.pts3d, f.corrs.pts3d);
  EXPECT_FALSE(back.intrinsics);

  f.intrinsics = Intrinsics{800.0, 700.0, 400.0, 300.0};
  WriteCorrespondences(dir / "b.json", f);
  back = ReadCorrespondences(dir / "b.json");
  ASSERT_TRUE(back.intrinsics);
  EXPECT_EQ(back.intrinsics->AsVector(), f.intrinsics->AsVector());
}

TEST(Correspondences, RejectsMismatchedLengths) {
  const Json j = Json::parse(R"({"x2d": [[1, 2]], "z3d": [[1, 2, 3], [4, 5, 6]]})");
  EXPECT_THROW(CorrespondencesFromJson(j), InvalidInput);
  const Json k = Json::parse(
      R"({"x2d": [[1, 2]], "z3d": [[1, 2, 3]], "K": {"fx": 1, "fy": 1, "cx": 0}})");
  EXPECT_THROW(CorrespondencesFromJson(k), InvalidInput);
}

TEST(Csv, RoundTripIsBitExact) {
  const fs::path dir = TempDir("csv");
  CsvTable t;
  t.header = {"epoch", "loss", "x"};
  t.rows = {{0, 1.0 / 3.0, -1e-310},
            {1, std::numeric_limits<double>::max(), 0.1},
            {2, std::numeric_limits<double>::infinity(), -7.25}};
  WriteCsv(dir / "t.csv", t);
  const CsvTable back = ReadCsv(dir / "t.csv");
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(back.Column("loss"), 1);
  EXPECT_EQ(back.Column("nope"), -1);
  EXPECT_EQ(ReadText(dir / "t.csv").substr(0, 13), "epoch,loss,x\n");
}

TEST(Csv, RejectsRaggedAndNonNumericRows) {
  EXPECT_THROW(ParseCsv(""), InvalidInput);
  EXPECT_THROW(ParseCsv("a,b\n1\n"), InvalidInput);
  EXPECT_THROW(ParseCsv("a,b\n1,x\n"), InvalidInput);
  EXPECT_THROW(ParseCsv("a,b\n1,2z\n"), InvalidInput);
  EXPECT_THROW(ParseCsv("a,b\n1,\n"), InvalidInput);
  EXPECT_EQ(ParseCsv("a,b\n").rows.size(), 0u);
  CsvTable t;
  t.header = {"a"};
  t.rows = {{1.0, 2.0}};
  EXPECT_THROW(FormatCsv(t), InvalidInput);
}

TEST(Json, KeyOrderIsPreserved) {
  const fs::path dir = TempDir("json");
  Json j;
  j["zeta"] = 1;
  j["alpha"] = 2;
  WriteJson(dir / "j.json", j);
  const Json back = ReadJson(dir / "j.json");
  EXPECT_EQ(back.begin().key(), "zeta");
  EXPECT_EQ(back, j);
}

}  // namespace
}  // namespace bpnp
