#include "cli.h"

#include <filesystem>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "bpnp/io.h"

namespace bpnp::cli {
namespace {

namespace fs = std::filesystem;

struct Invocation {
  int code = -1;
  std::string out;
  std::string err;
};

Invocation Call(std::initializer_list<std::string> args) {
  std::vector<std::string> owned = {"bpnp"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const std::string& a : owned) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  Invocation r;
  r.code = Run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path TempDir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bpnp_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(Call({}).code, kExitUsage);
  EXPECT_EQ(Call({"bogus"}).code, kExitUsage);
  EXPECT_EQ(Call({"pose", "--frames", "3"}).code, kExitUsage);
  const fs::path dir = TempDir("usage");
  const Invocation neg =
      Call({"pose", "--lambda", "-1", "--out", (dir / "a").string()});
  EXPECT_EQ(neg.code, kExitUsage);
  EXPECT_NE(neg.err.find("lambda"), std::string::npos);
  EXPECT_EQ(Call({"pose", "--alpha", "0", "--out", (dir / "b").string()}).code,
            kExitUsage);
  EXPECT_EQ(Call({"pose", "--optimizer", "sgd", "--out", (dir / "c").string()})
                .code,
            kExitUsage);
  EXPECT_EQ(Call({"--help"}).code, kExitOk);
}

TEST(Cli, PoseDefaultRunConverges) {
  const fs::path dir = TempDir("pose");
  const Invocation r = Call({"pose", "--out", dir.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Json s = ReadJson(dir / "summary.json");
  EXPECT_TRUE(s["converged"].get<bool>());
  EXPECT_LE(s["final_loss"].get<double>(), 1e-4);
  EXPECT_FALSE(s["keypoint_drift"].get<bool>());

  const CsvTable t = ReadCsv(dir / "trace.csv");
  EXPECT_EQ(t.header.front(), "epoch");
  EXPECT_GE(t.Column("rz"), 0);
  EXPECT_GE(t.Column("target_reproj_rms"), 0);
  EXPECT_EQ(t.rows.size(), s["epochs"].get<size_t>());
  EXPECT_EQ(t.rows.back()[t.Column("loss")], s["final_loss"].get<double>());

  const Json m = ReadJson(dir / "manifest.json");
  EXPECT_EQ(m["command"], "pose");
  EXPECT_EQ(m["config"]["lambda"].get<double>(), 1.0);
  EXPECT_EQ(m["exit_code"].get<int>(), 0);
}

TEST(Cli, PoseWithoutRegularizerFlagsDrift) {
  const fs::path dir = TempDir("pose_l0");
  const Invocation r =
      Call({"pose", "--lambda", "0", "--seed", "3", "--out", dir.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Json s = ReadJson(dir / "summary.json");
  EXPECT_LE(s["pose_term"].get<double>(), 1e-4);
  EXPECT_GT(s["keypoint_rms"].get<double>(), 5.0);
  EXPECT_TRUE(s["keypoint_drift"].get<bool>());
}

TEST(Cli, ConfigPrecedence) {
  const fs::path dir = TempDir("precedence");
  WriteJson(dir / "cfg.json", Json{{"alpha", 0.05}, {"epochs", 7}, {"n", 10}});
  const Invocation r = Call({"pose", "--config", (dir / "cfg.json").string(),
                             "--epochs", "3", "--out", (dir / "run").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Json m = ReadJson(dir / "run" / "manifest.json");
  EXPECT_EQ(m["config"]["alpha"].get<double>(), 0.05);
  EXPECT_EQ(m["config"]["epochs"].get<int>(), 3);
  EXPECT_EQ(m["config"]["n"].get<int>(), 10);
  EXPECT_EQ(m["config"]["lambda"].get<double>(), 1.0);
  EXPECT_EQ(ReadCsv(dir / "run" / "trace.csv").rows.size(), 3u);

  WriteJson(dir / "bad.json", Json{{"alpah", 0.05}});
  EXPECT_EQ(Call({"pose", "--config", (dir / "bad.json").string(), "--out",
                  (dir / "x").string()})
                .code,
            kExitUsage);
  WriteJson(dir / "typed.json", Json{{"epochs", "many"}});
  EXPECT_EQ(Call({"pose", "--config", (dir / "typed.json").string(), "--out",
                  (dir / "y").string()})
                .code,
            kExitUsage);
}

TEST(Cli, ManifestReproducesTracesByteForByte) {
  const fs::path dir = TempDir("repro");
  ASSERT_EQ(Call({"sfm", "--n", "20", "--frames", "4", "--visibility", "0.8",
                  "--epochs", "6", "--seed", "5", "--snapshot-stride", "2",
                  "--out", (dir / "a").string()})
                .code,
            kExitOk);
  const Invocation again =
      Call({"sfm", "--config", (dir / "a" / "manifest.json").string(), "--out",
            (dir / "b").string()});
  ASSERT_EQ(again.code, kExitOk) << again.err;
  for (const char* f : {"trace.csv", "structure.json", "snapshots/epoch_000004.json"}) {
    EXPECT_EQ(ReadText(dir / "a" / f), ReadText(dir / "b" / f)) << f;
  }
  EXPECT_EQ(Call({"pose", "--config", (dir / "a" / "manifest.json").string(),
                  "--out", (dir / "c").string()})
                .code,
            kExitUsage);
}

TEST(Cli, SfmSnapshotsAndScene) {
  const fs::path dir = TempDir("sfm");
  ASSERT_EQ(Call({"sfm", "--n", "20", "--frames", "4", "--visibility", "0.8",
                  "--epochs", "5", "--snapshot-stride", "2", "--out",
                  (dir / "a").string()})
                .code,
            kExitOk);
  EXPECT_TRUE(fs::exists(dir / "a" / "snapshots" / "epoch_000000.json"));
  EXPECT_TRUE(fs::exists(dir / "a" / "snapshots" / "epoch_000004.json"));
  EXPECT_FALSE(fs::exists(dir / "a" / "snapshots" / "epoch_000001.json"));
  EXPECT_EQ(ReadPoints(dir / "a" / "structure.json").size(), 60);
  const Json s = ReadJson(dir / "a" / "summary.json");
  EXPECT_TRUE(s.contains("aligned_rmse"));

  ASSERT_EQ(Call({"sfm", "--n", "20", "--frames", "4", "--visibility", "0.8",
                  "--epochs", "2", "--out", (dir / "b").string()})
                .code,
            kExitOk);
  EXPECT_FALSE(fs::exists(dir / "b" / "snapshots"));
  EXPECT_TRUE(fs::exists(dir / "b" / "structure.json"));

  Eigen::VectorXd cloud(3 * 12);
  for (int i = 0; i < 12; ++i) {
    cloud.segment<3>(3 * i) = Eigen::Vector3d(i % 3, (i / 3) % 2, i * 0.25);
  }
  WritePoints(dir / "scene.json", cloud);
  const Invocation r =
      Call({"sfm", "--scene", (dir / "scene.json").string(), "--frames", "3",
            "--visibility", "1", "--epochs", "2", "--out", (dir / "c").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(ReadJson(dir / "c" / "summary.json")["num_points"].get<int>(), 12);

  const Invocation missing = Call({"sfm", "--scene", (dir / "nope.json").string(),
                                   "--out", (dir / "d").string()});
  EXPECT_EQ(missing.code, kExitUsage);
  EXPECT_NE(missing.err.find("nope.json"), std::string::npos);
}

TEST(Cli, CalibrationRecoversIntrinsics) {
  const fs::path dir = TempDir("calib");
  const Invocation r = Call({"calib", "--out", dir.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Json s = ReadJson(dir / "summary.json");
  for (const char* k : {"fx", "fy", "cx", "cy"}) {
    EXPECT_LE(s["relative_errors"][k].get<double>(), 0.01) << k;
  }
  EXPECT_LE(s["final_loss"].get<double>(), 1e-6);
  const CsvTable t = ReadCsv(dir / "trace.csv");
  EXPECT_EQ(t.header,
            (std::vector<std::string>{"epoch", "loss", "fx", "fy", "cx", "cy"}));
}

TEST(Cli, CalibrationFromFile) {
  const fs::path dir = TempDir("calib_file");
  const fs::path run = dir / "gen";
  ASSERT_EQ(Call({"calib", "--epochs", "1", "--out", run.string()}).code, kExitOk);

  // Correspondences without ground truth: errors are omitted.
  CorrespondenceFile f;
  f.corrs.pts3d.resize(3 * 8);
  f.corrs.x2d.resize(2 * 8);
  for (int i = 0; i < 8; ++i) {
    const Eigen::Vector3d X(0.3 * std::cos(i), 0.2 * std::sin(2 * i), 4 + 0.1 * i);
    f.corrs.pts3d.segment<3>(3 * i) = X;
    f.corrs.x2d.segment<2>(2 * i) =
        Eigen::Vector2d(800 * X.x() / X.z() + 400, 700 * X.y() / X.z() + 300);
  }
  WriteCorrespondences(dir / "noK.json", f);
  Invocation r = Call({"calib", "--corrs", (dir / "noK.json").string(),
                       "--epochs", "5", "--out", (dir / "a").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  Json s = ReadJson(dir / "a" / "summary.json");
  EXPECT_FALSE(s.contains("relative_errors"));
  EXPECT_TRUE(s.contains("final_loss"));

  f.intrinsics = Intrinsics{1200.0, 700.0, 400.0, 300.0};
  WriteCorrespondences(dir / "far.json", f);
  r = Call({"calib", "--corrs", (dir / "far.json").string(), "--epochs", "2",
            "--out", (dir / "b").string()});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  s = ReadJson(dir / "b" / "summary.json");
  EXPECT_TRUE(s.contains("relative_errors"));
}

TEST(Cli, GradcheckReport) {
  const fs::path dir = TempDir("gradcheck");
  const Invocation r =
      Call({"gradcheck", "--n", "8", "--seed", "1", "--out", dir.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Json rep = ReadJson(dir / "report.json");
  EXPECT_TRUE(rep["passed"].get<bool>());
  const Json& c = rep["checks"][0];
  EXPECT_LE(c["max_rel_error"].get<double>(), 1e-3);
  EXPECT_EQ(c["fd_solver_calls"].get<int>(), 2 * 16 + 2 * 24 + 2 * 4);
  EXPECT_EQ(c["inputs"]["z"]["fd_solver_calls"].get<int>(), 48);
  EXPECT_GT(c["condition_number"].get<double>(), 1.0);
  EXPECT_GT(c["fd_seconds"].get<double>(), 0.0);
  EXPECT_GT(c["implicit_seconds"].get<double>(), 0.0);

  // An impossible tolerance is an acceptance failure, not a usage error.
  EXPECT_EQ(Call({"gradcheck", "--tolerance", "1e-30", "--out",
                  (dir / "tight").string()})
                .code,
            kExitFailure);
}

TEST(Cli, GradcheckSurfacesSingularHessian) {
  const fs::path dir = TempDir("gradcheck_collinear");
  CorrespondenceFile f;
  f.intrinsics = Intrinsics{800.0, 700.0, 400.0, 300.0};
  f.corrs.pts3d.resize(3 * 8);
  f.corrs.x2d.resize(2 * 8);
  for (int i = 0; i < 8; ++i) {
    const Eigen::Vector3d X(0.1 * i, 0.2 * i, 5.0 + 0.3 * i);
    f.corrs.pts3d.segment<3>(3 * i) = X;
    f.corrs.x2d.segment<2>(2 * i) =
        Eigen::Vector2d(800 * X.x() / X.z() + 400, 700 * X.y() / X.z() + 300);
  }
  WriteCorrespondences(dir / "collinear.json", f);
  const Invocation r = Call({"gradcheck", "--corrs",
                             (dir / "collinear.json").string(), "--out",
                             (dir / "run").string()});
  EXPECT_EQ(r.code, kExitFailure);
  const Json rep = ReadJson(dir / "run" / "report.json");
  ASSERT_EQ(rep["failures"].size(), 1u);
  EXPECT_NE(rep["failures"][0]["reason"].get<std::string>().find("Hessian"),
            std::string::npos);
}

}  // namespace
}  // namespace bpnp::cli
