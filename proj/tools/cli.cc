#include "cli.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "bpnp/gradcheck.h"
#include "bpnp/io.h"
#include "bpnp/rng.h"
#include "bpnp/synthetic.h"
#include "bpnp/tasks.h"

#ifndef BPNP_VERSION
#define BPNP_VERSION "0.0.0"
#endif

namespace bpnp::cli {
namespace {

namespace fs = std::filesystem;

// Bad configuration; maps to the usage exit code.
class UsageError : public Error {
 public:
  using Error::Error;
};

Json Defaults(const std::string& command) {
  if (command == "pose") {
    return {{"seed", 0},          {"n", 8},
            {"lambda", 1.0},      {"alpha", 0.1},
            {"epochs", 2000},     {"tolerance", 1e-10},
            {"optimizer", "gd"},  {"provider", "direct"},
            {"init_noise", 30.0}};
  }
  if (command == "sfm") {
    return {{"seed", 0},          {"n", 100},
            {"frames", 12},       {"visibility", 0.5},
            {"noise", 0.0},       {"alpha", 2e-6},
            {"epochs", 5000},     {"tolerance", 1e-7},
            {"optimizer", "gd"},  {"provider", "direct"},
            {"snapshot_stride", 0}, {"scene", ""}};
  }
  if (command == "calib") {
    return {{"seed", 0},           {"n", 8},
            {"noise", 0.0},        {"alpha", 5e-2},
            {"epochs", 10000},     {"tolerance", 1e-7},
            {"optimizer", "adam"}, {"corrs", ""}};
  }
  return {{"seed", 0},     {"n", 8},           {"noise", 0.0},
          {"instances", 1}, {"tolerance", 1e-3}, {"corrs", ""}};
}

// Overlays src onto dst; keys must already exist with a compatible type.
void Merge(Json& dst, const Json& src, const std::string& origin) {
  if (!src.is_object()) throw UsageError(origin + ": expected a JSON object");
  for (const auto& [key, value] : src.items()) {
    if (!dst.contains(key)) {
      throw UsageError(origin + ": unknown key \"" + key + "\"");
    }
    const Json& cur = dst[key];
    const bool ok = (cur.is_number() && value.is_number()) ||
                    (cur.is_string() && value.is_string());
    if (!ok) throw UsageError(origin + ": wrong type for \"" + key + "\"");
    if (cur.is_number_integer() && !value.is_number_integer()) {
      throw UsageError(origin + ": \"" + key + "\" must be an integer");
    }
    dst[key] = value;
  }
}

double Num(const Json& c, const char* key) { return c.at(key).get<double>(); }

int Int(const Json& c, const char* key) {
  const Json& v = c.at(key);
  if (v.is_number_unsigned() && v.get<uint64_t>() > INT32_MAX) {
    throw UsageError(std::string("\"") + key + "\" is too large");
  }
  return v.get<int>();
}

uint64_t Seed(const Json& c) {
  const Json& v = c.at("seed");
  if (v.is_number_integer() && v.get<int64_t>() < 0) {
    throw UsageError("seed must be non-negative");
  }
  return v.get<uint64_t>();
}

std::string Str(const Json& c, const char* key) {
  return c.at(key).get<std::string>();
}

TrainConfig MakeTrainConfig(const Json& c) {
  TrainConfig cfg;
  cfg.seed = Seed(c);
  cfg.step_size = Num(c, "alpha");
  if (c.contains("lambda")) cfg.lambda_reg = Num(c, "lambda");
  cfg.max_epochs = Int(c, "epochs");
  cfg.loss_tol = Num(c, "tolerance");
  const std::string opt = Str(c, "optimizer");
  if (opt == "gd") {
    cfg.optimizer = OptimizerKind::kGradientDescent;
  } else if (opt == "adam") {
    cfg.optimizer = OptimizerKind::kAdam;
  } else {
    throw UsageError("optimizer must be \"gd\" or \"adam\"");
  }
  if (c.contains("snapshot_stride")) {
    cfg.snapshot_stride = Int(c, "snapshot_stride");
  }
  cfg.ransac.seed = StreamSeed(cfg.seed, "ransac");
  try {
    cfg.Validate();
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

ParamProvider MakeProvider(const Json& c, const Eigen::VectorXd& init) {
  const std::string kind = Str(c, "provider");
  if (kind == "direct") return ParamProvider::Direct(init);
  if (kind == "mlp") {
    return ParamProvider::Mlp(init, MlpSpec{},
                              StreamSeed(Seed(c), "provider"));
  }
  throw UsageError("provider must be \"direct\" or \"mlp\"");
}

int PositiveInt(const Json& c, const char* key, int min) {
  const int v = Int(c, key);
  if (v < min) {
    throw UsageError(std::string("\"") + key + "\" must be >= " +
                     std::to_string(min));
  }
  return v;
}

double NonNegative(const Json& c, const char* key) {
  const double v = Num(c, key);
  if (!(v >= 0.0)) throw UsageError(std::string("\"") + key + "\" must be >= 0");
  return v;
}

std::string Timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json PoseJson(const Pose& p) {
  const Vector6d v = p.AsVector();
  return Json::array({v[0], v[1], v[2], v[3], v[4], v[5]});
}

struct Outputs {
  fs::path dir;
  std::vector<std::string> files;

  fs::path Add(const std::string& name) {
    files.push_back(name);
    const fs::path p = dir / name;
    fs::create_directories(p.parent_path());
    return p;
  }
};

struct Result {
  int code = kExitOk;
  Json summary;
};

// ---------------------------------------------------------------------------

Result RunPose(const Json& c, Outputs& out, std::ostream& err) {
  const int n = PositiveInt(c, "n", 4);
  const uint64_t seed = Seed(c);
  const double init_noise = NonNegative(c, "init_noise");
  const TrainConfig cfg = MakeTrainConfig(c);
  const PoseTask task = MakePoseTask(n, seed);
  ParamProvider provider =
      MakeProvider(c, PerturbedKeypoints(task, init_noise, seed));

  const PoseRun run = RunPoseEstimation(provider, task, cfg);
  const Eigen::VectorXd target = task.TargetKeypoints();

  CsvTable trace;
  trace.header = {"epoch", "loss", "pose_term", "reg_term", "rx", "ry",
                  "rz",    "tx",   "ty",        "tz",       "target_reproj_rms",
                  "keypoint_rms"};
  for (const PoseEpoch& e : run.trace) {
    const Vector6d y = e.pose.AsVector();
    trace.rows.push_back({static_cast<double>(e.epoch), e.loss, e.pose_term,
                          e.reg_term, y[0], y[1], y[2], y[3], y[4], y[5],
                          std::sqrt(e.pose_term / n),
                          KeypointRms(e.x2d, target)});
  }
  WriteCsv(out.Add("trace.csv"), trace);

  Result r;
  r.summary["stop_reason"] = StopReasonName(run.stop);
  r.summary["epochs"] = run.trace.size();
  if (run.failure) {
    err << "error: " << *run.failure << "\n";
    r.summary["failure"] = *run.failure;
    r.code = kExitFailure;
  }
  if (run.trace.empty()) {
    r.summary["converged"] = false;
    return r;
  }
  const PoseEpoch& last = run.trace.back();
  const Eigen::Matrix3d dR =
      last.pose.Rotation().transpose() * task.target_pose.Rotation();
  const double reproj = std::sqrt(last.pose_term / n);
  const double kp_rms = KeypointRms(last.x2d, target);
  r.summary["converged"] = run.stop == StopReason::kLossTolerance ||
                           run.stop == StopReason::kStalled;
  r.summary["final_loss"] = last.loss;
  r.summary["pose_term"] = last.pose_term;
  r.summary["reg_term"] = last.reg_term;
  r.summary["rotation_error_deg"] =
      LogRotation(dR).norm() * 180.0 / std::numbers::pi;
  r.summary["translation_error"] = (last.pose.trans - task.target_pose.trans)
                                       .norm() /
                                   task.target_pose.trans.norm();
  r.summary["target_reproj_rms"] = reproj;
  r.summary["keypoint_rms"] = kp_rms;
  // Keypoints far from their targets although the pose is right.
  r.summary["keypoint_drift"] = kp_rms > 5.0 && reproj <= 0.5;
  return r;
}

// ---------------------------------------------------------------------------

Result RunSfmCommand(const Json& c, Outputs& out, std::ostream& err) {
  SceneSpec spec;
  spec.seed = Seed(c);
  spec.num_frames = PositiveInt(c, "frames", 1);
  spec.visibility = Num(c, "visibility");
  spec.noise_sigma = NonNegative(c, "noise");
  const std::string scene_path = Str(c, "scene");
  if (!scene_path.empty()) {
    try {
      spec.points = ReadPoints(scene_path);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  } else {
    spec.num_points = PositiveInt(c, "n", 4);
  }
  const TrainConfig cfg = MakeTrainConfig(c);
  SfmScene scene;
  try {
    spec.Validate();
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
  scene = MakeSfmScene(spec);
  const int n = scene.problem.num_points;
  ParamProvider provider = MakeProvider(c, RandomStructure(n, spec.seed));

  const SfmRun run = RunSfm(provider, scene.problem, cfg);
  if (!run.underobserved.empty()) {
    err << "warning: " << run.underobserved.size()
        << " points are seen by fewer than two frames; their depth is "
           "unconstrained and they are excluded from the RMSE\n";
  }

  CsvTable trace;
  trace.header = {"epoch", "loss"};
  for (const SfmEpoch& e : run.trace) {
    trace.rows.push_back({static_cast<double>(e.epoch), e.loss});
  }
  WriteCsv(out.Add("trace.csv"), trace);
  for (const auto& [epoch, z] : run.snapshots) {
    char name[64];
    std::snprintf(name, sizeof(name), "snapshots/epoch_%06d.json", epoch);
    WritePoints(out.Add(name), z);
  }
  if (run.structure.size() > 0) {
    WritePoints(out.Add("structure.json"), run.structure);
  }
  WritePoints(out.Add("truth.json"), scene.truth);

  Result r;
  r.summary["stop_reason"] = StopReasonName(run.stop);
  r.summary["epochs"] = run.trace.size();
  r.summary["num_points"] = n;
  r.summary["num_frames"] = scene.problem.num_frames();
  r.summary["underobserved_points"] = run.underobserved;
  if (run.failure) {
    err << "error: " << *run.failure << "\n";
    r.summary["failure"] = *run.failure;
    r.code = kExitFailure;
  }
  r.summary["converged"] = !run.failure &&
                           (run.stop == StopReason::kLossTolerance ||
                            run.stop == StopReason::kStalled);
  if (!run.trace.empty()) r.summary["final_loss"] = run.trace.back().loss;
  if (run.structure.size() > 0) {
    r.summary["aligned_rmse"] =
        AlignedRelativeRmse(scene.problem, run.structure, scene.truth);
  }
  return r;
}

// ---------------------------------------------------------------------------

Result RunCalib(const Json& c, Outputs& out, std::ostream& err) {
  const uint64_t seed = Seed(c);
  const double noise = NonNegative(c, "noise");
  const TrainConfig cfg = MakeTrainConfig(c);
  CorrespondenceFile data;
  const std::string corrs_path = Str(c, "corrs");
  if (!corrs_path.empty()) {
    try {
      data = ReadCorrespondences(corrs_path);
      data.corrs.Validate(4);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  } else {
    const PoseTask task = MakePoseTask(PositiveInt(c, "n", 4), seed);
    data.corrs = Correspondences(task.TargetKeypoints(), task.pts3d);
    data.intrinsics = task.intrinsics;
  }
  if (noise > 0.0) {
    std::mt19937_64 rng = MakeRng(seed, "noise");
    std::normal_distribution<double> g(0.0, noise);
    for (Eigen::Index k = 0; k < data.corrs.x2d.size(); ++k) {
      data.corrs.x2d[k] += g(rng);
    }
  }
  if (data.intrinsics) {
    const Eigen::Vector4d t = data.intrinsics->AsVector();
    if (!((t.array() > 0.0).all() && (t.array() < 1000.0).all())) {
      err << "warning: ground-truth intrinsics lie outside the provider "
             "range (0, 1000) and cannot be reached\n";
    }
  }
  ParamProvider provider =
      ParamProvider::ScaledSigmoid(RandomCalibrationTheta(seed));

  const CalibRun run = RunCalibration(provider, data.corrs, cfg);

  CsvTable trace;
  trace.header = {"epoch", "loss", "fx", "fy", "cx", "cy"};
  for (const CalibEpoch& e : run.trace) {
    trace.rows.push_back({static_cast<double>(e.epoch), e.loss, e.intrinsics.fx,
                          e.intrinsics.fy, e.intrinsics.cx, e.intrinsics.cy});
  }
  WriteCsv(out.Add("trace.csv"), trace);

  Result r;
  r.summary["stop_reason"] = StopReasonName(run.stop);
  r.summary["epochs"] = run.trace.size();
  if (run.failure) {
    err << "error: " << *run.failure << "\n";
    r.summary["failure"] = *run.failure;
    r.code = kExitFailure;
  }
  r.summary["converged"] = !run.failure &&
                           (run.stop == StopReason::kLossTolerance ||
                            run.stop == StopReason::kStalled);
  if (run.trace.empty()) return r;
  const CalibEpoch& last = run.trace.back();
  r.summary["final_loss"] = last.loss;
  r.summary["intrinsics"] = IntrinsicsToJson(last.intrinsics);
  r.summary["pose"] = PoseJson(run.pose);
  if (data.intrinsics) {
    const Eigen::Vector4d est = last.intrinsics.AsVector();
    const Eigen::Vector4d truth = data.intrinsics->AsVector();
    const char* names[4] = {"fx", "fy", "cx", "cy"};
    Json rel;
    for (int k = 0; k < 4; ++k) {
      rel[names[k]] = std::abs(est[k] - truth[k]) / std::abs(truth[k]);
    }
    r.summary["truth"] = IntrinsicsToJson(*data.intrinsics);
    r.summary["relative_errors"] = rel;
  }
  return r;
}

// ---------------------------------------------------------------------------

Json CheckJson(const GradcheckResult& g, double tolerance) {
  Json j{{"n", g.num_points},
         {"noise", g.noise},
         {"seed", g.seed},
         {"objective", g.objective},
         {"condition_number", g.conditioning},
         {"implicit_seconds", g.implicit_seconds}};
  Json inputs;
  double fd_seconds = 0.0;
  int calls = 0;
  for (const InputCheck& c : g.inputs) {
    inputs[SolverInputName(c.input)] = {
        {"dim", c.dim},
        {"max_rel_error", c.max_rel_error},
        {"median_rel_error", c.median_rel_error},
        {"fd_seconds", c.fd_seconds},
        {"fd_solver_calls", c.fd_solver_calls}};
    fd_seconds += c.fd_seconds;
    calls += c.fd_solver_calls;
  }
  j["inputs"] = inputs;
  j["fd_seconds"] = fd_seconds;
  j["fd_solver_calls"] = calls;
  j["max_rel_error"] = g.MaxRelError();
  j["passed"] = g.Passed(tolerance);
  return j;
}

Result RunGradcheck(const Json& c, Outputs& out, std::ostream& err) {
  const uint64_t seed = Seed(c);
  const double tolerance = Num(c, "tolerance");
  if (!(tolerance > 0.0)) throw UsageError("tolerance must be positive");
  const double noise = NonNegative(c, "noise");
  const int instances = PositiveInt(c, "instances", 1);
  const std::string corrs_path = Str(c, "corrs");
  int n = 0;
  CorrespondenceFile data;
  if (!corrs_path.empty()) {
    try {
      data = ReadCorrespondences(corrs_path);
      data.corrs.Validate(1);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    if (!data.intrinsics) {
      throw UsageError(corrs_path + ": gradcheck needs \"K\"");
    }
  } else {
    n = PositiveInt(c, "n", 4);
  }

  Json checks = Json::array();
  Json failures = Json::array();
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    const uint64_t s = seed + static_cast<uint64_t>(i);
    try {
      GradcheckResult g;
      if (corrs_path.empty()) {
        g = CheckGeneratedInstance(n, noise, s);
      } else {
        const Pose init = InitialPose(data.corrs, *data.intrinsics,
                                      Pose::Identity(), RansacConfig{});
        const PnPSolution sol =
            SolvePnP(data.corrs, *data.intrinsics, init);
        g = CheckGradients(data.corrs, *data.intrinsics, sol);
        g.seed = s;
      }
      worst = std::max(worst, g.MaxRelError());
      checks.push_back(CheckJson(g, tolerance));
    } catch (const Error& e) {
      err << "error: instance " << s << ": " << e.what() << "\n";
      failures.push_back({{"seed", s}, {"reason", e.what()}});
    }
  }

  Json report{{"tolerance", tolerance},
              {"max_rel_error", worst},
              {"checks", checks},
              {"failures", failures}};
  const bool passed = failures.empty() && worst <= tolerance;
  report["passed"] = passed;
  WriteJson(out.Add("report.json"), report);

  Result r;
  r.summary = {{"passed", passed},
               {"max_rel_error", worst},
               {"instances", instances},
               {"failed_instances", failures.size()}};
  if (!passed) {
    if (failures.empty()) {
      err << "error: max relative error " << worst << " exceeds tolerance "
          << tolerance << "\n";
    }
    r.code = kExitFailure;
  }
  return r;
}

// ---------------------------------------------------------------------------

struct Flags {
  std::string config;
  std::string out;
  std::map<std::string, CLI::Option*> overrides;
  std::map<std::string, double> num;
  std::map<std::string, int64_t> integer;
  std::map<std::string, std::string> text;
  uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void AddCommon(CLI::App* cmd, Flags& f, const std::string& command) {
  cmd->add_option("--config", f.config, "JSON config or manifest");
  f.seed_opt = cmd->add_option("--seed", f.seed, "Run seed");
  cmd->add_option("--out", f.out, "Output directory");
  const Json defaults = Defaults(command);
  // Flag name, config key, help.
  const std::tuple<const char*, const char*, const char*> flags[] = {
      {"--lambda", "lambda", "Keypoint regularizer weight"},
      {"--alpha", "alpha", "Step size"},
      {"--epochs", "epochs", "Maximum epochs"},
      {"--n", "n", "Number of points"},
      {"--frames", "frames", "Number of views"},
      {"--visibility", "visibility", "Fraction of points seen per view"},
      {"--noise", "noise", "Pixel noise sigma"},
      {"--snapshot-stride", "snapshot_stride",
       "Write structure every k epochs (0: off)"},
      {"--tolerance", "tolerance",
       command == "gradcheck" ? "Max relative Jacobian error"
                              : "Stop once loss is below this"},
      {"--optimizer", "optimizer", "gd or adam"},
      {"--provider", "provider", "direct or mlp"},
      {"--init-noise", "init_noise", "Keypoint init noise half-width (px)"},
      {"--scene", "scene", "Points JSON to use as the scene"},
      {"--corrs", "corrs", "Correspondences JSON"},
      {"--instances", "instances", "Number of generated instances"}};
  for (const auto& [flag, key, help] : flags) {
    if (!defaults.contains(key)) continue;
    const Json& d = defaults[key];
    const std::string desc =
        std::string(help) + " [" +
        (d.is_string() ? d.get<std::string>() : d.dump()) + "]";
    if (d.is_string()) {
      f.overrides[key] = cmd->add_option(flag, f.text[key], desc);
    } else if (d.is_number_integer()) {
      f.overrides[key] = cmd->add_option(flag, f.integer[key], desc);
    } else {
      f.overrides[key] = cmd->add_option(flag, f.num[key], desc);
    }
  }
}

Json Resolve(const std::string& command, const Flags& f) {
  Json cfg = Defaults(command);
  if (!f.config.empty()) {
    Json file;
    try {
      file = ReadJson(f.config);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    // A manifest carries its resolved config under "config".
    if (file.is_object() && file.contains("config") &&
        file.contains("command")) {
      if (file["command"] != command) {
        throw UsageError(f.config + ": manifest is for command " +
                         file["command"].dump());
      }
      file = file["config"];
    }
    Merge(cfg, file, f.config);
  }
  for (const auto& [key, opt] : f.overrides) {
    if (opt->count() == 0) continue;
    if (f.text.count(key)) {
      cfg[key] = f.text.at(key);
    } else if (f.integer.count(key)) {
      cfg[key] = f.integer.at(key);
    } else {
      cfg[key] = f.num.at(key);
    }
  }
  if (f.seed_opt->count() > 0) cfg["seed"] = f.seed;
  return cfg;
}

}  // namespace

int Run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Differentiable PnP experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", BPNP_VERSION);
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"pose", "Pose estimation by learning keypoints through PnP"},
      {"sfm", "Structure from motion with calibrated cameras"},
      {"calib", "Camera calibration through PnP"},
      {"gradcheck", "Implicit vs finite-difference solver Jacobians"}};
  std::map<std::string, Flags> flags;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    subs[name] = app.add_subcommand(name, help);
    AddCommon(subs[name], flags[name], name);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << BPNP_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }
  const Flags& f = flags[command];

  Json config;
  Outputs outputs;
  try {
    config = Resolve(command, f);
    outputs.dir = f.out.empty() ? fs::path("bpnp-" + command) : fs::path(f.out);
    fs::create_directories(outputs.dir);
  } catch (const Error& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  Json manifest{{"command", command},
                {"version", BPNP_VERSION},
                {"seed", config["seed"]},
                {"config", config},
                {"started", Timestamp()}};
  Result result;
  try {
    if (command == "pose") {
      result = RunPose(config, outputs, err);
    } else if (command == "sfm") {
      result = RunSfmCommand(config, outputs, err);
    } else if (command == "calib") {
      result = RunCalib(config, outputs, err);
    } else {
      result = RunGradcheck(config, outputs, err);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    result.code = kExitFailure;
    result.summary["failure"] = e.what();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    result.code = kExitFailure;
    result.summary["failure"] = e.what();
  }

  try {
    Json summary{{"command", command}};
    summary.update(result.summary);
    WriteJson(outputs.Add("summary.json"), summary);
    manifest["finished"] = Timestamp();
    manifest["exit_code"] = result.code;
    outputs.files.push_back("manifest.json");
    manifest["outputs"] = outputs.files;
    WriteJson(outputs.dir / "manifest.json", manifest);
    out << summary.dump(2) << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return result.code;
}

}  // namespace bpnp::cli
