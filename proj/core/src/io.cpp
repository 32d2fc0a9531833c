#include "stjpda/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace stjpda::io {
namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open: " + path);
  return in;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

double parse_double(const std::string& s, const std::string& path) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  require(end != s.c_str() && end != nullptr, ErrorCode::Io,
          "malformed number '" + s + "' in " + path);
  return v;
}

int parse_int(const std::string& s, const std::string& path) {
  return static_cast<int>(std::llround(parse_double(s, path)));
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& context) {
  require(j.is_object(), ErrorCode::InvalidArgument,
          context + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
          return key == a;
        }) == allowed.end()) {
      fail(ErrorCode::InvalidArgument,
           "unknown key '" + key + "' in " + context);
    }
  }
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix json_to_matrix(const json& j, const std::string& context) {
  require(j.is_array() && !j.empty(), ErrorCode::InvalidArgument,
          context + " must be a non-empty array of arrays");
  const auto rows = static_cast<Eigen::Index>(j.size());
  require(j[0].is_array() && !j[0].empty(), ErrorCode::InvalidArgument,
          context + " must be a non-empty array of arrays");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<size_t>(r)];
    require(row.is_array() && static_cast<Eigen::Index>(row.size()) == cols,
            ErrorCode::InvalidArgument, context + " rows must be equal length");
    for (Eigen::Index c = 0; c < cols; ++c) {
      require(row[static_cast<size_t>(c)].is_number(),
              ErrorCode::InvalidArgument, context + " entries must be numbers");
      m(r, c) = row[static_cast<size_t>(c)].get<double>();
    }
  }
  return m;
}

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vector json_to_vector(const json& j, const std::string& context) {
  require(j.is_array(), ErrorCode::InvalidArgument, context + " must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) {
    require(j[i].is_number(), ErrorCode::InvalidArgument,
            context + " entries must be numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

double number_or(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  require(j[key].is_number(), ErrorCode::InvalidArgument,
          std::string(key) + " must be a number");
  return j[key].get<double>();
}

int int_or(const json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  require(j[key].is_number_integer(), ErrorCode::InvalidArgument,
          std::string(key) + " must be an integer");
  return j[key].get<int>();
}

bool bool_or(const json& j, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  require(j[key].is_boolean(), ErrorCode::InvalidArgument,
          std::string(key) + " must be a boolean");
  return j[key].get<bool>();
}

std::string family_name(kernels::KernelFamily family) {
  return family == kernels::KernelFamily::RBF ? "rbf" : "matern32";
}

kernels::KernelFamily parse_family(const std::string& name) {
  if (name == "rbf") return kernels::KernelFamily::RBF;
  if (name == "matern32") return kernels::KernelFamily::Matern32;
  fail(ErrorCode::InvalidArgument, "unknown kernel family '" + name + "'");
}

kernels::KernelHyperparams parse_kernel(const json& j, const std::string& context) {
  check_keys(j, {"family", "sigma2", "ell"}, context);
  require(j.contains("family"), ErrorCode::InvalidArgument,
          context + " needs a 'family'");
  kernels::KernelHyperparams hp;
  hp.family = parse_family(j["family"].get<std::string>());
  hp.sigma2 = number_or(j, "sigma2", 1.0);
  hp.ell = number_or(j, "ell", 1.0);
  hp.validate();
  return hp;
}

json kernel_to_json(const kernels::KernelHyperparams& hp) {
  json j;
  j["family"] = family_name(hp.family);
  j["sigma2"] = hp.sigma2;
  j["ell"] = hp.ell;
  return j;
}

json parse_file(const std::string& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, "invalid JSON in " + path + ": " + e.what());
  }
}

int nearest_index(const Vector& grid, double u) {
  int best = 0;
  double bestDist = std::abs(grid(0) - u);
  for (Eigen::Index i = 1; i < grid.size(); ++i) {
    const double d = std::abs(grid(i) - u);
    if (d < bestDist) {
      bestDist = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

void write_detections_csv(const std::string& path,
                          const std::vector<std::vector<association::Detection>>& frames,
                          const std::vector<std::vector<int>>& origins) {
  const bool withOrigin = !origins.empty();
  require(!withOrigin || origins.size() == frames.size(),
          ErrorCode::InvalidArgument, "origins must match frames");
  auto out = open_out(path);
  out << (withOrigin ? "frame,u,z,origin\n" : "frame,u,z\n");
  for (size_t f = 0; f < frames.size(); ++f) {
    for (size_t k = 0; k < frames[f].size(); ++k) {
      const auto& det = frames[f][k];
      out << det.frame << ',' << fmt(det.u) << ',' << fmt(det.z(0));
      if (withOrigin) out << ',' << origins[f][k];
      out << '\n';
    }
  }
  require(out.good(), ErrorCode::Io, "write failed: " + path);
}

DetectionFile read_detections_csv(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::Io,
          "empty detections file: " + path);
  bool withOrigin = false;
  if (line == "frame,u,z,origin") {
    withOrigin = true;
  } else {
    require(line == "frame,u,z", ErrorCode::Io,
            "unexpected detections header in " + path);
  }
  DetectionFile file;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_line(line);
    require(fields.size() == (withOrigin ? 4u : 3u), ErrorCode::Io,
            "bad detections row in " + path);
    association::Detection det;
    det.frame = parse_int(fields[0], path);
    det.u = parse_double(fields[1], path);
    det.z = Vector::Constant(1, parse_double(fields[2], path));
    require(det.frame >= 0, ErrorCode::Io, "negative frame in " + path);
    const auto f = static_cast<size_t>(det.frame);
    if (f >= file.frames.size()) {
      file.frames.resize(f + 1);
      if (withOrigin) file.origins.resize(f + 1);
    }
    if (withOrigin) file.origins[f].push_back(parse_int(fields[3], path));
    file.frames[f].push_back(std::move(det));
  }
  return file;
}

void write_curves_csv(const std::string& path, const std::vector<CurveRow>& rows) {
  auto out = open_out(path);
  out << "frame,target,u,value,variance\n";
  for (const auto& row : rows) {
    out << row.frame << ',' << row.target << ',' << fmt(row.u) << ','
        << fmt(row.value) << ',' << fmt(row.variance) << '\n';
  }
  require(out.good(), ErrorCode::Io, "write failed: " + path);
}

std::vector<CurveRow> read_curves_csv(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::Io,
          "empty curves file: " + path);
  require(line == "frame,target,u,value,variance", ErrorCode::Io,
          "unexpected curves header in " + path);
  std::vector<CurveRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_line(line);
    require(fields.size() == 5u, ErrorCode::Io, "bad curves row in " + path);
    CurveRow row;
    row.frame = parse_int(fields[0], path);
    row.target = parse_int(fields[1], path);
    row.u = parse_double(fields[2], path);
    row.value = parse_double(fields[3], path);
    row.variance = parse_double(fields[4], path);
    rows.push_back(row);
  }
  return rows;
}

std::vector<CurveRow> truth_to_rows(const simulator::GroundTruth& truth,
                                    const Vector& indexPoints) {
  std::vector<CurveRow> rows;
  for (size_t f = 0; f < truth.truthValues.size(); ++f) {
    const Matrix& values = truth.truthValues[f];
    for (Eigen::Index d = 0; d < values.rows(); ++d) {
      for (Eigen::Index i = 0; i < values.cols(); ++i) {
        rows.push_back({static_cast<int>(f), static_cast<int>(d),
                        indexPoints(i), values(d, i), 0.0});
      }
    }
  }
  return rows;
}

std::vector<CurveRow> estimates_to_rows(const std::vector<pipeline::FrameEstimate>& frames,
                                        const Vector& indexPoints) {
  std::vector<CurveRow> rows;
  for (const auto& frame : frames) {
    for (size_t t = 0; t < frame.targetIds.size(); ++t) {
      for (Eigen::Index i = 0; i < indexPoints.size(); ++i) {
        rows.push_back({frame.frame, frame.targetIds[t], indexPoints(i),
                        frame.values[t](i), frame.variances[t](i)});
      }
    }
  }
  return rows;
}

std::vector<metrics::LaneSet> rows_to_lanes(const std::vector<CurveRow>& rows,
                                            const Vector& indexPoints) {
  int maxFrame = -1;
  for (const auto& row : rows) maxFrame = std::max(maxFrame, row.frame);
  std::vector<std::map<int, Vector>> perFrame(static_cast<size_t>(maxFrame + 1));
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& row : rows) {
    require(row.frame >= 0, ErrorCode::InvalidArgument, "negative frame index");
    auto& lanes = perFrame[static_cast<size_t>(row.frame)];
    auto [it, inserted] =
        lanes.try_emplace(row.target, Vector::Constant(indexPoints.size(), nan));
    it->second(nearest_index(indexPoints, row.u)) = row.value;
  }
  std::vector<metrics::LaneSet> result(perFrame.size());
  for (size_t f = 0; f < perFrame.size(); ++f) {
    for (auto& [target, lane] : perFrame[f]) result[f].push_back(lane);
  }
  return result;
}

void write_lifecycle_csv(const std::string& path,
                         const std::vector<pipeline::LifecycleEvent>& events) {
  auto out = open_out(path);
  out << "frame,target,event\n";
  for (const auto& e : events) {
    out << e.frame << ',' << e.targetId << ',' << e.event << '\n';
  }
  require(out.good(), ErrorCode::Io, "write failed: " + path);
}

void save_meta(const std::string& path, const ScenarioMeta& meta) {
  json j;
  j["frames"] = meta.frames;
  j["D"] = meta.D;
  j["uLo"] = meta.uLo;
  j["uHi"] = meta.uHi;
  j["valueLo"] = meta.valueLo;
  j["valueHi"] = meta.valueHi;
  j["noiseStd"] = meta.noiseStd;
  j["clutterRate"] = meta.clutterRate;
  j["statesConsistent"] = meta.statesConsistent;
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  require(out.good(), ErrorCode::Io, "write failed: " + path);
}

ScenarioMeta load_meta(const std::string& path) {
  const json j = parse_file(path);
  check_keys(j,
             {"frames", "D", "uLo", "uHi", "valueLo", "valueHi", "noiseStd",
              "clutterRate", "statesConsistent"},
             "scenario meta");
  ScenarioMeta meta;
  meta.frames = int_or(j, "frames", 0);
  meta.D = int_or(j, "D", 0);
  meta.uLo = number_or(j, "uLo", 0.0);
  meta.uHi = number_or(j, "uHi", 0.0);
  meta.valueLo = number_or(j, "valueLo", 0.0);
  meta.valueHi = number_or(j, "valueHi", 0.0);
  meta.noiseStd = number_or(j, "noiseStd", 0.0);
  meta.clutterRate = number_or(j, "clutterRate", 0.0);
  meta.statesConsistent = bool_or(j, "statesConsistent", false);
  return meta;
}

void save_model(const std::string& path, const training::TrainedModel& model) {
  json j;
  j["version"] = 1;
  j["family"] = family_name(model.hyperparams.family);
  j["sigma2"] = model.hyperparams.sigma2;
  j["ell"] = model.hyperparams.ell;
  j["B"] = matrix_to_json(model.B);
  j["converged"] = model.converged;
  j["iterations"] = model.iterations;
  j["finalNlml"] = model.finalNlml;
  j["cssm"] = {{"A", matrix_to_json(model.cssm.A)},
               {"L", matrix_to_json(model.cssm.L)},
               {"H", matrix_to_json(model.cssm.H)},
               {"Qc", model.cssm.Qc},
               {"Pinf", matrix_to_json(model.cssm.Pinf)}};
  j["ssm"] = {{"F", matrix_to_json(model.ssm.F)},
              {"Q", matrix_to_json(model.ssm.Q)},
              {"H", matrix_to_json(model.ssm.H)},
              {"P0", matrix_to_json(model.ssm.P0)},
              {"Ts", model.ssm.Ts}};
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  require(out.good(), ErrorCode::Io, "write failed: " + path);
}

training::TrainedModel load_model(const std::string& path) {
  const json j = parse_file(path);
  check_keys(j,
             {"version", "family", "sigma2", "ell", "B", "converged",
              "iterations", "finalNlml", "cssm", "ssm"},
             "model file");
  require(j.contains("version") && j["version"].is_number_integer() &&
              j["version"].get<int>() == 1,
          ErrorCode::InvalidArgument, "unsupported model file version");
  training::TrainedModel model;
  model.hyperparams.family = parse_family(j["family"].get<std::string>());
  model.hyperparams.sigma2 = j["sigma2"].get<double>();
  model.hyperparams.ell = j["ell"].get<double>();
  model.hyperparams.validate();
  model.B = json_to_matrix(j["B"], "B");
  model.converged = j["converged"].get<bool>();
  model.iterations = j["iterations"].get<int>();
  model.finalNlml = j["finalNlml"].get<double>();
  const json& c = j["cssm"];
  check_keys(c, {"A", "L", "H", "Qc", "Pinf"}, "cssm");
  model.cssm.A = json_to_matrix(c["A"], "cssm.A");
  model.cssm.L = json_to_matrix(c["L"], "cssm.L");
  model.cssm.H = json_to_matrix(c["H"], "cssm.H");
  model.cssm.Qc = c["Qc"].get<double>();
  model.cssm.Pinf = json_to_matrix(c["Pinf"], "cssm.Pinf");
  const json& s = j["ssm"];
  check_keys(s, {"F", "Q", "H", "P0", "Ts"}, "ssm");
  model.ssm.F = json_to_matrix(s["F"], "ssm.F");
  model.ssm.Q = json_to_matrix(s["Q"], "ssm.Q");
  model.ssm.H = json_to_matrix(s["H"], "ssm.H");
  model.ssm.P0 = json_to_matrix(s["P0"], "ssm.P0");
  model.ssm.Ts = s["Ts"].get<double>();
  return model;
}

void write_report_json(const std::string& path, const metrics::EvalReport& report) {
  auto finite = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j;
  j["accuracy"] = finite(report.accuracy);
  j["fpRate"] = finite(report.fpRate);
  j["fnRate"] = finite(report.fnRate);
  json rmse = json::array();
  for (double v : report.rmsePerTarget) rmse.push_back(finite(v));
  j["rmsePerTarget"] = std::move(rmse);
  j["meanNEES"] = finite(report.meanNEES);
  j["runtimeSeconds"] = finite(report.runtimeSeconds);
  j["framesPerSecond"] = finite(report.framesPerSecond);
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  require(out.good(), ErrorCode::Io, "write failed: " + path);
}

simulator::ScenarioConfig load_scenario_config(const std::string& path) {
  const json j = parse_file(path);
  check_keys(j,
             {"D", "indexPoints", "generator", "spatial", "temporal", "B",
              "Pd", "clutterRate", "noiseStd", "frames", "schedule", "seed",
              "frameDt", "rbfOrder", "uJitter"},
             "scenario config");
  simulator::ScenarioConfig cfg;
  cfg.D = int_or(j, "D", 1);
  require(j.contains("indexPoints"), ErrorCode::InvalidArgument,
          "scenario config needs indexPoints");
  cfg.indexPoints = json_to_vector(j["indexPoints"], "indexPoints");
  if (j.contains("generator")) {
    const std::string g = j["generator"].get<std::string>();
    if (g == "gp") {
      cfg.generator = simulator::Generator::GPDraw;
    } else if (g == "lanes") {
      cfg.generator = simulator::Generator::ParametricLanes;
    } else {
      fail(ErrorCode::InvalidArgument, "unknown generator '" + g + "'");
    }
  }
  if (j.contains("spatial")) cfg.spatial = parse_kernel(j["spatial"], "spatial");
  if (j.contains("temporal")) cfg.temporal = parse_kernel(j["temporal"], "temporal");
  if (j.contains("B")) cfg.Btrue = json_to_matrix(j["B"], "B");
  cfg.Pd = number_or(j, "Pd", cfg.Pd);
  cfg.clutterRate = number_or(j, "clutterRate", cfg.clutterRate);
  cfg.noiseStd = number_or(j, "noiseStd", cfg.noiseStd);
  cfg.frames = int_or(j, "frames", cfg.frames);
  cfg.seed = static_cast<uint64_t>(number_or(j, "seed", 0.0));
  cfg.frameDt = number_or(j, "frameDt", cfg.frameDt);
  cfg.rbfOrder = int_or(j, "rbfOrder", cfg.rbfOrder);
  cfg.uJitter = number_or(j, "uJitter", cfg.uJitter);
  if (j.contains("schedule")) {
    require(j["schedule"].is_array(), ErrorCode::InvalidArgument,
            "schedule must be an array");
    for (const auto& item : j["schedule"]) {
      check_keys(item, {"frameBegin", "frameEnd", "targetA", "targetB", "mode"},
                 "schedule entry");
      simulator::ManeuverSpec spec;
      spec.frameBegin = int_or(item, "frameBegin", 0);
      spec.frameEnd = int_or(item, "frameEnd", 0);
      spec.targetA = int_or(item, "targetA", 0);
      spec.targetB = int_or(item, "targetB", 0);
      const std::string mode = item.contains("mode")
                                   ? item["mode"].get<std::string>()
                                   : std::string("merge");
      if (mode == "merge") {
        spec.mode = simulator::ManeuverMode::Merge;
      } else if (mode == "split") {
        spec.mode = simulator::ManeuverMode::Split;
      } else if (mode == "cross") {
        spec.mode = simulator::ManeuverMode::Cross;
      } else {
        fail(ErrorCode::InvalidArgument, "unknown maneuver mode '" + mode + "'");
      }
      cfg.schedule.push_back(spec);
    }
  }
  cfg.validate();
  return cfg;
}

TrackerFileConfig load_tracker_config(const std::string& path) {
  const json j = parse_file(path);
  check_keys(j,
             {"indexPoints", "spatial", "temporal", "rbfOrder", "B",
              "trainedTemporal", "association", "frameDt", "smootherLag",
              "coastBudget", "matchGate", "pointGate", "reportMinMatches",
              "reportWindow", "cullGate", "cullStreak", "adaptiveReportCount",
              "homogeneousNoise", "recordJoint", "scenario", "autoClutter",
              "runs", "seed"},
             "tracker config");
  TrackerFileConfig cfg;
  if (j.contains("scenario")) cfg.scenarioDir = j["scenario"].get<std::string>();
  require(j.contains("indexPoints"), ErrorCode::InvalidArgument,
          "tracker config needs indexPoints");
  cfg.pipeline.indexPoints = json_to_vector(j["indexPoints"], "indexPoints");
  require(j.contains("spatial"), ErrorCode::InvalidArgument,
          "tracker config needs a spatial kernel");
  cfg.pipeline.spatial = parse_kernel(j["spatial"], "spatial");
  if (j.contains("trainedTemporal")) {
    const auto model = load_model(j["trainedTemporal"].get<std::string>());
    cfg.pipeline.temporal = model.hyperparams;
    cfg.pipeline.B = model.B;
  } else {
    require(j.contains("temporal"), ErrorCode::InvalidArgument,
            "tracker config needs a temporal kernel or trainedTemporal");
    cfg.pipeline.temporal = parse_kernel(j["temporal"], "temporal");
  }
  cfg.pipeline.rbfOrder = int_or(j, "rbfOrder", cfg.pipeline.rbfOrder);
  if (j.contains("B")) cfg.pipeline.B = json_to_matrix(j["B"], "B");
  if (j.contains("association")) {
    const json& a = j["association"];
    check_keys(a,
               {"gateThreshold", "Pd", "clutterRate", "volume", "noiseVar",
                "initDistance", "confirmThreshold", "terminateThreshold",
                "survivalFactor", "initExistence", "maxEvents", "sweepSpawns"},
               "association");
    auto& ac = cfg.pipeline.assoc;
    ac.gateThreshold = number_or(a, "gateThreshold", ac.gateThreshold);
    ac.Pd = number_or(a, "Pd", ac.Pd);
    ac.clutterRate = number_or(a, "clutterRate", ac.clutterRate);
    ac.volume = number_or(a, "volume", ac.volume);
    ac.R = Matrix::Constant(1, 1, number_or(a, "noiseVar", 1e-2));
    ac.initDistance = number_or(a, "initDistance", ac.initDistance);
    ac.confirmThreshold = number_or(a, "confirmThreshold", ac.confirmThreshold);
    ac.terminateThreshold =
        number_or(a, "terminateThreshold", ac.terminateThreshold);
    ac.survivalFactor = number_or(a, "survivalFactor", ac.survivalFactor);
    ac.initExistence = number_or(a, "initExistence", ac.initExistence);
    ac.maxEvents = static_cast<long long>(
        number_or(a, "maxEvents", static_cast<double>(ac.maxEvents)));
    ac.sweepSpawns = bool_or(a, "sweepSpawns", ac.sweepSpawns);
  } else {
    cfg.pipeline.assoc.R = Matrix::Constant(1, 1, 1e-2);
  }
  cfg.pipeline.frameDt = number_or(j, "frameDt", cfg.pipeline.frameDt);
  cfg.pipeline.smootherLag = int_or(j, "smootherLag", cfg.pipeline.smootherLag);
  cfg.pipeline.coastBudget = int_or(j, "coastBudget", cfg.pipeline.coastBudget);
  cfg.pipeline.matchGate = number_or(j, "matchGate", cfg.pipeline.matchGate);
  cfg.pipeline.pointGate = number_or(j, "pointGate", cfg.pipeline.pointGate);
  cfg.pipeline.reportMinMatches =
      int_or(j, "reportMinMatches", cfg.pipeline.reportMinMatches);
  cfg.pipeline.reportWindow = int_or(j, "reportWindow", cfg.pipeline.reportWindow);
  cfg.pipeline.cullGate = number_or(j, "cullGate", cfg.pipeline.cullGate);
  cfg.pipeline.cullStreak = int_or(j, "cullStreak", cfg.pipeline.cullStreak);
  cfg.pipeline.adaptiveReportCount =
      bool_or(j, "adaptiveReportCount", cfg.pipeline.adaptiveReportCount);
  cfg.pipeline.homogeneousNoise =
      bool_or(j, "homogeneousNoise", cfg.pipeline.homogeneousNoise);
  cfg.pipeline.recordJoint = bool_or(j, "recordJoint", cfg.pipeline.recordJoint);
  cfg.autoClutter = bool_or(j, "autoClutter", cfg.autoClutter);
  cfg.runs = int_or(j, "runs", cfg.runs);
  cfg.seed = static_cast<unsigned long long>(number_or(j, "seed", 0.0));
  require(cfg.runs >= 1, ErrorCode::InvalidArgument, "runs must be >= 1");
  return cfg;
}

TrainFileConfig load_train_config(const std::string& path) {
  const json j = parse_file(path);
  check_keys(j,
             {"data", "family", "maxIters", "gradTol", "relTol",
              "optimizeNoise", "Ts", "rbfOrder", "noiseVar", "init"},
             "train config");
  TrainFileConfig cfg;
  require(j.contains("data"), ErrorCode::InvalidArgument,
          "train config needs a data path");
  cfg.dataPath = j["data"].get<std::string>();
  if (j.contains("family")) cfg.family = parse_family(j["family"].get<std::string>());
  cfg.options.maxIters = int_or(j, "maxIters", cfg.options.maxIters);
  cfg.options.gradTol = number_or(j, "gradTol", cfg.options.gradTol);
  cfg.options.relTol = number_or(j, "relTol", cfg.options.relTol);
  cfg.options.optimizeNoise = bool_or(j, "optimizeNoise", cfg.options.optimizeNoise);
  cfg.options.Ts = number_or(j, "Ts", cfg.options.Ts);
  cfg.options.rbfOrder = int_or(j, "rbfOrder", cfg.options.rbfOrder);
  cfg.noiseVar = number_or(j, "noiseVar", cfg.noiseVar);
  if (j.contains("init")) {
    const json& init = j["init"];
    check_keys(init, {"sigma2", "ell", "B"}, "init");
    cfg.init.hyperparams.family = cfg.family;
    cfg.init.hyperparams.sigma2 = number_or(init, "sigma2", 1.0);
    cfg.init.hyperparams.ell = number_or(init, "ell", 1.0);
    if (init.contains("B")) cfg.init.B = json_to_matrix(init["B"], "init.B");
  } else {
    cfg.init.hyperparams.family = cfg.family;
  }
  return cfg;
}

}  // namespace stjpda::io
