#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stjpda/io.hpp"
#include "stjpda/metrics.hpp"
#include "stjpda/pipeline.hpp"
#include "stjpda/simulator.hpp"
#include "stjpda/training.hpp"
#include "stjpda/types.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stjpda;

namespace {

int exit_code(const Error& e) {
  switch (e.code()) {
    case ErrorCode::Numerical:
      return 3;
    case ErrorCode::Combinatorial:
      return 4;
    default:
      return 2;
  }
}

int thread_budget() {
  int budget = static_cast<int>(std::thread::hardware_concurrency());
  if (budget < 1) budget = 1;
  if (const char* env = std::getenv("STJPDA_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) budget = std::min(budget, cap);
  }
  return budget;
}

void do_simulate(const simulator::ScenarioConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  const auto truth = simulator::generate(cfg);
  io::write_detections_csv((dir / "detections.csv").string(), truth.frames,
                           truth.origins);
  io::write_curves_csv((dir / "truth.csv").string(),
                       io::truth_to_rows(truth, cfg.indexPoints));
  io::ScenarioMeta meta;
  meta.frames = cfg.frames;
  meta.D = cfg.D;
  meta.uLo = truth.uLo;
  meta.uHi = truth.uHi;
  meta.valueLo = truth.valueLo;
  meta.valueHi = truth.valueHi;
  meta.noiseStd = cfg.noiseStd;
  meta.clutterRate = cfg.clutterRate;
  meta.statesConsistent = truth.statesConsistent;
  io::save_meta((dir / "meta.json").string(), meta);
}

pipeline::PipelineResult do_track(io::TrackerFileConfig cfg,
                                  const fs::path& scenarioDir,
                                  const fs::path& outDir, bool emitPlot) {
  auto file = io::read_detections_csv((scenarioDir / "detections.csv").string());
  const auto meta = io::load_meta((scenarioDir / "meta.json").string());
  auto frames = std::move(file.frames);
  if (static_cast<int>(frames.size()) < meta.frames) {
    frames.resize(static_cast<size_t>(meta.frames));
  }
  if (cfg.autoClutter) {
    const double extent = std::max(meta.valueHi - meta.valueLo, 1e-12);
    cfg.pipeline.assoc.volume = extent;
    // Per-sweep-step clutter density: the scenario rate is per frame per
    // unit area; each of the N sweep steps sees 1/N of the frame's clutter
    // inside a 1-D validation volume of `extent`.
    cfg.pipeline.assoc.clutterRate =
        meta.clutterRate * (meta.uHi - meta.uLo) / cfg.pipeline.N();
  }

  fs::create_directories(outDir);
  const auto start = std::chrono::steady_clock::now();
  pipeline::Tracker tracker(cfg.pipeline);
  for (size_t k = 0; k < frames.size(); ++k) {
    try {
      tracker.step(frames[k]);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Combinatorial) {
        fail(ErrorCode::Combinatorial,
             "frame " + std::to_string(k) + ": " + e.what());
      }
      throw;
    }
  }
  auto result = tracker.finish();
  const auto stop = std::chrono::steady_clock::now();
  result.runtimeSeconds = std::chrono::duration<double>(stop - start).count();
  result.framesPerSecond =
      result.runtimeSeconds > 0.0
          ? static_cast<double>(frames.size()) / result.runtimeSeconds
          : 0.0;

  const auto rows = io::estimates_to_rows(result.frames, cfg.pipeline.indexPoints);
  io::write_curves_csv((outDir / "curves.csv").string(), rows);
  io::write_lifecycle_csv((outDir / "lifecycle.csv").string(), result.lifecycle);
  metrics::EvalReport stub;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  stub.accuracy = stub.fpRate = stub.fnRate = stub.meanNEES = nan;
  stub.runtimeSeconds = result.runtimeSeconds;
  stub.framesPerSecond = result.framesPerSecond;
  io::write_report_json((outDir / "track_report.json").string(), stub);

  if (emitPlot) {
    fs::create_directories(outDir / "plot");
    std::map<int, std::vector<io::CurveRow>> byFrame;
    for (const auto& row : rows) byFrame[row.frame].push_back(row);
    for (const auto& [frame, group] : byFrame) {
      io::write_curves_csv(
          (outDir / "plot" / ("frame_" + std::to_string(frame) + ".csv")).string(),
          group);
    }
  }
  return result;
}

metrics::EvalReport do_eval(const fs::path& trackDir, const fs::path& truthDir,
                            const fs::path& outDir, double matchFraction,
                            std::optional<double> pointThreshold) {
  const auto truthRows = io::read_curves_csv((truthDir / "truth.csv").string());
  const auto meta = io::load_meta((truthDir / "meta.json").string());
  const auto predRows = io::read_curves_csv((trackDir / "curves.csv").string());

  std::set<double> us;
  for (const auto& row : truthRows) us.insert(row.u);
  require(!us.empty(), ErrorCode::InvalidArgument, "truth file has no rows");
  Vector grid(static_cast<Eigen::Index>(us.size()));
  Eigen::Index gi = 0;
  for (double u : us) grid(gi++) = u;

  auto truthLanes = io::rows_to_lanes(truthRows, grid);
  auto predLanes = io::rows_to_lanes(predRows, grid);
  const size_t F = std::max({truthLanes.size(), predLanes.size(),
                             static_cast<size_t>(meta.frames)});
  truthLanes.resize(F);
  predLanes.resize(F);

  const double thr = pointThreshold.value_or(std::max(3.0 * meta.noiseStd, 1e-9));
  metrics::EvalReport report;
  report.accuracy = metrics::accuracy(predLanes, truthLanes, thr);
  double fpSum = 0.0, fnSum = 0.0;
  for (size_t f = 0; f < F; ++f) {
    const auto [fp, fn] = metrics::fp_fn(predLanes[f], truthLanes[f],
                                         matchFraction, thr);
    fpSum += fp;
    fnSum += fn;
  }
  report.fpRate = fpSum / static_cast<double>(F);
  report.fnRate = fnSum / static_cast<double>(F);
  report.rmsePerTarget = metrics::rmse_per_target(predLanes, truthLanes, thr);
  report.meanNEES = std::numeric_limits<double>::quiet_NaN();

  const fs::path trackReport = trackDir / "track_report.json";
  if (fs::exists(trackReport)) {
    std::ifstream in(trackReport);
    try {
      const json j = json::parse(in);
      if (j.contains("runtimeSeconds") && j["runtimeSeconds"].is_number()) {
        report.runtimeSeconds = j["runtimeSeconds"].get<double>();
      }
      if (j.contains("framesPerSecond") && j["framesPerSecond"].is_number()) {
        report.framesPerSecond = j["framesPerSecond"].get<double>();
      }
    } catch (const json::exception&) {
      // a malformed sidecar only loses the runtime numbers
    }
  }

  fs::create_directories(outDir);
  io::write_report_json((outDir / "report.json").string(), report);
  return report;
}

int do_train(const std::string& configPath, const fs::path& outDir) {
  auto cfg = io::load_train_config(configPath);
  const auto rows = io::read_curves_csv(cfg.dataPath);
  std::map<int, std::vector<io::CurveRow>> byTarget;
  for (const auto& row : rows) byTarget[row.target].push_back(row);
  require(!byTarget.empty(), ErrorCode::InvalidArgument,
          "training data has no rows: " + cfg.dataPath);
  training::TrainingSet data;
  for (const auto& [target, group] : byTarget) {
    Vector u(static_cast<Eigen::Index>(group.size()));
    Vector v(static_cast<Eigen::Index>(group.size()));
    for (size_t i = 0; i < group.size(); ++i) {
      u(static_cast<Eigen::Index>(i)) = group[i].u;
      v(static_cast<Eigen::Index>(i)) = group[i].value;
    }
    data.inputs.push_back(std::move(u));
    data.values.push_back(std::move(v));
  }
  data.noiseVar = cfg.noiseVar;

  const auto model = training::train(data, cfg.family, cfg.init, cfg.options);
  fs::create_directories(outDir);
  io::save_model((outDir / "model.json").string(), model);
  std::cout << "nlml=" << model.finalNlml << " converged=" << model.converged
            << " iterations=" << model.iterations << '\n';
  return 0;
}

struct ChainConfig {
  fs::path scenarioConfig;
  fs::path trackerConfig;
  double matchFraction = 0.5;
  std::optional<double> pointThreshold;
};

ChainConfig load_chain_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, "invalid JSON in " + path + ": " + e.what());
  }
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "scenarioConfig" && key != "trackerConfig" &&
        key != "matchFraction" && key != "pointThreshold") {
      fail(ErrorCode::InvalidArgument,
           "unknown key '" + key + "' in pipeline config");
    }
  }
  require(j.contains("scenarioConfig") && j.contains("trackerConfig"),
          ErrorCode::InvalidArgument,
          "pipeline config needs scenarioConfig and trackerConfig");
  ChainConfig cfg;
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path candidate(p);
    return candidate.is_absolute() ? candidate : base / candidate;
  };
  cfg.scenarioConfig = resolve(j["scenarioConfig"].get<std::string>());
  cfg.trackerConfig = resolve(j["trackerConfig"].get<std::string>());
  if (j.contains("matchFraction")) cfg.matchFraction = j["matchFraction"].get<double>();
  if (j.contains("pointThreshold")) cfg.pointThreshold = j["pointThreshold"].get<double>();
  return cfg;
}

int do_chain(const std::string& configPath, const fs::path& outDir,
             std::optional<unsigned long long> seed, std::optional<int> runs,
             bool emitPlot) {
  const auto chain = load_chain_config(configPath);
  auto scenario = io::load_scenario_config(chain.scenarioConfig.string());
  const auto tracker = io::load_tracker_config(chain.trackerConfig.string());
  if (seed) scenario.seed = *seed;
  const int K = std::max(1, runs.value_or(tracker.runs));

  std::vector<metrics::EvalReport> reports(static_cast<size_t>(K));
  std::vector<std::optional<std::pair<int, std::string>>> failures(
      static_cast<size_t>(K));
  std::atomic<int> nextRun{0};
  auto worker = [&]() {
    for (;;) {
      const int k = nextRun.fetch_add(1);
      if (k >= K) return;
      const fs::path runDir =
          K > 1 ? outDir / ("run_" + std::to_string(k)) : outDir;
      try {
        auto scenarioK = scenario;
        scenarioK.seed = scenario.seed + static_cast<uint64_t>(k);
        do_simulate(scenarioK, runDir);
        do_track(tracker, runDir, runDir, emitPlot);
        reports[static_cast<size_t>(k)] =
            do_eval(runDir, runDir, runDir, chain.matchFraction,
                    chain.pointThreshold);
      } catch (const Error& e) {
        failures[static_cast<size_t>(k)] = {exit_code(e), e.what()};
      } catch (const std::exception& e) {
        failures[static_cast<size_t>(k)] = {2, e.what()};
      }
    }
  };
  const int threads = std::min(K, thread_budget());
  std::vector<std::thread> pool;
  for (int t = 0; t < threads - 1; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (int k = 0; k < K; ++k) {
    if (failures[static_cast<size_t>(k)]) {
      const auto& [code, what] = *failures[static_cast<size_t>(k)];
      std::cerr << "error (run " << k << "): " << what << '\n';
      return code;
    }
  }

  double acc = 0.0, fp = 0.0, fn = 0.0;
  json perRun = json::array();
  for (const auto& r : reports) {
    acc += r.accuracy;
    fp += r.fpRate;
    fn += r.fnRate;
    perRun.push_back({{"accuracy", r.accuracy},
                      {"fpRate", r.fpRate},
                      {"fnRate", r.fnRate}});
  }
  json summary;
  summary["runs"] = K;
  summary["meanAccuracy"] = acc / K;
  summary["meanFpRate"] = fp / K;
  summary["meanFnRate"] = fn / K;
  summary["perRun"] = std::move(perRun);
  fs::create_directories(outDir);
  std::ofstream out(outDir / "summary.json");
  out << summary.dump(2) << '\n';
  std::cout << "runs=" << K << " meanAccuracy=" << acc / K
            << " meanFpRate=" << fp / K << " meanFnRate=" << fn / K << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatio-temporal coupled multi-curve tracker"};
  app.require_subcommand(1);

  std::string config;
  std::string out = ".";
  std::string scenarioDir;
  std::string trackDir;
  std::string truthDir;
  std::optional<unsigned long long> seed;
  std::optional<int> runs;
  std::optional<double> pointThreshold;
  double matchFraction = 0.5;
  bool emitPlot = false;

  auto* trainCmd = app.add_subcommand("train", "fit kernel hyperparameters and coupling");
  trainCmd->add_option("--config", config, "train config JSON")->required();
  trainCmd->add_option("--out", out, "output directory");

  auto* simCmd = app.add_subcommand("simulate", "generate a synthetic scenario");
  simCmd->add_option("--config", config, "scenario config JSON")->required();
  simCmd->add_option("--seed", seed, "seed override");
  simCmd->add_option("--runs", runs, "number of independent scenarios");
  simCmd->add_option("--out", out, "output directory");

  auto* trackCmd = app.add_subcommand("track", "run the tracker on a scenario");
  trackCmd->add_option("--config", config, "tracker config JSON")->required();
  trackCmd->add_option("--scenario", scenarioDir, "scenario directory override");
  trackCmd->add_option("--out", out, "output directory");
  trackCmd->add_flag("--emit-plot-data", emitPlot, "write per-frame series CSVs");

  auto* evalCmd = app.add_subcommand("eval", "score tracker output against truth");
  evalCmd->add_option("--track", trackDir, "tracker output directory")->required();
  evalCmd->add_option("--truth", truthDir, "scenario directory")->required();
  evalCmd->add_option("--out", out, "output directory");
  evalCmd->add_option("--match-fraction", matchFraction, "lane match fraction");
  evalCmd->add_option("--point-threshold", pointThreshold, "point error threshold");

  auto* chainCmd = app.add_subcommand("pipeline", "simulate, track, and eval in one run");
  chainCmd->add_option("--config", config, "pipeline config JSON")->required();
  chainCmd->add_option("--seed", seed, "base seed override");
  chainCmd->add_option("--runs", runs, "Monte Carlo runs");
  chainCmd->add_option("--out", out, "output directory");
  chainCmd->add_flag("--emit-plot-data", emitPlot, "write per-frame series CSVs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (trainCmd->parsed()) {
      return do_train(config, out);
    }
    if (simCmd->parsed()) {
      auto cfg = io::load_scenario_config(config);
      if (seed) cfg.seed = *seed;
      const int K = std::max(1, runs.value_or(1));
      for (int k = 0; k < K; ++k) {
        auto cfgK = cfg;
        cfgK.seed = cfg.seed + static_cast<uint64_t>(k);
        do_simulate(cfgK, K > 1 ? fs::path(out) / ("run_" + std::to_string(k))
                                : fs::path(out));
      }
      std::cout << "scenarios=" << K << " frames=" << cfg.frames << '\n';
      return 0;
    }
    if (trackCmd->parsed()) {
      auto cfg = io::load_tracker_config(config);
      if (!scenarioDir.empty()) cfg.scenarioDir = scenarioDir;
      require(!cfg.scenarioDir.empty(), ErrorCode::InvalidArgument,
              "no scenario directory given (config key 'scenario' or --scenario)");
      const auto result = do_track(cfg, cfg.scenarioDir, out, emitPlot);
      std::cout << "frames=" << result.frames.size()
                << " framesPerSecond=" << result.framesPerSecond << '\n';
      return 0;
    }
    if (evalCmd->parsed()) {
      const auto report = do_eval(trackDir, truthDir, out, matchFraction,
                                  pointThreshold);
      std::cout << "accuracy=" << report.accuracy << " fpRate=" << report.fpRate
                << " fnRate=" << report.fnRate << '\n';
      return 0;
    }
    if (chainCmd->parsed()) {
      return do_chain(config, out, seed, runs, emitPlot);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
