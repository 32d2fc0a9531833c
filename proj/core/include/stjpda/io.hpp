#pragma once

#include <string>
#include <vector>

#include "stjpda/association.hpp"
#include "stjpda/metrics.hpp"
#include "stjpda/pipeline.hpp"
#include "stjpda/simulator.hpp"
#include "stjpda/training.hpp"
#include "stjpda/types.hpp"

namespace stjpda::io {

// CSV schemas (one header line, doubles at 17 significant digits):
//   detections: frame,u,z,origin      (origin -1 = clutter)
//   curves:     frame,target,u,value,variance
//   lifecycle:  frame,target,event

struct CurveRow {
  int frame = 0;
  int target = 0;
  double u = 0.0;
  double value = 0.0;
  double variance = 0.0;
};

void write_detections_csv(const std::string& path,
                          const std::vector<std::vector<association::Detection>>& frames,
                          const std::vector<std::vector<int>>& origins = {});

struct DetectionFile {
  std::vector<std::vector<association::Detection>> frames;
  std::vector<std::vector<int>> origins;  // empty when the column is absent
};

DetectionFile read_detections_csv(const std::string& path);

void write_curves_csv(const std::string& path, const std::vector<CurveRow>& rows);
std::vector<CurveRow> read_curves_csv(const std::string& path);

// Truth curves as CurveRows with zero variance.
std::vector<CurveRow> truth_to_rows(const simulator::GroundTruth& truth,
                                    const Vector& indexPoints);

// Pipeline output as CurveRows on the same grid.
std::vector<CurveRow> estimates_to_rows(const std::vector<pipeline::FrameEstimate>& frames,
                                        const Vector& indexPoints);

// frame-major lanesets for the metrics module; laneCount fixes the per-frame
// lane vector count (missing lanes become all-NaN rows).
std::vector<metrics::LaneSet> rows_to_lanes(const std::vector<CurveRow>& rows,
                                            const Vector& indexPoints);

void write_lifecycle_csv(const std::string& path,
                         const std::vector<pipeline::LifecycleEvent>& events);

// Scenario sidecar: what a tracker needs to know about a detection file that
// the detections alone do not carry (frame count, surveillance box, noise).
struct ScenarioMeta {
  int frames = 0;
  int D = 0;
  double uLo = 0.0, uHi = 0.0, valueLo = 0.0, valueHi = 0.0;
  double noiseStd = 0.0;
  double clutterRate = 0.0;  // per frame per unit area
  bool statesConsistent = false;
};

void save_meta(const std::string& path, const ScenarioMeta& meta);
ScenarioMeta load_meta(const std::string& path);

// Versioned trained-model file (JSON): hyperparams, coregionalization, and
// the derived continuous/discrete state-space matrices. Deterministic byte
// output for identical models.
void save_model(const std::string& path, const training::TrainedModel& model);
training::TrainedModel load_model(const std::string& path);

void write_report_json(const std::string& path, const metrics::EvalReport& report);

// Strict-schema JSON config loaders: unknown keys are rejected.
simulator::ScenarioConfig load_scenario_config(const std::string& path);

struct TrackerFileConfig {
  pipeline::PipelineConfig pipeline;
  std::string scenarioDir;  // directory with detections.csv + meta.json
  bool autoClutter = true;  // derive assoc volume/clutter from scenario meta
  int runs = 1;
  unsigned long long seed = 0;
};

TrackerFileConfig load_tracker_config(const std::string& path);

struct TrainFileConfig {
  std::string dataPath;  // curves CSV with per-target samples
  kernels::KernelFamily family = kernels::KernelFamily::Matern32;
  training::TrainOptions options;
  training::TrainInit init;
  double noiseVar = 1e-2;
};

TrainFileConfig load_train_config(const std::string& path);

}  // namespace stjpda::io
