#pragma once

#include <cstdint>
#include <vector>

#include "stjpda/association.hpp"
#include "stjpda/coupling.hpp"
#include "stjpda/kernels.hpp"
#include "stjpda/types.hpp"

namespace stjpda::simulator {

// Deterministic random source with explicitly coded transforms, so that one
// seed produces bitwise-identical streams on every platform and toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal();                       // standard normal (Box-Muller)
  int poisson(double mean);              // Knuth product method, split for large means
  Vector normals(Eigen::Index n);

 private:
  std::uint64_t next();
  std::uint64_t state_;
  bool hasSpare_ = false;
  double spare_ = 0.0;
};

enum class Generator { GPDraw, ParametricLanes };
enum class ManeuverMode { Merge, Split, Cross };

struct ManeuverSpec {
  int frameBegin = 0;
  int frameEnd = 0;  // exclusive ramp end; the final offsets persist afterwards
  int targetA = 0;
  int targetB = 1;
  ManeuverMode mode = ManeuverMode::Cross;
};

struct ScenarioConfig {
  int D = 1;
  Vector indexPoints;  // N ascending locations
  Generator generator = Generator::GPDraw;
  kernels::KernelHyperparams spatial;
  kernels::KernelHyperparams temporal;
  Matrix Btrue;           // empty -> identity
  double Pd = 1.0;
  double clutterRate = 0.0;  // expected clutter per frame per unit area
  double noiseStd = 0.1;
  int frames = 1;
  std::vector<ManeuverSpec> schedule;
  std::uint64_t seed = 0;
  double frameDt = 1.0;
  int rbfOrder = 2;
  double uJitter = 0.0;  // half-width of uniform index jitter on target detections

  int N() const { return static_cast<int>(indexPoints.size()); }
  void validate() const;
};

struct GroundTruth {
  // truthValues[f](d, i) = f_d(u_i) at frame f, after schedule transforms.
  std::vector<Matrix> truthValues;
  // Full stacked states per frame (GPDraw only), coupling-module layout.
  std::vector<Vector> states;
  // True when `states` evolve by the exact discrete model AND match
  // truthValues (i.e. GPDraw with an empty schedule); only then are
  // consistency statistics against the filter meaningful.
  bool statesConsistent = false;
  std::vector<std::vector<association::Detection>> frames;
  std::vector<std::vector<int>> origins;  // per detection: target id or -1 for clutter

  // Surveillance box (index range x value range, value side padded by
  // 3 noiseStd).
  double uLo = 0.0, uHi = 0.0, valueLo = 0.0, valueHi = 0.0;
  double area() const { return (uHi - uLo) * (valueHi - valueLo); }
};

// Samples a full scenario: curves, per-frame detections with misses, and
// uniform Poisson clutter over the surveillance box. Deterministic per seed.
GroundTruth generate(const ScenarioConfig& config);

// Area of the clutter box the scenario uses (regenerates the truth for the
// configured seed).
double surveillance_volume(const ScenarioConfig& config);

}  // namespace stjpda::simulator
