#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "vapor/networks.hpp"
#include "vapor/percept.hpp"
#include "vapor/world_io.hpp"

namespace vapor {

struct RewardParams {
  double beta_goal = 1.0;
  double beta_veg = 1.0;
  double beta_energy = 1.0;
  double lambda_far = 0.5;
  double lambda_reached = 20.0;
  double goal_threshold = 0.5;
  std::array<double, 3> eta{1.0, 0.5, 0.25};
  double epsilon = 0.1;
  std::array<double, 3> radii{0.5, 1.5, 2.5};

  void validate() const;
};

struct RewardBreakdown {
  double goal = 0.0;
  double veg = 0.0;
  double energy = 0.0;
  double total = 0.0;
};

double r_goal(double d_g, double d_tot, const RewardParams& params);
double r_veg(const Eigen::MatrixXd& intensity, const GridSpec& grid, const RewardParams& params);
double r_energy(double current, const RewardParams& params);
RewardBreakdown reward(double d_g, double d_tot, const Eigen::MatrixXd& intensity, double current,
                       const GridSpec& grid, const RewardParams& params);

/// Cells whose centers lie within `radius` of the robot.
std::vector<std::pair<int, int>> neighborhood(const GridSpec& grid, double radius);

struct SegmentParams {
  double min_distance = 8.0;
  double max_distance = 20.0;
  int max_steps = 400;            // goal index at most this far after the start
  double segments_per_step = 0.01;
};

struct Segment {
  int start = 0;
  int goal = 0;
  bool operator==(const Segment&) const = default;
};

std::vector<Segment> segment(std::span<const Vec2> positions, const SegmentParams& params, Rng& rng);

struct TransitionMeta {
  std::uint64_t episode = 0;
  double d_g = 0.0;
  double d_tot = 0.0;
  double current = 0.0;
};

struct Transition {
  Observation s;
  Action a = Action::Zero();
  RewardBreakdown r;
  Observation next;
  bool done = false;
  TransitionMeta meta;
};

/// One fixed-size dataset record as stored on disk.
struct TransitionRecord {
  std::vector<float> maps;       // 3 n^2: C_i, C_h, C_g row-major
  std::array<float, 2> stability{};
  std::array<float, 3> action{};
  std::array<float, 4> reward{};  // total, goal, veg, energy
  std::vector<float> next_maps;
  std::array<float, 2> next_stability{};
  bool done = false;
};

TransitionRecord to_record(const Transition& t);

class TransitionSink {
 public:
  virtual ~TransitionSink() = default;
  virtual void add(const Transition& t) = 0;
};

struct BuildStats {
  std::size_t transitions = 0;
  std::size_t segments = 0;
  std::size_t episodes = 0;
  std::size_t done = 0;
  int skipped_records = 0;
  RewardBreakdown sum;
  RewardBreakdown min;
  RewardBreakdown max;
};

struct BuildParams {
  RewardParams rewards;
  SegmentParams segments;
  PerceptParams percept;
  std::uint64_t seed = 0;
  std::size_t max_transitions = 0;  // 0 = unlimited
};

/// Segments one contiguous rollout and emits its transitions in segment order.
/// Returns false once `max_transitions` has been reached.
bool build_rollout(const Rollout& rollout, const BuildParams& params, TransitionSink& sink, BuildStats& stats);

/// Network-ready transitions: pooled float32 features only.
struct TrainingSet {
  int width = 0;
  std::vector<float> extero, next_extero;    // N x width
  std::vector<float> proprio, next_proprio;  // N x 2
  std::vector<float> action;                 // N x 3
  std::vector<float> reward;
  std::vector<std::uint8_t> done;

  std::size_t size() const { return reward.size(); }
  void append(const TransitionRecord& r, const nn::NetworkConfig& cfg);
  /// Rows `idx` as a double/float state batch, for s or s'.
  template <typename S>
  nn::StateBatch<S> states(std::span<const std::size_t> idx, bool next) const;
  template <typename S>
  ad::Matrix<S> actions(std::span<const std::size_t> idx) const;
  /// Splits off a deterministic fraction as a held-out set.
  std::pair<TrainingSet, TrainingSet> split(double holdout, std::uint64_t seed) const;
};

class TrainingSetSink : public TransitionSink {
 public:
  TrainingSetSink(TrainingSet& set, const nn::NetworkConfig& cfg) : set_(set), cfg_(cfg) { set_.width = cfg.extero_width(); }
  void add(const Transition& t) override { set_.append(to_record(t), cfg_); }

 private:
  TrainingSet& set_;
  nn::NetworkConfig cfg_;
};

struct DatasetHeader {
  std::uint32_t version = 1;
  std::uint32_t n = 0;
  double beta = 0.0;
  std::string params_json;
};

class DatasetWriter : public TransitionSink {
 public:
  DatasetWriter(const std::filesystem::path& path, const GridSpec& grid, const std::string& params_json);
  void add(const Transition& t) override;
  void close();
  std::size_t count() const { return count_; }

 private:
  std::ofstream out_;
  GridSpec grid_;
  std::size_t count_ = 0;
};

class DatasetReader {
 public:
  explicit DatasetReader(const std::filesystem::path& path);
  const DatasetHeader& header() const { return header_; }
  std::size_t count() const { return count_; }
  bool next(TransitionRecord& record);

 private:
  std::ifstream in_;
  DatasetHeader header_;
  std::size_t count_ = 0;
  std::size_t read_ = 0;
};

std::size_t record_size(int n);
inline constexpr char kDatasetMagic[8] = {'V', 'A', 'P', 'O', 'R', 'D', 'S', '\0'};

/// Loads a dataset file into pooled training form, checking it against its manifest.
TrainingSet load_training_set(const std::filesystem::path& dataset, const std::filesystem::path& manifest,
                              const nn::NetworkConfig& cfg);

}  // namespace vapor
