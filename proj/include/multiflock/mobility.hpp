#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "multiflock/rng.hpp"

namespace multiflock {

enum class MobilityModel { random_walk, gauss_markov, reference_point_group, manhattan_grid };

/// Short names used on the command line and in file metadata: rw, gm, rpg, mg.
std::string_view to_string(MobilityModel model);
MobilityModel parse_mobility_model(std::string_view name);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double distance(Vec2 a, Vec2 b);

struct RandomWalkParams {
  double leg_duration = 10.0;  // seconds a drawn heading/speed is held
};

struct GaussMarkovParams {
  double memory = 0.75;          // 0 = no memory, 1 = constant motion
  double update_interval = 2.0;  // seconds between speed/heading updates
  std::optional<double> mean_speed;   // defaults to the midpoint of the speed range
  std::optional<double> speed_sigma;  // defaults to (speed_max - speed_min) / 6
  double heading_sigma = 0.7853981633974483;  // pi/4
};

struct ReferencePointGroupParams {
  int groups = 4;
  double group_radius = 1500.0;
  // Reference-point speed range; defaults keep reference + member drift <= speed_max.
  std::optional<double> reference_speed_min;
  std::optional<double> reference_speed_max;
  double member_speed_fraction = 0.1;  // member drift speed as a fraction of speed_max
};

struct ManhattanGridParams {
  double grid_spacing = 1000.0;
  double turn_probability = 0.5;
};

struct MobilityParams {
  RandomWalkParams random_walk;
  GaussMarkovParams gauss_markov;
  ReferencePointGroupParams reference_point_group;
  ManhattanGridParams manhattan_grid;
};

struct SimConfig {
  int num_nodes = 100;
  double area_side = 10000.0;  // square area, meters
  double speed_min = 25.0;
  double speed_max = 35.0;
  double duration = 160.0;
  double sample_interval = 2.0;
  MobilityModel model = MobilityModel::random_walk;
  MobilityParams params;
  std::uint64_t seed = 1;

  /// Throws ConfigError. A zero duration is accepted and yields a trace of initial positions.
  void validate() const;
};

struct Waypoint {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Waypoint&, const Waypoint&) = default;
};

/// Piecewise-linear per-node schedule. Every node starts at t = 0 and ends at duration().
struct MobilityTrace {
  double area_side = 0.0;
  std::vector<std::vector<Waypoint>> nodes;

  std::size_t num_nodes() const { return nodes.size(); }
  double duration() const;
  Vec2 position(std::size_t node, double t) const;
  /// Throws ConfigError on non-increasing times, out-of-area points or mismatched spans.
  void validate() const;

  friend bool operator==(const MobilityTrace&, const MobilityTrace&) = default;
};

struct PositionFrame {
  double time = 0.0;
  std::vector<Vec2> positions;
};

// ---------------------------------------------------------------------------
// Per-model steppers. Each call advances one model event (a leg, an update
// period, a group event or a grid segment), never past `horizon`, and appends
// the waypoints it passes through (excluding the starting point) to `path`.

struct RandomWalkState {
  double time = 0.0;
  Vec2 position;
  double heading = 0.0;
  double speed = 0.0;
};

RandomWalkState step_random_walk(const RandomWalkState& state, const SimConfig& cfg, double horizon,
                                 Rng& rng, std::vector<Waypoint>* path = nullptr);

struct GaussMarkovState {
  double time = 0.0;
  Vec2 position;
  double speed = 0.0;
  double heading = 0.0;
  double mean_heading = 0.0;
};

/// Moves for one update period at the current speed and heading, then applies
/// the AR(1) update to speed and heading.
GaussMarkovState step_gauss_markov(const GaussMarkovState& state, const SimConfig& cfg,
                                   double horizon, Rng& rng,
                                   std::vector<Waypoint>* path = nullptr);

/// Raw Gauss-Markov recurrence value: memory*current + (1-memory)*mean + sqrt(1-memory^2)*sigma*g.
double gauss_markov_update(double current, double mean, double sigma, double memory, Rng& rng);

struct GroupMember {
  Vec2 offset;
  Vec2 offset_target;
  double offset_speed = 0.0;
};

struct GroupState {
  double time = 0.0;
  Vec2 reference;
  Vec2 reference_target;
  double reference_speed = 0.0;
  std::vector<GroupMember> members;
};

/// Advances a group to its next event (reference point or a member offset
/// reaching its waypoint). `member_rngs` holds one generator per member;
/// `paths`, when given, receives one waypoint per member at the event time.
GroupState step_reference_point_group(const GroupState& state, const SimConfig& cfg,
                                      double horizon, Rng& group_rng,
                                      std::vector<Rng>& member_rngs,
                                      std::vector<std::vector<Waypoint>>* paths = nullptr);

enum class GridDecision { none, straight, turned, forced };

struct GridState {
  double time = 0.0;
  Vec2 position;
  bool horizontal = true;  // travelling along a horizontal (constant-y) line
  int direction = 1;       // +1 or -1 along the travel axis
  double speed = 0.0;
  GridDecision last_decision = GridDecision::none;
};

/// Travels to the next intersection (or the horizon) and, on arrival, picks
/// the next segment: left/right with turn_probability/2 each, else straight.
/// Choices that would leave the grid are replaced (recorded as `forced`).
GridState step_manhattan_grid(const GridState& state, const SimConfig& cfg, double horizon,
                              Rng& rng, std::vector<Waypoint>* path = nullptr);

// ---------------------------------------------------------------------------

/// Deterministic trace for cfg.seed. Node i draws from substream (seed, i);
/// reference points draw from (seed, group-tag, g).
MobilityTrace generate_trace(const SimConfig& cfg);

/// Frames at t = 0, interval, ..., duration by linear interpolation.
std::vector<PositionFrame> sample_positions(const MobilityTrace& trace, double interval);

/// One line per node, whitespace-separated "t x y" triples (BonnMotion movement layout).
/// `area_side` defaults to the largest coordinate found.
MobilityTrace parse_waypoint_trace(std::string_view text,
                                   std::optional<double> area_side = std::nullopt);
/// Shortest round-trip decimal representation of every value.
std::string format_waypoint_trace(const MobilityTrace& trace);

}  // namespace multiflock
