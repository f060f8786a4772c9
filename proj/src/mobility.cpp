#include "multiflock/mobility.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "multiflock/errors.hpp"

namespace multiflock {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::uint64_t kGroupStreamTag = 0x475250ULL;  // "GRP"

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, kTwoPi);
  if (a < 0) a += kTwoPi;
  return a - std::numbers::pi;
}

// Time after `t` that lands exactly on the horizon when the step reaches it.
double advance_time(double t, double dt, double horizon) {
  return dt >= horizon - t ? horizon : t + dt;
}

struct Reflections {
  int x = 0;
  int y = 0;
};

// Straight-line motion inside [0, side]^2 with specular reflection at the walls.
// Appends one waypoint per bounce; `heading` is updated in place.
Vec2 advance_reflecting(Vec2 p, double& heading, double speed, double t0, double dt, double side,
                        std::vector<Waypoint>* path, Reflections* flips = nullptr) {
  double remaining = dt;
  double t = t0;
  double last_emitted = t0;
  if (speed <= 0.0) return p;
  for (int guard = 0; remaining > 0.0 && guard < 100000; ++guard) {
    double vx = speed * std::cos(heading);
    double vy = speed * std::sin(heading);
    double tx = kInf, ty = kInf;
    if (vx > 0) tx = (side - p.x) / vx;
    else if (vx < 0) tx = -p.x / vx;
    if (vy > 0) ty = (side - p.y) / vy;
    else if (vy < 0) ty = -p.y / vy;
    const double hit = std::max(0.0, std::min(tx, ty));
    if (hit >= remaining) {
      p.x = std::clamp(p.x + vx * remaining, 0.0, side);
      p.y = std::clamp(p.y + vy * remaining, 0.0, side);
      break;
    }
    p.x = std::clamp(p.x + vx * hit, 0.0, side);
    p.y = std::clamp(p.y + vy * hit, 0.0, side);
    t += hit;
    remaining -= hit;
    if (tx <= hit) {
      p.x = vx > 0 ? side : 0.0;
      vx = -vx;
      if (flips) ++flips->x;
    }
    if (ty <= hit) {
      p.y = vy > 0 ? side : 0.0;
      vy = -vy;
      if (flips) ++flips->y;
    }
    heading = std::atan2(vy, vx);
    if (path && t > last_emitted) {
      path->push_back({t, p.x, p.y});
      last_emitted = t;
    }
  }
  return p;
}

Vec2 uniform_in_box(Rng& rng, double lo, double hi) {
  const double x = rng.uniform(lo, hi);
  const double y = rng.uniform(lo, hi);
  return {x, y};
}

Vec2 uniform_in_disk(Rng& rng, double radius) {
  const double r = radius * std::sqrt(rng.uniform());
  const double a = rng.uniform(0.0, kTwoPi);
  return {r * std::cos(a), r * std::sin(a)};
}

// Moves `from` toward `to` by `step`; snaps onto `to` when the step covers the gap.
Vec2 move_toward(Vec2 from, Vec2 to, double step, bool arrived) {
  if (arrived) return to;
  const double d = distance(from, to);
  if (d <= 0.0) return to;
  const double f = step / d;
  return {from.x + (to.x - from.x) * f, from.y + (to.y - from.y) * f};
}

struct GroupGeometry {
  double box_lo;
  double box_hi;
  double reference_speed_min;
  double reference_speed_max;
  double drift_speed_max;
};

GroupGeometry group_geometry(const SimConfig& cfg) {
  const auto& p = cfg.params.reference_point_group;
  GroupGeometry g{};
  g.box_lo = std::min(p.group_radius, cfg.area_side / 2.0);
  g.box_hi = cfg.area_side - g.box_lo;
  g.drift_speed_max = p.member_speed_fraction * cfg.speed_max;
  const double hi = std::max(0.0, cfg.speed_max - g.drift_speed_max);
  g.reference_speed_max = p.reference_speed_max.value_or(hi);
  g.reference_speed_min =
      p.reference_speed_min.value_or(std::min(cfg.speed_min, g.reference_speed_max));
  return g;
}

double grid_extent(const SimConfig& cfg) {
  const double g = cfg.params.manhattan_grid.grid_spacing;
  return std::floor(cfg.area_side / g + 1e-9) * g;
}

}  // namespace

std::string_view to_string(MobilityModel model) {
  switch (model) {
    case MobilityModel::random_walk: return "rw";
    case MobilityModel::gauss_markov: return "gm";
    case MobilityModel::reference_point_group: return "rpg";
    case MobilityModel::manhattan_grid: return "mg";
  }
  return "unknown";
}

MobilityModel parse_mobility_model(std::string_view name) {
  if (name == "rw") return MobilityModel::random_walk;
  if (name == "gm") return MobilityModel::gauss_markov;
  if (name == "rpg") return MobilityModel::reference_point_group;
  if (name == "mg") return MobilityModel::manhattan_grid;
  throw ConfigError("unknown mobility model '" + std::string(name) + "' (expected rw, gm, rpg or mg)");
}

double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

void SimConfig::validate() const {
  if (num_nodes <= 0) throw ConfigError("num_nodes must be positive");
  if (!(area_side > 0)) throw ConfigError("area_side must be positive");
  if (!(speed_min > 0) || !(speed_min <= speed_max))
    throw ConfigError("speed range must satisfy 0 < speed_min <= speed_max");
  if (!(duration >= 0)) throw ConfigError("duration must be non-negative");
  if (!(sample_interval > 0)) throw ConfigError("sample_interval must be positive");
  const auto& rw = params.random_walk;
  if (!(rw.leg_duration > 0)) throw ConfigError("random walk leg_duration must be positive");
  const auto& gm = params.gauss_markov;
  if (!(gm.memory >= 0.0 && gm.memory <= 1.0))
    throw ConfigError("gauss-markov memory must lie in [0, 1]");
  if (!(gm.update_interval > 0)) throw ConfigError("gauss-markov update_interval must be positive");
  const auto& rpg = params.reference_point_group;
  if (model == MobilityModel::reference_point_group) {
    if (rpg.groups <= 0) throw ConfigError("reference point group needs at least one group");
    if (rpg.groups > num_nodes) throw ConfigError("more groups than nodes");
  }
  if (!(rpg.group_radius >= 0)) throw ConfigError("group_radius must be non-negative");
  if (!(rpg.member_speed_fraction >= 0 && rpg.member_speed_fraction < 1))
    throw ConfigError("member_speed_fraction must lie in [0, 1)");
  const auto& mg = params.manhattan_grid;
  if (!(mg.grid_spacing > 0)) throw ConfigError("grid spacing must be positive");
  if (mg.grid_spacing > area_side) throw ConfigError("grid spacing exceeds the area side");
  if (!(mg.turn_probability >= 0 && mg.turn_probability <= 1))
    throw ConfigError("turn probability must lie in [0, 1]");
}

double MobilityTrace::duration() const {
  if (nodes.empty() || nodes.front().empty()) return 0.0;
  return nodes.front().back().t;
}

Vec2 MobilityTrace::position(std::size_t node, double t) const {
  const auto& w = nodes.at(node);
  if (t <= w.front().t) return {w.front().x, w.front().y};
  if (t >= w.back().t) return {w.back().x, w.back().y};
  auto hi = std::upper_bound(w.begin(), w.end(), t,
                             [](double value, const Waypoint& p) { return value < p.t; });
  auto lo = hi - 1;
  const double f = (t - lo->t) / (hi->t - lo->t);
  return {lo->x + (hi->x - lo->x) * f, lo->y + (hi->y - lo->y) * f};
}

void MobilityTrace::validate() const {
  if (nodes.empty()) throw ConfigError("trace has no nodes");
  if (!(area_side > 0)) throw ConfigError("trace area_side must be positive");
  const double end = duration();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& w = nodes[i];
    if (w.empty()) throw ConfigError("node " + std::to_string(i) + " has no waypoints");
    if (w.front().t != 0.0) throw ConfigError("node " + std::to_string(i) + " does not start at t=0");
    if (w.back().t != end) throw ConfigError("node " + std::to_string(i) + " span differs from node 0");
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (k > 0 && !(w[k].t > w[k - 1].t))
        throw ConfigError("node " + std::to_string(i) + " waypoint times not strictly increasing");
      if (w[k].x < 0 || w[k].x > area_side || w[k].y < 0 || w[k].y > area_side)
        throw ConfigError("node " + std::to_string(i) + " waypoint outside the area");
    }
  }
}

// --- random walk -----------------------------------------------------------

RandomWalkState step_random_walk(const RandomWalkState& state, const SimConfig& cfg,
                                 double horizon, Rng& rng, std::vector<Waypoint>* path) {
  RandomWalkState next = state;
  if (state.time >= horizon) return next;
  next.heading = rng.uniform(0.0, kTwoPi);
  next.speed = rng.uniform(cfg.speed_min, cfg.speed_max);
  const double dt = std::min(cfg.params.random_walk.leg_duration, horizon - state.time);
  next.position = advance_reflecting(state.position, next.heading, next.speed, state.time, dt,
                                     cfg.area_side, path);
  next.time = advance_time(state.time, dt, horizon);
  if (path) path->push_back({next.time, next.position.x, next.position.y});
  return next;
}

// --- gauss-markov ----------------------------------------------------------

double gauss_markov_update(double current, double mean, double sigma, double memory, Rng& rng) {
  const double noise = rng.normal();
  return memory * current + (1.0 - memory) * mean +
         std::sqrt(std::max(0.0, 1.0 - memory * memory)) * sigma * noise;
}

GaussMarkovState step_gauss_markov(const GaussMarkovState& state, const SimConfig& cfg,
                                   double horizon, Rng& rng, std::vector<Waypoint>* path) {
  const auto& p = cfg.params.gauss_markov;
  if (!(p.memory >= 0.0 && p.memory <= 1.0))
    throw ConfigError("gauss-markov memory must lie in [0, 1]");
  GaussMarkovState next = state;
  if (state.time >= horizon) return next;

  const double dt = std::min(p.update_interval, horizon - state.time);
  Reflections flips;
  next.position = advance_reflecting(state.position, next.heading, state.speed, state.time, dt,
                                     cfg.area_side, path, &flips);
  // A bounce mirrors the preferred heading too, otherwise the node steers back into the wall.
  for (int k = 0; k < flips.x; ++k) next.mean_heading = std::numbers::pi - next.mean_heading;
  for (int k = 0; k < flips.y; ++k) next.mean_heading = -next.mean_heading;
  next.mean_heading = wrap_angle(next.mean_heading);
  next.time = advance_time(state.time, dt, horizon);
  if (path) path->push_back({next.time, next.position.x, next.position.y});

  const double mean_speed = p.mean_speed.value_or(0.5 * (cfg.speed_min + cfg.speed_max));
  const double speed_sigma = p.speed_sigma.value_or((cfg.speed_max - cfg.speed_min) / 6.0);
  next.speed = std::clamp(gauss_markov_update(next.speed, mean_speed, speed_sigma, p.memory, rng),
                          cfg.speed_min, cfg.speed_max);
  // Mean direction taken on the branch nearest the current heading.
  const double local_mean = next.heading + wrap_angle(next.mean_heading - next.heading);
  next.heading =
      wrap_angle(gauss_markov_update(next.heading, local_mean, p.heading_sigma, p.memory, rng));
  return next;
}

// --- reference point group -------------------------------------------------

GroupState step_reference_point_group(const GroupState& state, const SimConfig& cfg,
                                      double horizon, Rng& group_rng,
                                      std::vector<Rng>& member_rngs,
                                      std::vector<std::vector<Waypoint>>* paths) {
  const auto& p = cfg.params.reference_point_group;
  if (member_rngs.size() != state.members.size())
    throw ConfigError("one generator per group member is required");
  GroupState next = state;
  if (state.time >= horizon) return next;

  const GroupGeometry geo = group_geometry(cfg);
  const double ref_gap = distance(state.reference, state.reference_target);
  const double ref_eta =
      state.reference_speed > 0 && ref_gap > 0 ? ref_gap / state.reference_speed : kInf;
  double dt = std::min(ref_eta, horizon - state.time);
  std::vector<double> member_eta(state.members.size(), kInf);
  for (std::size_t m = 0; m < state.members.size(); ++m) {
    const auto& mem = state.members[m];
    const double gap = distance(mem.offset, mem.offset_target);
    if (mem.offset_speed > 0 && gap > 0) member_eta[m] = gap / mem.offset_speed;
    dt = std::min(dt, member_eta[m]);
  }

  const bool ref_arrived = ref_eta <= dt;
  next.reference =
      move_toward(state.reference, state.reference_target, state.reference_speed * dt, ref_arrived);
  if (ref_arrived) {
    next.reference_target = uniform_in_box(group_rng, geo.box_lo, geo.box_hi);
    next.reference_speed = group_rng.uniform(geo.reference_speed_min, geo.reference_speed_max);
  }
  for (std::size_t m = 0; m < state.members.size(); ++m) {
    auto& mem = next.members[m];
    const bool arrived = member_eta[m] <= dt;
    mem.offset = move_toward(mem.offset, mem.offset_target, mem.offset_speed * dt, arrived);
    if (arrived) {
      mem.offset_target = uniform_in_disk(member_rngs[m], p.group_radius);
      mem.offset_speed = geo.drift_speed_max * member_rngs[m].uniform(0.5, 1.0);
    }
  }
  next.time = advance_time(state.time, dt, horizon);

  if (paths) {
    for (std::size_t m = 0; m < next.members.size(); ++m) {
      const double x = std::clamp(next.reference.x + next.members[m].offset.x, 0.0, cfg.area_side);
      const double y = std::clamp(next.reference.y + next.members[m].offset.y, 0.0, cfg.area_side);
      (*paths)[m].push_back({next.time, x, y});
    }
  }
  return next;
}

// --- manhattan grid --------------------------------------------------------

GridState step_manhattan_grid(const GridState& state, const SimConfig& cfg, double horizon,
                              Rng& rng, std::vector<Waypoint>* path) {
  const double g = cfg.params.manhattan_grid.grid_spacing;
  if (!(g > 0)) throw ConfigError("grid spacing must be positive");
  const double extent = grid_extent(cfg);
  GridState next = state;
  next.last_decision = GridDecision::none;
  if (state.time >= horizon) return next;

  auto next_stop = [&](double along, int dir) {
    const double cell = along / g;
    return dir > 0 ? (std::floor(cell + 1e-9) + 1.0) * g : (std::ceil(cell - 1e-9) - 1.0) * g;
  };
  double along = state.horizontal ? state.position.x : state.position.y;
  double target = next_stop(along, next.direction);
  if (target < -1e-9 || target > extent + 1e-9) {
    next.direction = -next.direction;
    target = next_stop(along, next.direction);
  }
  const double eta = std::abs(target - along) / state.speed;
  const bool arrives = eta <= horizon - state.time;
  const double dt = arrives ? eta : horizon - state.time;
  along = arrives ? target : along + next.direction * state.speed * dt;
  (state.horizontal ? next.position.x : next.position.y) = along;
  next.time = arrives ? state.time + eta : horizon;
  if (next.time > horizon) next.time = horizon;
  if (path && next.time > state.time) path->push_back({next.time, next.position.x, next.position.y});
  if (!arrives) return next;

  // Intersection: travel vector (dx, dy); left = (-dy, dx), right = (dy, -dx).
  const int dx = state.horizontal ? next.direction : 0;
  const int dy = state.horizontal ? 0 : next.direction;
  struct Option {
    int dx, dy;
  };
  const Option straight{dx, dy}, left{-dy, dx}, right{dy, -dx};
  auto valid = [&](const Option& o) {
    const double nx = next.position.x + o.dx * g;
    const double ny = next.position.y + o.dy * g;
    return nx >= -1e-9 && nx <= extent + 1e-9 && ny >= -1e-9 && ny <= extent + 1e-9;
  };
  const double p_turn = cfg.params.manhattan_grid.turn_probability;
  const double u = rng.uniform();
  Option choice = u < p_turn / 2.0 ? left : (u < p_turn ? right : straight);
  const bool interior = valid(straight) && valid(left) && valid(right);
  if (interior) {
    next.last_decision =
        (choice.dx == straight.dx && choice.dy == straight.dy) ? GridDecision::straight
                                                               : GridDecision::turned;
  } else {
    next.last_decision = GridDecision::forced;
    if (!valid(choice)) {
      std::vector<Option> options;
      for (const Option& o : {straight, left, right})
        if (valid(o)) options.push_back(o);
      choice = options.empty() ? Option{-dx, -dy} : options[rng.below(options.size())];
    }
  }
  next.horizontal = choice.dx != 0;
  next.direction = next.horizontal ? choice.dx : choice.dy;
  next.speed = rng.uniform(cfg.speed_min, cfg.speed_max);
  return next;
}

// --- trace generation ------------------------------------------------------

MobilityTrace generate_trace(const SimConfig& cfg) {
  cfg.validate();
  const double horizon = cfg.duration;
  const auto n = static_cast<std::size_t>(cfg.num_nodes);
  MobilityTrace trace;
  trace.area_side = cfg.area_side;
  trace.nodes.resize(n);

  switch (cfg.model) {
    case MobilityModel::random_walk:
      for (std::size_t i = 0; i < n; ++i) {
        Rng rng = Rng::substream(cfg.seed, {i});
        RandomWalkState s;
        s.position = uniform_in_box(rng, 0.0, cfg.area_side);
        auto& path = trace.nodes[i];
        path.push_back({0.0, s.position.x, s.position.y});
        while (s.time < horizon) s = step_random_walk(s, cfg, horizon, rng, &path);
      }
      break;
    case MobilityModel::gauss_markov: {
      const auto& p = cfg.params.gauss_markov;
      for (std::size_t i = 0; i < n; ++i) {
        Rng rng = Rng::substream(cfg.seed, {i});
        GaussMarkovState s;
        s.position = uniform_in_box(rng, 0.0, cfg.area_side);
        s.mean_heading = wrap_angle(rng.uniform(0.0, kTwoPi));
        s.heading = s.mean_heading;
        s.speed = p.mean_speed.value_or(0.5 * (cfg.speed_min + cfg.speed_max));
        auto& path = trace.nodes[i];
        path.push_back({0.0, s.position.x, s.position.y});
        while (s.time < horizon) s = step_gauss_markov(s, cfg, horizon, rng, &path);
      }
      break;
    }
    case MobilityModel::reference_point_group: {
      const auto& p = cfg.params.reference_point_group;
      const GroupGeometry geo = group_geometry(cfg);
      const auto groups = static_cast<std::size_t>(p.groups);
      for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t first = g * n / groups;
        const std::size_t last = (g + 1) * n / groups;
        Rng group_rng = Rng::substream(cfg.seed, {kGroupStreamTag, g});
        GroupState s;
        s.reference = uniform_in_box(group_rng, geo.box_lo, geo.box_hi);
        s.reference_target = uniform_in_box(group_rng, geo.box_lo, geo.box_hi);
        s.reference_speed = group_rng.uniform(geo.reference_speed_min, geo.reference_speed_max);
        std::vector<Rng> member_rngs;
        std::vector<std::vector<Waypoint>> paths(last - first);
        for (std::size_t i = first; i < last; ++i) {
          member_rngs.push_back(Rng::substream(cfg.seed, {i}));
          Rng& mr = member_rngs.back();
          GroupMember m;
          m.offset = uniform_in_disk(mr, p.group_radius);
          m.offset_target = uniform_in_disk(mr, p.group_radius);
          m.offset_speed = geo.drift_speed_max * mr.uniform(0.5, 1.0);
          s.members.push_back(m);
          const double x = std::clamp(s.reference.x + m.offset.x, 0.0, cfg.area_side);
          const double y = std::clamp(s.reference.y + m.offset.y, 0.0, cfg.area_side);
          paths[i - first].push_back({0.0, x, y});
        }
        while (s.time < horizon)
          s = step_reference_point_group(s, cfg, horizon, group_rng, member_rngs, &paths);
        for (std::size_t i = first; i < last; ++i) trace.nodes[i] = std::move(paths[i - first]);
      }
      break;
    }
    case MobilityModel::manhattan_grid: {
      const double g = cfg.params.manhattan_grid.grid_spacing;
      const double extent = grid_extent(cfg);
      const auto lines = static_cast<std::uint64_t>(std::llround(extent / g)) + 1;
      for (std::size_t i = 0; i < n; ++i) {
        Rng rng = Rng::substream(cfg.seed, {i});
        GridState s;
        s.horizontal = rng.below(2) == 0;
        const double fixed = static_cast<double>(rng.below(lines)) * g;
        const double along = rng.uniform(0.0, extent);
        s.position = s.horizontal ? Vec2{along, fixed} : Vec2{fixed, along};
        s.direction = rng.below(2) == 0 ? 1 : -1;
        s.speed = rng.uniform(cfg.speed_min, cfg.speed_max);
        auto& path = trace.nodes[i];
        path.push_back({0.0, s.position.x, s.position.y});
        while (s.time < horizon) s = step_manhattan_grid(s, cfg, horizon, rng, &path);
      }
      break;
    }
  }
  return trace;
}

std::vector<PositionFrame> sample_positions(const MobilityTrace& trace, double interval) {
  if (!(interval > 0)) throw ConfigError("sampling interval must be positive");
  const double duration = trace.duration();
  if (interval > duration) throw ConfigError("sampling interval exceeds the trace duration");
  const double steps = duration / interval;
  const auto count = std::llround(steps);
  if (std::abs(steps - static_cast<double>(count)) > 1e-9 * std::max(1.0, steps))
    throw ConfigError("sampling interval must divide the trace duration");

  std::vector<PositionFrame> frames;
  frames.reserve(static_cast<std::size_t>(count) + 1);
  for (long long k = 0; k <= count; ++k) {
    PositionFrame f;
    f.time = k == count ? duration : static_cast<double>(k) * interval;
    f.positions.reserve(trace.num_nodes());
    for (std::size_t i = 0; i < trace.num_nodes(); ++i) f.positions.push_back(trace.position(i, f.time));
    frames.push_back(std::move(f));
  }
  return frames;
}

// --- waypoint text format --------------------------------------------------

MobilityTrace parse_waypoint_trace(std::string_view text, std::optional<double> area_side) {
  MobilityTrace trace;
  double max_coord = 0.0;
  std::size_t line_no = 0;
  std::size_t first_line = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    ++line_no;
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    std::vector<double> values;
    std::size_t col = 0;
    std::size_t last_col = 1;
    while (col < line.size()) {
      while (col < line.size() && (line[col] == ' ' || line[col] == '\t')) ++col;
      if (col >= line.size()) break;
      std::size_t end = col;
      while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
      const std::string_view token = line.substr(col, end - col);
      double v = 0.0;
      const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
      if (res.ec != std::errc() || res.ptr != token.data() + token.size() || !std::isfinite(v))
        throw ParseError("malformed number '" + std::string(token) + "'", line_no, col + 1);
      const std::size_t field = values.size() % 3;
      if (field == 0 && !values.empty() && !(v > values[values.size() - 3]))
        throw ParseError("waypoint times must be strictly increasing", line_no, col + 1);
      if (field != 0) {
        if (v < 0 || (area_side && v > *area_side))
          throw ParseError("coordinate outside the simulation area", line_no, col + 1);
        max_coord = std::max(max_coord, v);
      }
      values.push_back(v);
      last_col = end + 1;
      col = end;
    }
    if (values.empty()) {
      if (pos > text.size()) break;
      continue;
    }
    if (values.size() % 3 != 0)
      throw ParseError("incomplete waypoint triple (expected t x y)", line_no, last_col);
    if (values.front() != 0.0) throw ParseError("node trace must start at t=0", line_no, 1);
    std::vector<Waypoint> node;
    for (std::size_t k = 0; k < values.size(); k += 3) node.push_back({values[k], values[k + 1], values[k + 2]});
    if (trace.nodes.empty()) {
      first_line = line_no;
    } else if (node.back().t != trace.nodes.front().back().t) {
      throw ParseError("node ends at t=" + std::to_string(node.back().t) +
                           " but the node on line " + std::to_string(first_line) + " ends at t=" +
                           std::to_string(trace.nodes.front().back().t),
                       line_no, last_col);
    }
    trace.nodes.push_back(std::move(node));
    if (pos > text.size()) break;
  }
  if (trace.nodes.empty()) throw ParseError("no nodes", 1, 1);
  trace.area_side = area_side.value_or(max_coord > 0 ? max_coord : 1.0);
  return trace;
}

std::string format_waypoint_trace(const MobilityTrace& trace) {
  std::string out;
  char buf[64];
  auto put = [&](double v) {
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
  };
  for (const auto& node : trace.nodes) {
    bool first = true;
    for (const auto& w : node) {
      for (double v : {w.t, w.x, w.y}) {
        if (!first) out.push_back(' ');
        put(v);
        first = false;
      }
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace multiflock
