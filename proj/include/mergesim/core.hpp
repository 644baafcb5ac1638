#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mergesim {

// Nominal data cadence. Tracks are resampled onto this grid at ingestion.
inline constexpr double kSampleRateHz = 10.0;
inline constexpr double kSamplePeriod = 1.0 / kSampleRateHz;
inline constexpr double kSamplePeriodTol = 0.01;  // +/- 1% of the period

// Driver eye position, measured back from the front bumper.
inline constexpr double kDriverRefBehindFront = 1.5;

inline constexpr double kTimeEps = 1e-9;

enum class ActorKind { TA, LA, MA, FA, OTHER };

enum class ModelKind { IDM, IDM_MSA, IDM_CAH, LOOMING, LOOMING_MOD, IDM_LOOMING, MR_IDM };

inline std::string to_string(ActorKind k) {
  switch (k) {
    case ActorKind::TA: return "TA";
    case ActorKind::LA: return "LA";
    case ActorKind::MA: return "MA";
    case ActorKind::FA: return "FA";
    default: return "OTHER";
  }
}

inline std::optional<ActorKind> actor_kind_from_string(const std::string& s) {
  if (s == "TA") return ActorKind::TA;
  if (s == "LA") return ActorKind::LA;
  if (s == "MA") return ActorKind::MA;
  if (s == "FA") return ActorKind::FA;
  if (s == "OTHER") return ActorKind::OTHER;
  return std::nullopt;
}

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::IDM: return "IDM";
    case ModelKind::IDM_MSA: return "IDM_MSA";
    case ModelKind::IDM_CAH: return "IDM_CAH";
    case ModelKind::LOOMING: return "LOOMING";
    case ModelKind::LOOMING_MOD: return "LOOMING_MOD";
    case ModelKind::IDM_LOOMING: return "IDM_LOOMING";
    default: return "MR_IDM";
  }
}

inline std::optional<ModelKind> model_kind_from_string(const std::string& s) {
  if (s == "IDM") return ModelKind::IDM;
  if (s == "IDM_MSA") return ModelKind::IDM_MSA;
  if (s == "IDM_CAH") return ModelKind::IDM_CAH;
  if (s == "LOOMING") return ModelKind::LOOMING;
  if (s == "LOOMING_MOD") return ModelKind::LOOMING_MOD;
  if (s == "IDM_LOOMING") return ModelKind::IDM_LOOMING;
  if (s == "MR_IDM") return ModelKind::MR_IDM;
  return std::nullopt;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Vec2&) const = default;
};

/// One kinematic sample in lane-based coordinates: s runs along the lane
/// centerline, t is the signed lateral offset (left of travel positive).
struct TrajectorySample {
  double time = 0.0;   // s
  double s = 0.0;      // m
  double t = 0.0;      // m
  double speed = 0.0;  // m/s
  double accel = 0.0;  // m/s^2
  int lane_id = 0;
  bool operator==(const TrajectorySample&) const = default;
};

/// Lane index derived from lateral offset. Lane 0 is the lane whose
/// centerline is the road reference line; positive indices count to the
/// right of travel (where the on-ramp usually sits), negative to the left.
/// The boundary itself belongs to the outer lane, so a merging vehicle
/// enters lane 0 only once its center is strictly inside it.
inline int lane_index_from_offset(double t, double lane_width) {
  return static_cast<int>(std::floor((-t + 0.5 * lane_width) / lane_width));
}

struct ActorTrack {
  std::string actor_id;
  ActorKind kind = ActorKind::OTHER;
  double length = 4.5;  // m
  double width = 1.8;   // m
  std::vector<TrajectorySample> samples;

  bool operator==(const ActorTrack&) const = default;

  double start_time() const { return samples.front().time; }
  double end_time() const { return samples.back().time; }

  bool covers(double time) const {
    return !samples.empty() && time >= start_time() - kTimeEps && time <= end_time() + kTimeEps;
  }

  // Zero-order hold on the sample grid: the last sample at or before `time`,
  // clamped to the track ends.
  std::size_t index_at(double time) const {
    if (samples.size() < 2) return 0;
    const double h = samples[1].time - samples[0].time;
    if (h <= 0.0) return 0;
    const double u = (time - samples[0].time) / h + kTimeEps;
    if (u <= 0.0) return 0;
    const std::size_t i = static_cast<std::size_t>(u);
    return std::min(i, samples.size() - 1);
  }

  const TrajectorySample& state_at(double time) const {
    if (samples.empty()) throw std::logic_error("state_at on empty track");
    return samples[index_at(time)];
  }

  // Recorded speed at `time`: exact sample value for on-grid queries,
  // linear interpolation for grids finer than the data cadence.
  double speed_at(double time) const {
    if (samples.empty()) throw std::logic_error("speed_at on empty track");
    if (time <= samples.front().time) return samples.front().speed;
    if (time >= samples.back().time) return samples.back().speed;
    const std::size_t i = index_at(time);
    if (std::abs(samples[i].time - time) <= 1e-6) return samples[i].speed;
    const std::size_t j = std::min(i + 1, samples.size() - 1);
    if (j == i) return samples[i].speed;
    if (std::abs(samples[j].time - time) <= 1e-6) return samples[j].speed;
    const double u = (time - samples[i].time) / (samples[j].time - samples[i].time);
    return samples[i].speed + u * (samples[j].speed - samples[i].speed);
  }

  double front_bumper_s(double time) const { return state_at(time).s + 0.5 * length; }
  double rear_bumper_s(double time) const { return state_at(time).s - 0.5 * length; }
};

/// Road description for one merge site. The centerline is the main (TA)
/// lane reference; the ramp lane runs alongside it starting at the hard nose
/// and ends where the acceleration lane closes.
struct RoadGeometry {
  std::vector<Vec2> centerline;
  double lane_width = 3.6;  // m
  int ramp_lane_id = 1;
  double hard_nose_s = 0.0;  // m
  double ramp_end_s = 0.0;   // m
  bool operator==(const RoadGeometry&) const = default;
};

/// One recorded merge: the actor tracks, the road, and the merge timing.
/// merge_time / interaction_start are absent when ingestion could not
/// establish them; validate_event reports that instead of failing.
struct MergeEvent {
  std::string event_id;
  std::vector<ActorTrack> tracks;
  RoadGeometry geometry;
  std::optional<double> merge_time;
  std::optional<double> interaction_start;

  bool operator==(const MergeEvent&) const = default;

  const ActorTrack* find(ActorKind kind) const {
    for (const auto& t : tracks)
      if (t.kind == kind) return &t;
    return nullptr;
  }

  const ActorTrack* find_id(const std::string& id) const {
    for (const auto& t : tracks)
      if (t.actor_id == id) return &t;
    return nullptr;
  }

  // Time span common to the required actors (TA, MA, LA); falls back to the
  // union span when some are missing so diagnostics still have a range.
  std::pair<double, double> common_window() const {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    bool any = false;
    for (ActorKind k : {ActorKind::TA, ActorKind::MA, ActorKind::LA}) {
      const ActorTrack* t = find(k);
      if (t == nullptr || t->samples.empty()) continue;
      lo = std::max(lo, t->start_time());
      hi = std::min(hi, t->end_time());
      any = true;
    }
    if (!any || lo > hi) {
      lo = std::numeric_limits<double>::infinity();
      hi = -std::numeric_limits<double>::infinity();
      for (const auto& t : tracks) {
        if (t.samples.empty()) continue;
        lo = std::min(lo, t.start_time());
        hi = std::max(hi, t.end_time());
      }
      if (tracks.empty() || lo > hi) return {0.0, 0.0};
    }
    return {lo, hi};
  }

  double duration() const {
    auto [lo, hi] = common_window();
    return hi - lo;
  }
};

/// The per-timestep stimulus a car-following model consumes.
struct LeaderView {
  double ds = 0.0;     // m, TA driver reference -> target rear bumper
  double dt = 0.0;     // m, lateral offset, TA center -> target center
  double v_l = 0.0;    // m/s
  double a_l = 0.0;    // m/s^2
  double width = 1.8;  // m
};

struct ParamBounds {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const ParamBounds&) const = default;
};

/// Tagged parameter set for one acceleration law. `values` holds every
/// named parameter the law reads; `bounds` gives the calibration box.
/// The coolness factor "c" is carried as a value but treated as fixed at
/// 0.99 unless a caller opts into calibrating it, which keeps the free
/// parameter count of each model at its nominal size.
struct ModelParams {
  ModelKind kind = ModelKind::IDM;
  std::map<std::string, double> values;
  std::map<std::string, ParamBounds> bounds;

  bool operator==(const ModelParams&) const = default;

  double at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end())
      throw std::invalid_argument("missing model parameter: " + name);
    return it->second;
  }

  double at_or(const std::string& name, double fallback) const {
    auto it = values.find(name);
    return it == values.end() ? fallback : it->second;
  }
};

inline const std::vector<std::string>& required_param_names(ModelKind kind) {
  static const std::vector<std::string> idm = {"v0", "T", "a", "b", "s0"};
  static const std::vector<std::string> idm_msa = {"v0", "T", "a", "b", "s0", "p", "da_th"};
  static const std::vector<std::string> idm_cah = {"v0", "T", "a", "b", "s0", "c"};
  static const std::vector<std::string> looming = {"k_v", "v_des", "k_la", "k_ma",
                                                   "sat", "gap_th", "k_ma2", "sat2"};
  static const std::vector<std::string> looming_mod = {"k_v", "v_des", "k_la", "k_ma", "sat"};
  static const std::vector<std::string> idm_looming = {"v0",  "T",     "a",    "b",    "s0", "c",
                                                       "k_v", "v_des", "k_la", "k_ma", "sat"};
  static const std::vector<std::string> mr_idm = {"v0", "T", "a", "b", "s0", "c", "zeta"};
  switch (kind) {
    case ModelKind::IDM: return idm;
    case ModelKind::IDM_MSA: return idm_msa;
    case ModelKind::IDM_CAH: return idm_cah;
    case ModelKind::LOOMING: return looming;
    case ModelKind::LOOMING_MOD: return looming_mod;
    case ModelKind::IDM_LOOMING: return idm_looming;
    default: return mr_idm;
  }
}

/// Names exposed to calibration. Identical to the required names except
/// that the coolness factor stays fixed, matching the nominal per-model
/// parameter counts (IDM 5, IDM-MSA 7, IDM-CAH 5, Looming 8, Looming-Mod 5,
/// IDM-Looming 10, MR-IDM 6).
inline std::vector<std::string> free_param_names(ModelKind kind) {
  std::vector<std::string> out;
  for (const auto& n : required_param_names(kind))
    if (n != "c") out.push_back(n);
  return out;
}

inline ModelParams default_params(ModelKind kind) {
  static const std::map<std::string, double> values = {
      {"v0", 25.0}, {"T", 1.5},     {"a", 1.4},    {"b", 2.0},   {"s0", 2.0},
      {"c", 0.99},  {"zeta", 1.0},  {"p", 0.5},    {"da_th", 0.4},
      {"k_v", 0.3}, {"v_des", 25.0}, {"k_la", 30.0}, {"k_ma", 30.0},
      {"sat", 3.0}, {"gap_th", 60.0}, {"k_ma2", 30.0}, {"sat2", 3.0}};
  static const std::map<std::string, ParamBounds> bounds = {
      {"v0", {5.0, 45.0}},   {"T", {0.3, 4.0}},      {"a", {0.3, 4.0}},
      {"b", {0.5, 5.0}},     {"s0", {0.5, 10.0}},    {"c", {0.8, 1.0}},
      {"zeta", {0.1, 3.0}},  {"p", {0.0, 1.0}},      {"da_th", {0.05, 1.0}},
      {"k_v", {0.05, 2.0}},  {"v_des", {5.0, 45.0}}, {"k_la", {0.0, 200.0}},
      {"k_ma", {0.0, 200.0}}, {"sat", {0.5, 9.81}},  {"gap_th", {20.0, 200.0}},
      {"k_ma2", {0.0, 200.0}}, {"sat2", {0.5, 9.81}}};
  ModelParams p;
  p.kind = kind;
  for (const auto& name : required_param_names(kind)) {
    p.values[name] = values.at(name);
    p.bounds[name] = bounds.at(name);
  }
  return p;
}

struct Violation {
  std::string category;  // stable tally key
  std::string message;   // human-readable description
  bool operator==(const Violation&) const = default;
};

namespace detail {

// Lane id sequence derived from lateral offsets; source lane ids are not
// trusted so the filters stay deterministic.
inline int derived_lane(const TrajectorySample& s, const RoadGeometry& g) {
  return lane_index_from_offset(s.t, g.lane_width);
}

inline int count_lane_changes(const ActorTrack& track, const RoadGeometry& g) {
  int changes = 0;
  for (std::size_t i = 1; i < track.samples.size(); ++i)
    if (derived_lane(track.samples[i], g) != derived_lane(track.samples[i - 1], g)) ++changes;
  return changes;
}

inline void check_track(const ActorTrack& track, std::vector<Violation>& out) {
  const std::string who = to_string(track.kind) + " '" + track.actor_id + "'";
  if (track.length <= 0.0 || track.width <= 0.0)
    out.push_back({"track", who + ": non-positive dimensions"});
  if (track.samples.size() < 2) {
    out.push_back({"track", who + ": fewer than 2 samples"});
    return;
  }
  bool bad_dt = false, bad_order = false, bad_speed = false;
  for (std::size_t i = 0; i < track.samples.size(); ++i) {
    if (track.samples[i].speed < 0.0) bad_speed = true;
    if (i == 0) continue;
    const double dt = track.samples[i].time - track.samples[i - 1].time;
    if (dt <= 0.0) bad_order = true;
    if (std::abs(dt - kSamplePeriod) > kSamplePeriodTol * kSamplePeriod) bad_dt = true;
  }
  if (bad_order) out.push_back({"track", who + ": sample times not strictly increasing"});
  if (bad_speed) out.push_back({"track", who + ": negative speed"});
  if (bad_dt && !bad_order)
    out.push_back({"sampling", who + ": sampling interval outside 10 Hz +/- 1%"});
}

}  // namespace detail

/// First instant the MA center's lateral offset crosses from the ramp lane
/// into the TA's lane. Returns nothing when no such crossing exists.
inline std::optional<double> detect_merge_time(const MergeEvent& event) {
  const ActorTrack* ma = event.find(ActorKind::MA);
  const ActorTrack* ta = event.find(ActorKind::TA);
  if (ma == nullptr || ta == nullptr || ma->samples.size() < 2 || ta->samples.empty())
    return std::nullopt;
  const RoadGeometry& g = event.geometry;
  for (std::size_t i = 1; i < ma->samples.size(); ++i) {
    const double time = ma->samples[i].time;
    if (!ta->covers(time)) continue;
    const int ta_lane = detail::derived_lane(ta->state_at(time), g);
    const int prev = detail::derived_lane(ma->samples[i - 1], g);
    const int now = detail::derived_lane(ma->samples[i], g);
    if (prev == g.ramp_lane_id && now == ta_lane) return time;
  }
  return std::nullopt;
}

/// Checks every event invariant plus the corpus filter rules. Violations
/// are data, not failures; an empty list means the event is usable.
inline std::vector<Violation> validate_event(const MergeEvent& event) {
  std::vector<Violation> out;
  const RoadGeometry& g = event.geometry;

  if (g.centerline.size() < 2)
    out.push_back({"geometry", "centerline has fewer than 2 points"});
  for (std::size_t i = 1; i < g.centerline.size(); ++i)
    if (g.centerline[i] == g.centerline[i - 1]) {
      out.push_back({"geometry", "centerline has repeated consecutive points"});
      break;
    }
  if (g.lane_width <= 0.0) out.push_back({"geometry", "lane_width must be positive"});
  if (g.hard_nose_s >= g.ramp_end_s)
    out.push_back({"geometry", "hard_nose_s must precede ramp_end_s"});

  int n_ta = 0, n_ma = 0, n_la = 0;
  for (const auto& t : event.tracks) {
    if (t.kind == ActorKind::TA) ++n_ta;
    if (t.kind == ActorKind::MA) ++n_ma;
    if (t.kind == ActorKind::LA) ++n_la;
    detail::check_track(t, out);
  }
  if (n_ta == 0) out.push_back({"missing_actor", "missing TA"});
  if (n_ma == 0) out.push_back({"missing_actor", "missing MA"});
  if (n_la == 0) out.push_back({"missing_actor", "missing LA"});
  if (n_ta > 1) out.push_back({"duplicate_actor", "more than one TA"});
  if (n_ma > 1) out.push_back({"duplicate_actor", "more than one MA"});
  if (n_la > 1) out.push_back({"duplicate_actor", "more than one LA"});

  if (event.duration() < 10.0 - kTimeEps) out.push_back({"duration", "duration < 10 s"});

  if (g.lane_width > 0.0) {
    for (const auto& t : event.tracks) {
      if (t.samples.size() < 2) continue;
      const int changes = detail::count_lane_changes(t, g);
      if (t.kind == ActorKind::MA) {
        if (changes > 1)
          out.push_back({"lane_change", "MA changes lane more than once"});
      } else if (changes > 0) {
        out.push_back({"lane_change", "non-MA lane change (" + to_string(t.kind) + " '" +
                                          t.actor_id + "')"});
      }
    }
  }

  if (!event.merge_time.has_value()) {
    if (n_ma > 0) out.push_back({"no_merge", "no merge detected"});
  } else {
    const double mt = *event.merge_time;
    for (ActorKind k : {ActorKind::TA, ActorKind::MA, ActorKind::LA}) {
      const ActorTrack* t = event.find(k);
      if (t != nullptr && !t->samples.empty() && !t->covers(mt)) {
        out.push_back({"no_merge", "merge_time outside " + to_string(k) + " track range"});
        break;
      }
    }
    if (event.interaction_start.has_value() && *event.interaction_start > mt + kTimeEps)
      out.push_back({"no_merge", "interaction_start after merge_time"});
    if (!event.interaction_start.has_value())
      out.push_back({"no_merge", "merge present but no merge interaction found"});
  }

  return out;
}

}  // namespace mergesim
