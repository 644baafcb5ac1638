#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mergesim/association.hpp"
#include "mergesim/core.hpp"
#include "mergesim/geometry.hpp"
#include "mergesim/models.hpp"
#include "mergesim/simulate.hpp"

namespace mergesim {

inline constexpr int kEventSchemaVersion = 1;

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Normalizes a raw track onto the 10 Hz grid. Tracks already on the grid
// are snapped bit-exactly (so save -> load is the identity); anything else
// is linearly interpolated.
inline ActorTrack resample_track(ActorTrack track) {
  auto& raw = track.samples;
  if (raw.size() < 2) throw ParseError("track '" + track.actor_id + "': fewer than 2 samples");
  std::sort(raw.begin(), raw.end(),
            [](const TrajectorySample& a, const TrajectorySample& b) { return a.time < b.time; });
  for (std::size_t i = 1; i < raw.size(); ++i)
    if (raw[i].time - raw[i - 1].time <= 0.0)
      throw ParseError("track '" + track.actor_id + "': duplicate sample time");

  const double h = kSamplePeriod;
  bool on_grid = true;
  const long k0 = std::lround(raw.front().time / h);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double expect = static_cast<double>(k0 + static_cast<long>(i)) * h;
    if (std::abs(raw[i].time - expect) > 1e-6) {
      on_grid = false;
      break;
    }
  }
  if (on_grid) {
    for (std::size_t i = 0; i < raw.size(); ++i)
      raw[i].time = static_cast<double>(k0 + static_cast<long>(i)) * h;
    return track;
  }

  const long klo = static_cast<long>(std::ceil(raw.front().time / h - 1e-9));
  const long khi = static_cast<long>(std::floor(raw.back().time / h + 1e-9));
  if (khi - klo < 1)
    throw ParseError("track '" + track.actor_id + "': too short to resample");
  std::vector<TrajectorySample> grid;
  grid.reserve(static_cast<std::size_t>(khi - klo + 1));
  std::size_t j = 0;
  for (long k = klo; k <= khi; ++k) {
    const double t = static_cast<double>(k) * h;
    while (j + 2 < raw.size() && raw[j + 1].time <= t) ++j;
    const TrajectorySample& a = raw[j];
    const TrajectorySample& b = raw[j + 1];
    const double u = std::clamp((t - a.time) / (b.time - a.time), 0.0, 1.0);
    TrajectorySample s;
    s.time = t;
    s.s = a.s + u * (b.s - a.s);
    s.t = a.t + u * (b.t - a.t);
    s.speed = a.speed + u * (b.speed - a.speed);
    s.accel = a.accel + u * (b.accel - a.accel);
    grid.push_back(s);
  }
  track.samples = std::move(grid);
  return track;
}

inline void derive_accel(ActorTrack& track) {
  auto& s = track.samples;
  if (s.size() < 2) return;
  const double h = s[1].time - s[0].time;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i == 0)
      s[i].accel = (s[1].speed - s[0].speed) / h;
    else if (i + 1 == s.size())
      s[i].accel = (s[i].speed - s[i - 1].speed) / h;
    else
      s[i].accel = (s[i + 1].speed - s[i - 1].speed) / (2.0 * h);
  }
}

inline void derive_lane_ids(ActorTrack& track, const RoadGeometry& g) {
  for (auto& s : track.samples) s.lane_id = lane_index_from_offset(s.t, g.lane_width);
}

}  // namespace detail

/// Computes merge_time and interaction_start from the (already resampled)
/// tracks. Both stay absent when the data never exhibits them.
inline void finalize_event_timing(MergeEvent& event, const AssociationConfig& cfg = {}) {
  event.merge_time = detect_merge_time(event);
  event.interaction_start =
      event.find(ActorKind::TA) != nullptr && event.find(ActorKind::TA)->samples.size() >= 2
          ? detect_interaction_start(event, cfg)
          : std::nullopt;
}

inline nlohmann::json event_to_json(const MergeEvent& event) {
  nlohmann::json j;
  j["schema_version"] = kEventSchemaVersion;
  j["event_id"] = event.event_id;
  nlohmann::json geo;
  geo["centerline"] = nlohmann::json::array();
  for (const auto& p : event.geometry.centerline) geo["centerline"].push_back({p.x, p.y});
  geo["lane_width"] = event.geometry.lane_width;
  geo["ramp_lane_id"] = event.geometry.ramp_lane_id;
  geo["hard_nose_s"] = event.geometry.hard_nose_s;
  geo["ramp_end_s"] = event.geometry.ramp_end_s;
  j["geometry"] = geo;
  j["actors"] = nlohmann::json::array();
  for (const auto& track : event.tracks) {
    nlohmann::json a;
    a["actor_id"] = track.actor_id;
    a["kind"] = to_string(track.kind);
    a["length"] = track.length;
    a["width"] = track.width;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : track.samples) rows.push_back({s.time, s.s, s.t, s.speed, s.accel});
    a["samples"] = rows;
    j["actors"].push_back(a);
  }
  return j;
}

/// Parses one event document. Tracks may carry lane-based samples
/// ([time, s, t, speed, accel?]) or planar ones under "samples_xy"
/// ([time, x, y, speed, accel?]), which are projected onto the centerline.
/// Sample lane ids are always rederived from lateral offsets.
inline MergeEvent parse_event(const nlohmann::json& j) {
  try {
    if (j.value("schema_version", kEventSchemaVersion) != kEventSchemaVersion)
      throw ParseError("unsupported schema_version");
    MergeEvent event;
    event.event_id = j.at("event_id").get<std::string>();
    const auto& geo = j.at("geometry");
    for (const auto& p : geo.at("centerline"))
      event.geometry.centerline.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    if (event.geometry.centerline.size() < 2)
      throw ParseError("centerline needs at least 2 points");
    event.geometry.lane_width = geo.at("lane_width").get<double>();
    event.geometry.ramp_lane_id = geo.value("ramp_lane_id", 1);
    event.geometry.hard_nose_s = geo.at("hard_nose_s").get<double>();
    event.geometry.ramp_end_s = geo.at("ramp_end_s").get<double>();

    for (const auto& a : j.at("actors")) {
      ActorTrack track;
      track.actor_id = a.at("actor_id").get<std::string>();
      const auto kind = actor_kind_from_string(a.at("kind").get<std::string>());
      if (!kind.has_value())
        throw ParseError("track '" + track.actor_id + "': unknown actor kind");
      track.kind = *kind;
      track.length = a.at("length").get<double>();
      track.width = a.at("width").get<double>();
      if (track.length <= 0.0 || track.width <= 0.0)
        throw ParseError("track '" + track.actor_id + "': non-positive dimensions");

      const bool planar = a.contains("samples_xy");
      const auto& rows = planar ? a.at("samples_xy") : a.at("samples");
      bool has_accel = true;
      for (const auto& row : rows) {
        if (!row.is_array() || row.size() < 4)
          throw ParseError("track '" + track.actor_id + "': malformed sample row");
        TrajectorySample s;
        s.time = row.at(0).get<double>();
        if (planar) {
          const StPosition st = xy_to_st({row.at(1).get<double>(), row.at(2).get<double>()},
                                         event.geometry.centerline);
          s.s = st.s;
          s.t = st.t;
        } else {
          s.s = row.at(1).get<double>();
          s.t = row.at(2).get<double>();
        }
        s.speed = row.at(3).get<double>();
        if (row.size() >= 5)
          s.accel = row.at(4).get<double>();
        else
          has_accel = false;
        track.samples.push_back(s);
      }
      track = detail::resample_track(std::move(track));
      if (!has_accel) detail::derive_accel(track);
      detail::derive_lane_ids(track, event.geometry);
      event.tracks.push_back(std::move(track));
    }

    finalize_event_timing(event);
    return event;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed event document: ") + ex.what());
  }
}

inline MergeEvent load_event(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(path.string() + ": invalid JSON: " + ex.what());
  }
  return parse_event(j);
}

inline void save_event(const MergeEvent& event, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << event_to_json(event).dump(1) << "\n";
}

struct LoadDiagnostic {
  std::string file;
  std::string message;
};

struct CorpusLoadResult {
  std::vector<MergeEvent> events;
  std::vector<LoadDiagnostic> diagnostics;
};

/// Loads a corpus: a directory of *.event.json files (sorted by name) or a
/// single event file. Malformed files become diagnostics; the rest load.
inline CorpusLoadResult load_corpus(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  CorpusLoadResult out;
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      const std::string name = entry.path().filename().string();
      if (entry.is_regular_file() && name.size() > 11 &&
          name.substr(name.size() - 11) == ".event.json")
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(path)) {
    files.push_back(path);
  } else {
    throw ParseError("no such corpus path: " + path.string());
  }
  for (const auto& f : files) {
    try {
      out.events.push_back(load_event(f));
    } catch (const ParseError& ex) {
      out.diagnostics.push_back({f.filename().string(), ex.what()});
    }
  }
  return out;
}

struct FilterResult {
  std::vector<MergeEvent> valid;
  std::vector<std::pair<MergeEvent, std::vector<Violation>>> rejected;
  std::map<std::string, int> tallies;  // violation category -> event count
};

/// Applies the validity filters to a corpus. Each event increments every
/// distinct violation category it hits, so one event can appear in several
/// tallies, and valid + rejected partition the input.
inline FilterResult filter_corpus(const std::vector<MergeEvent>& events) {
  FilterResult out;
  for (const auto& event : events) {
    std::vector<Violation> v = validate_event(event);
    if (v.empty()) {
      out.valid.push_back(event);
      continue;
    }
    std::vector<std::string> seen;
    for (const auto& violation : v) {
      if (std::find(seen.begin(), seen.end(), violation.category) == seen.end()) {
        seen.push_back(violation.category);
        ++out.tallies[violation.category];
      }
    }
    out.rejected.emplace_back(event, std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic events
// ---------------------------------------------------------------------------

struct SpeedPulse {
  double t0 = 8.0;       // s
  double duration = 4.0;  // s
  double delta_v = -3.0;  // m/s at the pulse peak
};

struct LaneActorSpec {
  double initial_gap = 50.0;  // m, center-to-center from the TA at t = 0
  double speed = 22.0;        // m/s
  std::optional<SpeedPulse> pulse;
  double length = 4.8;
  double width = 1.85;
};

struct MaSpec {
  double initial_gap = 12.0;  // m, center-to-center from the TA at t = 0
  double speed = 19.0;        // m/s before the merge
  std::optional<double> end_speed;  // reached across the merge window
  double merge_start = 6.0;     // s
  double merge_duration = 3.0;  // s
  double length = 4.6;
  double width = 1.85;
};

/// Parametric merge scene. LA/MA/FA replay closed-form profiles; the TA
/// track is produced by rolling the generator model through the scene, so
/// a later calibration of the same model has a known ground truth.
struct ScenarioSpec {
  std::string event_id = "synthetic";
  double duration = 24.0;  // s
  ModelKind generator = ModelKind::MR_IDM;
  std::optional<ModelParams> generator_params;
  double lane_width = 3.6;
  double hard_nose_s = 40.0;
  double ramp_end_s = 400.0;
  double road_length = 1500.0;
  double ta_initial_s = 100.0;
  double ta_speed = 21.0;
  double ta_length = 4.8;
  double ta_width = 1.85;
  LaneActorSpec la;
  std::optional<MaSpec> ma = MaSpec{};  // default scene is a negotiated merge
  std::optional<LaneActorSpec> fa;
  double speed_jitter = 0.0;  // m/s, uniform +/- per actor
  double gap_jitter = 0.0;    // m, uniform +/- per actor
};

namespace detail {

inline double pulse_speed(double base, const std::optional<SpeedPulse>& pulse, double t) {
  if (!pulse.has_value() || t < pulse->t0 || t > pulse->t0 + pulse->duration) return base;
  const double u = (t - pulse->t0) / pulse->duration;
  return base + pulse->delta_v * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * u));
}

inline ActorTrack build_profile_track(const std::string& id, ActorKind kind, double length,
                                      double width, double s0, std::size_t n_steps,
                                      const std::function<double(double)>& speed_at,
                                      const std::function<double(double)>& lateral_at) {
  ActorTrack track;
  track.actor_id = id;
  track.kind = kind;
  track.length = length;
  track.width = width;
  track.samples.reserve(n_steps);
  double s = s0;
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = static_cast<double>(k) * kSamplePeriod;
    TrajectorySample smp;
    smp.time = t;
    smp.s = s;
    smp.t = lateral_at(t);
    smp.speed = speed_at(t);
    track.samples.push_back(smp);
    // trapezoidal advance keeps s consistent with the speed profile
    const double v_next = speed_at(t + kSamplePeriod);
    s += 0.5 * (smp.speed + v_next) * kSamplePeriod;
  }
  derive_accel(track);
  return track;
}

}  // namespace detail

inline MergeEvent generate_synthetic_event(const ScenarioSpec& spec, std::uint64_t seed) {
  if (spec.duration < 1.0) throw std::invalid_argument("scenario duration too short");
  if (spec.hard_nose_s >= spec.ramp_end_s)
    throw std::invalid_argument("scenario requires hard_nose_s < ramp_end_s");
  if (spec.lane_width <= 0.0) throw std::invalid_argument("scenario lane_width must be positive");
  if (spec.ta_speed < 0.0 || spec.la.speed < 0.0 || (spec.ma && spec.ma->speed < 0.0))
    throw std::invalid_argument("scenario speeds must be non-negative");
  if (spec.la.initial_gap <= 0.0)
    throw std::invalid_argument("scenario LA must start ahead of the TA");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const auto jitter_speed = [&](double v) {
    return std::max(0.0, v + unit(rng) * spec.speed_jitter);
  };
  const auto jitter_gap = [&](double g) {
    return std::max(1.0, g + unit(rng) * spec.gap_jitter);
  };

  const std::size_t n_steps =
      static_cast<std::size_t>(spec.duration / kSamplePeriod + kTimeEps) + 1;
  const double lw = spec.lane_width;
  const double ramp_center = -lw;  // ramp lane center sits one lane to the right

  MergeEvent event;
  event.event_id = spec.event_id;
  event.geometry.centerline = {{0.0, 0.0}, {spec.road_length, 0.0}};
  event.geometry.lane_width = lw;
  event.geometry.ramp_lane_id = 1;
  event.geometry.hard_nose_s = spec.hard_nose_s;
  event.geometry.ramp_end_s = spec.ramp_end_s;

  const double la_speed = jitter_speed(spec.la.speed);
  const double la_gap = jitter_gap(spec.la.initial_gap);
  const auto la_pulse = spec.la.pulse;
  event.tracks.push_back(detail::build_profile_track(
      "la", ActorKind::LA, spec.la.length, spec.la.width, spec.ta_initial_s + la_gap,
      n_steps, [=](double t) { return detail::pulse_speed(la_speed, la_pulse, t); },
      [](double) { return 0.0; }));

  if (spec.ma.has_value()) {
    const MaSpec& m = *spec.ma;
    if (m.merge_start + m.merge_duration > spec.duration)
      throw std::invalid_argument("scenario merge must finish within the duration");
    const double ma_speed = jitter_speed(m.speed);
    const double ma_end_speed = m.end_speed.has_value() ? jitter_speed(*m.end_speed) : ma_speed;
    const double ma_gap = m.initial_gap + unit(rng) * spec.gap_jitter;
    const double merge_start = m.merge_start;
    const double merge_duration = m.merge_duration;
    const auto ma_speed_at = [=](double t) {
      if (t <= merge_start) return ma_speed;
      if (t >= merge_start + merge_duration) return ma_end_speed;
      return ma_speed + (ma_end_speed - ma_speed) * (t - merge_start) / merge_duration;
    };
    const auto ma_lateral_at = [=](double t) {
      if (t <= merge_start) return ramp_center;
      if (t >= merge_start + merge_duration) return 0.0;
      const double u = (t - merge_start) / merge_duration;
      return ramp_center * 0.5 * (1.0 + std::cos(std::numbers::pi * u));
    };
    event.tracks.push_back(detail::build_profile_track(
        "ma", ActorKind::MA, m.length, m.width, spec.ta_initial_s + ma_gap, n_steps,
        ma_speed_at, ma_lateral_at));
  }

  if (spec.fa.has_value()) {
    const double fa_speed = jitter_speed(spec.fa->speed);
    const double fa_gap = jitter_gap(spec.fa->initial_gap);
    const auto fa_pulse = spec.fa->pulse;
    event.tracks.push_back(detail::build_profile_track(
        "fa", ActorKind::FA, spec.fa->length, spec.fa->width, spec.ta_initial_s - fa_gap,
        n_steps, [=](double t) { return detail::pulse_speed(fa_speed, fa_pulse, t); },
        [](double) { return 0.0; }));
  }

  // Placeholder TA so association sees a complete scene while the real
  // profile is rolled out.
  {
    ActorTrack ta;
    ta.actor_id = "ta";
    ta.kind = ActorKind::TA;
    ta.length = spec.ta_length;
    ta.width = spec.ta_width;
    for (std::size_t k = 0; k < n_steps; ++k) {
      TrajectorySample s;
      s.time = static_cast<double>(k) * kSamplePeriod;
      s.s = spec.ta_initial_s + spec.ta_speed * s.time;
      s.speed = spec.ta_speed;
      ta.samples.push_back(s);
    }
    event.tracks.push_back(std::move(ta));
  }
  ActorTrack& ta = event.tracks.back();

  const ModelParams params = spec.generator_params.value_or(default_params(spec.generator));

  // Roll the generator model. Steps without a leader (or outside a model's
  // domain) hold the current speed.
  double s = spec.ta_initial_s;
  double v = spec.ta_speed;
  std::optional<double> theta_la_prev, theta_ma_prev;
  std::optional<std::string> prev_la_id, prev_ma_id;
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = static_cast<double>(k) * kSamplePeriod;
    const ActorAssociation assoc = resolve_associations_at(event, t, s);
    if (assoc.la_id != prev_la_id) theta_la_prev.reset();
    if (assoc.ma_id != prev_ma_id) theta_ma_prev.reset();
    const ModelInput in =
        build_model_input(event, assoc, t, s, v, kSamplePeriod, theta_la_prev, theta_ma_prev);
    double a = 0.0;
    if (in.la_view.has_value() && in.la_view->ds > 0.0) {
      try {
        a = model_accel(spec.generator, in, params).accel;
      } catch (const ModelDomainError&) {
        a = 0.0;
      }
    }
    ta.samples[k].s = s;
    ta.samples[k].speed = v;
    ta.samples[k].accel = a;
    theta_la_prev = in.la_view.has_value()
                        ? std::optional<double>(visual_angle(in.la_view->ds, in.la_view->dt,
                                                             in.la_view->width))
                        : std::nullopt;
    theta_ma_prev = in.ma_view.has_value()
                        ? std::optional<double>(visual_angle(in.ma_view->ds, in.ma_view->dt,
                                                             in.ma_view->width))
                        : std::nullopt;
    prev_la_id = assoc.la_id;
    prev_ma_id = assoc.ma_id;
    s += v * kSamplePeriod;
    v = std::max(0.0, v + a * kSamplePeriod);
  }

  for (auto& track : event.tracks) detail::derive_lane_ids(track, event.geometry);
  finalize_event_timing(event);
  return event;
}

/// Scenario description from JSON; every field is optional and falls back
/// to the ScenarioSpec defaults.
inline ScenarioSpec parse_scenario(const nlohmann::json& j) {
  try {
    ScenarioSpec spec;
    spec.event_id = j.value("event_id", spec.event_id);
    spec.duration = j.value("duration", spec.duration);
    if (j.contains("generator")) {
      const auto& g = j.at("generator");
      if (g.contains("model")) {
        const auto kind = model_kind_from_string(g.at("model").get<std::string>());
        if (!kind.has_value()) throw ParseError("unknown generator model");
        spec.generator = *kind;
      }
      if (g.contains("params")) {
        ModelParams p = default_params(spec.generator);
        for (const auto& [key, value] : g.at("params").items())
          p.values[key] = value.get<double>();
        spec.generator_params = p;
      }
    }
    if (j.contains("geometry")) {
      const auto& g = j.at("geometry");
      spec.lane_width = g.value("lane_width", spec.lane_width);
      spec.hard_nose_s = g.value("hard_nose_s", spec.hard_nose_s);
      spec.ramp_end_s = g.value("ramp_end_s", spec.ramp_end_s);
      spec.road_length = g.value("road_length", spec.road_length);
    }
    if (j.contains("ta")) {
      spec.ta_initial_s = j.at("ta").value("initial_s", spec.ta_initial_s);
      spec.ta_speed = j.at("ta").value("speed", spec.ta_speed);
    }
    const auto parse_lane_actor = [](const nlohmann::json& a, LaneActorSpec base) {
      base.initial_gap = a.value("initial_gap", base.initial_gap);
      base.speed = a.value("speed", base.speed);
      base.length = a.value("length", base.length);
      base.width = a.value("width", base.width);
      if (a.contains("pulse")) {
        SpeedPulse p;
        p.t0 = a.at("pulse").value("t0", p.t0);
        p.duration = a.at("pulse").value("duration", p.duration);
        p.delta_v = a.at("pulse").value("delta_v", p.delta_v);
        base.pulse = p;
      }
      return base;
    };
    if (j.contains("la")) spec.la = parse_lane_actor(j.at("la"), spec.la);
    if (j.contains("fa")) spec.fa = parse_lane_actor(j.at("fa"), LaneActorSpec{});
    if (j.contains("ma")) {
      if (j.at("ma").is_null()) {
        spec.ma = std::nullopt;
      } else {
        MaSpec m;
        m.initial_gap = j.at("ma").value("initial_gap", m.initial_gap);
        m.speed = j.at("ma").value("speed", m.speed);
        if (j.at("ma").contains("end_speed")) m.end_speed = j.at("ma").at("end_speed").get<double>();
        m.merge_start = j.at("ma").value("merge_start", m.merge_start);
        m.merge_duration = j.at("ma").value("merge_duration", m.merge_duration);
        m.length = j.at("ma").value("length", m.length);
        m.width = j.at("ma").value("width", m.width);
        spec.ma = m;
      }
    }
    if (j.contains("jitter")) {
      spec.speed_jitter = j.at("jitter").value("speed", spec.speed_jitter);
      spec.gap_jitter = j.at("jitter").value("gap", spec.gap_jitter);
    }
    return spec;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed scenario document: ") + ex.what());
  }
}

}  // namespace mergesim
