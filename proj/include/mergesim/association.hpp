#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mergesim/core.hpp"
#include "mergesim/geometry.hpp"

namespace mergesim {

/// The actors a TA is reacting to at one timestep.
struct ActorAssociation {
  std::string ta_id;
  std::optional<std::string> la_id;
  std::optional<std::string> ma_id;
  std::optional<std::string> fa_id;
};

struct AssociationConfig {
  double driver_ref_behind_front = kDriverRefBehindFront;
  double ma_range = 40.0;  // m, longitudinal perception limit for MA relevance
};

namespace detail {

struct ActorState {
  const ActorTrack* track = nullptr;
  TrajectorySample sample;
  int lane = 0;
  double front_s = 0.0;
  double rear_s = 0.0;
};

inline std::vector<ActorState> snapshot(const MergeEvent& event, double time) {
  std::vector<ActorState> out;
  out.reserve(event.tracks.size());
  for (const auto& track : event.tracks) {
    if (!track.covers(time)) continue;
    ActorState st;
    st.track = &track;
    st.sample = track.state_at(time);
    st.lane = lane_index_from_offset(st.sample.t, event.geometry.lane_width);
    st.front_s = st.sample.s + 0.5 * track.length;
    st.rear_s = st.sample.s - 0.5 * track.length;
    out.push_back(st);
  }
  return out;
}

// Nearest actor in `lane` strictly ahead of / behind `s_center`.
inline const ActorState* nearest_in_lane(const std::vector<ActorState>& scene,
                                         const ActorTrack* exclude, int lane, double s_center,
                                         bool ahead) {
  const ActorState* best = nullptr;
  for (const auto& st : scene) {
    if (st.track == exclude || st.lane != lane) continue;
    const double gap = st.sample.s - s_center;
    if (ahead ? gap <= 0.0 : gap >= 0.0) continue;
    if (best == nullptr || std::abs(gap) < std::abs(best->sample.s - s_center)) best = &st;
  }
  return best;
}

}  // namespace detail

/// Leader / follower / merge-actor resolution for the TA, with the TA's
/// longitudinal position overridden (the simulator passes the simulated
/// position; recorded replay passes the recorded one).
inline ActorAssociation resolve_associations_at(const MergeEvent& event, double time,
                                                double ta_s,
                                                const AssociationConfig& cfg = {}) {
  const ActorTrack* ta = event.find(ActorKind::TA);
  if (ta == nullptr || !ta->covers(time))
    throw std::invalid_argument("no TA coverage at requested time");

  const auto scene = detail::snapshot(event, time);
  const int ta_lane = lane_index_from_offset(ta->state_at(time).t, event.geometry.lane_width);
  const double ta_ref = ta_s + 0.5 * ta->length - cfg.driver_ref_behind_front;

  ActorAssociation assoc;
  assoc.ta_id = ta->actor_id;

  const detail::ActorState* la =
      detail::nearest_in_lane(scene, ta, ta_lane, ta_s, /*ahead=*/true);
  const detail::ActorState* fa =
      detail::nearest_in_lane(scene, ta, ta_lane, ta_s, /*ahead=*/false);
  if (la != nullptr) assoc.la_id = la->track->actor_id;
  if (fa != nullptr) assoc.fa_id = fa->track->actor_id;

  // MA relevance. Candidates must sit in the ramp lane past the hard nose,
  // within perception range, with their rear bumper ahead of the driver
  // position and still behind the LA (or behind the LA's leader when the
  // MA is the slower vehicle). A merged MA is an ordinary same-lane actor
  // and is covered by the LA/FA resolution above.
  const detail::ActorState* best_ma = nullptr;
  for (const auto& st : scene) {
    if (st.track->kind != ActorKind::MA) continue;
    if (st.lane != event.geometry.ramp_lane_id) continue;
    if (st.sample.s < event.geometry.hard_nose_s) continue;
    const double gap = st.rear_s - ta_ref;
    if (gap <= 0.0 || std::abs(gap) > cfg.ma_range) continue;
    if (la != nullptr) {
      bool behind_la = st.rear_s < la->rear_s;
      if (!behind_la) {
        if (st.sample.speed >= la->sample.speed) continue;
        const detail::ActorState* la_leader =
            detail::nearest_in_lane(scene, la->track, ta_lane, la->sample.s, /*ahead=*/true);
        if (la_leader != nullptr && st.rear_s >= la_leader->rear_s) continue;
      }
    }
    if (best_ma == nullptr ||
        std::abs(st.rear_s - ta_ref) < std::abs(best_ma->rear_s - ta_ref))
      best_ma = &st;
  }
  if (best_ma != nullptr) assoc.ma_id = best_ma->track->actor_id;

  return assoc;
}

inline ActorAssociation resolve_associations(const MergeEvent& event, double time,
                                             const AssociationConfig& cfg = {}) {
  const ActorTrack* ta = event.find(ActorKind::TA);
  if (ta == nullptr || !ta->covers(time))
    throw std::invalid_argument("no TA coverage at requested time");
  return resolve_associations_at(event, time, ta->state_at(time).s, cfg);
}

/// First grid instant at which the MA is relevant to the TA; scans the
/// recorded tracks on their common window.
inline std::optional<double> detect_interaction_start(const MergeEvent& event,
                                                      const AssociationConfig& cfg = {}) {
  const ActorTrack* ta = event.find(ActorKind::TA);
  const ActorTrack* ma = event.find(ActorKind::MA);
  if (ta == nullptr || ma == nullptr || ta->samples.size() < 2) return std::nullopt;
  auto [lo, hi] = event.common_window();
  if (lo >= hi) return std::nullopt;
  const double h = ta->samples[1].time - ta->samples[0].time;
  if (h <= 0.0) return std::nullopt;
  const auto n = static_cast<std::size_t>((hi - lo) / h + kTimeEps) + 1;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = lo + static_cast<double>(k) * h;
    const ActorAssociation assoc = resolve_associations(event, t, cfg);
    if (assoc.ma_id.has_value()) return t;
  }
  return std::nullopt;
}

}  // namespace mergesim
