#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mergesim/association.hpp"
#include "mergesim/core.hpp"
#include "mergesim/geometry.hpp"
#include "mergesim/metrics.hpp"
#include "mergesim/models.hpp"

namespace mergesim {

enum class FallbackPolicy { RAW_PROFILE };

struct SimConfig {
  double step = kSamplePeriod;
  ModelKind model = ModelKind::MR_IDM;
  ModelParams params;  // empty -> defaults for `model`
  FallbackPolicy fallback = FallbackPolicy::RAW_PROFILE;
  std::optional<double> t_begin;  // default: evaluation window start
  std::optional<double> t_end;    // default: evaluation window end
  AssociationConfig assoc;
  ModelLimits limits;
};

struct StepDiag {
  double time = 0.0;
  std::optional<std::string> la_id;
  std::optional<std::string> ma_id;
  bool fallback = false;
  bool clamped = false;
  double state = 0.0;    // model state/blend index when the law reports one
  double accel_raw = 0.0;
};

struct SimResult {
  std::vector<double> times;
  std::vector<double> ta_speed;
  std::vector<double> ta_s;
  std::vector<double> accel;
  std::vector<double> raw_speed;  // recorded TA speed on the same grid
  std::vector<StepDiag> diags;
  std::size_t fallback_steps = 0;

  double fallback_fraction() const {
    return times.empty() ? 0.0
                         : static_cast<double>(fallback_steps) /
                               static_cast<double>(times.size());
  }
};

namespace detail {

inline LeaderView make_leader_view(const ActorTrack& target, const TrajectorySample& tgt,
                                   double ta_ref_s, double ta_t) {
  LeaderView v;
  v.ds = (tgt.s - 0.5 * target.length) - ta_ref_s;
  v.dt = tgt.t - ta_t;
  v.v_l = tgt.speed;
  v.a_l = tgt.accel;
  v.width = target.width;
  return v;
}

}  // namespace detail

/// Builds the per-step model stimulus from the recorded tracks plus the
/// (possibly simulated) TA longitudinal state.
inline ModelInput build_model_input(const MergeEvent& event, const ActorAssociation& assoc,
                                    double time, double ta_s, double ta_v, double step,
                                    std::optional<double> theta_la_prev = std::nullopt,
                                    std::optional<double> theta_ma_prev = std::nullopt,
                                    const AssociationConfig& cfg = {}) {
  const ActorTrack* ta = event.find(ActorKind::TA);
  if (ta == nullptr) throw std::invalid_argument("event has no TA");
  const double ta_t = ta->state_at(time).t;
  const double ta_front = ta_s + 0.5 * ta->length;
  const double ta_ref = ta_front - cfg.driver_ref_behind_front;

  ModelInput in;
  in.v = ta_v;
  in.step = step;

  const ActorTrack* la = nullptr;
  if (assoc.la_id.has_value()) {
    la = event.find_id(*assoc.la_id);
    if (la != nullptr && la->covers(time))
      in.la_view = detail::make_leader_view(*la, la->state_at(time), ta_ref, ta_t);
  }
  if (assoc.ma_id.has_value()) {
    const ActorTrack* ma = event.find_id(*assoc.ma_id);
    if (ma != nullptr && ma->covers(time)) {
      const TrajectorySample ms = ma->state_at(time);
      in.ma_view = detail::make_leader_view(*ma, ms, ta_ref, ta_t);

      MaGeometry mg;
      mg.ma_length = ma->length;
      mg.lane_width = event.geometry.lane_width;
      const double ma_rear = ms.s - 0.5 * ma->length;
      const double ma_front = ms.s + 0.5 * ma->length;
      // Physical gap: TA front bumper to LA rear bumper.
      double gap_hi = std::numeric_limits<double>::infinity();
      if (in.la_view.has_value()) {
        const TrajectorySample ls = la->state_at(time);
        gap_hi = ls.s - 0.5 * la->length;
      }
      mg.gap_overlap =
          std::max(0.0, std::min(ma_front, gap_hi) - std::max(ma_rear, ta_front));
      // Lane line shared by the TA lane and the ramp lane.
      const double boundary_t =
          -static_cast<double>(event.geometry.ramp_lane_id) * 0.5 * event.geometry.lane_width;
      mg.dt_to_lane_line = std::abs(ms.t - boundary_t);
      mg.dist_ma_to_ramp_end = event.geometry.ramp_end_s - ma_front;
      mg.theta_la_prev = theta_la_prev;
      mg.theta_ma_prev = theta_ma_prev;
      in.ma_geometry = mg;
    }
  }
  return in;
}

/// Rolls the TA through the event under the configured model. All other
/// actors replay their recorded tracks; the TA integrates forward Euler at
/// the configured step, with speed floored at zero. Steps without a usable
/// leader, steps where the TA has overrun the LA, and steps where the model
/// rejects its input all fall back to the recorded TA profile.
inline SimResult simulate_event(const MergeEvent& event, const SimConfig& config) {
  const ActorTrack* ta = event.find(ActorKind::TA);
  if (ta == nullptr || ta->samples.size() < 2)
    throw std::invalid_argument("event has no usable TA track");
  if (config.step <= 0.0) throw std::invalid_argument("step must be positive");

  const ModelParams params =
      config.params.values.empty() ? default_params(config.model) : config.params;

  const EvalWindow w = make_eval_window(event);
  auto [ev_lo, ev_hi] = event.common_window();
  double t0 = config.t_begin.value_or(w.t_start);
  double t1 = config.t_end.value_or(w.t_end);
  t0 = std::max(t0, ev_lo);
  t1 = std::min(t1, ev_hi);
  if (t1 < t0) throw std::invalid_argument("empty simulation window");

  const std::size_t n_steps = static_cast<std::size_t>((t1 - t0) / config.step + kTimeEps) + 1;

  SimResult res;
  res.times.reserve(n_steps);
  res.ta_speed.reserve(n_steps);
  res.ta_s.reserve(n_steps);
  res.accel.reserve(n_steps);
  res.raw_speed.reserve(n_steps);
  res.diags.reserve(n_steps);

  const TrajectorySample init = ta->state_at(t0);
  double ta_s = init.s;
  double ta_v = init.speed;
  // Remembered visual angles, valid only while the association target
  // keeps its identity; a leader swap resets the rate to zero.
  std::optional<double> theta_la_prev, theta_ma_prev;
  std::optional<std::string> prev_la_id, prev_ma_id;

  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = t0 + static_cast<double>(k) * config.step;
    const ActorAssociation assoc = resolve_associations_at(event, t, ta_s, config.assoc);
    if (assoc.la_id != prev_la_id) theta_la_prev.reset();
    if (assoc.ma_id != prev_ma_id) theta_ma_prev.reset();
    const ModelInput in = build_model_input(event, assoc, t, ta_s, ta_v, config.step,
                                            theta_la_prev, theta_ma_prev, config.assoc);

    StepDiag d;
    d.time = t;
    d.la_id = assoc.la_id;
    d.ma_id = assoc.ma_id;

    bool use_fallback = !in.la_view.has_value();
    if (in.la_view.has_value() && in.la_view->ds <= 0.0)
      use_fallback = true;  // TA front bumper has overrun the LA rear

    double accel = 0.0;
    if (!use_fallback) {
      try {
        const ModelOutput out = model_accel(config.model, in, params, config.limits);
        accel = out.accel;
        d.accel_raw = out.diagnostics.at("accel_raw");
        d.clamped = out.diagnostics.at("clamped") != 0.0;
        auto it = out.diagnostics.find("state");
        if (it != out.diagnostics.end()) d.state = it->second;
      } catch (const ModelDomainError&) {
        use_fallback = true;
      }
    }
    if (use_fallback) {
      accel = ta->state_at(t).accel;
      d.accel_raw = accel;
      ++res.fallback_steps;
    }
    d.fallback = use_fallback;

    res.times.push_back(t);
    res.ta_speed.push_back(ta_v);
    res.ta_s.push_back(ta_s);
    res.accel.push_back(accel);
    res.raw_speed.push_back(ta->speed_at(t));
    res.diags.push_back(std::move(d));

    // Remember visual angles for the looming rate terms.
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

    // Forward Euler; position advances with the pre-step speed so the
    // s-profile is exactly the running sum of the speed profile.
    ta_s += ta_v * config.step;
    if (use_fallback) {
      ta_v = ta->speed_at(t + config.step);
    } else {
      ta_v = std::max(0.0, ta_v + accel * config.step);
    }
  }
  return res;
}

}  // namespace mergesim
