#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "mergesim/core.hpp"
#include "mergesim/geometry.hpp"

namespace mergesim {

/// Geometry of the merge scene around the MA that view distances alone do
/// not carry: how much of the MA sits in the TA-LA gap, how far its center
/// is from the lane line, and the remembered visual angles for the rate
/// terms of the looming laws.
struct MaGeometry {
  double ma_length = 4.5;          // m
  double gap_overlap = 0.0;        // m of MA length inside the TA-LA gap
  double dt_to_lane_line = 0.0;    // m, MA center to the shared lane line
  double lane_width = 3.6;         // m
  double dist_ma_to_ramp_end = 0.0;  // m, MA front bumper to ramp end
  std::optional<double> theta_ma_prev;
  std::optional<double> theta_la_prev;
};

/// Per-step stimulus for every acceleration law.
struct ModelInput {
  double v = 0.0;  // TA speed, m/s
  std::optional<LeaderView> la_view;
  std::optional<LeaderView> ma_view;
  std::optional<MaGeometry> ma_geometry;
  double step = kSamplePeriod;  // s
};

// Output clamp. Raw spikes well past comfortable braking are a known
// failure mode of the gap-term laws; the raw value stays available in
// diagnostics.
struct ModelLimits {
  double accel_floor = -9.81;  // m/s^2
  double accel_ceil = 4.0;     // m/s^2
};

struct ModelOutput {
  double accel = 0.0;  // m/s^2, clamped
  std::map<std::string, double> diagnostics;
};

// Raised when a law is asked to act outside its operational domain (no
// leader to follow, no merge actor to negotiate with). The simulator treats
// this as a per-step fallback, unlike genuine configuration errors.
struct ModelDomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct IdmView {
  double v0, T, a, b, s0;
};

inline IdmView idm_view(const ModelParams& p) {
  return {p.at("v0"), p.at("T"), p.at("a"), p.at("b"), p.at("s0")};
}

inline double idm_desired_gap(double v, double v_l, const IdmView& p) {
  return p.s0 + v * p.T + v * (v - v_l) / (2.0 * std::sqrt(p.a * p.b));
}

inline double idm_accel_raw(double v, double s, double v_l, const IdmView& p) {
  const double s_c = clamp_gap(s);
  const double s_star = idm_desired_gap(v, v_l, p);
  const double speed_ratio = v / p.v0;
  const double gap_ratio = s_star / s_c;
  const double r4 = speed_ratio * speed_ratio * speed_ratio * speed_ratio;
  return p.a * (1.0 - r4 - gap_ratio * gap_ratio);
}

inline double heaviside(double x) { return x > 0.0 ? 1.0 : 0.0; }

inline double cah_accel_raw(double v, double s, double v_l, double a_l, double a_max) {
  const double s_c = clamp_gap(s);
  const double a_lead = std::min(a_l, a_max);
  const double den = v_l * v_l - 2.0 * s_c * a_lead;
  if (v_l * (v - v_l) <= -2.0 * s_c * a_lead && std::abs(den) > 1e-12)
    return v * v * a_lead / den;
  const double dv = v - v_l;
  return a_lead - dv * dv * heaviside(dv) / (2.0 * s_c);
}

inline double idm_cah_blend(double a_idm, double a_cah, double b, double c) {
  if (a_idm >= a_cah) return a_idm;
  return (1.0 - c) * a_idm + c * (a_cah + b * std::tanh((a_idm - a_cah) / b));
}

inline double idm_cah_raw(double v, double s, double v_l, double a_l, const IdmView& p,
                          double c) {
  const double a_idm = idm_accel_raw(v, s, v_l, p);
  const double a_cah = cah_accel_raw(v, s, v_l, a_l, p.a);
  return idm_cah_blend(a_idm, a_cah, p.b, c);
}

inline ModelOutput finalize(double accel_raw, std::map<std::string, double> diag,
                            const ModelLimits& lim) {
  ModelOutput out;
  out.accel = std::clamp(accel_raw, lim.accel_floor, lim.accel_ceil);
  diag["accel_raw"] = accel_raw;
  diag["clamped"] = (out.accel == accel_raw) ? 0.0 : 1.0;
  out.diagnostics = std::move(diag);
  return out;
}

inline const LeaderView& require_la(const ModelInput& in) {
  if (!in.la_view.has_value()) throw ModelDomainError("no leader");
  return *in.la_view;
}

inline const LeaderView& require_ma(const ModelInput& in) {
  if (!in.ma_view.has_value()) throw ModelDomainError("outside looming domain");
  return *in.ma_view;
}

// Linear stimulus-response law shared by the looming variants: track a
// desired speed, brake against a looming LA, and follow the MA's angle
// rate, which is positive for a faster (passing) MA and negative for a
// slower one, so it brakes for a merger ahead and chases a passer unless
// the modified variant clips the chasing half away. Each stimulus term is
// saturated.
struct LoomingTerms {
  double speed_term, la_term, ma_term;  // accel = speed - la + ma
  double theta_la, theta_ma, rate_la, rate_ma;
};

inline double saturate(double x, double limit) { return std::clamp(x, -limit, limit); }

inline LoomingTerms looming_terms(const ModelInput& in, const ModelParams& p,
                                  bool clamp_ma_rate) {
  const LeaderView& la = require_la(in);
  const LeaderView& ma = require_ma(in);
  std::optional<double> prev_la, prev_ma;
  if (in.ma_geometry.has_value()) {
    prev_la = in.ma_geometry->theta_la_prev;
    prev_ma = in.ma_geometry->theta_ma_prev;
  }
  LoomingTerms t{};
  t.theta_la = visual_angle(la.ds, la.dt, la.width);
  t.theta_ma = visual_angle(ma.ds, ma.dt, ma.width);
  t.rate_la = visual_angle_rate(t.theta_la, prev_la, in.step);
  t.rate_ma = visual_angle_rate(t.theta_ma, prev_ma, in.step);
  const double ma_rate = clamp_ma_rate ? std::min(0.0, t.rate_ma) : t.rate_ma;
  const double sat = p.at("sat");
  t.speed_term = p.at("k_v") * (p.at("v_des") - in.v);
  t.la_term = saturate(p.at("k_la") * t.rate_la, sat);
  t.ma_term = saturate(p.at("k_ma") * ma_rate, sat);
  return t;
}

}  // namespace detail

/// Plain intelligent-driver-model acceleration toward the lead actor.
inline ModelOutput idm_accel(const ModelInput& in, const ModelParams& params,
                             const ModelLimits& lim = {}) {
  const LeaderView& la = detail::require_la(in);
  const auto p = detail::idm_view(params);
  const double a = detail::idm_accel_raw(in.v, la.ds, la.v_l, p);
  return detail::finalize(a, {{"a_idm", a}}, lim);
}

/// Fraction of the lane-change incentive threshold the MA has reached,
/// bounded to [0, 1].
inline double mobil_incentive_ratio(double da_ma, double da_ta, double p, double da_th) {
  if (da_th <= 0.0) throw std::invalid_argument("da_th must be positive");
  return std::clamp((da_ma + p * da_ta) / da_th, 0.0, 1.0);
}

/// Constant-acceleration-heuristic bound on acceleration, unclamped.
inline double cah_accel(const ModelInput& in, const ModelParams& params) {
  const LeaderView& la = detail::require_la(in);
  return detail::cah_accel_raw(in.v, la.ds, la.v_l, la.a_l, params.at("a"));
}

/// IDM softened by the constant-acceleration heuristic: when plain IDM
/// calls for a harsher deceleration than the heuristic, the two are blended
/// through a tanh wrapper weighted by the coolness factor.
inline ModelOutput idm_cah_accel(const ModelInput& in, const ModelParams& params,
                                 const ModelLimits& lim = {}) {
  const LeaderView& la = detail::require_la(in);
  const auto p = detail::idm_view(params);
  const double c = params.at_or("c", 0.99);
  const double a_idm = detail::idm_accel_raw(in.v, la.ds, la.v_l, p);
  const double a_cah = detail::cah_accel_raw(in.v, la.ds, la.v_l, la.a_l, p.a);
  const double a = detail::idm_cah_blend(a_idm, a_cah, p.b, c);
  return detail::finalize(a, {{"a_idm", a_idm}, {"a_cah", a_cah}}, lim);
}

/// IDM with the gap term split between LA and MA, weighted by how much of
/// the MOBIL lane-change incentive the MA has accumulated. The MA's
/// incentive compares its ramp-end "leader" (a stationary obstacle at the
/// end of the acceleration lane) against following the LA; the TA's term
/// compares following the MA against following the LA. Without a relevant
/// MA this is exactly plain IDM.
inline ModelOutput idm_msa_accel(const ModelInput& in, const ModelParams& params,
                                 const ModelLimits& lim = {}) {
  const LeaderView& la = detail::require_la(in);
  const auto p = detail::idm_view(params);
  if (!in.ma_view.has_value() || !in.ma_geometry.has_value()) {
    const double a = detail::idm_accel_raw(in.v, la.ds, la.v_l, p);
    return detail::finalize(a, {{"a_idm", a}, {"r", 0.0}}, lim);
  }
  const LeaderView& ma = *in.ma_view;
  const MaGeometry& mg = *in.ma_geometry;

  const double v_ma = ma.v_l;
  const double a_ma_ramp = detail::idm_accel_raw(v_ma, mg.dist_ma_to_ramp_end, 0.0, p);
  const double gap_ma_la = la.ds - ma.ds - mg.ma_length;
  const double a_ma_la = detail::idm_accel_raw(v_ma, gap_ma_la, la.v_l, p);
  const double a_ta_la = detail::idm_accel_raw(in.v, la.ds, la.v_l, p);
  const double a_ta_ma = detail::idm_accel_raw(in.v, ma.ds, ma.v_l, p);
  const double r = mobil_incentive_ratio(a_ma_la - a_ma_ramp, a_ta_ma - a_ta_la,
                                         params.at("p"), params.at("da_th"));

  const double gap_la = detail::idm_desired_gap(in.v, la.v_l, p) / clamp_gap(la.ds);
  const double gap_ma = detail::idm_desired_gap(in.v, ma.v_l, p) / clamp_gap(ma.ds);
  const double ratio = in.v / p.v0;
  const double r4 = ratio * ratio * ratio * ratio;
  const double a = p.a * (1.0 - r4 - (r * gap_ma * gap_ma + (1.0 - r) * gap_la * gap_la));
  return detail::finalize(
      a, {{"r", r}, {"da_ma", a_ma_la - a_ma_ramp}, {"da_ta", a_ta_ma - a_ta_la}}, lim);
}

/// Looming stimulus-response law. The base form runs two states: reacting
/// to both LA and MA, and, once the LA falls outside the gap threshold,
/// reacting to the MA alone. The modified form keeps the LA relevant
/// throughout the merge and zeroes any positive MA angle rate so a passing
/// MA cannot trigger aggressive acceleration.
inline ModelOutput looming_accel(const ModelInput& in, const ModelParams& params,
                                 bool modified, const ModelLimits& lim = {}) {
  detail::require_ma(in);
  if (!modified && (!in.la_view.has_value() || in.la_view->ds > params.at("gap_th"))) {
    // MA-only state of the base model.
    std::optional<double> prev_ma;
    if (in.ma_geometry.has_value()) prev_ma = in.ma_geometry->theta_ma_prev;
    const LeaderView& ma = *in.ma_view;
    const double theta_ma = visual_angle(ma.ds, ma.dt, ma.width);
    const double rate_ma = visual_angle_rate(theta_ma, prev_ma, in.step);
    const double ma_term = detail::saturate(params.at("k_ma2") * rate_ma, params.at("sat2"));
    const double a = params.at("k_v") * (params.at("v_des") - in.v) + ma_term;
    return detail::finalize(
        a, {{"state", 2.0}, {"theta_ma", theta_ma}, {"theta_rate_ma", rate_ma}}, lim);
  }
  const auto t = detail::looming_terms(in, params, modified);
  const double a = t.speed_term - t.la_term + t.ma_term;
  return detail::finalize(a,
                          {{"state", 1.0},
                           {"theta_la", t.theta_la},
                           {"theta_ma", t.theta_ma},
                           {"theta_rate_la", t.rate_la},
                           {"theta_rate_ma", t.rate_ma}},
                          lim);
}

/// IDM-CAH for car-following, Looming-Mod for merge negotiation, phased
/// through three states keyed to how far the MA has entered the TA-LA gap
/// and how close it is to the lane line.
inline ModelOutput idm_looming_accel(const ModelInput& in, const ModelParams& params,
                                     const ModelLimits& lim = {}) {
  const LeaderView& la = detail::require_la(in);
  const auto p = detail::idm_view(params);
  const double c = params.at_or("c", 0.99);
  const double a_cah_la = detail::idm_cah_raw(in.v, la.ds, la.v_l, la.a_l, p, c);

  if (!in.ma_view.has_value() || !in.ma_geometry.has_value())
    return detail::finalize(a_cah_la, {{"state", 1.0}, {"r", 1.0}}, lim);

  const MaGeometry& mg = *in.ma_geometry;
  const auto t = detail::looming_terms(in, params, /*clamp_ma_rate=*/true);
  const double a_loom = t.speed_term - t.la_term + t.ma_term;

  std::map<std::string, double> diag = {{"theta_la", t.theta_la},
                                        {"theta_ma", t.theta_ma},
                                        {"a_idm_cah", a_cah_la},
                                        {"a_looming_mod", a_loom}};
  if (mg.gap_overlap < mg.ma_length) {
    const double r = std::clamp(1.0 - mg.gap_overlap / mg.ma_length, 0.0, 1.0);
    diag["state"] = 2.0;
    diag["r"] = r;
    return detail::finalize(r * a_cah_la + (1.0 - r) * a_loom, std::move(diag), lim);
  }
  const LeaderView& ma = *in.ma_view;
  const double a_cah_ma = detail::idm_cah_raw(in.v, ma.ds, ma.v_l, ma.a_l, p, c);
  const double r = std::clamp(mg.dt_to_lane_line / (0.5 * mg.lane_width), 0.0, 1.0);
  diag["state"] = 3.0;
  diag["r"] = r;
  diag["a_idm_cah_ma"] = a_cah_ma;
  return detail::finalize(r * a_loom + (1.0 - r) * a_cah_ma, std::move(diag), lim);
}

/// Merge-reactive IDM: IDM-CAH against both the LA and any relevant MA,
/// with each actor's longitudinal input replaced by the effective distance
/// that preserves its visual angle, and the stronger deceleration winning.
/// zeta rescales the MA's lateral offset only; the LA sits on the TA's axis
/// where the substitution is the identity.
inline ModelOutput mr_idm_accel(const ModelInput& in, const ModelParams& params,
                                const ModelLimits& lim = {}) {
  const LeaderView& la = detail::require_la(in);
  const auto p = detail::idm_view(params);
  const double c = params.at_or("c", 0.99);
  const double ds_e_la = effective_distance(la.ds, la.dt, la.width, 1.0).value;
  const double a_la = detail::idm_cah_raw(in.v, ds_e_la, la.v_l, la.a_l, p, c);
  std::map<std::string, double> diag = {{"a_la_branch", a_la}, {"ds_e_la", ds_e_la}};
  double a = a_la;
  diag["state"] = 1.0;  // LA branch governs
  if (in.ma_view.has_value()) {
    const LeaderView& ma = *in.ma_view;
    const double zeta = params.at("zeta");
    const double ds_e_ma = effective_distance(ma.ds, ma.dt, ma.width, zeta).value;
    const double a_ma = detail::idm_cah_raw(in.v, ds_e_ma, ma.v_l, ma.a_l, p, c);
    diag["a_ma_branch"] = a_ma;
    diag["ds_e_ma"] = ds_e_ma;
    if (a_ma < a_la) diag["state"] = 2.0;  // MA branch governs
    a = std::min(a_la, a_ma);
  }
  return detail::finalize(a, std::move(diag), lim);
}

/// Dispatch by model kind.
inline ModelOutput model_accel(ModelKind kind, const ModelInput& in,
                               const ModelParams& params, const ModelLimits& lim = {}) {
  switch (kind) {
    case ModelKind::IDM: return idm_accel(in, params, lim);
    case ModelKind::IDM_MSA: return idm_msa_accel(in, params, lim);
    case ModelKind::IDM_CAH: return idm_cah_accel(in, params, lim);
    case ModelKind::LOOMING: return looming_accel(in, params, false, lim);
    case ModelKind::LOOMING_MOD: return looming_accel(in, params, true, lim);
    case ModelKind::IDM_LOOMING: return idm_looming_accel(in, params, lim);
    default: return mr_idm_accel(in, params, lim);
  }
}

}  // namespace mergesim
