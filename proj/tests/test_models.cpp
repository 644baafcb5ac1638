#include "mergesim/models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"

using namespace mergesim;

namespace {

ModelParams classic_idm_params() {
  ModelParams p = default_params(ModelKind::IDM);
  p.values = {{"v0", 30.0}, {"T", 1.5}, {"a", 1.4}, {"b", 2.0}, {"s0", 2.0}};
  return p;
}

ModelInput single_leader(double v, double ds, double v_l, double a_l = 0.0,
                         double width = 1.85, double dt = 0.0) {
  ModelInput in;
  in.v = v;
  in.la_view = LeaderView{ds, dt, v_l, a_l, width};
  return in;
}

}  // namespace

TEST(Idm, ClosedFormAnchor) {
  const ModelParams p = classic_idm_params();
  const ModelOutput out = idm_accel(single_leader(20.0, 50.0, 20.0), p);
  const double expect = testutil::idm(20.0, 50.0, 20.0, 30.0, 1.5, 1.4, 2.0, 2.0);
  EXPECT_NEAR(out.accel, expect, 1e-12);
  EXPECT_NEAR(out.accel, 0.550, 1e-3);
  EXPECT_NEAR(testutil::idm_sstar(20.0, 20.0, 1.5, 1.4, 2.0, 2.0), 32.0, 1e-12);
}

TEST(Idm, FreeRoadLimits) {
  const ModelParams p = classic_idm_params();
  // standstill, open road: acceleration approaches the maximum
  EXPECT_NEAR(idm_accel(single_leader(0.0, 1e9, 0.0), p).accel, 1.4, 1e-6);
  // at desired speed the output hovers just below zero
  const double at_v0 = idm_accel(single_leader(30.0, 1e9, 30.0), p).accel;
  EXPECT_LT(at_v0, 0.0);
  EXPECT_GT(at_v0, -1e-6);
}

TEST(Idm, MissingLeaderThrows) {
  ModelInput in;
  in.v = 20.0;
  EXPECT_THROW(idm_accel(in, classic_idm_params()), std::invalid_argument);
}

TEST(Idm, RandomOracleAgreement) {
  const ModelParams p = classic_idm_params();
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> uv(0.0, 40.0), us(0.5, 120.0);
  for (int i = 0; i < 1000; ++i) {
    const double v = uv(rng), s = us(rng), vl = uv(rng);
    const ModelOutput out = idm_accel(single_leader(v, s, vl), p);
    const double expect = testutil::idm(v, s, vl, 30.0, 1.5, 1.4, 2.0, 2.0);
    EXPECT_TRUE(testutil::near_rel(out.diagnostics.at("accel_raw"), expect, 1e-9));
    EXPECT_DOUBLE_EQ(out.accel, std::clamp(out.diagnostics.at("accel_raw"), -9.81, 4.0));
  }
}

TEST(Mobil, IncentiveRatio) {
  EXPECT_NEAR(mobil_incentive_ratio(0.3, -0.2, 0.5, 0.4), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(mobil_incentive_ratio(1.0, 0.0, 0.0, 0.4), 1.0);
  EXPECT_DOUBLE_EQ(mobil_incentive_ratio(-0.5, 0.0, 1.0, 0.4), 0.0);
  EXPECT_THROW(mobil_incentive_ratio(0.1, 0.1, 0.5, 0.0), std::invalid_argument);
}

TEST(Mobil, RandomOracleAgreement) {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> ua(-3.0, 3.0), up(0.0, 1.0), uth(0.05, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double dm = ua(rng), dt = ua(rng), p = up(rng), th = uth(rng);
    EXPECT_DOUBLE_EQ(mobil_incentive_ratio(dm, dt, p, th), testutil::mobil_r(dm, dt, p, th));
  }
}

TEST(Cah, BranchAnchors) {
  const ModelParams p = classic_idm_params();
  // decelerating leader, first branch: -800/520
  EXPECT_NEAR(cah_accel(single_leader(20.0, 30.0, 20.0, -2.0), p), -800.0 / 520.0, 1e-12);
  // slower leader, second branch: -100/60
  EXPECT_NEAR(cah_accel(single_leader(20.0, 30.0, 10.0, 0.0), p), -100.0 / 60.0, 1e-12);
  // equal speeds, non-negative leader acceleration: passes a_l through
  EXPECT_NEAR(cah_accel(single_leader(15.0, 25.0, 15.0, 0.8), p), 0.8, 1e-12);
}

TEST(Cah, RandomOracleAgreement) {
  const ModelParams p = classic_idm_params();
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> uv(0.0, 40.0), us(0.5, 120.0), ua(-4.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const double v = uv(rng), s = us(rng), vl = uv(rng), al = ua(rng);
    EXPECT_TRUE(testutil::near_rel(cah_accel(single_leader(v, s, vl, al), p),
                                   testutil::cah(v, s, vl, al, 1.4), 1e-9));
  }
}

TEST(IdmCah, BlendAnchor) {
  // direct check of the blend arithmetic on the documented example
  const double blended = detail::idm_cah_blend(-5.0, -1.5, 2.0, 0.99);
  EXPECT_NEAR(blended, 0.01 * -5.0 + 0.99 * (-1.5 + 2.0 * std::tanh(-1.75)), 1e-12);
  EXPECT_NEAR(blended, -3.40, 5e-3);
  // first branch: IDM already softer than CAH
  EXPECT_DOUBLE_EQ(detail::idm_cah_blend(1.0, -1.0, 2.0, 0.99), 1.0);
  // coincident inputs collapse to the common value
  EXPECT_DOUBLE_EQ(detail::idm_cah_blend(-2.0, -2.0, 2.0, 0.99), -2.0);
}

TEST(IdmCah, RandomOracleAgreement) {
  ModelParams p = classic_idm_params();
  p.kind = ModelKind::IDM_CAH;
  p.values["c"] = 0.99;
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> uv(0.0, 40.0), us(0.5, 120.0), ua(-4.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const double v = uv(rng), s = us(rng), vl = uv(rng), al = ua(rng);
    const ModelOutput out = idm_cah_accel(single_leader(v, s, vl, al), p);
    const double expect = testutil::idm_cah(v, s, vl, al, 30.0, 1.5, 1.4, 2.0, 2.0, 0.99);
    EXPECT_TRUE(testutil::near_rel(out.diagnostics.at("accel_raw"), expect, 1e-9));
  }
}

TEST(IdmCah, ReliefProperty) {
  // wherever IDM is harsher than CAH, the blend strictly improves on IDM
  ModelParams p = classic_idm_params();
  p.values["c"] = 0.99;
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> uv(0.0, 40.0), us(0.5, 60.0), ua(-4.0, 2.0);
  int exercised = 0;
  for (int i = 0; i < 2000; ++i) {
    const ModelInput in = single_leader(uv(rng), us(rng), uv(rng), ua(rng));
    const double a_idm = idm_accel(in, p).diagnostics.at("accel_raw");
    const double a_cah = cah_accel(in, p);
    if (a_idm >= a_cah) continue;
    ++exercised;
    EXPECT_GT(idm_cah_accel(in, p).diagnostics.at("accel_raw"), a_idm);
  }
  EXPECT_GT(exercised, 100);
}

namespace {

// A merge-negotiation stimulus: LA ahead on-axis, MA diagonally ahead in
// the ramp lane, both with remembered angles one step old.
ModelInput merge_input(double theta_step_scale = 1.0) {
  ModelInput in;
  in.v = 21.0;
  in.la_view = LeaderView{45.0, 0.0, 22.0, 0.0, 1.85};
  in.ma_view = LeaderView{8.0, -3.2, 19.0, 0.0, 1.85};
  MaGeometry mg;
  mg.ma_length = 4.6;
  mg.gap_overlap = 2.0;
  mg.dt_to_lane_line = 1.4;
  mg.lane_width = 3.6;
  mg.dist_ma_to_ramp_end = 150.0;
  // previous angles chosen so both rates are negative (opening geometry)
  mg.theta_la_prev = visual_angle(45.0 - 0.1 * theta_step_scale, 0.0, 1.85);
  mg.theta_ma_prev = visual_angle(8.0 - 0.2 * theta_step_scale, -3.2, 1.85);
  in.ma_geometry = mg;
  return in;
}

}  // namespace

TEST(IdmMsa, NoMaEqualsIdm) {
  ModelParams p = default_params(ModelKind::IDM_MSA);
  ModelInput in = single_leader(20.0, 50.0, 20.0);
  const ModelOutput msa = idm_msa_accel(in, p);
  const ModelOutput idm = idm_accel(in, p);
  EXPECT_DOUBLE_EQ(msa.accel, idm.accel);
}

TEST(IdmMsa, SaturatedIncentiveTracksMaOnly) {
  // MA one meter from the ramp end: its incentive saturates, r = 1, and
  // the gap term collapses onto the MA.
  ModelParams p = default_params(ModelKind::IDM_MSA);
  ModelInput in = merge_input();
  in.ma_geometry->dist_ma_to_ramp_end = 1.0;
  const ModelOutput out = idm_msa_accel(in, p);
  EXPECT_DOUBLE_EQ(out.diagnostics.at("r"), 1.0);

  ModelInput ma_as_leader = in;
  ma_as_leader.la_view = in.ma_view;
  const ModelOutput idm_ma = idm_accel(ma_as_leader, p);
  EXPECT_NEAR(out.accel, idm_ma.accel, 1e-12);
}

TEST(IdmMsa, WeightedGapTermMatchesHandExpansion) {
  ModelParams p = default_params(ModelKind::IDM_MSA);
  // zero politeness keeps r off its clamp so the blend is genuinely mixed
  p.values["p"] = 0.0;
  p.values["da_th"] = 1.0;
  const ModelInput in = merge_input();
  const ModelOutput out = idm_msa_accel(in, p);

  const double v0 = p.at("v0"), T = p.at("T"), a = p.at("a"), b = p.at("b"), s0 = p.at("s0");
  const double v = in.v;
  const auto& la = *in.la_view;
  const auto& ma = *in.ma_view;
  const double a_ma_ramp = testutil::idm(ma.v_l, in.ma_geometry->dist_ma_to_ramp_end, 0.0,
                                         v0, T, a, b, s0);
  const double a_ma_la = testutil::idm(
      ma.v_l, la.ds - ma.ds - in.ma_geometry->ma_length, la.v_l, v0, T, a, b, s0);
  const double a_ta_la = testutil::idm(v, la.ds, la.v_l, v0, T, a, b, s0);
  const double a_ta_ma = testutil::idm(v, ma.ds, ma.v_l, v0, T, a, b, s0);
  const double r =
      testutil::mobil_r(a_ma_la - a_ma_ramp, a_ta_ma - a_ta_la, p.at("p"), p.at("da_th"));
  const double gl = testutil::idm_sstar(v, la.v_l, T, a, b, s0) / la.ds;
  const double gm = testutil::idm_sstar(v, ma.v_l, T, a, b, s0) / ma.ds;
  const double expect =
      a * (1.0 - std::pow(v / v0, 4.0) - (r * gm * gm + (1.0 - r) * gl * gl));

  EXPECT_GT(r, 0.0);
  EXPECT_LT(r, 1.0);
  EXPECT_TRUE(testutil::near_rel(out.diagnostics.at("accel_raw"), expect, 1e-9));
  EXPECT_NEAR(out.diagnostics.at("r"), r, 1e-12);
}

TEST(Looming, RequiresMergeActor) {
  const ModelParams p = default_params(ModelKind::LOOMING_MOD);
  EXPECT_THROW(looming_accel(single_leader(20.0, 50.0, 20.0), p, true),
               std::invalid_argument);
}

TEST(Looming, ZeroRatesLeaveOnlySpeedTracking) {
  const ModelParams p = default_params(ModelKind::LOOMING_MOD);
  ModelInput in = merge_input();
  in.ma_geometry->theta_la_prev = visual_angle(45.0, 0.0, 1.85);
  in.ma_geometry->theta_ma_prev = visual_angle(8.0, -3.2, 1.85);
  const ModelOutput out = looming_accel(in, p, true);
  EXPECT_NEAR(out.accel, p.at("k_v") * (p.at("v_des") - in.v), 1e-12);
}

TEST(Looming, ModZeroesPassingMaStimulus) {
  const ModelParams p = default_params(ModelKind::LOOMING_MOD);
  // growing MA distance -> previous angle larger -> negative rate; flip it
  // to make the rate positive (MA passing)
  ModelInput in = merge_input();
  in.ma_geometry->theta_ma_prev = visual_angle(8.0 + 1.0, -3.2, 1.85);  // rate > 0
  in.ma_geometry->theta_la_prev = visual_angle(45.0, 0.0, 1.85);        // rate = 0

  const ModelOutput mod = looming_accel(in, p, true);
  EXPECT_NEAR(mod.accel, p.at("k_v") * (p.at("v_des") - in.v), 1e-12);

  // unmodified model lets the positive rate raise the acceleration
  ModelParams full = default_params(ModelKind::LOOMING);
  full.values["k_v"] = p.at("k_v");
  full.values["v_des"] = p.at("v_des");
  const ModelOutput base = looming_accel(in, full, false);
  EXPECT_GT(base.accel, mod.accel);
}

TEST(Looming, ModMatchesBaseWhenModificationsInactive) {
  // closing MA (negative rate) and LA within the gap threshold: the two
  // variants coincide
  const ModelParams mod_params = default_params(ModelKind::LOOMING_MOD);
  ModelParams full = default_params(ModelKind::LOOMING);
  const ModelInput in = merge_input();
  ASSERT_LT(visual_angle(8.0, -3.2, 1.85), *in.ma_geometry->theta_ma_prev);
  const ModelOutput a = looming_accel(in, full, false);
  const ModelOutput b = looming_accel(in, mod_params, true);
  EXPECT_DOUBLE_EQ(a.accel, b.accel);
}

TEST(Looming, BaseSwitchesToMaOnlyState) {
  ModelParams full = default_params(ModelKind::LOOMING);
  full.values["gap_th"] = 30.0;  // LA at 45 m is now beyond the threshold
  const ModelInput in = merge_input();
  const ModelOutput out = looming_accel(in, full, false);
  EXPECT_DOUBLE_EQ(out.diagnostics.at("state"), 2.0);
}

TEST(Looming, NeverAcceleratesFromMaStimulusUnderMod) {
  const ModelParams p = default_params(ModelKind::LOOMING_MOD);
  std::mt19937 rng(37);
  std::uniform_real_distribution<double> uth(-0.3, 0.3);
  for (int i = 0; i < 300; ++i) {
    ModelInput in = merge_input();
    const double theta_now = visual_angle(8.0, -3.2, 1.85);
    in.ma_geometry->theta_ma_prev = theta_now + uth(rng);
    in.ma_geometry->theta_la_prev = visual_angle(45.0, 0.0, 1.85);
    const ModelOutput out = looming_accel(in, p, true);
    EXPECT_LE(out.accel, p.at("k_v") * (p.at("v_des") - in.v) + 1e-12);
  }
}

TEST(IdmLooming, NoMaIsPureIdmCah) {
  const ModelParams p = default_params(ModelKind::IDM_LOOMING);
  const ModelInput in = single_leader(20.0, 50.0, 21.0);
  EXPECT_DOUBLE_EQ(idm_looming_accel(in, p).accel, idm_cah_accel(in, p).accel);
}

TEST(IdmLooming, PartialOverlapBlends) {
  const ModelParams p = default_params(ModelKind::IDM_LOOMING);
  ModelInput in = merge_input();
  in.ma_geometry->ma_length = 5.0;
  in.ma_geometry->gap_overlap = 2.0;  // r = 3/5
  const ModelOutput out = idm_looming_accel(in, p);
  EXPECT_DOUBLE_EQ(out.diagnostics.at("r"), 0.6);
  const double a_cah = idm_cah_accel(in, p).diagnostics.at("accel_raw");
  const double a_loom = looming_accel(in, p, true).diagnostics.at("accel_raw");
  EXPECT_NEAR(out.diagnostics.at("accel_raw"), 0.6 * a_cah + 0.4 * a_loom, 1e-12);
  EXPECT_DOUBLE_EQ(out.diagnostics.at("state"), 2.0);
}

TEST(IdmLooming, FullOverlapUsesLaneLineRatio) {
  const ModelParams p = default_params(ModelKind::IDM_LOOMING);
  ModelInput in = merge_input();
  in.ma_geometry->gap_overlap = in.ma_geometry->ma_length;  // fully in gap

  // centered in the ramp lane: lateral distance to the line is half a lane
  in.ma_geometry->dt_to_lane_line = 0.5 * in.ma_geometry->lane_width;
  ModelOutput out = idm_looming_accel(in, p);
  EXPECT_DOUBLE_EQ(out.diagnostics.at("r"), 1.0);
  const double a_loom = looming_accel(in, p, true).diagnostics.at("accel_raw");
  EXPECT_NEAR(out.diagnostics.at("accel_raw"), a_loom, 1e-12);

  // sitting on the lane line: pure IDM-CAH with the MA as leader
  in.ma_geometry->dt_to_lane_line = 0.0;
  out = idm_looming_accel(in, p);
  EXPECT_DOUBLE_EQ(out.diagnostics.at("r"), 0.0);
  ModelInput ma_leader = in;
  ma_leader.la_view = in.ma_view;
  EXPECT_NEAR(out.diagnostics.at("accel_raw"),
              idm_cah_accel(ma_leader, p).diagnostics.at("accel_raw"), 1e-12);
}

TEST(MrIdm, NoMaOnAxisMatchesIdmCah) {
  const ModelParams p = default_params(ModelKind::MR_IDM);
  const ModelInput in = single_leader(20.0, 50.0, 21.0);
  EXPECT_NEAR(mr_idm_accel(in, p).accel, idm_cah_accel(in, p).accel, 1e-9);
}

TEST(MrIdm, MaBranchUsesEffectiveDistance) {
  ModelParams p = default_params(ModelKind::MR_IDM);
  ModelInput in = merge_input();
  in.ma_view = LeaderView{2.0, 3.0, 19.0, 0.0, 2.0};
  const ModelOutput out = mr_idm_accel(in, p);

  const double ds_e = testutil::effective_distance_theta_chain(2.0, 3.0, 2.0, 1.0);
  EXPECT_NEAR(out.diagnostics.at("ds_e_ma"), ds_e, 1e-6);
  EXPECT_NEAR(out.diagnostics.at("ds_e_ma"), 6.162, 1e-3);
  const double a_ma = testutil::idm_cah(in.v, out.diagnostics.at("ds_e_ma"), 19.0, 0.0, 25.0,
                                        1.5, 1.4, 2.0, 2.0, 0.99);
  EXPECT_TRUE(testutil::near_rel(out.diagnostics.at("a_ma_branch"), a_ma, 1e-9));
  EXPECT_DOUBLE_EQ(out.diagnostics.at("accel_raw"),
                   std::min(out.diagnostics.at("a_la_branch"),
                            out.diagnostics.at("a_ma_branch")));
}

TEST(MrIdm, DominanceAndAbsentMa) {
  const ModelParams p = default_params(ModelKind::MR_IDM);
  ModelInput in = merge_input();
  const ModelOutput with_ma = mr_idm_accel(in, p);
  EXPECT_LE(with_ma.diagnostics.at("accel_raw"),
            with_ma.diagnostics.at("a_la_branch") + 1e-15);
  EXPECT_LE(with_ma.diagnostics.at("accel_raw"),
            with_ma.diagnostics.at("a_ma_branch") + 1e-15);

  in.ma_view.reset();
  in.ma_geometry.reset();
  const ModelOutput without = mr_idm_accel(in, p);
  EXPECT_DOUBLE_EQ(without.diagnostics.at("accel_raw"),
                   without.diagnostics.at("a_la_branch"));
}

TEST(MrIdm, SmallerZetaReactsAtLeastAsStrongly) {
  ModelParams tight = default_params(ModelKind::MR_IDM);
  tight.values["zeta"] = 0.5;
  ModelParams loose = default_params(ModelKind::MR_IDM);
  loose.values["zeta"] = 1.0;
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> uds(0.5, 30.0), udt(0.5, 6.0), uv(5.0, 30.0);
  for (int i = 0; i < 300; ++i) {
    ModelInput in = merge_input();
    in.v = uv(rng);
    in.ma_view = LeaderView{uds(rng), udt(rng), uv(rng), 0.0, 1.85};
    const double a_tight = mr_idm_accel(in, tight).diagnostics.at("a_ma_branch");
    const double a_loose = mr_idm_accel(in, loose).diagnostics.at("a_ma_branch");
    EXPECT_LE(a_tight, a_loose + 1e-12);
  }
}

TEST(MrIdm, ContinuousInLateralOffset) {
  // sweep the MA laterally across the lane line; consecutive accelerations
  // must stay close (no state-machine jumps)
  const ModelParams p = default_params(ModelKind::MR_IDM);
  double prev = 0.0;
  bool first = true;
  for (double dt = -3.6; dt <= 0.0; dt += 0.01) {
    ModelInput in = merge_input();
    in.ma_view = LeaderView{10.0, dt, 19.0, 0.0, 1.85};
    const double a = mr_idm_accel(in, p).accel;
    if (!first) EXPECT_LT(std::abs(a - prev), 0.05) << "jump at dt=" << dt;
    prev = a;
    first = false;
  }
}

TEST(Models, DeterministicOutputs) {
  const ModelInput in = merge_input();
  for (ModelKind kind : {ModelKind::IDM, ModelKind::IDM_MSA, ModelKind::IDM_CAH,
                         ModelKind::LOOMING, ModelKind::LOOMING_MOD, ModelKind::IDM_LOOMING,
                         ModelKind::MR_IDM}) {
    const ModelParams p = default_params(kind);
    const ModelOutput a = model_accel(kind, in, p);
    const ModelOutput b = model_accel(kind, in, p);
    EXPECT_EQ(a.accel, b.accel) << to_string(kind);
    EXPECT_EQ(a.diagnostics, b.diagnostics) << to_string(kind);
  }
}

TEST(Models, OutputClampRecordsRawValue) {
  const ModelParams p = classic_idm_params();
  // absurdly small gap forces a raw IDM value far below the floor
  const ModelOutput out = idm_accel(single_leader(30.0, 0.5, 0.0), p);
  EXPECT_DOUBLE_EQ(out.accel, -9.81);
  EXPECT_LT(out.diagnostics.at("accel_raw"), -9.81);
  EXPECT_DOUBLE_EQ(out.diagnostics.at("clamped"), 1.0);
  EXPECT_TRUE(std::isfinite(out.diagnostics.at("accel_raw")));
}
