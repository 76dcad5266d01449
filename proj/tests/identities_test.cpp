#include <gtest/gtest.h>

#include "ballmap/identities.hpp"

namespace ballmap {
namespace {

constexpr double kPi = 3.14159265358979323846;

double record(const std::string& name, double v) {
  ::testing::Test::RecordProperty(name, std::to_string(v));
  return v;
}

struct Fx {
  TetMesh mesh;
  MetricField metric;
  BoundaryGeometry bg;
  P2Space sp;
  TraceNorms tn;

  Fx(double h, MetricFamily fam, double eps)
      : mesh(generate_ball_mesh(h)),
        metric{fam, eps, {}},
        bg(build_boundary_geometry(mesh, metric)),
        sp(mesh, metric),
        tn(sp, bg) {}
};

Fx& flat03() {
  static Fx f(0.3, MetricFamily::Flat, 0.0);
  return f;
}
Fx& flat015() {
  static Fx f(0.15, MetricFamily::Flat, 0.0);
  return f;
}

// First-coordinate boundary data at the P2 boundary nodes.
VecX coordinate_data(const P2Space& sp, int c) {
  VecX data = VecX::Zero(sp.n_dof);
  for (int d : sp.boundary_dofs) data[d] = sp.dof_pos[d][c];
  return data;
}

TEST(Identities, EnergyIdentityExact) {
  for (const Fx* F : {&flat03()}) {
    ScalarSolve s = solve_dirichlet_scalar(F->sp, F->tn.stiffness(), VecX::Zero(F->sp.n_dof),
                                           coordinate_data(F->sp, 0));
    IdentityResidualReport r = check_energy_identity(F->sp, s.u, s.flux);
    record("energy_rel_flat", r.rel_residual);
    EXPECT_EQ(r.conv, ConvergenceClass::ExactToSolverTol);
    EXPECT_TRUE(r.pass);
    EXPECT_LE(r.rel_residual, 1e-9);
    EXPECT_NEAR(r.left, 4.0 * kPi / 3.0, 0.1);  // |grad x|^2 integrates the volume
  }

  Fx curved(0.3, MetricFamily::Conformal, 0.02);
  ScalarSolve s = solve_dirichlet_scalar(curved.sp, curved.tn.stiffness(),
                                         VecX::Zero(curved.sp.n_dof),
                                         coordinate_data(curved.sp, 0));
  IdentityResidualReport r = check_energy_identity(curved.sp, s.u, s.flux);
  record("energy_rel_curved", r.rel_residual);
  EXPECT_TRUE(r.pass);
  EXPECT_LE(r.rel_residual, 1e-9);

  // constant data: both sides vanish
  VecX ones = VecX::Zero(flat03().sp.n_dof);
  for (int d : flat03().sp.boundary_dofs) ones[d] = 1.0;
  ScalarSolve sc = solve_dirichlet_scalar(flat03().sp, flat03().tn.stiffness(),
                                          VecX::Zero(flat03().sp.n_dof), ones);
  IdentityResidualReport rc = check_energy_identity(flat03().sp, sc.u, sc.flux);
  EXPECT_LE(std::abs(rc.left), 1e-10);
  EXPECT_TRUE(rc.pass);

  // interior load with zero boundary data
  VecX load = assemble_load(flat03().sp, [](const Vec3& p) { return p[0] * p[1]; });
  ScalarSolve sl = solve_dirichlet_scalar(flat03().sp, flat03().tn.stiffness(), load,
                                          VecX::Zero(flat03().sp.n_dof));
  IdentityResidualReport rl = check_energy_identity(flat03().sp, sl.u, sl.flux, &load);
  record("energy_rel_load", rl.rel_residual);
  EXPECT_TRUE(rl.pass);
  EXPECT_LE(rl.rel_residual, 1e-8);
}

TEST(Identities, BochnerFlatBallClosedForm) {
  // u = x^1 on the unit ball: both sides approach 16 pi / 3.
  double oracle = 16.0 * kPi / 3.0;
  double resid[2];
  const Fx* fx[2] = {&flat03(), &flat015()};
  for (int lev = 0; lev < 2; ++lev) {
    const Fx& F = *fx[lev];
    ScalarSolve s = solve_dirichlet_scalar(F.sp, F.tn.stiffness(), VecX::Zero(F.sp.n_dof),
                                           coordinate_data(F.sp, 0));
    IdentityResidualReport r = check_bochner_identity(F.tn, F.bg, s.u, s.flux);
    EXPECT_EQ(r.conv, ConvergenceClass::OrderH);
    resid[lev] = r.abs_residual;
    record(lev == 0 ? "bochner_left_h03" : "bochner_left_h015", r.left);
    record(lev == 0 ? "bochner_right_h03" : "bochner_right_h015", r.right);
    record(lev == 0 ? "bochner_resid_h03" : "bochner_resid_h015", r.abs_residual);
    EXPECT_NEAR(r.left, oracle, lev == 0 ? 1.2 : 0.6);
    EXPECT_NEAR(r.right, oracle, lev == 0 ? 1.2 : 0.6);
  }
  EXPECT_GE(resid[0] / resid[1], 1.4);
}

TEST(Identities, BochnerConstantIsZero) {
  const Fx& F = flat03();
  VecX ones = VecX::Zero(F.sp.n_dof);
  for (int d : F.sp.boundary_dofs) ones[d] = 1.0;
  ScalarSolve s = solve_dirichlet_scalar(F.sp, F.tn.stiffness(), VecX::Zero(F.sp.n_dof), ones);
  IdentityResidualReport r = check_bochner_identity(F.tn, F.bg, s.u, s.flux);
  EXPECT_LE(std::abs(r.left), 1e-9);
  EXPECT_LE(std::abs(r.right), 1e-9);
}

TEST(Identities, BochnerCurvedRefinement) {
  double resid[2];
  double hs[2] = {0.3, 0.15};
  for (int lev = 0; lev < 2; ++lev) {
    Fx F(hs[lev], MetricFamily::Conformal, 0.02);
    ScalarSolve s = solve_dirichlet_scalar(F.sp, F.tn.stiffness(), VecX::Zero(F.sp.n_dof),
                                           coordinate_data(F.sp, 0));
    IdentityResidualReport r = check_bochner_identity(F.tn, F.bg, s.u, s.flux);
    resid[lev] = r.abs_residual;
    record(lev == 0 ? "bochner_curved_resid_h03" : "bochner_curved_resid_h015", r.abs_residual);
  }
  EXPECT_GE(record("bochner_curved_ratio", resid[0] / resid[1]), 1.43);
}

struct Atlas {
  ConformalMap cm;
  CoordinateSet cs;
  GramDeficit gd;

  Atlas(const Fx& F)
      : cm(uniformize(F.bg)),
        cs(solve_coordinates(F.tn, F.bg, cm.image)),
        gd(assemble_gram_deficit(F.sp, cs)) {}
};

TEST(Identities, RefinedBochnerFlatIdentity) {
  double resid[2];
  const Fx* fx[2] = {&flat03(), &flat015()};
  for (int lev = 0; lev < 2; ++lev) {
    const Fx& F = *fx[lev];
    Atlas at(F);
    RefinedBochner rb = check_refined_bochner(F.tn, F.bg, at.cs, at.gd, at.cm.phi);
    EXPECT_LE(rb.theta_hat_crosscheck_rel, 1e-10);
    resid[lev] = rb.report.abs_residual;
    std::string suf = lev == 0 ? "_h03" : "_h015";
    record("refined_left" + suf, rb.report.left);
    record("refined_right" + suf, rb.report.right);
    record("refined_resid" + suf, rb.report.abs_residual);
    record("refined_lhs_hess" + suf, rb.lhs_hessians);
    record("refined_lhs_gap" + suf, rb.lhs_flux_gap);
    record("refined_e_trtheta_sq" + suf, rb.e_trtheta_sq);
    record("refined_e_theta_hat_sq" + suf, rb.e_theta_hat_sq);
    record("refined_e_phi_trtheta" + suf, rb.e_phi_trtheta);
    record("refined_e_phi_flux" + suf, rb.e_phi_flux);
    record("refined_e_trtheta_flux" + suf, rb.e_trtheta_flux);
    // flat metric: both Einstein terms and the traceless Ricci term vanish
    EXPECT_EQ(rb.e_einstein_flux, 0.0);
    EXPECT_EQ(rb.e_einstein_hessian, 0.0);
    EXPECT_EQ(rb.e_traceless_ricci, 0.0);
    double h = mesh_h(F.sp.mesh);
    EXPECT_LE(rb.lhs_hessians, 0.05);
    EXPECT_LE(rb.report.abs_residual, 3.0 * h * h);
  }
  EXPECT_GE(record("refined_flat_ratio", resid[0] / resid[1]), 2.0);
}

TEST(Identities, RefinedBochnerCurvedDecay) {
  double resid[2];
  double hs[2] = {0.3, 0.15};
  for (int lev = 0; lev < 2; ++lev) {
    Fx F(hs[lev], MetricFamily::Conformal, 0.02);
    Atlas at(F);
    RefinedBochner rb = check_refined_bochner(F.tn, F.bg, at.cs, at.gd, at.cm.phi);
    EXPECT_LE(rb.theta_hat_crosscheck_rel, 1e-10);
    resid[lev] = rb.report.abs_residual;
    std::string suf = lev == 0 ? "_h03" : "_h015";
    record("refined_curved_resid" + suf, rb.report.abs_residual);
    record("refined_curved_einstein_hess" + suf, rb.e_einstein_hessian);
    record("refined_curved_traceless" + suf, rb.e_traceless_ricci);
    EXPECT_NE(rb.e_traceless_ricci, 0.0);
  }
  EXPECT_GE(record("refined_curved_ratio", resid[0] / resid[1]), 1.4);
}

TEST(Identities, ConformalIdentitiesFlat) {
  double resid_b[2], resid_c[2];
  const Fx* fx[2] = {&flat03(), &flat015()};
  for (int lev = 0; lev < 2; ++lev) {
    const Fx& F = *fx[lev];
    Atlas at(F);
    auto reps = check_conformal_identities(F.tn, F.bg, at.cs, at.cm.phi, 1e-11);
    EXPECT_EQ(reps[0].name, "boundary_map_unit_norm");
    EXPECT_TRUE(reps[0].pass);
    EXPECT_LE(reps[0].left, 1e-11);
    resid_b[lev] = reps[1].abs_residual;
    resid_c[lev] = reps[2].abs_residual;
    std::string suf = lev == 0 ? "_h03" : "_h015";
    record("frame_sum_resid" + suf, reps[1].abs_residual);
    record("surface_hessian_resid" + suf, reps[2].abs_residual);
    EXPECT_TRUE(reps[1].pass);
    EXPECT_TRUE(reps[2].pass);
  }
  double rb_ratio = record("frame_sum_ratio", resid_b[0] / resid_b[1]);
  double rc_ratio = record("surface_hessian_ratio", resid_c[0] / resid_c[1]);
  EXPECT_GE(rb_ratio, 1.4);
  EXPECT_GE(rc_ratio, 1.3);
}

TEST(Identities, ConformalIdentitiesBlindToInteriorBump) {
  // The conformal family only bends the metric strictly inside the ball, so
  // every boundary-trace quantity matches the flat run to roundoff.
  const Fx& F0 = flat03();
  Fx F1(0.3, MetricFamily::Conformal, 0.04);
  Atlas a0(F0);
  Atlas a1(F1);
  auto r0 = check_conformal_identities(F0.tn, F0.bg, a0.cs, a0.cm.phi, 1e-11);
  auto r1 = check_conformal_identities(F1.tn, F1.bg, a1.cs, a1.cm.phi, 1e-11);
  EXPECT_NEAR(r0[1].abs_residual, r1[1].abs_residual, 1e-12);
  record("frame_sum_flat_vs_eps_gap", std::abs(r0[1].abs_residual - r1[1].abs_residual));
  // the surface Hessian check sees the interior through N(x^i) only
  record("surface_hessian_eps_gap", std::abs(r0[2].abs_residual - r1[2].abs_residual));
}

TEST(Identities, InequalityLedgerFlatFullInputs) {
  const Fx& F = flat03();
  HypothesisReport hyp = build_hypothesis_report(F.sp, F.bg, F.tn, false);
  RadiusField rf = solve_radius_field(F.sp, F.bg, hyp.normal_h_half, hyp.lambda);
  Atlas at(F);
  Pushforward pf = pushforward_metric(F.sp, at.cs, at.gd);
  UniformizationCertificate ucert = certify_uniformization(at.cm, F.bg, F.tn, 0.5);
  RefinedBochner rb = check_refined_bochner(F.tn, F.bg, at.cs, at.gd, at.cm.phi);

  LedgerInputs in;
  in.sp = &F.sp;
  in.bg = &F.bg;
  in.tn = &F.tn;
  in.hyp = &hyp;
  in.rf = &rf;
  in.cs = &at.cs;
  in.pf = &pf;
  in.ucert = &ucert;
  in.rb = &rb;
  in.eps = 0;

  std::vector<IdentityResidualReport> rows = check_inequality_ledger(in);
  EXPECT_EQ(rows.size(), 11u);
  for (const auto& r : rows) {
    record("ledger_" + r.name + "_ratio", r.rel_residual);
    EXPECT_TRUE(r.pass) << r.name << ": " << r.left << " vs " << r.right;
    EXPECT_TRUE(std::isfinite(r.rel_residual)) << r.name;
  }

  // pinned expectations for the structural rows
  auto find = [&](const std::string& n) {
    for (const auto& r : rows)
      if (r.name == n) return r;
    ADD_FAILURE() << "missing row " << n;
    return IdentityResidualReport{};
  };
  EXPECT_GT(find("mean_convexity").right, 1.5);  // tr theta near 2 on the unit sphere
  EXPECT_EQ(find("boundary_connectedness").left, 1.0);
  EXPECT_LE(find("trace_pairing_duality").left,
            find("trace_pairing_duality").right * (1 + 1e-6));
  EXPECT_LE(find("trace_extension_minimality").left,
            find("trace_extension_minimality").right * (1 + 1e-6));

  // with a family parameter the two scaling rows appear
  in.eps = 0.04;
  std::vector<IdentityResidualReport> rows_eps = check_inequality_ledger(in);
  EXPECT_EQ(rows_eps.size(), 13u);
  record("ledger_hessian_vs_eps", rows_eps[rows_eps.size() - 2].rel_residual);
  record("ledger_pushforward_vs_eps", rows_eps.back().rel_residual);
}

TEST(Identities, LedgerMissingInputsAreSkipped) {
  const Fx& F = flat03();
  LedgerInputs in;
  in.sp = &F.sp;
  in.bg = &F.bg;
  in.tn = &F.tn;
  in.n_random_fields = 3;
  std::vector<IdentityResidualReport> rows = check_inequality_ledger(in);
  EXPECT_EQ(rows.size(), 7u);

  LedgerInputs bad;
  bad.sp = &F.sp;
  EXPECT_THROW(check_inequality_ledger(bad), ConfigError);
}

}  // namespace
}  // namespace ballmap
