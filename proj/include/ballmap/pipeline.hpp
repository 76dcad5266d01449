#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ballmap/identities.hpp"
#include "ballmap/uniformize.hpp"
#include "json.hpp"

namespace ballmap {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kReportSchema = 1;

using ordered_json = nlohmann::ordered_json;

// Run configuration. A JSON config file fills these fields; command-line
// flags override individual entries afterwards. Defaults are chosen so that
// an empty config is a valid flat-ball run.
struct RunConfig {
  // mesh source: a non-empty path wins over generation
  std::string mesh_path;
  double generate_h = 0.15;
  double radius = 1.0;

  MetricFamily family = MetricFamily::Flat;
  double eps = 0.0;
  MetricParams params;

  // boundary map fed to the coordinate solves: the energy-minimizing flow
  // onto the sphere, or the normalized chart positions (exact for round
  // boundaries, and free of flow noise)
  bool uniformize_boundary = false;
  // adversarial switch: reflect the first component of the boundary map, an
  // orientation-reversing isometry of the sphere. The coordinate solves stay
  // perfectly harmonic; only the certificate can catch it.
  bool flip_first_coordinate = false;
  bool with_sobolev = false;

  double solver_tol = 1e-10;
  double tol_exact = 1e-8;  // cap for solver-exact identity residuals

  std::uint64_t seed = 42;
  int n_random_fields = 4;
  int jobs = 1;

  std::vector<double> sweep_eps{0.0025, 0.005, 0.01, 0.02, 0.04};
  double sweep_h = 0.12;
  std::vector<double> levels{0.3, 0.15, 0.075};
  double max_dofs = 2e6;

  std::string out_path;

  SolveOptions solve_options() const {
    SolveOptions o;
    o.tol = solver_tol;
    return o;
  }

  void validate() const {
    if (mesh_path.empty()) {
      if (!(generate_h > 0 && generate_h < 1))
        throw ConfigError("generate_h must lie in (0,1)");
      if (!(radius > 0)) throw ConfigError("radius must be positive");
    }
    if (!(eps >= 0)) throw ConfigError("eps must be nonnegative");
    if (!(solver_tol > 0 && solver_tol < 1)) throw ConfigError("solver tol must lie in (0,1)");
    if (!(tol_exact > 0)) throw ConfigError("exact identity tol must be positive");
    if (n_random_fields < 0) throw ConfigError("n_random_fields must be nonnegative");
    if (jobs < 1) throw ConfigError("jobs must be at least 1");
    if (!(sweep_h > 0 && sweep_h < 1)) throw ConfigError("sweep h must lie in (0,1)");
    for (double e : sweep_eps)
      if (!(e >= 0)) throw ConfigError("sweep eps values must be nonnegative");
    for (double h : levels)
      if (!(h > 0 && h < 1)) throw ConfigError("refinement levels must lie in (0,1)");
    if (!(max_dofs > 0)) throw ConfigError("max_dofs must be positive");
  }
};

inline MeshFormat mesh_format_for_path(const std::string& path) {
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".mesh") == 0)
    return MeshFormat::MeditMesh;
  return MeshFormat::NativeAscii;
}

inline MetricFamily parse_family(const std::string& s) {
  if (s == "flat") return MetricFamily::Flat;
  if (s == "conformal") return MetricFamily::Conformal;
  if (s == "bump-tensor") return MetricFamily::BumpTensor;
  throw ConfigError("unknown metric family '" + s + "' (flat, conformal, bump-tensor)");
}

namespace detail {

inline ordered_json vec3_json(const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

inline Vec3 json_vec3(const ordered_json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("'" + key + "' must be a 3-array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

template <class T>
void take(ordered_json& obj, const char* key, T& dst) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  dst = it->get<T>();
  obj.erase(it);
}

inline void take_vec3(ordered_json& obj, const char* key, Vec3& dst) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  dst = json_vec3(*it, key);
  obj.erase(it);
}

inline void reject_unknown(const ordered_json& obj, const char* where) {
  if (obj.empty()) return;
  throw ConfigError(std::string("unknown key '") + obj.begin().key() + "' in " + where);
}

}  // namespace detail

inline ordered_json config_to_json(const RunConfig& c) {
  ordered_json j;
  ordered_json mesh;
  if (!c.mesh_path.empty()) mesh["path"] = c.mesh_path;
  mesh["generate_h"] = c.generate_h;
  mesh["radius"] = c.radius;
  j["mesh"] = mesh;
  j["metric"] = {{"family", family_name(c.family)},
                 {"eps", c.eps},
                 {"center", detail::vec3_json(c.params.center)},
                 {"width", c.params.width},
                 {"amplitude", c.params.amplitude},
                 {"center2", detail::vec3_json(c.params.center2)},
                 {"width2", c.params.width2},
                 {"dir", detail::vec3_json(c.params.dir)}};
  j["boundary_map"] = c.uniformize_boundary ? "uniformize" : "identity";
  j["adversarial"] = {{"flip_first_coordinate", c.flip_first_coordinate}};
  j["solver"] = {{"tol", c.solver_tol}, {"exact_identity_tol", c.tol_exact}};
  j["hypothesis"] = {{"sobolev", c.with_sobolev}};
  j["ledger"] = {{"n_random_fields", c.n_random_fields}};
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["sweep"] = {{"eps", c.sweep_eps}, {"h", c.sweep_h}};
  j["converge"] = {{"levels", c.levels}, {"max_dofs", c.max_dofs}};
  j["out"] = c.out_path;
  return j;
}

// Strict parse: unknown keys are config errors, so typos cannot silently
// fall back to defaults.
inline RunConfig config_from_json(ordered_json j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  RunConfig c;
  if (j.contains("mesh")) {
    ordered_json m = j["mesh"];
    detail::take(m, "path", c.mesh_path);
    detail::take(m, "generate_h", c.generate_h);
    detail::take(m, "radius", c.radius);
    detail::reject_unknown(m, "mesh");
    j.erase("mesh");
  }
  if (j.contains("metric")) {
    ordered_json m = j["metric"];
    std::string fam;
    detail::take(m, "family", fam);
    if (!fam.empty()) c.family = parse_family(fam);
    detail::take(m, "eps", c.eps);
    detail::take_vec3(m, "center", c.params.center);
    detail::take(m, "width", c.params.width);
    detail::take(m, "amplitude", c.params.amplitude);
    detail::take_vec3(m, "center2", c.params.center2);
    detail::take(m, "width2", c.params.width2);
    detail::take_vec3(m, "dir", c.params.dir);
    detail::reject_unknown(m, "metric");
    j.erase("metric");
  }
  if (j.contains("boundary_map")) {
    std::string b = j["boundary_map"].get<std::string>();
    if (b == "identity")
      c.uniformize_boundary = false;
    else if (b == "uniformize")
      c.uniformize_boundary = true;
    else
      throw ConfigError("boundary_map must be 'identity' or 'uniformize'");
    j.erase("boundary_map");
  }
  if (j.contains("adversarial")) {
    ordered_json a = j["adversarial"];
    detail::take(a, "flip_first_coordinate", c.flip_first_coordinate);
    detail::reject_unknown(a, "adversarial");
    j.erase("adversarial");
  }
  if (j.contains("solver")) {
    ordered_json s = j["solver"];
    detail::take(s, "tol", c.solver_tol);
    detail::take(s, "exact_identity_tol", c.tol_exact);
    detail::reject_unknown(s, "solver");
    j.erase("solver");
  }
  if (j.contains("hypothesis")) {
    ordered_json s = j["hypothesis"];
    detail::take(s, "sobolev", c.with_sobolev);
    detail::reject_unknown(s, "hypothesis");
    j.erase("hypothesis");
  }
  if (j.contains("ledger")) {
    ordered_json s = j["ledger"];
    detail::take(s, "n_random_fields", c.n_random_fields);
    detail::reject_unknown(s, "ledger");
    j.erase("ledger");
  }
  detail::take(j, "seed", c.seed);
  detail::take(j, "jobs", c.jobs);
  if (j.contains("sweep")) {
    ordered_json s = j["sweep"];
    detail::take(s, "eps", c.sweep_eps);
    detail::take(s, "h", c.sweep_h);
    detail::reject_unknown(s, "sweep");
    j.erase("sweep");
  }
  if (j.contains("converge")) {
    ordered_json s = j["converge"];
    detail::take(s, "levels", c.levels);
    detail::take(s, "max_dofs", c.max_dofs);
    detail::reject_unknown(s, "converge");
    j.erase("converge");
  }
  detail::take(j, "out", c.out_path);
  detail::reject_unknown(j, "config");
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse failure: ") + e.what());
  }
  return config_from_json(std::move(j));
}

// Full single-run result. Stage outputs stay absent (nullopt) past the first
// failing stage; the failure is carried as a tagged message instead of an
// exception so a report can always be emitted.
struct PipelineReport {
  RunConfig config;
  std::string mesh_source;
  int n_vertices = 0;
  int n_tets = 0;
  int n_boundary_faces = 0;
  double h = 0;

  std::optional<HypothesisReport> hyp;
  std::optional<UniformizationCertificate> ucert;
  std::optional<RadiusField> rf;
  std::optional<VolumeDefect> vd;
  std::optional<CoordinateSet> cs;
  std::optional<GramDeficit> gd;
  std::optional<DiffeoCertificate> cert;
  std::optional<Pushforward> pf;
  std::optional<RefinedBochner> rb;
  std::vector<IdentityResidualReport> identities;
  std::vector<IdentityResidualReport> inequalities;

  std::string failed_stage;  // empty when every stage completed
  std::string failure_message;
  std::vector<std::pair<std::string, double>> timings;  // seconds per stage

  bool completed() const { return failed_stage.empty(); }

  bool certified() const {
    if (!completed() || !cert || !cert->certified) return false;
    for (const auto& r : identities)
      if (!r.pass) return false;
    for (const auto& r : inequalities)
      if (!r.pass) return false;
    return true;
  }

  std::string verdict() const {
    if (!completed()) return "error";
    return certified() ? "certified" : "failed";
  }
};

namespace detail {

class StageClock {
 public:
  explicit StageClock(PipelineReport& rep) : rep_(rep) {}

  // Runs one stage, times it, and traps any exception as the failing stage.
  template <class F>
  bool run(const char* name, F&& body) {
    auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    try {
      body();
    } catch (const std::exception& e) {
      rep_.failed_stage = name;
      rep_.failure_message = e.what();
      ok = false;
    }
    std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    rep_.timings.emplace_back(name, dt.count());
    return ok;
  }

 private:
  PipelineReport& rep_;
};

}  // namespace detail

inline PipelineReport run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  PipelineReport rep;
  rep.config = cfg;
  detail::StageClock stage(rep);
  SolveOptions opt = cfg.solve_options();

  std::optional<TetMesh> mesh;
  if (!stage.run("mesh", [&] {
        if (!cfg.mesh_path.empty()) {
          mesh.emplace(load_mesh(cfg.mesh_path, mesh_format_for_path(cfg.mesh_path)));
          rep.mesh_source = cfg.mesh_path;
        } else {
          mesh.emplace(generate_ball_mesh(cfg.generate_h, cfg.radius));
          rep.mesh_source = "generated";
        }
        rep.n_vertices = static_cast<int>(mesh->vertices.size());
        rep.n_tets = static_cast<int>(mesh->tets.size());
        rep.n_boundary_faces = static_cast<int>(mesh->boundary_faces.size());
        rep.h = mesh_h(*mesh);
      }))
    return rep;

  std::optional<MetricField> metric;
  if (!stage.run("metric", [&] { metric.emplace(make_metric(cfg.family, cfg.eps, cfg.params)); }))
    return rep;

  std::optional<BoundaryGeometry> bg;
  std::optional<P2Space> sp;
  std::optional<TraceNorms> tn;
  if (!stage.run("spaces", [&] {
        bg.emplace(build_boundary_geometry(*mesh, *metric));
        sp.emplace(*mesh, *metric);
        tn.emplace(*sp, *bg);
      }))
    return rep;

  if (!stage.run("hypothesis", [&] {
        rep.hyp = build_hypothesis_report(*sp, *bg, *tn, cfg.with_sobolev, {}, opt);
      }))
    return rep;

  std::vector<Vec3> bmap;
  std::vector<double> phi;
  if (!stage.run("uniformize", [&] {
        if (cfg.uniformize_boundary) {
          ConformalMap cm = uniformize(*bg);
          double smallness = rep.hyp->eps_riemann + rep.hyp->eps_theta;
          rep.ucert = certify_uniformization(cm, *bg, *tn, smallness, opt);
          bmap = std::move(cm.image);
          phi = std::move(cm.phi);
        } else {
          bmap = identity_boundary_map(*bg);
          phi.assign(bg->surf.vertices.size(), 1.0);
        }
        if (cfg.flip_first_coordinate)
          for (Vec3& p : bmap) p.x() = -p.x();
      }))
    return rep;

  if (!stage.run("radius_field", [&] {
        rep.rf = solve_radius_field(*sp, *bg, rep.hyp->normal_h_half, rep.hyp->lambda, opt);
        rep.vd = volume_defect(*sp, *bg, *rep.rf, rep.hyp->lambda);
      }))
    return rep;

  if (!stage.run("coordinates", [&] { rep.cs = solve_coordinates(*tn, *bg, bmap, opt); }))
    return rep;

  if (!stage.run("gram_deficit", [&] { rep.gd = assemble_gram_deficit(*sp, *rep.cs); }))
    return rep;

  if (!stage.run("certificate",
                 [&] { rep.cert = certify_diffeomorphism(*sp, *rep.cs, *rep.gd); }))
    return rep;

  if (!stage.run("pushforward", [&] { rep.pf = pushforward_metric(*sp, *rep.cs, *rep.gd); }))
    return rep;

  if (!stage.run("identities", [&] {
        for (int c = 0; c < 3; ++c) {
          IdentityResidualReport r =
              check_energy_identity(*sp, rep.cs->x[c], rep.cs->flux[c], nullptr, cfg.tol_exact);
          r.name = "energy:x" + std::to_string(c + 1);
          rep.identities.push_back(std::move(r));
        }
        // The radius-field solve verifies its own pairing internally; only
        // the relative residual is retained, so left/right stay zero here.
        IdentityResidualReport rx;
        rx.name = "energy:X";
        rx.rel_residual = rep.rf->energy_identity_rel;
        rx.conv = ConvergenceClass::ExactToSolverTol;
        rx.pass = rx.rel_residual <= cfg.tol_exact;
        rep.identities.push_back(std::move(rx));

        IdentityResidualReport b =
            check_bochner_identity(*tn, *bg, rep.cs->x[0], rep.cs->flux[0], 0.5, opt);
        b.name = "bochner:x1";
        rep.identities.push_back(std::move(b));

        rep.rb = check_refined_bochner(*tn, *bg, *rep.cs, *rep.gd, phi);
        rep.identities.push_back(rep.rb->report);

        auto conf = check_conformal_identities(*tn, *bg, *rep.cs, phi, 1e-10);
        for (auto& r : conf) rep.identities.push_back(std::move(r));
      }))
    return rep;

  stage.run("ledger", [&] {
    LedgerInputs in;
    in.sp = &*sp;
    in.bg = &*bg;
    in.tn = &*tn;
    in.hyp = &*rep.hyp;
    in.rf = &*rep.rf;
    in.cs = &*rep.cs;
    in.pf = &*rep.pf;
    if (rep.ucert) in.ucert = &*rep.ucert;
    in.rb = &*rep.rb;
    in.eps = cfg.eps;
    in.seed = cfg.seed;
    in.n_random_fields = cfg.n_random_fields;
    in.solve_opt = opt;
    rep.inequalities = check_inequality_ledger(in);
    rep.inequalities.push_back(detail::make_inequality_report(
        "volume_defect_bound", rep.vd->lhs, rep.vd->rhs_core + rep.vd->slack, true));
  });
  return rep;
}

// -------------------------------------------------------------------------
// JSON report emission

namespace detail {

inline double fin(double v, const char* what) {
  if (!std::isfinite(v))
    throw SolverError(std::string("non-finite value in report field ") + what, v);
  return v;
}

inline ordered_json residual_json(const IdentityResidualReport& r) {
  return ordered_json{{"name", r.name},
                      {"class", to_string(r.conv)},
                      {"left", fin(r.left, r.name.c_str())},
                      {"right", fin(r.right, r.name.c_str())},
                      {"abs_residual", fin(r.abs_residual, r.name.c_str())},
                      {"rel_residual", fin(r.rel_residual, r.name.c_str())},
                      {"pass", r.pass}};
}

}  // namespace detail

inline ordered_json report_to_json(const PipelineReport& rep) {
  using detail::fin;
  ordered_json j;
  j["schema"] = kReportSchema;
  j["tool"] = {{"name", "ballmap"}, {"version", kVersion}};
  j["verdict"] = rep.verdict();
  j["failed_stage"] = rep.failed_stage;
  j["failure_message"] = rep.failure_message;
  // the output location is delivery plumbing, not run semantics; dropping it
  // keeps golden comparisons independent of where the report landed
  j["config"] = config_to_json(rep.config);
  j["config"].erase("out");
  j["mesh"] = {{"source", rep.mesh_source},
               {"vertices", rep.n_vertices},
               {"tets", rep.n_tets},
               {"boundary_faces", rep.n_boundary_faces},
               {"h", rep.h}};

  if (rep.hyp) {
    const auto& h = *rep.hyp;
    j["hypothesis"] = {{"volume", fin(h.volume, "volume")},
                       {"boundary_area", fin(h.boundary_area, "boundary_area")},
                       {"c_sob", fin(h.c_sob, "c_sob")},
                       {"normal_h_half", fin(h.normal_h_half, "normal_h_half")},
                       {"lambda", fin(h.lambda, "lambda")},
                       {"eps_riemann", fin(h.eps_riemann, "eps_riemann")},
                       {"eps_theta", fin(h.eps_theta, "eps_theta")},
                       {"max_solver_residual", fin(h.max_solver_residual, "solver_residual")}};
  } else {
    j["hypothesis"] = nullptr;
  }

  if (rep.ucert) {
    const auto& u = *rep.ucert;
    j["uniformization"] = {
        {"phi_minus_one_linf", fin(u.phi_minus_one_linf, "phi_minus_one_linf")},
        {"phi_minus_one_h_half", fin(u.phi_minus_one_h_half, "phi_minus_one_h_half")},
        {"grad_log_phi_h_half", fin(u.grad_log_phi_h_half, "grad_log_phi_h_half")},
        {"confKphi_l2", fin(u.confKphi_l2, "confKphi_l2")},
        {"confKphi_h_minus_half", fin(u.confKphi_h_minus_half, "confKphi_h_minus_half")},
        {"total_curvature", fin(u.total_curvature, "total_curvature")},
        {"area_identity_rel", fin(u.area_identity_rel, "area_identity_rel")},
        {"max_angle_distortion", fin(u.max_angle_distortion, "max_angle_distortion")},
        {"ratio_vs_smallness", fin(u.ratio_vs_smallness, "ratio_vs_smallness")},
        {"max_solver_residual", fin(u.max_solver_residual, "solver_residual")}};
  } else {
    j["uniformization"] = nullptr;
  }

  if (rep.rf) {
    const auto& r = *rep.rf;
    j["radius_field"] = {{"max_norm", fin(r.max_norm, "max_norm")},
                         {"grad_l2", fin(r.grad_l2, "grad_l2")},
                         {"grad_minus_g_l2", fin(r.grad_minus_g_l2, "grad_minus_g_l2")},
                         {"grad_minus_g_l6", fin(r.grad_minus_g_l6, "grad_minus_g_l6")},
                         {"hess_l2", fin(r.hess_l2, "hess_l2")},
                         {"energy_identity_rel", fin(r.energy_identity_rel, "energy_identity_rel")},
                         {"energy_quadrature_rel",
                          fin(r.energy_quadrature_rel, "energy_quadrature_rel")},
                         {"energy_bound_lhs", fin(r.energy_bound_lhs, "energy_bound_lhs")},
                         {"energy_bound_rhs", fin(r.energy_bound_rhs, "energy_bound_rhs")},
                         {"max_principle_ok", r.max_principle_ok},
                         {"energy_bound_ok", r.energy_bound_ok},
                         {"solver_residual", fin(r.solver_residual, "solver_residual")}};
  } else {
    j["radius_field"] = nullptr;
  }

  if (rep.vd) {
    const auto& v = *rep.vd;
    j["volume_defect"] = {{"boundary_area", fin(v.boundary_area, "boundary_area")},
                          {"volume", fin(v.volume, "volume")},
                          {"lhs", fin(v.lhs, "lhs")},
                          {"rhs_core", fin(v.rhs_core, "rhs_core")},
                          {"slack", fin(v.slack, "slack")},
                          {"inequality_ok", v.inequality_ok}};
  } else {
    j["volume_defect"] = nullptr;
  }

  if (rep.cs) {
    const auto& c = *rep.cs;
    j["coordinates"] = {{"max_abs", fin(c.max_abs, "max_abs")},
                        {"max_radius2", fin(c.max_radius2, "max_radius2")},
                        {"boundary_identity_dev",
                         fin(c.boundary_identity_dev, "boundary_identity_dev")},
                        {"max_principle_ok", c.max_principle_ok},
                        {"solver_residual", fin(c.solver_residual, "solver_residual")}};
  } else {
    j["coordinates"] = nullptr;
  }

  if (rep.gd) {
    const auto& g = *rep.gd;
    j["gram_deficit"] = {{"linf", fin(g.linf, "linf")},
                         {"l2", fin(g.l2, "l2")},
                         {"grad_l2", fin(g.grad_l2, "grad_l2")},
                         {"h1", fin(g.h1, "h1")},
                         {"h2_excluded", g.h2_excluded}};
  } else {
    j["gram_deficit"] = nullptr;
  }

  if (rep.cert) {
    const auto& c = *rep.cert;
    j["certificate"] = {{"certified", c.certified},
                        {"max_b", fin(c.max_b, "max_b")},
                        {"min_det", fin(c.min_det, "min_det")},
                        {"max_radius2", fin(c.max_radius2, "max_radius2")},
                        {"min_gram_eig", fin(c.min_gram_eig, "min_gram_eig")},
                        {"collisions", c.collisions},
                        {"failure", c.failure}};
  } else {
    j["certificate"] = nullptr;
  }

  if (rep.pf) {
    const auto& p = *rep.pf;
    j["pushforward"] = {{"dev_linf", fin(p.dev_linf, "dev_linf")},
                        {"dev_l2", fin(p.dev_l2, "dev_l2")},
                        {"dev_h1", fin(p.dev_h1, "dev_h1")},
                        {"h2_surrogate", fin(p.h2_surrogate, "h2_surrogate")},
                        {"transform_residual_max",
                         fin(p.transform_residual_max, "transform_residual_max")},
                        {"naive_residual_max", fin(p.naive_residual_max, "naive_residual_max")},
                        {"h2_excludes_third_derivatives", p.h2_excludes_third_derivatives}};
  } else {
    j["pushforward"] = nullptr;
  }

  if (rep.rb) {
    const auto& r = *rep.rb;
    j["refined_bochner"] = {
        {"lhs_hessians", fin(r.lhs_hessians, "lhs_hessians")},
        {"lhs_flux_gap", fin(r.lhs_flux_gap, "lhs_flux_gap")},
        {"e_trtheta_sq", fin(r.e_trtheta_sq, "e_trtheta_sq")},
        {"e_theta_hat_sq", fin(r.e_theta_hat_sq, "e_theta_hat_sq")},
        {"e_phi_trtheta", fin(r.e_phi_trtheta, "e_phi_trtheta")},
        {"e_phi_flux", fin(r.e_phi_flux, "e_phi_flux")},
        {"e_trtheta_flux", fin(r.e_trtheta_flux, "e_trtheta_flux")},
        {"e_einstein_flux", fin(r.e_einstein_flux, "e_einstein_flux")},
        {"e_einstein_hessian", fin(r.e_einstein_hessian, "e_einstein_hessian")},
        {"e_traceless_ricci", fin(r.e_traceless_ricci, "e_traceless_ricci")},
        {"theta_hat_crosscheck_rel", fin(r.theta_hat_crosscheck_rel, "theta_hat_crosscheck")}};
  } else {
    j["refined_bochner"] = nullptr;
  }

  ordered_json ids = ordered_json::array();
  for (const auto& r : rep.identities) ids.push_back(detail::residual_json(r));
  j["identities"] = ids;
  ordered_json ineq = ordered_json::array();
  for (const auto& r : rep.inequalities) ineq.push_back(detail::residual_json(r));
  j["inequalities"] = ineq;

  ordered_json tm;
  double total = 0;
  for (const auto& [name, sec] : rep.timings) {
    tm[name] = sec;
    total += sec;
  }
  tm["total"] = total;
  j["timings"] = tm;
  return j;
}

// -------------------------------------------------------------------------
// Report comparison: structure (key names, order, types, strings, booleans)
// must match exactly; numbers compare with a relative tolerance; the
// "timings" subtree is ignored. Used both for golden-file regression and the
// determinism check (tolerance zero).

struct CompareResult {
  bool match = true;
  std::string first_diff;  // json-pointer-ish path of the first mismatch
  int numeric_fields = 0;
  double max_rel_diff = 0;
};

namespace detail {

inline void compare_json(const ordered_json& a, const ordered_json& b, double rel_tol,
                         const std::string& path, CompareResult& out) {
  if (!out.match) return;
  auto fail = [&](const std::string& why) {
    out.match = false;
    out.first_diff = path + ": " + why;
  };
  if (a.is_number() && b.is_number()) {
    double x = a.get<double>(), y = b.get<double>();
    double scale = std::max({1.0, std::abs(x), std::abs(y)});
    double rel = std::abs(x - y) / scale;
    ++out.numeric_fields;
    out.max_rel_diff = std::max(out.max_rel_diff, rel);
    if (rel > rel_tol) fail("numeric difference " + std::to_string(rel));
    return;
  }
  if (a.type() != b.type()) return fail("type mismatch");
  if (a.is_object()) {
    if (a.size() != b.size()) return fail("object size mismatch");
    auto ia = a.begin();
    auto ib = b.begin();
    for (; ia != a.end(); ++ia, ++ib) {
      if (ia.key() != ib.key())
        return fail("key order mismatch ('" + ia.key() + "' vs '" + ib.key() + "')");
      if (ia.key() == "timings") continue;
      compare_json(ia.value(), ib.value(), rel_tol, path + "/" + ia.key(), out);
      if (!out.match) return;
    }
    return;
  }
  if (a.is_array()) {
    if (a.size() != b.size()) return fail("array size mismatch");
    for (size_t i = 0; i < a.size(); ++i) {
      compare_json(a[i], b[i], rel_tol, path + "/" + std::to_string(i), out);
      if (!out.match) return;
    }
    return;
  }
  if (a != b) fail("value mismatch");
}

}  // namespace detail

inline CompareResult compare_reports(const ordered_json& a, const ordered_json& b,
                                     double rel_tol = 1e-9) {
  CompareResult out;
  detail::compare_json(a, b, rel_tol, "", out);
  return out;
}

// -------------------------------------------------------------------------
// Epsilon sweep: the scaling experiment. Every point shares one mesh and the
// identity boundary map (the boundary is round in chart for the analytic
// families, and skipping the flow keeps its stopping noise out of the
// measured norms). A flat baseline at the same mesh isolates the
// discretization floor of each quantity.

struct SweepPoint {
  double eps = 0;
  double eps_riemann = 0;
  double eps_theta = 0;
  double dev_linf = 0, dev_l2 = 0, dev_h1 = 0, dev_h2_surrogate = 0;
  double b_linf = 0, b_l2 = 0, b_grad_l2 = 0, b_h1 = 0;
  double rb_lhs = 0;
  double rb_abs_residual = 0;
  double max_solver_residual = 0;
};

inline bool bitwise_equal(const SweepPoint& a, const SweepPoint& b) {
  return a.eps_riemann == b.eps_riemann && a.eps_theta == b.eps_theta &&
         a.dev_linf == b.dev_linf && a.dev_l2 == b.dev_l2 && a.dev_h1 == b.dev_h1 &&
         a.dev_h2_surrogate == b.dev_h2_surrogate && a.b_linf == b.b_linf && a.b_l2 == b.b_l2 &&
         a.b_grad_l2 == b.b_grad_l2 && a.b_h1 == b.b_h1 && a.rb_lhs == b.rb_lhs &&
         a.rb_abs_residual == b.rb_abs_residual;
}

inline SweepPoint sweep_point(const TetMesh& mesh, MetricFamily family, double eps,
                              const MetricParams& params, const SolveOptions& opt = {}) {
  MetricField metric = make_metric(family, eps, params);
  BoundaryGeometry bg = build_boundary_geometry(mesh, metric);
  P2Space sp(mesh, metric);
  TraceNorms tn(sp, bg);

  SweepPoint pt;
  pt.eps = eps;
  HypothesisReport hyp = build_hypothesis_report(sp, bg, tn, false, {}, opt);
  pt.eps_riemann = hyp.eps_riemann;
  pt.eps_theta = hyp.eps_theta;
  pt.max_solver_residual = hyp.max_solver_residual;

  CoordinateSet cs = solve_coordinates(tn, bg, identity_boundary_map(bg), opt);
  pt.max_solver_residual = std::max(pt.max_solver_residual, cs.solver_residual);
  GramDeficit gd = assemble_gram_deficit(sp, cs);
  pt.b_linf = gd.linf;
  pt.b_l2 = gd.l2;
  pt.b_grad_l2 = gd.grad_l2;
  pt.b_h1 = gd.h1;

  Pushforward pf = pushforward_metric(sp, cs, gd);
  pt.dev_linf = pf.dev_linf;
  pt.dev_l2 = pf.dev_l2;
  pt.dev_h1 = pf.dev_h1;
  pt.dev_h2_surrogate = pf.h2_surrogate;

  std::vector<double> phi(bg.surf.vertices.size(), 1.0);
  RefinedBochner rb = check_refined_bochner(tn, bg, cs, gd, phi);
  pt.rb_lhs = rb.report.left;
  pt.rb_abs_residual = rb.report.abs_residual;
  return pt;
}

struct FitResult {
  std::string name;
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
  int n_used = 0;
};

// Least squares on (log x, log y); pairs with a nonpositive entry are
// skipped (the flat baseline row has exact zeros).
inline FitResult loglog_fit(std::string name, const std::vector<double>& xs,
                            const std::vector<double>& ys) {
  FitResult fr;
  fr.name = std::move(name);
  std::vector<double> lx, ly;
  for (size_t i = 0; i < xs.size() && i < ys.size(); ++i)
    if (xs[i] > 0 && ys[i] > 0) {
      lx.push_back(std::log(xs[i]));
      ly.push_back(std::log(ys[i]));
    }
  fr.n_used = static_cast<int>(lx.size());
  if (fr.n_used < 2) return fr;
  double n = static_cast<double>(fr.n_used);
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < fr.n_used; ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
    syy += ly[i] * ly[i];
  }
  double vxx = sxx - sx * sx / n;
  double vxy = sxy - sx * sy / n;
  double vyy = syy - sy * sy / n;
  if (vxx <= 0) return fr;
  fr.slope = vxy / vxx;
  fr.intercept = (sy - fr.slope * sx) / n;
  fr.r2 = vyy > 0 ? (vxy * vxy) / (vxx * vyy) : 1.0;
  return fr;
}

struct SweepReport {
  double h = 0;
  MetricFamily family = MetricFamily::Conformal;
  SweepPoint flat_baseline;
  std::vector<SweepPoint> points;  // ordered by eps, ascending
  bool has_eps0_row = false;
  bool eps0_matches_flat_bitwise = false;
  std::vector<FitResult> fits;
  bool slopes_ok = false;

  const FitResult* fit(const std::string& name) const {
    for (const auto& f : fits)
      if (f.name == name) return &f;
    return nullptr;
  }
};

// Slope acceptance bands for the sweep verdict. Deviation and Gram-deficit
// norms scale linearly in eps; the curvature norm is linear by analytic
// construction, so its band is tight.
inline constexpr double kSlopeLo = 0.85;
inline constexpr double kSlopeHi = 1.15;
inline constexpr double kSlopeR2Min = 0.98;
inline constexpr double kRiemannSlopeTol = 0.02;

inline SweepReport epsilon_sweep(const RunConfig& cfg) {
  cfg.validate();
  std::vector<double> eps = cfg.sweep_eps;
  if (eps.empty()) throw ConfigError("sweep eps list is empty");
  for (size_t i = 1; i < eps.size(); ++i)
    if (!(eps[i] > eps[i - 1]))
      throw ConfigError("sweep eps list must be strictly increasing (no duplicates)");
  std::vector<double> pos;
  for (double e : eps)
    if (e > 0) pos.push_back(e);
  if (pos.size() < 4) throw ConfigError("sweep needs at least 4 positive eps values");
  if (pos.back() / pos.front() < 10.0)
    throw ConfigError("sweep eps values must span at least one decade");

  SweepReport sr;
  sr.h = cfg.sweep_h;
  sr.family = cfg.family;
  SolveOptions opt = cfg.solve_options();

  TetMesh mesh = cfg.mesh_path.empty()
                     ? generate_ball_mesh(cfg.sweep_h, cfg.radius)
                     : load_mesh(cfg.mesh_path, mesh_format_for_path(cfg.mesh_path));
  sr.flat_baseline = sweep_point(mesh, MetricFamily::Flat, 0.0, cfg.params, opt);

  int n = static_cast<int>(eps.size());
  sr.points.resize(n);
  {
    std::atomic<int> next{0};
    int jobs = std::max(1, std::min(cfg.jobs, n));
    auto worker = [&](std::exception_ptr& err) {
      try {
        for (int i; (i = next.fetch_add(1)) < n;)
          sr.points[i] = sweep_point(mesh, cfg.family, eps[i], cfg.params, opt);
      } catch (...) {
        err = std::current_exception();
      }
    };
    if (jobs == 1) {
      std::exception_ptr err;
      worker(err);
      if (err) std::rethrow_exception(err);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errs(jobs);
      for (int w = 0; w < jobs; ++w) pool.emplace_back(worker, std::ref(errs[w]));
      for (auto& t : pool) t.join();
      for (auto& e : errs)
        if (e) std::rethrow_exception(e);
    }
  }

  for (int i = 0; i < n; ++i)
    if (eps[i] == 0.0) {
      sr.has_eps0_row = true;
      sr.eps0_matches_flat_bitwise = bitwise_equal(sr.points[i], sr.flat_baseline);
    }

  auto col = [&](auto&& get) {
    std::vector<double> v(sr.points.size());
    for (size_t i = 0; i < sr.points.size(); ++i) v[i] = get(sr.points[i]);
    return v;
  };
  std::vector<double> xs = col([](const SweepPoint& p) { return p.eps; });
  std::vector<double> dev = col([](const SweepPoint& p) { return p.dev_linf + p.dev_h1; });
  std::vector<double> gram = col([](const SweepPoint& p) { return p.b_linf + p.b_h1; });
  std::vector<double> riem = col([](const SweepPoint& p) { return p.eps_riemann; });
  std::vector<double> rbs = col([](const SweepPoint& p) { return std::sqrt(p.rb_lhs); });
  // The identity LHS carries an eps-independent discretization floor (the
  // flux-gap term at eps = 0); the excess over the flat baseline is the
  // eps-driven content the estimate actually bounds.
  std::vector<double> rbx = col([&](const SweepPoint& p) {
    return std::sqrt(std::max(0.0, p.rb_lhs - sr.flat_baseline.rb_lhs));
  });

  sr.fits.push_back(loglog_fit("dev_vs_eps", xs, dev));
  sr.fits.push_back(loglog_fit("gram_vs_eps", xs, gram));
  sr.fits.push_back(loglog_fit("bochner_sqrt_lhs_vs_eps", xs, rbs));
  sr.fits.push_back(loglog_fit("bochner_sqrt_lhs_excess_vs_eps", xs, rbx));
  sr.fits.push_back(loglog_fit("riemann_vs_eps", xs, riem));
  sr.fits.push_back(loglog_fit("dev_vs_riemann", riem, dev));

  auto in_band = [&](const char* name) {
    const FitResult* f = sr.fit(name);
    return f && f->n_used >= 4 && f->slope >= kSlopeLo && f->slope <= kSlopeHi &&
           f->r2 >= kSlopeR2Min;
  };
  const FitResult* rf = sr.fit("riemann_vs_eps");
  sr.slopes_ok = in_band("dev_vs_eps") && in_band("gram_vs_eps") &&
                 in_band("bochner_sqrt_lhs_vs_eps") && in_band("dev_vs_riemann") && rf &&
                 rf->n_used >= 4 && std::abs(rf->slope - 1.0) <= kRiemannSlopeTol;
  return sr;
}

namespace detail {

inline ordered_json sweep_point_json(const SweepPoint& p) {
  return ordered_json{{"eps", p.eps},
                      {"eps_riemann", fin(p.eps_riemann, "eps_riemann")},
                      {"eps_theta", fin(p.eps_theta, "eps_theta")},
                      {"dev_linf", fin(p.dev_linf, "dev_linf")},
                      {"dev_l2", fin(p.dev_l2, "dev_l2")},
                      {"dev_h1", fin(p.dev_h1, "dev_h1")},
                      {"dev_h2_surrogate", fin(p.dev_h2_surrogate, "dev_h2_surrogate")},
                      {"b_linf", fin(p.b_linf, "b_linf")},
                      {"b_l2", fin(p.b_l2, "b_l2")},
                      {"b_grad_l2", fin(p.b_grad_l2, "b_grad_l2")},
                      {"b_h1", fin(p.b_h1, "b_h1")},
                      {"rb_lhs", fin(p.rb_lhs, "rb_lhs")},
                      {"rb_abs_residual", fin(p.rb_abs_residual, "rb_abs_residual")},
                      {"max_solver_residual", fin(p.max_solver_residual, "max_solver_residual")}};
}

}  // namespace detail

inline ordered_json sweep_to_json(const SweepReport& sr) {
  ordered_json j;
  j["schema"] = kReportSchema;
  j["tool"] = {{"name", "ballmap"}, {"version", kVersion}};
  j["kind"] = "epsilon_sweep";
  j["h"] = sr.h;
  j["family"] = family_name(sr.family);
  j["flat_baseline"] = detail::sweep_point_json(sr.flat_baseline);
  ordered_json pts = ordered_json::array();
  for (const auto& p : sr.points) pts.push_back(detail::sweep_point_json(p));
  j["points"] = pts;
  j["has_eps0_row"] = sr.has_eps0_row;
  j["eps0_matches_flat_bitwise"] = sr.eps0_matches_flat_bitwise;
  ordered_json fits = ordered_json::array();
  for (const auto& f : sr.fits)
    fits.push_back(ordered_json{{"name", f.name},
                                {"slope", detail::fin(f.slope, f.name.c_str())},
                                {"intercept", detail::fin(f.intercept, f.name.c_str())},
                                {"r2", detail::fin(f.r2, f.name.c_str())},
                                {"n_used", f.n_used}});
  j["fits"] = fits;
  j["slopes_ok"] = sr.slopes_ok;
  return j;
}

inline std::string sweep_to_csv(const SweepReport& sr) {
  std::ostringstream os;
  os.precision(17);
  os << "eps,eps_riemann,eps_theta,dev_linf,dev_l2,dev_h1,dev_h2_surrogate,"
        "b_linf,b_l2,b_grad_l2,b_h1,rb_lhs,rb_abs_residual,max_solver_residual\n";
  auto row = [&](const SweepPoint& p) {
    os << p.eps << ',' << p.eps_riemann << ',' << p.eps_theta << ',' << p.dev_linf << ','
       << p.dev_l2 << ',' << p.dev_h1 << ',' << p.dev_h2_surrogate << ',' << p.b_linf << ','
       << p.b_l2 << ',' << p.b_grad_l2 << ',' << p.b_h1 << ',' << p.rb_lhs << ','
       << p.rb_abs_residual << ',' << p.max_solver_residual << '\n';
  };
  row(sr.flat_baseline);
  for (const auto& p : sr.points) row(p);
  return os.str();
}

// -------------------------------------------------------------------------
// Mesh refinement study: observed orders for the quantities whose
// discretization class the other modules assert.

struct ConvergenceRow {
  double h = 0;  // requested resolution
  double mesh_h = 0;
  int n_tets = 0;
  int n_dofs = 0;
  bool skipped = false;
  std::string note;

  double probe_h1_error = 0;  // cubic harmonic Dirichlet probe, flat metric only
  double bochner_abs = 0;
  double confKphi_l2 = 0;
  double confKphi_dual = 0;
  double gauss_l2 = 0;
  double vd_lhs = 0;
  double max_solver_residual = 0;
};

struct OrderEstimate {
  std::string name;
  double order = 0;  // slope of log(error) against log(h)
  double r2 = 0;
  int n_used = 0;
};

struct ConvergenceReport {
  MetricFamily family = MetricFamily::Flat;
  double eps = 0;
  std::vector<ConvergenceRow> rows;
  std::vector<OrderEstimate> orders;
  bool orders_ok = false;

  const OrderEstimate* order(const std::string& name) const {
    for (const auto& o : orders)
      if (o.name == name) return &o;
    return nullptr;
  }
};

// Order thresholds the refinement verdict pins: quadratic elements give the
// probe second order, the identity residuals first order, the volume defect
// comes from a polyhedral boundary error of order two reduced by the radius
// solve to at least 1.5.
inline constexpr double kOrderProbeMin = 1.8;
inline constexpr double kOrderBochnerMin = 0.8;
inline constexpr double kOrderConfKphiMin = 0.8;
inline constexpr double kOrderVolumeDefectMin = 1.5;

inline ConvergenceReport convergence_study(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.levels.size() < 3)
    throw ConfigError("convergence study needs at least 3 refinement levels");
  std::vector<double> levels = cfg.levels;
  for (size_t i = 1; i < levels.size(); ++i)
    if (!(levels[i] < levels[i - 1]))
      throw ConfigError("refinement levels must be strictly decreasing in h");

  ConvergenceReport cr;
  cr.family = cfg.family;
  cr.eps = cfg.eps;
  SolveOptions opt = cfg.solve_options();
  MetricField metric = make_metric(cfg.family, cfg.eps, cfg.params);
  bool flat = metric.is_flat();

  for (double h : levels) {
    ConvergenceRow row;
    row.h = h;
    try {
      TetMesh mesh = generate_ball_mesh(h, cfg.radius);
      row.mesh_h = ::ballmap::mesh_h(mesh);
      row.n_tets = static_cast<int>(mesh.tets.size());
      // projected P2 dof count: vertices plus edges, roughly 8 vertices/tet
      double projected = 8.0 * static_cast<double>(mesh.vertices.size());
      if (projected > cfg.max_dofs) {
        row.skipped = true;
        row.note = "level skipped: projected dof count " + std::to_string(projected) +
                   " exceeds max_dofs";
        cr.rows.push_back(std::move(row));
        continue;
      }

      BoundaryGeometry bg = build_boundary_geometry(mesh, metric);
      row.gauss_l2 = gauss_equation_check(bg, metric, nullptr).l2.value;

      P2Space sp(mesh, metric);
      row.n_dofs = sp.n_dof;
      TraceNorms tn(sp, bg);

      if (flat) {
        // Dirichlet probe with a known harmonic cubic; quadratic elements
        // should approach it at second order in H1.
        auto probe = [](const Vec3& p) { return p.x() * p.x() * p.x() - 3.0 * p.x() * p.y() * p.y(); };
        auto dprobe = [](const Vec3& p) {
          return Vec3(3.0 * (p.x() * p.x() - p.y() * p.y()), -6.0 * p.x() * p.y(), 0.0);
        };
        VecX data(sp.n_dof);
        for (int i = 0; i < sp.n_dof; ++i) data[i] = probe(sp.dof_pos[i]);
        ScalarSolve ss =
            solve_dirichlet_scalar(sp, tn.stiffness(), VecX::Zero(sp.n_dof), data, opt);
        row.max_solver_residual = std::max(row.max_solver_residual, ss.info.residual);
        double err2 = 0;
        int nq = sp.nq();
        for (size_t t = 0; t < sp.mesh.tets.size(); ++t)
          for (int q = 0; q < nq; ++q) {
            Vec3 g = sp.eval_gradient(ss.u, static_cast<int>(t), sp.ref_lam[q]);
            Vec3 pos = sp.point(static_cast<int>(t), sp.ref_lam[q]);
            err2 += sp.rule.weights[q] * 6.0 * sp.tet_vol[t] * (g - dprobe(pos)).squaredNorm();
          }
        row.probe_h1_error = std::sqrt(err2);
      }

      CoordinateSet cs = solve_coordinates(tn, bg, identity_boundary_map(bg), opt);
      row.max_solver_residual = std::max(row.max_solver_residual, cs.solver_residual);
      row.bochner_abs =
          check_bochner_identity(tn, bg, cs.x[0], cs.flux[0], 0.5, opt).abs_residual;

      ConformalMap cm = uniformize(bg);
      UniformizationCertificate uc = certify_uniformization(cm, bg, tn, 0, opt);
      row.confKphi_l2 = uc.confKphi_l2;
      row.confKphi_dual = uc.confKphi_h_minus_half;
      row.max_solver_residual = std::max(row.max_solver_residual, uc.max_solver_residual);

      RadiusField rf = solve_radius_field(sp, bg, 0, 0, opt);
      row.max_solver_residual = std::max(row.max_solver_residual, rf.solver_residual);
      row.vd_lhs = volume_defect(sp, bg, rf, 0).lhs;
    } catch (const std::exception& e) {
      row.skipped = true;
      row.note = std::string("level skipped: ") + e.what();
    }
    cr.rows.push_back(std::move(row));
  }

  auto fit_order = [&](const std::string& name, auto&& get) {
    std::vector<double> hs, errs;
    for (const auto& row : cr.rows)
      if (!row.skipped) {
        hs.push_back(row.mesh_h);
        errs.push_back(get(row));
      }
    FitResult f = loglog_fit(name, hs, errs);
    cr.orders.push_back({name, f.slope, f.r2, f.n_used});
  };
  if (flat) fit_order("probe_h1", [](const ConvergenceRow& r) { return r.probe_h1_error; });
  fit_order("bochner", [](const ConvergenceRow& r) { return r.bochner_abs; });
  fit_order("confKphi_dual", [](const ConvergenceRow& r) { return r.confKphi_dual; });
  fit_order("confKphi_l2", [](const ConvergenceRow& r) { return r.confKphi_l2; });
  fit_order("gauss_l2", [](const ConvergenceRow& r) { return r.gauss_l2; });
  fit_order("volume_defect", [](const ConvergenceRow& r) { return r.vd_lhs; });

  auto meets = [&](const char* name, double min_order) {
    const OrderEstimate* o = cr.order(name);
    return o && o->n_used >= 2 && o->order >= min_order;
  };
  cr.orders_ok = meets("bochner", kOrderBochnerMin) &&
                 meets("confKphi_dual", kOrderConfKphiMin) &&
                 meets("volume_defect", kOrderVolumeDefectMin) &&
                 (!flat || meets("probe_h1", kOrderProbeMin));
  return cr;
}

inline ordered_json convergence_to_json(const ConvergenceReport& cr) {
  using detail::fin;
  ordered_json j;
  j["schema"] = kReportSchema;
  j["tool"] = {{"name", "ballmap"}, {"version", kVersion}};
  j["kind"] = "convergence_study";
  j["family"] = family_name(cr.family);
  j["eps"] = cr.eps;
  ordered_json rows = ordered_json::array();
  for (const auto& r : cr.rows) {
    ordered_json row{{"h", r.h},
                     {"mesh_h", r.mesh_h},
                     {"tets", r.n_tets},
                     {"dofs", r.n_dofs},
                     {"skipped", r.skipped},
                     {"note", r.note}};
    if (!r.skipped) {
      row["probe_h1_error"] = fin(r.probe_h1_error, "probe_h1_error");
      row["bochner_abs"] = fin(r.bochner_abs, "bochner_abs");
      row["confKphi_l2"] = fin(r.confKphi_l2, "confKphi_l2");
      row["confKphi_dual"] = fin(r.confKphi_dual, "confKphi_dual");
      row["gauss_l2"] = fin(r.gauss_l2, "gauss_l2");
      row["volume_defect"] = fin(r.vd_lhs, "volume_defect");
      row["max_solver_residual"] = fin(r.max_solver_residual, "max_solver_residual");
    }
    rows.push_back(std::move(row));
  }
  j["rows"] = rows;
  ordered_json orders = ordered_json::array();
  for (const auto& o : cr.orders)
    orders.push_back(ordered_json{{"name", o.name},
                                  {"order", fin(o.order, o.name.c_str())},
                                  {"r2", fin(o.r2, o.name.c_str())},
                                  {"n_used", o.n_used}});
  j["orders"] = orders;
  j["orders_ok"] = cr.orders_ok;
  return j;
}

}  // namespace ballmap
