#pragma once

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ballmap/norms.hpp"

namespace ballmap {

// Conformal map of the boundary surface onto the unit sphere together with
// the per-vertex conformal factor and the quality metrics the certification
// step reports.
struct ConformalMap {
  std::vector<Vec3> image;  // per surface vertex, unit length
  std::vector<double> phi;  // per surface vertex, positive

  int steps = 0;
  double final_update = 0;
  double energy_initial = 0;
  double energy_final = 0;
  double max_angle_distortion = 0;  // comparison angles vs image angles, recorded
  double ls_factor_deviation = 0;   // intra-triangle conformal scaling spread
  double area_identity_rel = 0;     // |sum phi^2 * image dual - gbar area| / gbar area
};

struct UniformizeOptions {
  double dt = 0.25;
  int max_steps = 500;
  double update_tol = 1e-9;
  int divergence_window = 20;
};

namespace detail {

// Mixed Voronoi dual areas of the image polyhedron (chordal edge lengths).
inline std::vector<double> chordal_dual_areas(const SurfaceMesh& surf,
                                              const std::vector<Vec3>& pos) {
  std::vector<std::array<double, 3>> lengths(surf.tris.size());
  for (size_t f = 0; f < surf.tris.size(); ++f) {
    const auto& T = surf.tris[f];
    for (int i = 0; i < 3; ++i)
      lengths[f][i] = (pos[T[(i + 1) % 3]] - pos[T[(i + 2) % 3]]).norm();
  }
  return mixed_vertex_areas(surf.tris, lengths, static_cast<int>(surf.vertices.size()));
}

inline std::array<double, 3> triangle_angles(const std::array<double, 3>& l) {
  std::array<double, 3> ang;
  for (int i = 0; i < 3; ++i) {
    double a = l[(i + 1) % 3], b = l[(i + 2) % 3], c = l[i];
    double cosv = std::clamp((a * a + b * b - c * c) / (2 * a * b), -1.0, 1.0);
    ang[i] = std::acos(cosv);
  }
  return ang;  // ang[i] at local vertex i (opposite edge i)
}

}  // namespace detail

// Conformalized mean-curvature-type flow onto the sphere: vertex images start
// from the chart positions projected to S^2 and evolve by implicit steps of
// the fixed boundary-metric stiffness form against the mass matrix of the
// current image, with mass recentering and projection back to S^2 after each
// step. Steps that would raise the fixed-stiffness energy are rejected and
// retried with a halved step; the energy is therefore non-increasing across
// accepted steps by construction. The conformal factor compares the intrinsic
// dual area of each vertex to its image dual area: conformal maps scale areas
// by phi^2.
inline ConformalMap uniformize(const BoundaryGeometry& bg, const UniformizeOptions& opt = {}) {
  const SurfaceMesh& surf = bg.surf;
  if (surf.euler_characteristic() != 2)
    throw TopologyError("uniformize: surface is not a topological sphere");

  int nv = static_cast<int>(surf.vertices.size());
  SurfaceOperators ops = build_surface_p1(bg);
  const SparseMat& L = ops.stiffness;

  std::vector<Vec3> pos(nv);
  for (int v = 0; v < nv; ++v) {
    double n = surf.vertices[v].norm();
    if (n < 1e-14) throw MeshError("uniformize: surface vertex at the chart origin");
    pos[v] = surf.vertices[v] / n;
  }

  auto energy_of = [&](const std::vector<Vec3>& p) {
    double e = 0;
    for (int c = 0; c < 3; ++c) {
      VecX x(nv);
      for (int v = 0; v < nv; ++v) x[v] = p[v][c];
      e += x.dot(L * x);
    }
    return e;
  };

  auto assemble_image_mass = [&](const std::vector<Vec3>& p) {
    std::vector<Triplet> tm;
    tm.reserve(surf.tris.size() * 9);
    for (const auto& T : surf.tris) {
      double area = 0.5 * (p[T[1]] - p[T[0]]).cross(p[T[2]] - p[T[0]]).norm();
      double off = area / 12.0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) tm.emplace_back(T[i], T[j], i == j ? 2 * off : off);
    }
    SparseMat M(nv, nv);
    M.setFromTriplets(tm.begin(), tm.end());
    return M;
  };

  ConformalMap cm;
  cm.energy_initial = energy_of(pos);
  double energy = cm.energy_initial;
  double dt = opt.dt;
  int consecutive_accepts = 0, growth_streak = 0;
  double prev_update = 0;

  for (cm.steps = 0; cm.steps < opt.max_steps; ++cm.steps) {
    SparseMat M = assemble_image_mass(pos);
    SparseMat A = M + dt * L;
    Eigen::SimplicialLDLT<SparseMat> solver(A);
    if (solver.info() != Eigen::Success)
      throw SolverError("uniformize: implicit step factorization failed", -1.0);

    std::vector<Vec3> next(nv);
    for (int c = 0; c < 3; ++c) {
      VecX x(nv);
      for (int v = 0; v < nv; ++v) x[v] = pos[v][c];
      VecX y = solver.solve(M * x);
      for (int v = 0; v < nv; ++v) next[v][c] = y[v];
    }

    VecX lumped = M * VecX::Ones(nv);
    Vec3 centroid = Vec3::Zero();
    double total = lumped.sum();
    for (int v = 0; v < nv; ++v) centroid += lumped[v] * next[v];
    centroid /= total;
    for (int v = 0; v < nv; ++v) {
      next[v] -= centroid;
      double n = next[v].norm();
      if (n < 1e-14) throw SolverError("uniformize: image vertex collapsed to the center", n);
      next[v] /= n;
    }

    double enext = energy_of(next);
    if (enext > energy) {
      dt *= 0.5;
      consecutive_accepts = 0;
      if (dt < 1e-13) break;  // cannot descend further; treat as converged
      --cm.steps;             // the rejected trial does not count as a step
      continue;
    }

    double update = 0;
    for (int v = 0; v < nv; ++v) update = std::max(update, (next[v] - pos[v]).norm());
    pos.swap(next);
    energy = enext;

    growth_streak = (cm.steps > 0 && update > prev_update) ? growth_streak + 1 : 0;
    if (growth_streak >= opt.divergence_window)
      throw SolverError("uniformize: flow divergence", update);
    prev_update = update;
    cm.final_update = update;

    if (++consecutive_accepts >= 5) {
      dt *= 1.2;
      consecutive_accepts = 0;
    }
    if (update < opt.update_tol) {
      ++cm.steps;
      break;
    }
  }
  cm.energy_final = energy;
  cm.image = pos;

  // conformal factor from dual-area ratios
  std::vector<double> image_dual = detail::chordal_dual_areas(surf, pos);
  cm.phi.resize(nv);
  double gbar_total = 0, recovered = 0;
  for (int v = 0; v < nv; ++v) {
    if (image_dual[v] <= 0)
      throw SolverError("uniformize: degenerate image dual area", image_dual[v]);
    cm.phi[v] = std::sqrt(bg.vertex_dual_area[v] / image_dual[v]);
    gbar_total += bg.vertex_dual_area[v];
    recovered += cm.phi[v] * cm.phi[v] * image_dual[v];
  }
  cm.area_identity_rel = std::abs(recovered - gbar_total) / gbar_total;

  // recorded quality metrics: angle distortion against the comparison
  // triangles, and the spread of per-edge scalings around the least-squares
  // conformal factor of each triangle
  for (size_t f = 0; f < surf.tris.size(); ++f) {
    const auto& T = surf.tris[f];
    std::array<double, 3> limg;
    for (int i = 0; i < 3; ++i) limg[i] = (pos[T[(i + 1) % 3]] - pos[T[(i + 2) % 3]]).norm();
    auto a0 = detail::triangle_angles(bg.face_edge_len[f]);
    auto a1 = detail::triangle_angles(limg);
    double num = 0, den = 0;
    for (int i = 0; i < 3; ++i) {
      cm.max_angle_distortion = std::max(cm.max_angle_distortion, std::abs(a1[i] - a0[i]));
      num += limg[i] * bg.face_edge_len[f][i];
      den += sqr(bg.face_edge_len[f][i]);
    }
    double c = num / den;
    for (int i = 0; i < 3; ++i)
      cm.ls_factor_deviation =
          std::max(cm.ls_factor_deviation, std::abs(limg[i] / (c * bg.face_edge_len[f][i]) - 1.0));
  }
  return cm;
}

// Residual of the conformal-factor equation: the surface Laplacian of log phi
// should balance -(K - 1) + (phi^{-2} - 1). Returned as a vertex field (mass
// solve against the weak residual functional) plus its boundary L2 norm.
struct ConformalResidual {
  VecX field;
  double l2 = 0;
  double solver_residual = 0;
};

inline ConformalResidual conformal_factor_residual(const SurfaceOperators& ops,
                                                   const std::vector<double>& vertex_gauss,
                                                   const std::vector<double>& phi,
                                                   const SolveOptions& opt = {}) {
  int nv = static_cast<int>(phi.size());
  VecX logphi(nv), rhs(nv);
  for (int v = 0; v < nv; ++v) {
    logphi[v] = std::log(phi[v]);
    rhs[v] = (vertex_gauss[v] - 1.0) - (1.0 / sqr(phi[v]) - 1.0);
  }
  VecX r = -(ops.stiffness * logphi) + ops.mass * rhs;
  VecX inv_diag = ops.mass.diagonal().cwiseInverse();
  auto apply = [&](const VecX& x) { return VecX(ops.mass * x); };
  ConformalResidual out;
  PcgInfo info;
  out.field = pcg(nv, apply, r, inv_diag, opt, &info);
  out.l2 = std::sqrt(std::max(0.0, out.field.dot(r)));
  out.solver_residual = info.residual;
  return out;
}

// Pointwise check of the curvature decomposition on the boundary: the
// intrinsic (angle-defect) Gauss curvature against
//   1 - G_NN + (tr theta - 2) + (tr theta - 2)^2 / 4 - |theta_hat|^2 / 2,
// with G the Einstein tensor of the chart metric. Reports the residual in
// boundary L2 and in the dual trace norm, plus the area means of both sides.
struct GaussEquationCheck {
  NormReport l2;
  NormReport h_minus_half;
  double mean_intrinsic = 0;
  double mean_extrinsic = 0;
};

// tn may be null: the H^-1/2 functional norm is skipped (zero report), which
// keeps pure-boundary refinement studies free of any volume assembly.
inline GaussEquationCheck gauss_equation_check(const BoundaryGeometry& bg,
                                               const MetricField& metric, const TraceNorms* tn,
                                               const SolveOptions& opt = {}) {
  int nq = bg.nq();
  std::vector<double> res(bg.qp_pos.size());
  GaussEquationCheck out;
  double area = 0;
  for (size_t f = 0; f < bg.surf.tris.size(); ++f) {
    const auto& T = bg.surf.tris[f];
    for (int q = 0; q < nq; ++q) {
      int idx = bg.qp(static_cast<int>(f), q);
      double a = bg.rule.points[q][0], b = bg.rule.points[q][1];
      double k_pl = (1 - a - b) * bg.vertex_gauss[T[0]] + a * bg.vertex_gauss[T[1]] +
                    b * bg.vertex_gauss[T[2]];
      auto cs = curvature(metric, bg.qp_pos[idx]);
      const Vec3& N = bg.qp_normal[idx];
      double gnn = N.dot(cs.einstein * N);
      double s = bg.qp_trtheta[idx] - 2.0;
      Mat2 th = bg.qp_gbar_inv[idx] * bg.qp_theta_hat[idx];
      double that2 = (th * th).trace();
      double rhs = 1.0 - gnn + s + 0.25 * s * s - 0.5 * that2;
      res[idx] = k_pl - rhs;
      out.mean_intrinsic += bg.qp_meas[idx] * k_pl;
      out.mean_extrinsic += bg.qp_meas[idx] * rhs;
      area += bg.qp_meas[idx];
    }
  }
  out.mean_intrinsic /= area;
  out.mean_extrinsic /= area;
  out.l2 = lp_norm_boundary(bg, [&](int f, int q, const Vec3&) { return res[bg.qp(f, q)]; }, 2.0);
  out.l2.name = "GaussResidual:L2(dSigma)";
  if (tn) {
    PcgInfo pinfo;
    VecX proj =
        tn->project_boundary_samples([&](int f, int q) { return res[bg.qp(f, q)]; }, &pinfo, opt);
    out.h_minus_half = tn->h_minus_half(proj, nullptr, opt);
    out.h_minus_half.solver_residual = std::max(out.h_minus_half.solver_residual, pinfo.residual);
  }
  out.h_minus_half.name = "GaussResidual:H-1/2(dSigma)";
  return out;
}

// Certificate of the uniformization output: smallness of phi - 1 in max and
// trace norms, of the surface gradient of log phi in the trace norm, the
// conformal-factor equation residual, and the bookkeeping identities (total
// curvature, area accounting). Ratios against a supplied smallness reference
// (curvature + shape-operator deviation) are recorded when available.
struct UniformizationCertificate {
  double phi_minus_one_linf = 0;
  double phi_minus_one_h_half = 0;
  double grad_log_phi_h_half = 0;
  double confKphi_l2 = 0;
  double confKphi_h_minus_half = 0;
  double total_curvature = 0;
  double area_identity_rel = 0;
  double max_angle_distortion = 0;
  double ratio_vs_smallness = 0;
  double max_solver_residual = 0;
};

inline UniformizationCertificate certify_uniformization(const ConformalMap& cm,
                                                        const BoundaryGeometry& bg,
                                                        const TraceNorms& tn,
                                                        double smallness_reference = 0,
                                                        const SolveOptions& opt = {}) {
  const P2Space& sp = tn.space();
  int nv = static_cast<int>(bg.surf.vertices.size());
  UniformizationCertificate cert;
  cert.area_identity_rel = cm.area_identity_rel;
  cert.max_angle_distortion = cm.max_angle_distortion;
  for (double d : bg.vertex_defect) cert.total_curvature += d;

  VecX phim1(nv), logphi(nv);
  for (int v = 0; v < nv; ++v) {
    cert.phi_minus_one_linf = std::max(cert.phi_minus_one_linf, std::abs(cm.phi[v] - 1.0));
    phim1[v] = cm.phi[v] - 1.0;
    logphi[v] = std::log(cm.phi[v]);
  }
  NormReport ph = tn.h_half(lift_surface_values(sp, bg.surf, phim1), nullptr, opt);
  cert.phi_minus_one_h_half = ph.value;
  cert.max_solver_residual = std::max(cert.max_solver_residual, ph.solver_residual);

  // surface gradient of log phi, constant parameter gradient per face, chart
  // components raised with the boundary metric at each quadrature point
  std::array<VecX, 3> gdata;
  {
    int nq = bg.nq();
    std::vector<Vec3> gsample(bg.qp_pos.size());
    for (size_t f = 0; f < bg.surf.tris.size(); ++f) {
      Vec2 df = p1_face_gradient(bg, static_cast<int>(f), logphi);
      for (int q = 0; q < nq; ++q) {
        int idx = bg.qp(static_cast<int>(f), q);
        Vec2 raised = bg.qp_gbar_inv[idx] * df;
        gsample[idx] = raised[0] * bg.face_t1[f] + raised[1] * bg.face_t2[f];
      }
    }
    for (int c = 0; c < 3; ++c) {
      PcgInfo info;
      gdata[c] = tn.project_boundary_samples(
          [&](int f, int q) { return gsample[bg.qp(f, q)][c]; }, &info, opt);
      cert.max_solver_residual = std::max(cert.max_solver_residual, info.residual);
    }
  }
  NormReport gh = tn.h_half_vector(gdata, Variance::Contravariant, nullptr, opt);
  cert.grad_log_phi_h_half = gh.value;
  cert.max_solver_residual = std::max(cert.max_solver_residual, gh.solver_residual);

  SurfaceOperators ops = build_surface_p1(bg);
  ConformalResidual cr = conformal_factor_residual(ops, bg.vertex_gauss, cm.phi, opt);
  cert.confKphi_l2 = cr.l2;
  cert.max_solver_residual = std::max(cert.max_solver_residual, cr.solver_residual);
  NormReport dual = tn.h_minus_half(lift_surface_values(sp, bg.surf, cr.field), nullptr, opt);
  cert.confKphi_h_minus_half = dual.value;
  cert.max_solver_residual = std::max(cert.max_solver_residual, dual.solver_residual);

  if (smallness_reference > 0)
    cert.ratio_vs_smallness =
        (cert.phi_minus_one_linf + cert.phi_minus_one_h_half + cert.grad_log_phi_h_half) /
        smallness_reference;
  return cert;
}

}  // namespace ballmap
