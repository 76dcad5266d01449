#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ballmap/uniformize.hpp"

namespace ballmap {

inline double mesh_h(const TetMesh& mesh) {
  return mesh.target_h > 0 ? mesh.target_h : mesh.max_edge_length();
}

// Radius vector field: solves the connection Dirichlet problem with the
// vertex-normal field as boundary data and reports the norms the volume
// comparison consumes. The lowered covariant derivative is compared against
// the metric itself (the flat model has nabla X = g exactly).
struct RadiusField {
  std::array<VecX, 3> X;  // chart components

  double max_norm = 0;  // max |X|_g over dof nodes and quadrature points
  double grad_l2 = 0;
  double grad_minus_g_l2 = 0;
  double grad_minus_g_l6 = 0;
  double hess_l2 = 0;

  double energy_identity_rel = 0;    // a(X,X) vs boundary flux pairing
  double energy_quadrature_rel = 0;  // a(X,X) vs independently integrated |grad X|^2
  double solver_residual = 0;

  double energy_bound_lhs = 0, energy_bound_rhs = 0;
  bool max_principle_ok = false;  // max |X|_g <= 1 + 10 h^2
  bool energy_bound_ok = false;   // ||grad X|| <= 2 ||N||_{H^{1/2}} + 10 h^2 Lambda
};

inline RadiusField solve_radius_field(const P2Space& sp, const BoundaryGeometry& bg,
                                      double normal_trace_norm, double lambda,
                                      const SolveOptions& opt = {}) {
  int n = sp.n_dof;
  VecX bv = VecX::Zero(3 * std::ptrdiff_t(n));
  for (int c = 0; c < 3; ++c) {
    VecX comp(bg.surf.vertices.size());
    for (size_t v = 0; v < bg.surf.vertices.size(); ++v) comp[v] = bg.vertex_normal[v][c];
    bv.segment(std::ptrdiff_t(c) * n, n) = lift_surface_values(sp, bg.surf, comp);
  }

  ConnectionOperator op(sp);
  VectorSolve vs = solve_dirichlet_vector(sp, op, bv, opt);

  RadiusField rf;
  rf.solver_residual = vs.info.residual;
  for (int c = 0; c < 3; ++c) rf.X[c] = vs.v.segment(std::ptrdiff_t(c) * n, n);

  VecX r = op.apply(vs.v);
  double a = vs.v.dot(r);
  double pairing = 0;
  for (int c = 0; c < 3; ++c)
    for (int d : sp.boundary_dofs) {
      std::ptrdiff_t i = std::ptrdiff_t(c) * n + d;
      pairing += vs.v[i] * r[i];
    }
  rf.energy_identity_rel = std::abs(a - pairing) / std::max(std::abs(a), 1e-14);

  bool flat = sp.metric.is_flat();
  int nq = sp.nq();
  double g2 = 0, gmg2 = 0, gmg6 = 0, h2 = 0;
  for (size_t t = 0; t < sp.mesh.tets.size(); ++t) {
    Mat3 d2X[3];
    for (int c = 0; c < 3; ++c) d2X[c] = sp.eval_chart_hessian(rf.X[c], static_cast<int>(t));
    for (int q = 0; q < nq; ++q) {
      double phi[10];
      Vec3 gphi[10];
      P2Space::basis_values(sp.ref_lam[q], phi);
      sp.basis_gradients(static_cast<int>(t), sp.ref_lam[q], gphi);
      Vec3 Xv = Vec3::Zero();
      Mat3 dX = Mat3::Zero();  // dX(i,k) = d_i X^k
      for (int a10 = 0; a10 < 10; ++a10) {
        int d = sp.tet_dofs[t][a10];
        for (int k = 0; k < 3; ++k) {
          Xv[k] += rf.X[k][d] * phi[a10];
          dX.col(k) += rf.X[k][d] * gphi[a10];
        }
      }

      Mat3 g = Mat3::Identity(), ginv = Mat3::Identity();
      Christoffel gam{};
      std::array<Christoffel, 3> dgam{};
      double sdet = 1.0;
      if (!flat) {
        MetricJet J = sp.metric.jet(sp.point(static_cast<int>(t), sp.ref_lam[q]));
        g = J.g;
        ginv = J.g.inverse();
        sdet = std::sqrt(J.g.determinant());
        gam = christoffel(J);
        dgam = dchristoffel(J);
      } else {
        for (auto& m : gam) m.setZero();
        for (auto& dm : dgam)
          for (auto& m : dm) m.setZero();
      }
      double w = sp.rule.weights[q] * 6.0 * sp.tet_vol[t] * sdet;

      Mat3 T = dX;  // T(i,k) = cov deriv
      if (!flat)
        for (int i = 0; i < 3; ++i)
          for (int k = 0; k < 3; ++k)
            for (int m = 0; m < 3; ++m) T(i, k) += gam[k](i, m) * Xv[m];

      rf.max_norm = std::max(rf.max_norm, std::sqrt(Xv.dot(g * Xv)));
      Mat3 low = T * g;  // (i,j) = g_{jk} T(i,k) => T * g since g symmetric
      g2 += w * tensor2_gnorm2(ginv, low);
      Mat3 A = low - g;
      double a2 = tensor2_gnorm2(ginv, A);
      gmg2 += w * a2;
      gmg6 += w * a2 * a2 * a2;

      // S_k(i,j) = d_i T(j,k) + Gamma^k_im T(j,m) - Gamma^m_ij T(m,k)
      Mat3 S[3];
      for (int k = 0; k < 3; ++k) {
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) {
            double s = d2X[k](i, j);
            if (!flat)
              for (int m = 0; m < 3; ++m)
                s += dgam[i][k](j, m) * Xv[m] + gam[k](j, m) * dX(i, m) +
                     gam[k](i, m) * T(j, m) - gam[m](i, j) * T(m, k);
            S[k](i, j) = s;
          }
      }
      double h2loc = 0;
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) {
          if (flat && k != l) continue;
          h2loc += (k == l && flat ? 1.0 : g(k, l)) * (ginv * S[k] * ginv * S[l].transpose()).trace();
        }
      h2 += w * h2loc;
    }
  }
  rf.grad_l2 = std::sqrt(g2);
  rf.grad_minus_g_l2 = std::sqrt(gmg2);
  rf.grad_minus_g_l6 = std::pow(gmg6, 1.0 / 6.0);
  rf.hess_l2 = std::sqrt(h2);
  rf.energy_quadrature_rel = std::abs(g2 - a) / std::max(std::abs(a), 1e-14);

  for (int d = 0; d < n; ++d) {
    Vec3 Xv(rf.X[0][d], rf.X[1][d], rf.X[2][d]);
    Mat3 g = flat ? Mat3::Identity() : sp.metric.jet(sp.dof_pos[d]).g;
    rf.max_norm = std::max(rf.max_norm, std::sqrt(Xv.dot(g * Xv)));
  }

  double h = mesh_h(sp.mesh);
  rf.max_principle_ok = rf.max_norm <= 1.0 + 10 * h * h;
  rf.energy_bound_lhs = rf.grad_l2;
  rf.energy_bound_rhs = 2.0 * normal_trace_norm + 10 * h * h * lambda;
  rf.energy_bound_ok = rf.energy_bound_lhs <= rf.energy_bound_rhs;
  return rf;
}

// Volume comparison: | |boundary| - 3 |volume| | against
// sqrt(3 |volume|) ||grad X - g||_{L2} with an O(h^2) consistency slack.
struct VolumeDefect {
  double boundary_area = 0;
  double volume = 0;
  double lhs = 0;
  double rhs_core = 0;
  double slack = 0;
  bool inequality_ok = false;
};

inline VolumeDefect volume_defect(const P2Space& sp, const BoundaryGeometry& bg,
                                  const RadiusField& rf, double lambda) {
  VolumeDefect vd;
  vd.boundary_area = bg.total_area;
  vd.volume =
      lp_norm_volume(sp.mesh, sp.metric, [](int, const Eigen::Vector4d&, const Vec3&) {
        return 1.0;
      }, 1.0).value;
  vd.lhs = std::abs(vd.boundary_area - 3.0 * vd.volume);
  vd.rhs_core = std::sqrt(3.0 * vd.volume) * rf.grad_minus_g_l2;
  double h = mesh_h(sp.mesh);
  vd.slack = 10 * h * h * (1.0 + lambda);
  vd.inequality_ok = vd.lhs <= vd.rhs_core + vd.slack;
  return vd;
}

// Harmonic coordinates: three scalar Dirichlet solves against one stiffness
// form, boundary data the sphere coordinates composed with the boundary map
// (per-surface-vertex unit vectors, lifted piecewise linearly).
struct CoordinateSet {
  std::array<VecX, 3> x;
  std::array<VecX, 3> flux;          // variational flux functionals
  std::array<VecX, 3> normal_deriv;  // flux fields on boundary dofs

  double max_abs = 0;      // max nodal |x^i|
  double max_radius2 = 0;  // max nodal sum_i (x^i)^2
  double boundary_identity_dev = 0;  // max |sum (x^i)^2 - 1| at boundary vertex nodes
  double solver_residual = 0;
  bool max_principle_ok = false;  // max_abs <= 1 + 10 h^2
};

inline std::vector<Vec3> identity_boundary_map(const BoundaryGeometry& bg) {
  std::vector<Vec3> out(bg.surf.vertices.size());
  for (size_t v = 0; v < bg.surf.vertices.size(); ++v) out[v] = bg.surf.vertices[v].normalized();
  return out;
}

inline CoordinateSet solve_coordinates(const TraceNorms& tn, const BoundaryGeometry& bg,
                                       const std::vector<Vec3>& boundary_map,
                                       const SolveOptions& opt = {}) {
  const P2Space& sp = tn.space();
  CoordinateSet cs;
  for (int c = 0; c < 3; ++c) {
    VecX comp(boundary_map.size());
    for (size_t v = 0; v < boundary_map.size(); ++v) comp[v] = boundary_map[v][c];
    VecX data = lift_surface_values(sp, bg.surf, comp);
    ScalarSolve s = solve_dirichlet_scalar(sp, tn.stiffness(), VecX::Zero(sp.n_dof), data, opt);
    cs.x[c] = s.u;
    cs.flux[c] = s.flux;
    cs.normal_deriv[c] = flux_field(sp, tn.boundary_mass(), s.flux, opt);
    cs.solver_residual = std::max(cs.solver_residual, s.info.residual);
  }
  for (int d = 0; d < sp.n_dof; ++d) {
    double r2 = 0;
    for (int c = 0; c < 3; ++c) {
      cs.max_abs = std::max(cs.max_abs, std::abs(cs.x[c][d]));
      r2 += sqr(cs.x[c][d]);
    }
    cs.max_radius2 = std::max(cs.max_radius2, r2);
  }
  for (int d : sp.boundary_dofs) {
    if (d >= sp.n_vert) continue;  // the lift is linear, only vertex nodes carry unit data
    double r2 = sqr(cs.x[0][d]) + sqr(cs.x[1][d]) + sqr(cs.x[2][d]);
    cs.boundary_identity_dev = std::max(cs.boundary_identity_dev, std::abs(r2 - 1.0));
  }
  double h = mesh_h(sp.mesh);
  cs.max_principle_ok = cs.max_abs <= 1.0 + 10 * h * h;
  return cs;
}

// Gram deficit B = sum_i dx^i (x) dx^i - g at every quadrature point, with the
// Jacobian rows J(i,k) = d_k x^i kept for the downstream certificate and
// pushforward. nabla B needs only the covariant Hessians of the x^i since
// nabla g = 0.
struct GramDeficit {
  std::vector<Mat3> B;  // flattened t * nq + q, chart-lowered components
  std::vector<Mat3> J;

  double linf = 0;     // max g-orthonormal Frobenius norm
  double l2 = 0;
  double grad_l2 = 0;
  double h1 = 0;
  bool h2_excluded = true;  // the nabla^2 B term needs third derivatives of x^i
};

inline GramDeficit assemble_gram_deficit(const P2Space& sp, const CoordinateSet& cs) {
  bool flat = sp.metric.is_flat();
  int nq = sp.nq();
  GramDeficit gd;
  gd.B.resize(sp.mesh.tets.size() * nq);
  gd.J.resize(sp.mesh.tets.size() * nq);
  double l2 = 0, grad2 = 0;
  for (size_t t = 0; t < sp.mesh.tets.size(); ++t) {
    Mat3 d2x[3];
    for (int c = 0; c < 3; ++c) d2x[c] = sp.eval_chart_hessian(cs.x[c], static_cast<int>(t));
    for (int q = 0; q < nq; ++q) {
      Vec3 gphi[10];
      sp.basis_gradients(static_cast<int>(t), sp.ref_lam[q], gphi);
      Mat3 J;  // J(i,k) = d_k x^i
      for (int i = 0; i < 3; ++i) {
        Vec3 gr = Vec3::Zero();
        for (int a = 0; a < 10; ++a) gr += cs.x[i][sp.tet_dofs[t][a]] * gphi[a];
        J.row(i) = gr.transpose();
      }

      Mat3 g = Mat3::Identity(), ginv = Mat3::Identity();
      Christoffel gam{};
      double sdet = 1.0;
      if (!flat) {
        MetricJet Jm = sp.metric.jet(sp.point(static_cast<int>(t), sp.ref_lam[q]));
        g = Jm.g;
        ginv = Jm.g.inverse();
        sdet = std::sqrt(Jm.g.determinant());
        gam = christoffel(Jm);
      } else {
        for (auto& m : gam) m.setZero();
      }
      double w = sp.rule.weights[q] * 6.0 * sp.tet_vol[t] * sdet;

      Mat3 B = J.transpose() * J - g;
      size_t idx = t * nq + q;
      gd.B[idx] = B;
      gd.J[idx] = J;

      double b2 = tensor2_gnorm2(ginv, B);
      gd.linf = std::max(gd.linf, std::sqrt(b2));
      l2 += w * b2;

      // cov Hessians of the coordinates from the shared jet
      Mat3 H[3];
      for (int i = 0; i < 3; ++i) {
        H[i] = d2x[i];
        if (!flat)
          for (int k = 0; k < 3; ++k) H[i] -= gam[k] * J(i, k);
      }
      // dB[m](k,l) = sum_i H_i(m,k) J(i,l) + J(i,k) H_i(m,l)
      Mat3 dB[3];
      for (int m = 0; m < 3; ++m) {
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l) {
            double s = 0;
            for (int i = 0; i < 3; ++i) s += H[i](m, k) * J(i, l) + J(i, k) * H[i](m, l);
            dB[m](k, l) = s;
          }
      }
      double db2 = 0;
      for (int m = 0; m < 3; ++m)
        for (int m2 = 0; m2 < 3; ++m2) {
          if (flat && m != m2) continue;
          double gmm = flat ? 1.0 : ginv(m, m2);
          if (gmm == 0) continue;
          db2 += gmm * (ginv * dB[m] * ginv * dB[m2].transpose()).trace();
        }
      grad2 += w * db2;
    }
  }
  gd.l2 = std::sqrt(l2);
  gd.grad_l2 = std::sqrt(grad2);
  gd.h1 = std::sqrt(l2 + grad2);
  return gd;
}

// Diffeomorphism certificate: deficit below one (the spectral argument),
// orientation, image containment, and an injectivity sampling of mapped tet
// barycenters. Failure is a verdict with the first offending location, not an
// error.
struct DiffeoCertificate {
  bool certified = false;
  double max_b = 0;
  double min_det = 0;
  double max_radius2 = 0;
  double min_gram_eig = 0;  // generalized eigenvalue of the Gram against g
  int collisions = 0;
  std::string failure;  // empty when certified
};

inline DiffeoCertificate certify_diffeomorphism(const P2Space& sp, const CoordinateSet& cs,
                                                const GramDeficit& gd) {
  bool flat = sp.metric.is_flat();
  int nq = sp.nq();
  DiffeoCertificate cert;
  cert.max_b = gd.linf;
  cert.max_radius2 = cs.max_radius2;
  cert.min_det = std::numeric_limits<double>::infinity();
  cert.min_gram_eig = std::numeric_limits<double>::infinity();
  int det_tet = -1;

  static const Eigen::Vector4d extra_lam[5] = {
      {1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}, {0.25, 0.25, 0.25, 0.25}};

  for (size_t t = 0; t < sp.mesh.tets.size(); ++t) {
    for (int q = 0; q < nq; ++q) {
      size_t idx = t * nq + q;
      double det = gd.J[idx].determinant();
      if (det < cert.min_det) {
        cert.min_det = det;
        det_tet = static_cast<int>(t);
      }
      Mat3 gram = gd.B[idx];  // Gram = B + g
      if (flat) {
        gram += Mat3::Identity();
        Eigen::SelfAdjointEigenSolver<Mat3> es(gram, Eigen::EigenvaluesOnly);
        cert.min_gram_eig = std::min(cert.min_gram_eig, es.eigenvalues()[0]);
      } else {
        Mat3 g = sp.metric.jet(sp.point(static_cast<int>(t), sp.ref_lam[q])).g;
        gram += g;
        Eigen::GeneralizedSelfAdjointEigenSolver<Mat3> es(gram, g, Eigen::EigenvaluesOnly);
        cert.min_gram_eig = std::min(cert.min_gram_eig, es.eigenvalues()[0]);
      }
    }
    for (const auto& lam : extra_lam) {
      Mat3 J;
      Vec3 gphi[10];
      sp.basis_gradients(static_cast<int>(t), lam, gphi);
      for (int i = 0; i < 3; ++i) {
        Vec3 gr = Vec3::Zero();
        for (int a = 0; a < 10; ++a) gr += cs.x[i][sp.tet_dofs[t][a]] * gphi[a];
        J.row(i) = gr.transpose();
      }
      double det = J.determinant();
      if (det < cert.min_det) {
        cert.min_det = det;
        det_tet = static_cast<int>(t);
      }
    }
  }

  // injectivity sampling: mapped barycenters of tets with disjoint vertex
  // stars must stay separated
  const double tol = 1e-9;
  const Eigen::Vector4d bary(0.25, 0.25, 0.25, 0.25);
  std::vector<Vec3> img(sp.mesh.tets.size());
  for (size_t t = 0; t < sp.mesh.tets.size(); ++t)
    for (int c = 0; c < 3; ++c) img[t][c] = sp.eval_value(cs.x[c], static_cast<int>(t), bary);

  auto cell_key = [&](int64_t qx, int64_t qy, int64_t qz) {
    return uint64_t(qx) * 73856093ull ^ uint64_t(qy) * 19349663ull ^ uint64_t(qz) * 83492791ull;
  };
  std::unordered_map<uint64_t, std::vector<int>> grid;
  grid.reserve(img.size() * 2);
  std::vector<std::array<int64_t, 3>> cells(img.size());
  for (size_t t = 0; t < img.size(); ++t) {
    for (int c = 0; c < 3; ++c) cells[t][c] = int64_t(std::floor(img[t][c] / tol));
    grid[cell_key(cells[t][0], cells[t][1], cells[t][2])].push_back(static_cast<int>(t));
  }
  auto share_vertex = [&](int a, int b) {
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (sp.mesh.tets[a][i] == sp.mesh.tets[b][j]) return true;
    return false;
  };
  int first_pair[2] = {-1, -1};
  for (size_t t = 0; t < img.size(); ++t) {
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = grid.find(cell_key(cells[t][0] + dx, cells[t][1] + dy, cells[t][2] + dz));
          if (it == grid.end()) continue;
          for (int s : it->second) {
            if (s <= static_cast<int>(t)) continue;
            if ((img[s] - img[t]).norm() >= tol || share_vertex(static_cast<int>(t), s)) continue;
            if (cert.collisions++ == 0) {
              first_pair[0] = static_cast<int>(t);
              first_pair[1] = s;
            }
          }
        }
  }

  double h = mesh_h(sp.mesh);
  if (cert.max_b >= 1.0)
    cert.failure = "gram deficit reaches " + std::to_string(cert.max_b) + " (needs < 1)";
  else if (cert.min_det <= 0.0)
    cert.failure = "orientation: jacobian determinant " + std::to_string(cert.min_det) +
                   " in tet " + std::to_string(det_tet);
  else if (cert.max_radius2 > 1.0 + 10 * h * h)
    cert.failure = "image containment: max |x|^2 = " + std::to_string(cert.max_radius2);
  else if (cert.collisions > 0)
    cert.failure = "injectivity sampling: " + std::to_string(cert.collisions) +
                   " barycenter collisions (first pair tets " + std::to_string(first_pair[0]) +
                   ", " + std::to_string(first_pair[1]) + ")";
  cert.certified = cert.failure.empty();
  return cert;
}

// Metric in harmonic coordinates: inverse of the raised Gram
// G^{ab} = g^{kl} d_k x^a d_l x^b, with deviation norms from the identity.
// Component derivative norms treat the coordinate components as chart scalars
// (gradients and covariant Hessians contracted with g); the true H^2 content
// would need third derivatives of x^i, which quadratic elements do not carry,
// so the surrogate is flagged.
struct Pushforward {
  double dev_linf = 0;
  double dev_l2 = 0;
  double dev_h1 = 0;
  double h2_surrogate = 0;
  double transform_residual_max = 0;  // (g^x - I) + J^{-T} B J^{-1}, exact algebra
  double naive_residual_max = 0;      // (g^x - I) + B, order |B|^2
  bool h2_excludes_third_derivatives = true;
};

inline Pushforward pushforward_metric(const P2Space& sp, const CoordinateSet& cs,
                                      const GramDeficit& gd) {
  bool flat = sp.metric.is_flat();
  int nq = sp.nq();
  Pushforward pf;
  double l2 = 0, grad2 = 0, hess2 = 0;
  for (size_t t = 0; t < sp.mesh.tets.size(); ++t) {
    Mat3 d2x[3];
    for (int c = 0; c < 3; ++c) d2x[c] = sp.eval_chart_hessian(cs.x[c], static_cast<int>(t));
    for (int q = 0; q < nq; ++q) {
      size_t idx = t * nq + q;
      const Mat3& J = gd.J[idx];

      Mat3 g = Mat3::Identity(), ginv = Mat3::Identity();
      Mat3 dginv[3];
      Christoffel gam{};
      double sdet = 1.0;
      MetricJet Jm;
      if (!flat) {
        Jm = sp.metric.jet(sp.point(static_cast<int>(t), sp.ref_lam[q]));
        g = Jm.g;
        ginv = Jm.g.inverse();
        sdet = std::sqrt(Jm.g.determinant());
        gam = christoffel(Jm);
        for (int m = 0; m < 3; ++m) dginv[m] = -ginv * Jm.dg[m] * ginv;
      } else {
        for (auto& m : gam) m.setZero();
        for (auto& m : dginv) m.setZero();
      }
      double w = sp.rule.weights[q] * 6.0 * sp.tet_vol[t] * sdet;

      Mat3 G = J * ginv * J.transpose();
      double detG = G.determinant();
      if (!(detG > 1e-12))
        throw SolverError("pushforward_metric: singular coordinate Gram", detG);
      Mat3 gx = G.inverse();
      Mat3 dev = gx - Mat3::Identity();

      double fro2 = dev.squaredNorm();
      pf.dev_linf = std::max(pf.dev_linf, std::sqrt(fro2));
      l2 += w * fro2;

      Mat3 Jinv = J.inverse();
      Mat3 exact = dev + Jinv.transpose() * gd.B[idx] * Jinv;
      pf.transform_residual_max = std::max(pf.transform_residual_max, exact.norm());
      Mat3 naive = dev + gd.B[idx];
      pf.naive_residual_max = std::max(pf.naive_residual_max, naive.norm());

      // dG[m] = d_m G^{ab}; third derivatives of x vanish for quadratics
      Mat3 dG[3], dgx[3];
      for (int m = 0; m < 3; ++m) {
        Mat3 Hm;  // Hm(i,k) = d_m d_k x^i
        for (int i = 0; i < 3; ++i)
          for (int k = 0; k < 3; ++k) Hm(i, k) = d2x[i](m, k);
        dG[m] = Hm * ginv * J.transpose() + J * ginv * Hm.transpose();
        if (!flat) dG[m] += J * dginv[m] * J.transpose();
        dgx[m] = -gx * dG[m] * gx;
      }
      double g2loc = 0;
      for (int m = 0; m < 3; ++m)
        for (int m2 = 0; m2 < 3; ++m2) {
          if (flat && m != m2) continue;
          double gmm = flat ? 1.0 : ginv(m, m2);
          if (gmm == 0) continue;
          g2loc += gmm * (dgx[m].array() * dgx[m2].array()).sum();
        }
      grad2 += w * g2loc;

      // second chart derivatives of G (minus the vanished third-derivative
      // terms), then covariant Hessians of the deviation components
      Mat3 hessdev[3][3];
      for (int m = 0; m < 3; ++m)
        for (int p = 0; p < 3; ++p) {
          Mat3 Hm, Hp;
          for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k) {
              Hm(i, k) = d2x[i](m, k);
              Hp(i, k) = d2x[i](p, k);
            }
          Mat3 d2G = Hm * ginv * Hp.transpose() + Hp * ginv * Hm.transpose();
          if (!flat) {
            Mat3 dd = -dginv[p] * Jm.dg[m] * ginv - ginv * Jm.d2g[p][m] * ginv -
                      ginv * Jm.dg[m] * dginv[p];
            d2G += J * dd * J.transpose() + Hm * dginv[p] * J.transpose() +
                   J * dginv[p] * Hm.transpose() + Hp * dginv[m] * J.transpose() +
                   J * dginv[m] * Hp.transpose();
          }
          Mat3 d2gx = -gx * d2G * gx + gx * dG[p] * gx * dG[m] * gx + gx * dG[m] * gx * dG[p] * gx;
          hessdev[m][p] = d2gx;
        }
      // covariant correction per component: (nabla^2 s)_{mp} = d2 s - Gamma^k_{mp} d_k s
      double h2loc = 0;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          Mat3 Hs;
          for (int m = 0; m < 3; ++m)
            for (int p = 0; p < 3; ++p) {
              double v = hessdev[m][p](a, b);
              if (!flat)
                for (int k = 0; k < 3; ++k) v -= gam[k](m, p) * dgx[k](a, b);
              Hs(m, p) = v;
            }
          h2loc += (ginv * Hs * ginv * Hs.transpose()).trace();
        }
      hess2 += w * h2loc;
    }
  }
  pf.dev_l2 = std::sqrt(l2);
  pf.dev_h1 = std::sqrt(l2 + grad2);
  pf.h2_surrogate = std::sqrt(l2 + grad2 + hess2);
  return pf;
}

}  // namespace ballmap
