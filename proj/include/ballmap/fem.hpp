#pragma once

// Quadratic Lagrange elements on tet meshes with a variable analytic metric:
// scalar Laplace-Beltrami and mass forms, a vector connection-Laplacian
// operator, Dirichlet solves by elimination with a Jacobi-preconditioned CG,
// and variational boundary fluxes.

#include <functional>
#include <map>
#include <vector>

#include "ballmap/boundary.hpp"
#include "ballmap/common.hpp"
#include "ballmap/mesh.hpp"
#include "ballmap/metric.hpp"
#include "ballmap/quadrature.hpp"

namespace ballmap {

struct SolveOptions {
  double tol = 1e-10;        // relative residual target
  int max_iter_factor = 20;  // iteration cap = factor * sqrt(n)
  std::function<void(VecX&)> project;  // optional range projection (singular systems)
  const VecX* initial_guess = nullptr;
};

struct PcgInfo {
  int iterations = 0;
  double residual = 0;  // final relative residual
};

// Conjugate gradients with diagonal preconditioning. `apply` must be SPD on
// the subspace the projection maps into. inv_diag entries of 0 mask dofs out.
template <class Op>
VecX pcg(Eigen::Index n, const Op& apply, const VecX& b, const VecX& inv_diag,
         const SolveOptions& opt = {}, PcgInfo* info = nullptr) {
  VecX x = opt.initial_guess ? *opt.initial_guess : VecX(VecX::Zero(n));
  VecX bp = b;
  if (opt.project) opt.project(bp);
  double bnorm = bp.norm();
  if (bnorm == 0) {
    if (info) *info = {0, 0.0};
    return VecX::Zero(n);
  }
  VecX r = bp - apply(x);
  if (opt.project) opt.project(r);
  VecX z = inv_diag.cwiseProduct(r);
  if (opt.project) opt.project(z);
  VecX p = z;
  double rz = r.dot(z);
  int cap = std::max(50, int(opt.max_iter_factor * std::sqrt(double(n))));
  for (int it = 1; it <= cap; ++it) {
    VecX q = apply(p);
    double pq = p.dot(q);
    if (!(pq > 0)) throw SolverError("pcg: operator not positive definite", r.norm() / bnorm);
    double alpha = rz / pq;
    x += alpha * p;
    r -= alpha * q;
    if (opt.project) opt.project(r);
    double rel = r.norm() / bnorm;
    if (rel <= opt.tol) {
      if (info) *info = {it, rel};
      return x;
    }
    VecX znew = inv_diag.cwiseProduct(r);
    if (opt.project) opt.project(znew);
    double rznew = r.dot(znew);
    p = znew + (rznew / rz) * p;
    rz = rznew;
  }
  throw SolverError("pcg: iteration cap reached", r.norm() / bnorm);
}

// Quadratic Lagrange space: dofs at vertices and edge midpoints.
class P2Space {
 public:
  static constexpr int kEdgeV[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};

  const TetMesh& mesh;
  const MetricField& metric;
  QuadratureRule rule;

  int n_vert = 0, n_edge = 0, n_dof = 0;
  std::vector<std::array<int, 10>> tet_dofs;        // 4 vertex dofs then 6 edge dofs
  std::vector<std::array<int, 2>> edge_verts;       // endpoints of edge dof (vertex ids)
  std::vector<Vec3> dof_pos;
  std::vector<char> dof_boundary;
  std::vector<int> boundary_dofs, interior_dofs;
  std::vector<std::array<Vec3, 4>> tet_dlam;        // barycentric gradients
  std::vector<double> tet_vol;
  std::vector<Eigen::Vector4d> ref_lam;             // barycentric coords of rule points

  P2Space(const TetMesh& mesh_, const MetricField& metric_, int quad_degree = 4)
      : mesh(mesh_), metric(metric_), rule(QuadratureRule::tetrahedron(quad_degree)) {
    n_vert = static_cast<int>(mesh.vertices.size());
    std::map<uint64_t, int> edge_ids;
    tet_dofs.resize(mesh.tets.size());
    for (size_t t = 0; t < mesh.tets.size(); ++t) {
      const auto& T = mesh.tets[t];
      for (int i = 0; i < 4; ++i) tet_dofs[t][i] = T[i];
      for (int e = 0; e < 6; ++e) {
        int a = T[kEdgeV[e][0]], b = T[kEdgeV[e][1]];
        auto [it, inserted] = edge_ids.try_emplace(edge_key(a, b), n_edge);
        if (inserted) {
          edge_verts.push_back({std::min(a, b), std::max(a, b)});
          ++n_edge;
        }
        tet_dofs[t][4 + e] = n_vert + it->second;
      }
    }
    n_dof = n_vert + n_edge;

    dof_pos.resize(n_dof);
    for (int v = 0; v < n_vert; ++v) dof_pos[v] = mesh.vertices[v];
    for (int e = 0; e < n_edge; ++e)
      dof_pos[n_vert + e] = 0.5 * (mesh.vertices[edge_verts[e][0]] + mesh.vertices[edge_verts[e][1]]);

    dof_boundary.assign(n_dof, 0);
    for (int v = 0; v < n_vert; ++v) dof_boundary[v] = mesh.vertex_on_boundary[v];
    for (const auto& F : mesh.boundary_faces)
      for (int e = 0; e < 3; ++e) {
        auto it = edge_ids.find(edge_key(F[e], F[(e + 1) % 3]));
        if (it == edge_ids.end()) throw MeshError("boundary face edge missing from mesh");
        dof_boundary[n_vert + it->second] = 1;
      }
    for (int d = 0; d < n_dof; ++d) (dof_boundary[d] ? boundary_dofs : interior_dofs).push_back(d);

    tet_dlam.resize(mesh.tets.size());
    tet_vol.resize(mesh.tets.size());
    for (size_t t = 0; t < mesh.tets.size(); ++t) {
      const auto& T = mesh.tets[t];
      Mat3 D;
      for (int c = 0; c < 3; ++c) D.col(c) = mesh.vertices[T[c + 1]] - mesh.vertices[T[0]];
      Mat3 Dinv = D.inverse();
      for (int i = 0; i < 3; ++i) tet_dlam[t][i + 1] = Dinv.row(i);
      tet_dlam[t][0] = -(tet_dlam[t][1] + tet_dlam[t][2] + tet_dlam[t][3]);
      tet_vol[t] = D.determinant() / 6.0;
    }

    ref_lam.reserve(rule.points.size());
    for (const auto& p : rule.points)
      ref_lam.emplace_back(1.0 - p[0] - p[1] - p[2], p[0], p[1], p[2]);
  }

  int nq() const { return static_cast<int>(rule.points.size()); }

  Vec3 point(int tet, const Eigen::Vector4d& lam) const {
    const auto& T = mesh.tets[tet];
    return lam[0] * mesh.vertices[T[0]] + lam[1] * mesh.vertices[T[1]] +
           lam[2] * mesh.vertices[T[2]] + lam[3] * mesh.vertices[T[3]];
  }

  static void basis_values(const Eigen::Vector4d& lam, double out[10]) {
    for (int i = 0; i < 4; ++i) out[i] = lam[i] * (2 * lam[i] - 1);
    for (int e = 0; e < 6; ++e) out[4 + e] = 4 * lam[kEdgeV[e][0]] * lam[kEdgeV[e][1]];
  }

  void basis_gradients(int tet, const Eigen::Vector4d& lam, Vec3 out[10]) const {
    const auto& dl = tet_dlam[tet];
    for (int i = 0; i < 4; ++i) out[i] = (4 * lam[i] - 1) * dl[i];
    for (int e = 0; e < 6; ++e) {
      int i = kEdgeV[e][0], j = kEdgeV[e][1];
      out[4 + e] = 4 * (lam[i] * dl[j] + lam[j] * dl[i]);
    }
  }

  // Chart Hessians are constant per tet for quadratic elements.
  void basis_hessians(int tet, Mat3 out[10]) const {
    const auto& dl = tet_dlam[tet];
    for (int i = 0; i < 4; ++i) out[i] = 4 * dl[i] * dl[i].transpose();
    for (int e = 0; e < 6; ++e) {
      int i = kEdgeV[e][0], j = kEdgeV[e][1];
      out[4 + e] = 4 * (dl[i] * dl[j].transpose() + dl[j] * dl[i].transpose());
    }
  }

  double eval_value(const VecX& u, int tet, const Eigen::Vector4d& lam) const {
    double phi[10];
    basis_values(lam, phi);
    double s = 0;
    for (int a = 0; a < 10; ++a) s += u[tet_dofs[tet][a]] * phi[a];
    return s;
  }

  Vec3 eval_gradient(const VecX& u, int tet, const Eigen::Vector4d& lam) const {
    Vec3 gphi[10];
    basis_gradients(tet, lam, gphi);
    Vec3 s = Vec3::Zero();
    for (int a = 0; a < 10; ++a) s += u[tet_dofs[tet][a]] * gphi[a];
    return s;
  }

  Mat3 eval_chart_hessian(const VecX& u, int tet) const {
    Mat3 hphi[10];
    basis_hessians(tet, hphi);
    Mat3 s = Mat3::Zero();
    for (int a = 0; a < 10; ++a) s += u[tet_dofs[tet][a]] * hphi[a];
    return s;
  }

  // nabla^2 u = chart Hessian minus Gamma^k_ij d_k u, at a given point.
  Mat3 eval_covariant_hessian(const VecX& u, int tet, const Eigen::Vector4d& lam) const {
    Mat3 H = eval_chart_hessian(u, tet);
    Vec3 du = eval_gradient(u, tet, lam);
    auto J = metric.jet(point(tet, lam));
    auto gam = christoffel(J);
    for (int k = 0; k < 3; ++k) H -= gam[k] * du[k];
    return H;
  }
};

// Surface-vertex values carried to volume P2 boundary data through the
// piecewise-linear lift (edge dofs averaged from endpoints).
inline VecX lift_surface_values(const P2Space& sp, const SurfaceMesh& surf, const VecX& values);

// Boundary data lifted from vertex values: edge dofs take the average of
// their endpoint values (the piecewise-linear trace), so data sampled from a
// globally linear function is reproduced exactly in the quadratic space.
inline VecX pl_lift(const P2Space& sp, const std::function<double(int)>& vertex_value) {
  VecX bv = VecX::Zero(sp.n_dof);
  for (int d : sp.boundary_dofs) {
    if (d < sp.n_vert) {
      bv[d] = vertex_value(d);
    } else {
      const auto& ev = sp.edge_verts[d - sp.n_vert];
      bv[d] = 0.5 * (vertex_value(ev[0]) + vertex_value(ev[1]));
    }
  }
  return bv;
}

inline VecX lift_surface_values(const P2Space& sp, const SurfaceMesh& surf, const VecX& values) {
  std::vector<double> vol(sp.mesh.vertices.size(), 0.0);
  for (size_t sv = 0; sv < surf.vertices.size(); ++sv) {
    int vv = surf.to_volume_vertex[sv];
    if (vv >= 0) vol[vv] = values[static_cast<Eigen::Index>(sv)];
  }
  return pl_lift(sp, [&](int v) { return vol[v]; });
}

inline SparseMat assemble_stiffness(const P2Space& sp) {
  std::vector<Triplet> trip;
  trip.reserve(sp.mesh.tets.size() * 100);
  int nq = sp.nq();
  for (size_t t = 0; t < sp.mesh.tets.size(); ++t) {
    Eigen::Matrix<double, 10, 10> E = Eigen::Matrix<double, 10, 10>::Zero();
    for (int q = 0; q < nq; ++q) {
      Vec3 gphi[10];
      sp.basis_gradients(static_cast<int>(t), sp.ref_lam[q], gphi);
      Vec3 p = sp.point(static_cast<int>(t), sp.ref_lam[q]);
      Mat3 g = sp.metric.g(p);
      Mat3 ginv = g.inverse();
      double w = sp.rule.weights[q] * 6.0 * sp.tet_vol[t] * std::sqrt(g.determinant());
      Vec3 gig[10];
      for (int a = 0; a < 10; ++a) gig[a] = ginv * gphi[a];
      for (int a = 0; a < 10; ++a)
        for (int b = a; b < 10; ++b) E(a, b) += w * gphi[a].dot(gig[b]);
    }
    for (int a = 0; a < 10; ++a)
      for (int b = a; b < 10; ++b) {
        trip.emplace_back(sp.tet_dofs[t][a], sp.tet_dofs[t][b], E(a, b));
        if (b > a) trip.emplace_back(sp.tet_dofs[t][b], sp.tet_dofs[t][a], E(a, b));
      }
  }
  SparseMat A(sp.n_dof, sp.n_dof);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

inline SparseMat assemble_volume_mass(const P2Space& sp) {
  std::vector<Triplet> trip;
  trip.reserve(sp.mesh.tets.size() * 100);
  int nq = sp.nq();
  for (size_t t = 0; t < sp.mesh.tets.size(); ++t) {
    Eigen::Matrix<double, 10, 10> E = Eigen::Matrix<double, 10, 10>::Zero();
    for (int q = 0; q < nq; ++q) {
      double phi[10];
      P2Space::basis_values(sp.ref_lam[q], phi);
      Vec3 p = sp.point(static_cast<int>(t), sp.ref_lam[q]);
      double w = sp.rule.weights[q] * 6.0 * sp.tet_vol[t] * std::sqrt(sp.metric.g(p).determinant());
      for (int a = 0; a < 10; ++a)
        for (int b = a; b < 10; ++b) E(a, b) += w * phi[a] * phi[b];
    }
    for (int a = 0; a < 10; ++a)
      for (int b = a; b < 10; ++b) {
        trip.emplace_back(sp.tet_dofs[t][a], sp.tet_dofs[t][b], E(a, b));
        if (b > a) trip.emplace_back(sp.tet_dofs[t][b], sp.tet_dofs[t][a], E(a, b));
      }
  }
  SparseMat M(sp.n_dof, sp.n_dof);
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

inline VecX assemble_load(const P2Space& sp, const std::function<double(const Vec3&)>& f) {
  VecX F = VecX::Zero(sp.n_dof);
  int nq = sp.nq();
  for (size_t t = 0; t < sp.mesh.tets.size(); ++t)
    for (int q = 0; q < nq; ++q) {
      double phi[10];
      P2Space::basis_values(sp.ref_lam[q], phi);
      Vec3 p = sp.point(static_cast<int>(t), sp.ref_lam[q]);
      double w = sp.rule.weights[q] * 6.0 * sp.tet_vol[t] * std::sqrt(sp.metric.g(p).determinant());
      double fv = f(p);
      for (int a = 0; a < 10; ++a) F[sp.tet_dofs[t][a]] += w * fv * phi[a];
    }
  return F;
}

// Barycentric coordinates of the boundary quadrature points inside their
// parent tets, for evaluating volume fields on the boundary.
struct TraceCache {
  std::vector<int> tet;                  // per boundary qp
  std::vector<Eigen::Vector4d> lam;
};

inline TraceCache build_trace_cache(const P2Space& sp, const BoundaryGeometry& bg) {
  TraceCache tc;
  size_t total = bg.qp_pos.size();
  tc.tet.resize(total);
  tc.lam.resize(total);
  int nq = bg.nq();
  for (size_t f = 0; f < bg.surf.tris.size(); ++f) {
    int face_id = bg.surf.tri_to_boundary_face[f];
    int t = sp.mesh.boundary_face_tet[face_id];
    const auto& T = sp.mesh.tets[t];
    Mat3 D;
    for (int c = 0; c < 3; ++c) D.col(c) = sp.mesh.vertices[T[c + 1]] - sp.mesh.vertices[T[0]];
    Mat3 Dinv = D.inverse();
    for (int q = 0; q < nq; ++q) {
      size_t idx = bg.qp(static_cast<int>(f), q);
      Vec3 l = Dinv * (bg.qp_pos[idx] - sp.mesh.vertices[T[0]]);
      tc.tet[idx] = t;
      tc.lam[idx] = Eigen::Vector4d(1 - l.sum(), l[0], l[1], l[2]);
    }
  }
  return tc;
}

// Mass form of the induced boundary metric, full dof indexing (entries only
// between boundary dofs; all other rows and columns stay empty).
inline SparseMat assemble_boundary_mass(const P2Space& sp, const BoundaryGeometry& bg,
                                        const TraceCache& tc) {
  std::vector<Triplet> trip;
  int nq = bg.nq();
  for (size_t f = 0; f < bg.surf.tris.size(); ++f) {
    Eigen::Matrix<double, 10, 10> E = Eigen::Matrix<double, 10, 10>::Zero();
    int t = tc.tet[bg.qp(static_cast<int>(f), 0)];
    for (int q = 0; q < nq; ++q) {
      size_t idx = bg.qp(static_cast<int>(f), q);
      double phi[10];
      P2Space::basis_values(tc.lam[idx], phi);
      double w = bg.qp_meas[idx];
      for (int a = 0; a < 10; ++a) {
        if (phi[a] == 0) continue;
        for (int b = 0; b < 10; ++b) E(a, b) += w * phi[a] * phi[b];
      }
    }
    for (int a = 0; a < 10; ++a)
      for (int b = 0; b < 10; ++b)
        if (E(a, b) != 0) trip.emplace_back(sp.tet_dofs[t][a], sp.tet_dofs[t][b], E(a, b));
  }
  SparseMat M(sp.n_dof, sp.n_dof);
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

struct ScalarSolve {
  VecX u;     // full dof vector including boundary values
  VecX flux;  // variational flux functional, nonzero only on boundary dofs
  PcgInfo info;
};

// Dirichlet solve by elimination: A_II u_I = (F - A u_B)_I, then the flux
// functional r = (A u - F) restricted to boundary rows. The energy identity
// u' A u = u' F + u_B' r_B holds to solver tolerance by construction.
inline ScalarSolve solve_dirichlet_scalar(const P2Space& sp, const SparseMat& A, const VecX& F,
                                          const VecX& boundary_values,
                                          const SolveOptions& opt = {}) {
  VecX ub = VecX::Zero(sp.n_dof);
  for (int d : sp.boundary_dofs) ub[d] = boundary_values[d];
  VecX rhs = F - A * ub;
  for (int d : sp.boundary_dofs) rhs[d] = 0;

  VecX inv_diag = VecX::Zero(sp.n_dof);
  for (int d : sp.interior_dofs) {
    double v = A.coeff(d, d);
    inv_diag[d] = v > 0 ? 1.0 / v : 0.0;
  }
  auto apply = [&](const VecX& x) {
    VecX y = A * x;
    for (int d : sp.boundary_dofs) y[d] = 0;
    return y;
  };
  ScalarSolve out;
  out.u = pcg(sp.n_dof, apply, rhs, inv_diag, opt, &out.info);
  out.u += ub;
  VecX r = A * out.u - F;
  out.flux = VecX::Zero(sp.n_dof);
  for (int d : sp.boundary_dofs) out.flux[d] = r[d];
  return out;
}

// Boundary flux as a field: solve M_b z = flux functional on boundary dofs.
inline VecX flux_field(const P2Space& sp, const SparseMat& boundary_mass, const VecX& flux,
                       const SolveOptions& opt = {}) {
  VecX inv_diag = VecX::Zero(sp.n_dof);
  for (int d : sp.boundary_dofs) {
    double v = boundary_mass.coeff(d, d);
    inv_diag[d] = v > 0 ? 1.0 / v : 0.0;
  }
  auto apply = [&](const VecX& x) { return VecX(boundary_mass * x); };
  return pcg(sp.n_dof, apply, flux, inv_diag, opt);
}

// Connection-Laplacian energy for vector fields, dof layout [V^1; V^2; V^3]:
//   a(V,W) = int g^{ij} g_kl (d_i V^k + G^k_im V^m)(d_j W^l + G^l_jn W^n) sqrt(g).
// Flat metrics decouple into three scalar stiffness blocks and reuse that
// matrix; otherwise per-tet 30x30 element matrices are stored (freed with the
// operator), applied matrix-free.
class ConnectionOperator {
 public:
  ConnectionOperator(const P2Space& sp, bool force_generic = false) : sp_(sp) {
    flat_ = sp.metric.is_flat() && !force_generic;
    if (flat_) {
      scalar_ = assemble_stiffness(sp);
      diag_ = VecX(3 * sp.n_dof);
      VecX d = scalar_.diagonal();
      for (int c = 0; c < 3; ++c) diag_.segment(std::ptrdiff_t(c) * sp.n_dof, sp.n_dof) = d;
      return;
    }
    elem_.resize(sp.mesh.tets.size());
    diag_ = VecX::Zero(3 * sp.n_dof);
    int nq = sp.nq();
    for (size_t t = 0; t < sp.mesh.tets.size(); ++t) {
      Eigen::Matrix<double, 30, 30>& E = elem_[t];
      E.setZero();
      for (int q = 0; q < nq; ++q) {
        double phi[10];
        Vec3 gphi[10];
        P2Space::basis_values(sp.ref_lam[q], phi);
        sp.basis_gradients(static_cast<int>(t), sp.ref_lam[q], gphi);
        auto J = sp.metric.jet(sp.point(static_cast<int>(t), sp.ref_lam[q]));
        auto gam = christoffel(J);
        Mat3 ginv = J.g.inverse();
        double w = sp.rule.weights[q] * 6.0 * sp.tet_vol[t] * std::sqrt(J.g.determinant());
        // P[a][k](i,kap) = delta_{kap,k} d_i phi_a + Gamma^kap_{ik} phi_a
        Mat3 P[10][3], W[10][3];
        for (int a = 0; a < 10; ++a)
          for (int k = 0; k < 3; ++k) {
            Mat3& Pm = P[a][k];
            for (int i = 0; i < 3; ++i)
              for (int kap = 0; kap < 3; ++kap)
                Pm(i, kap) = (kap == k ? gphi[a][i] : 0.0) + gam[kap](i, k) * phi[a];
            W[a][k] = ginv * Pm * J.g;
          }
        for (int ak = 0; ak < 30; ++ak) {
          int a = ak % 10, k = ak / 10;
          for (int bl = ak; bl < 30; ++bl) {
            int b = bl % 10, l = bl / 10;
            double v = w * (W[a][k].array() * P[b][l].array()).sum();
            E(ak, bl) += v;
            if (bl != ak) E(bl, ak) += v;
          }
        }
      }
      E = 0.5 * (E + E.transpose()).eval();
      for (int ak = 0; ak < 30; ++ak)
        diag_[std::ptrdiff_t(ak / 10) * sp.n_dof + sp.tet_dofs[t][ak % 10]] += E(ak, ak);
    }
  }

  Eigen::Index size() const { return 3 * Eigen::Index(sp_.n_dof); }
  const VecX& diagonal() const { return diag_; }

  VecX apply(const VecX& x) const {
    if (flat_) {
      VecX y(size());
      for (int c = 0; c < 3; ++c)
        y.segment(std::ptrdiff_t(c) * sp_.n_dof, sp_.n_dof) =
            scalar_ * x.segment(std::ptrdiff_t(c) * sp_.n_dof, sp_.n_dof);
      return y;
    }
    VecX y = VecX::Zero(size());
    Eigen::Matrix<double, 30, 1> loc, res;
    for (size_t t = 0; t < elem_.size(); ++t) {
      const auto& dofs = sp_.tet_dofs[t];
      for (int ak = 0; ak < 30; ++ak)
        loc[ak] = x[std::ptrdiff_t(ak / 10) * sp_.n_dof + dofs[ak % 10]];
      res.noalias() = elem_[t] * loc;
      for (int ak = 0; ak < 30; ++ak)
        y[std::ptrdiff_t(ak / 10) * sp_.n_dof + dofs[ak % 10]] += res[ak];
    }
    return y;
  }

  double energy(const VecX& v) const { return v.dot(apply(v)); }

 private:
  const P2Space& sp_;
  bool flat_ = false;
  SparseMat scalar_;
  std::vector<Eigen::Matrix<double, 30, 30>> elem_;
  VecX diag_;
};

struct VectorSolve {
  VecX v;  // 3N, layout [V^1; V^2; V^3]
  PcgInfo info;
};

// Dirichlet solve for the connection Laplacian with vector boundary data
// given per boundary dof (3N layout, boundary rows read, interior ignored).
inline VectorSolve solve_dirichlet_vector(const P2Space& sp, const ConnectionOperator& op,
                                          const VecX& boundary_values,
                                          const SolveOptions& opt = {}) {
  Eigen::Index n = op.size();
  VecX ub = VecX::Zero(n);
  for (int c = 0; c < 3; ++c)
    for (int d : sp.boundary_dofs)
      ub[std::ptrdiff_t(c) * sp.n_dof + d] = boundary_values[std::ptrdiff_t(c) * sp.n_dof + d];
  VecX rhs = -op.apply(ub);
  VecX inv_diag = VecX::Zero(n);
  for (int c = 0; c < 3; ++c)
    for (int d : sp.interior_dofs) {
      std::ptrdiff_t i = std::ptrdiff_t(c) * sp.n_dof + d;
      double v = op.diagonal()[i];
      inv_diag[i] = v > 0 ? 1.0 / v : 0.0;
    }
  for (int c = 0; c < 3; ++c)
    for (int d : sp.boundary_dofs) rhs[std::ptrdiff_t(c) * sp.n_dof + d] = 0;
  auto apply = [&](const VecX& x) {
    VecX y = op.apply(x);
    for (int c = 0; c < 3; ++c)
      for (int d : sp.boundary_dofs) y[std::ptrdiff_t(c) * sp.n_dof + d] = 0;
    return y;
  };
  VectorSolve out;
  out.v = pcg(n, apply, rhs, inv_diag, opt, &out.info);
  out.v += ub;
  return out;
}

}  // namespace ballmap
