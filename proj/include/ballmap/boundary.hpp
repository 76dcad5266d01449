#pragma once

// Boundary geometry of a metrized tet mesh: outward g-unit normals, induced
// metric, second fundamental form from an interpolated vertex-normal field,
// and intrinsic Gauss curvature by angle defect.

#include <map>
#include <vector>

#include "ballmap/common.hpp"
#include "ballmap/mesh.hpp"
#include "ballmap/metric.hpp"
#include "ballmap/quadrature.hpp"

namespace ballmap {

// Mixed Voronoi vertex areas (Meyer et al.) computed from per-triangle edge
// lengths alone. lengths[t] = {l0, l1, l2} with l_i opposite local vertex i.
// Partitions each triangle's Heron area exactly, so the per-vertex areas sum
// to the total surface area.
inline std::vector<double> mixed_vertex_areas(const std::vector<std::array<int, 3>>& tris,
                                              const std::vector<std::array<double, 3>>& lengths,
                                              int vertex_count) {
  std::vector<double> area(vertex_count, 0.0);
  for (size_t t = 0; t < tris.size(); ++t) {
    double a = lengths[t][0], b = lengths[t][1], c = lengths[t][2];
    double s = 0.5 * (a + b + c);
    double h2 = std::max(s * (s - a) * (s - b) * (s - c), 0.0);
    double A = std::sqrt(h2);
    double cosv[3], sinv[3];
    const double l[3] = {a, b, c};
    for (int i = 0; i < 3; ++i) {
      double li = l[i], lj = l[(i + 1) % 3], lk = l[(i + 2) % 3];
      double cv = (lj * lj + lk * lk - li * li) / (2 * lj * lk);
      cosv[i] = std::clamp(cv, -1.0, 1.0);
      sinv[i] = std::sqrt(std::max(1.0 - cosv[i] * cosv[i], 0.0));
    }
    bool obtuse = cosv[0] < 0 || cosv[1] < 0 || cosv[2] < 0;
    for (int i = 0; i < 3; ++i) {
      double Ai;
      if (obtuse) {
        Ai = (cosv[i] < 0) ? A / 2 : A / 4;
      } else {
        // circumcentric piece: each edge incident to vertex i pairs with the
        // cotangent of the angle opposite that edge
        double lj = l[(i + 1) % 3], lk = l[(i + 2) % 3];
        double cot_j = cosv[(i + 1) % 3] / std::max(sinv[(i + 1) % 3], 1e-300);
        double cot_k = cosv[(i + 2) % 3] / std::max(sinv[(i + 2) % 3], 1e-300);
        Ai = (lj * lj * cot_j + lk * lk * cot_k) / 8.0;
      }
      area[tris[t][i]] += Ai;
    }
  }
  return area;
}

struct BoundaryGeometry {
  SurfaceMesh surf;
  QuadratureRule rule;  // triangle rule shared by all faces

  // Per surface vertex.
  std::vector<Vec3> vertex_normal;  // g-unit outward, from area-weighted conormals
  std::vector<double> vertex_dual_area;
  std::vector<double> vertex_defect;
  std::vector<double> vertex_gauss;  // defect / dual area

  // Per face: chart tangents of the affine parameterization p0 + a t1 + b t2.
  std::vector<Vec3> face_t1, face_t2;
  std::vector<double> face_area;  // Heron area from the g-edge lengths
  std::vector<std::array<double, 3>> face_edge_len;  // l_i opposite local vertex i

  // Per (face, quadrature point), flattened as f * nq() + q.
  std::vector<Vec3> qp_pos;
  std::vector<Vec3> qp_normal;  // g-normalized outward conormal
  std::vector<double> qp_meas;  // rule weight times sqrt(det gbar)
  std::vector<Mat2> qp_gbar, qp_gbar_inv, qp_theta, qp_theta_hat;
  std::vector<double> qp_trtheta;

  double total_area = 0;

  int nq() const { return static_cast<int>(rule.points.size()); }
  int qp(int face, int q) const { return face * nq() + q; }
};

namespace detail {

// Length of the straight chart segment [u, v] under g, 4-point Gauss.
inline double g_edge_length(const MetricField& metric, const Vec3& u, const Vec3& v) {
  static const std::vector<double> gx = [] {
    std::vector<double> x, w;
    gauss_legendre_01(4, x, w);
    return x;
  }();
  static const std::vector<double> gw = [] {
    std::vector<double> x, w;
    gauss_legendre_01(4, x, w);
    return w;
  }();
  Vec3 d = v - u;
  double len = 0;
  for (size_t q = 0; q < gx.size(); ++q) {
    Vec3 p = u + gx[q] * d;
    len += gw[q] * std::sqrt(d.dot(metric.g(p) * d));
  }
  return len;
}

}  // namespace detail

inline BoundaryGeometry build_boundary_geometry(const TetMesh& mesh, const MetricField& metric,
                                                int quad_degree = 4) {
  BoundaryGeometry bg;
  bg.surf = extract_boundary(mesh);
  bg.rule = QuadratureRule::triangle(quad_degree);
  const auto& S = bg.surf;
  int nv = static_cast<int>(S.vertices.size());
  int nf = static_cast<int>(S.tris.size());
  int nq = bg.nq();

  // g-lengths of surface edges, keyed on surface vertex indices.
  std::map<uint64_t, double> edge_len;
  for (const auto& T : S.tris)
    for (int e = 0; e < 3; ++e) {
      uint64_t key = edge_key(T[e], T[(e + 1) % 3]);
      if (!edge_len.count(key))
        edge_len[key] = detail::g_edge_length(metric, S.vertices[T[e]], S.vertices[T[(e + 1) % 3]]);
    }

  bg.face_t1.resize(nf);
  bg.face_t2.resize(nf);
  bg.face_area.resize(nf);
  bg.face_edge_len.resize(nf);
  std::vector<std::array<double, 3>> angles(nf);
  for (int f = 0; f < nf; ++f) {
    const auto& T = S.tris[f];
    bg.face_t1[f] = S.vertices[T[1]] - S.vertices[T[0]];
    bg.face_t2[f] = S.vertices[T[2]] - S.vertices[T[0]];
    std::array<double, 3> l;
    for (int i = 0; i < 3; ++i) l[i] = edge_len.at(edge_key(T[(i + 1) % 3], T[(i + 2) % 3]));
    bg.face_edge_len[f] = l;
    double s = 0.5 * (l[0] + l[1] + l[2]);
    bg.face_area[f] = std::sqrt(std::max(s * (s - l[0]) * (s - l[1]) * (s - l[2]), 0.0));
    for (int i = 0; i < 3; ++i) {
      double li = l[i], lj = l[(i + 1) % 3], lk = l[(i + 2) % 3];
      angles[f][i] = std::acos(std::clamp((lj * lj + lk * lk - li * li) / (2 * lj * lk), -1.0, 1.0));
    }
  }

  // Angle defect and mixed dual areas from the comparison triangles.
  bg.vertex_defect.assign(nv, 2 * kPi);
  for (int f = 0; f < nf; ++f)
    for (int i = 0; i < 3; ++i) bg.vertex_defect[S.tris[f][i]] -= angles[f][i];
  bg.vertex_dual_area = mixed_vertex_areas(S.tris, bg.face_edge_len, nv);
  bg.vertex_gauss.resize(nv);
  for (int v = 0; v < nv; ++v) bg.vertex_gauss[v] = bg.vertex_defect[v] / bg.vertex_dual_area[v];

  // Vertex normals: g-conormals of incident faces evaluated at the vertex,
  // weighted by face g-area, then g-normalized. Faces visited in index order.
  bg.vertex_normal.assign(nv, Vec3::Zero());
  for (int f = 0; f < nf; ++f) {
    Vec3 nu = bg.face_t1[f].cross(bg.face_t2[f]).normalized();
    for (int i = 0; i < 3; ++i) {
      int v = S.tris[f][i];
      Mat3 ginv = metric.g(S.vertices[v]).inverse();
      Vec3 con = ginv * nu;
      con /= std::sqrt(nu.dot(con));
      bg.vertex_normal[v] += bg.face_area[f] * con;
    }
  }
  for (int v = 0; v < nv; ++v) {
    Vec3& N = bg.vertex_normal[v];
    double norm = std::sqrt(N.dot(metric.g(S.vertices[v]) * N));
    if (norm < 1e-14) throw MeshError("degenerate vertex normal");
    N /= norm;
  }

  // Quadrature-point fields.
  bg.qp_pos.resize(size_t(nf) * nq);
  bg.qp_normal.resize(size_t(nf) * nq);
  bg.qp_meas.resize(size_t(nf) * nq);
  bg.qp_gbar.resize(size_t(nf) * nq);
  bg.qp_gbar_inv.resize(size_t(nf) * nq);
  bg.qp_theta.resize(size_t(nf) * nq);
  bg.qp_theta_hat.resize(size_t(nf) * nq);
  bg.qp_trtheta.resize(size_t(nf) * nq);

  for (int f = 0; f < nf; ++f) {
    const auto& T = S.tris[f];
    Vec3 p0 = S.vertices[T[0]];
    Vec3 t1 = bg.face_t1[f], t2 = bg.face_t2[f];
    Vec3 nu = t1.cross(t2).normalized();
    Vec3 N0 = bg.vertex_normal[T[0]], N1 = bg.vertex_normal[T[1]], N2 = bg.vertex_normal[T[2]];
    Vec3 dNa = N1 - N0, dNb = N2 - N0;  // parameter gradients of the PL normal field
    for (int q = 0; q < nq; ++q) {
      int idx = bg.qp(f, q);
      double a = bg.rule.points[q][0], b = bg.rule.points[q][1];
      Vec3 p = p0 + a * t1 + b * t2;
      bg.qp_pos[idx] = p;
      auto J = metric.jet(p);
      Mat3 ginv = J.g.inverse();
      Vec3 con = ginv * nu;
      bg.qp_normal[idx] = con / std::sqrt(nu.dot(con));

      Mat2 gbar;
      gbar(0, 0) = t1.dot(J.g * t1);
      gbar(0, 1) = gbar(1, 0) = t1.dot(J.g * t2);
      gbar(1, 1) = t2.dot(J.g * t2);
      bg.qp_gbar[idx] = gbar;
      bg.qp_gbar_inv[idx] = gbar.inverse();
      double det = gbar.determinant();
      if (det <= 0) throw MeshError("degenerate tangent plane");
      bg.qp_meas[idx] = bg.rule.weights[q] * std::sqrt(det);
      bg.total_area += bg.qp_meas[idx];

      // theta_ab = g(nabla_{t_a} Ntilde, t_b), Ntilde the PL vertex-normal field.
      auto gam = christoffel(J);
      Vec3 Nt = N0 + a * dNa + b * dNb;
      Vec3 cov_a = dNa, cov_b = dNb;
      for (int k = 0; k < 3; ++k) {
        cov_a[k] += t1.dot(gam[k] * Nt);
        cov_b[k] += t2.dot(gam[k] * Nt);
      }
      Mat2 th;
      th(0, 0) = cov_a.dot(J.g * t1);
      th(0, 1) = cov_a.dot(J.g * t2);
      th(1, 0) = cov_b.dot(J.g * t1);
      th(1, 1) = cov_b.dot(J.g * t2);
      th = 0.5 * (th + th.transpose()).eval();
      bg.qp_theta[idx] = th;
      double tr = (bg.qp_gbar_inv[idx] * th).trace();
      bg.qp_trtheta[idx] = tr;
      bg.qp_theta_hat[idx] = th - 0.5 * tr * gbar;
    }
  }
  return bg;
}

// P1 surface FEM on the boundary triangulation under the induced metric.
// Stiffness integrates gbar^{-1}-gradients; mass integrates products, both at
// the geometry's quadrature points. Dense vertex indexing of the SurfaceMesh.
struct SurfaceOperators {
  SparseMat stiffness;  // int <grad u, grad v>_gbar dA
  SparseMat mass;       // int u v dA
};

inline SurfaceOperators build_surface_p1(const BoundaryGeometry& bg) {
  int nv = static_cast<int>(bg.surf.vertices.size());
  int nq = bg.nq();
  std::vector<Triplet> ts, tm;
  for (size_t f = 0; f < bg.surf.tris.size(); ++f) {
    const auto& T = bg.surf.tris[f];
    // P1 parameter gradients: lambda = (1-a-b, a, b).
    const Vec2 dl[3] = {Vec2(-1, -1), Vec2(1, 0), Vec2(0, 1)};
    Eigen::Matrix3d Ke = Eigen::Matrix3d::Zero(), Me = Eigen::Matrix3d::Zero();
    for (int q = 0; q < nq; ++q) {
      int idx = bg.qp(static_cast<int>(f), q);
      double w = bg.qp_meas[idx];
      const Mat2& gi = bg.qp_gbar_inv[idx];
      double a = bg.rule.points[q][0], b = bg.rule.points[q][1];
      double lam[3] = {1 - a - b, a, b};
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          Ke(i, j) += w * dl[i].dot(gi * dl[j]);
          Me(i, j) += w * lam[i] * lam[j];
        }
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        ts.emplace_back(T[i], T[j], Ke(i, j));
        tm.emplace_back(T[i], T[j], Me(i, j));
      }
  }
  SurfaceOperators ops;
  ops.stiffness.resize(nv, nv);
  ops.stiffness.setFromTriplets(ts.begin(), ts.end());
  ops.mass.resize(nv, nv);
  ops.mass.setFromTriplets(tm.begin(), tm.end());
  return ops;
}

// Parameter-space gradient (df/da, df/db) of a vertex-valued function on face f;
// pair with qp_gbar_inv for intrinsic inner products.
inline Vec2 p1_face_gradient(const BoundaryGeometry& bg, int face, const VecX& vertex_values) {
  const auto& T = bg.surf.tris[face];
  double f0 = vertex_values[T[0]];
  return Vec2(vertex_values[T[1]] - f0, vertex_values[T[2]] - f0);
}

}  // namespace ballmap
