#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ballmap/boundary.hpp"
#include "ballmap/fem.hpp"

namespace ballmap {

struct NormReport {
  std::string name;
  double value = 0.0;
  std::string method;
  double solver_residual = 0.0;  // subordinate linear solve, when one was involved
};

enum class Variance { Contravariant, Covariant };

// Pointwise metric contractions. |V|^2 pairs contravariant components with g
// and covariant ones with g^{-1}; covariant 2-tensors contract with g^{-1} on
// both slots, which reduces to the Frobenius norm when g is the identity.
inline double vector_gnorm2(const Mat3& g, const Mat3& ginv, const Vec3& v, Variance var) {
  return var == Variance::Contravariant ? v.dot(g * v) : v.dot(ginv * v);
}

inline double tensor2_gnorm2(const Mat3& ginv, const Mat3& T) {
  return (ginv * T * ginv * T.transpose()).trace();
}

namespace detail {

struct VolumeRule {
  QuadratureRule rule;
  std::vector<Eigen::Vector4d> lam;

  explicit VolumeRule(int degree) : rule(QuadratureRule::tetrahedron(degree)) {
    lam.reserve(rule.points.size());
    for (const auto& p : rule.points)
      lam.emplace_back(1.0 - p[0] - p[1] - p[2], p[0], p[1], p[2]);
  }
};

inline std::string lp_name(double p, const char* domain) {
  if (std::isinf(p)) return std::string("Linf(") + domain + ")";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "L%g(%s)", p, domain);
  return buf;
}

}  // namespace detail

// Metric-weighted L^p over the chart volume: p-th root of the quadrature sum
// of |F|^p, or the max over quadrature points for p = infinity. The magnitude
// functor receives (tet, barycentric, chart position) and must already be the
// pointwise metric norm of the field.
template <class F>
NormReport lp_norm_volume(const TetMesh& mesh, const MetricField& metric, F&& magnitude, double p,
                          int quad_degree = 4) {
  detail::VolumeRule vr(quad_degree);
  int nq = static_cast<int>(vr.rule.points.size());
  double acc = 0, vmax = 0;
  for (size_t t = 0; t < mesh.tets.size(); ++t) {
    const auto& T = mesh.tets[t];
    Mat3 D;
    for (int c = 0; c < 3; ++c) D.col(c) = mesh.vertices[T[c + 1]] - mesh.vertices[T[0]];
    double vol6 = D.determinant();
    for (int q = 0; q < nq; ++q) {
      const Eigen::Vector4d& lam = vr.lam[q];
      Vec3 pos = lam[0] * mesh.vertices[T[0]] + lam[1] * mesh.vertices[T[1]] +
                 lam[2] * mesh.vertices[T[2]] + lam[3] * mesh.vertices[T[3]];
      double m = magnitude(static_cast<int>(t), lam, pos);
      if (std::isinf(p)) {
        vmax = std::max(vmax, std::abs(m));
      } else {
        double w = vr.rule.weights[q] * vol6 * std::sqrt(metric.g(pos).determinant());
        acc += w * std::pow(std::abs(m), p);
      }
    }
  }
  NormReport r;
  r.name = detail::lp_name(p, "Sigma");
  r.method = "quadrature";
  r.value = std::isinf(p) ? vmax : std::pow(acc, 1.0 / p);
  return r;
}

// Boundary L^p over the precomputed boundary quadrature; the magnitude functor
// receives (surface tri, local point index, chart position).
template <class F>
NormReport lp_norm_boundary(const BoundaryGeometry& bg, F&& magnitude, double p) {
  int nq = bg.nq();
  double acc = 0, vmax = 0;
  for (size_t f = 0; f < bg.surf.tris.size(); ++f)
    for (int q = 0; q < nq; ++q) {
      int idx = bg.qp(static_cast<int>(f), q);
      double m = magnitude(static_cast<int>(f), q, bg.qp_pos[idx]);
      if (std::isinf(p))
        vmax = std::max(vmax, std::abs(m));
      else
        acc += bg.qp_meas[idx] * std::pow(std::abs(m), p);
    }
  NormReport r;
  r.name = detail::lp_name(p, "dSigma");
  r.method = "quadrature";
  r.value = std::isinf(p) ? vmax : std::pow(acc, 1.0 / p);
  return r;
}

// Position-only wrappers doing the metric contraction themselves.
inline NormReport lp_norm_scalar(const TetMesh& mesh, const MetricField& metric,
                                 const std::function<double(const Vec3&)>& f, double p,
                                 int quad_degree = 4) {
  return lp_norm_volume(
      mesh, metric, [&](int, const Eigen::Vector4d&, const Vec3& pos) { return f(pos); }, p,
      quad_degree);
}

inline NormReport lp_norm_vector(const TetMesh& mesh, const MetricField& metric,
                                 const std::function<Vec3(const Vec3&)>& f, Variance var, double p,
                                 int quad_degree = 4) {
  return lp_norm_volume(
      mesh, metric,
      [&](int, const Eigen::Vector4d&, const Vec3& pos) {
        Mat3 g = metric.g(pos);
        return std::sqrt(vector_gnorm2(g, g.inverse(), f(pos), var));
      },
      p, quad_degree);
}

inline NormReport lp_norm_tensor2(const TetMesh& mesh, const MetricField& metric,
                                  const std::function<Mat3(const Vec3&)>& f, double p,
                                  int quad_degree = 4) {
  return lp_norm_volume(
      mesh, metric,
      [&](int, const Eigen::Vector4d&, const Vec3& pos) {
        return std::sqrt(std::max(0.0, tensor2_gnorm2(metric.g(pos).inverse(), f(pos))));
      },
      p, quad_degree);
}

inline NormReport lp_norm_scalar_boundary(const BoundaryGeometry& bg,
                                          const std::function<double(int, int, const Vec3&)>& f,
                                          double p) {
  return lp_norm_boundary(bg, f, p);
}

struct SobolevParts {
  double l2 = 0, grad = 0, hess = 0;  // squared contributions
};

// Volume Sobolev norm of a P2 field: sqrt(sum_{m<=k} |covariant grad^m u|^2),
// k in {1,2}. The Hessian term uses the piecewise element Hessian corrected by
// the Christoffel symbols; no recovery is applied.
inline NormReport h_k_norm(const P2Space& sp, const VecX& u, int k, SobolevParts* parts = nullptr) {
  if (k != 1 && k != 2) throw ConfigError("h_k_norm: k must be 1 or 2");
  double l2 = 0, grad = 0, hess = 0;
  int nq = sp.nq();
  for (size_t t = 0; t < sp.mesh.tets.size(); ++t) {
    for (int q = 0; q < nq; ++q) {
      const Eigen::Vector4d& lam = sp.ref_lam[q];
      Vec3 pos = sp.point(static_cast<int>(t), lam);
      auto J = sp.metric.jet(pos);
      Mat3 ginv = J.g.inverse();
      double w = sp.rule.weights[q] * 6.0 * sp.tet_vol[t] * std::sqrt(J.g.determinant());
      double v = sp.eval_value(u, static_cast<int>(t), lam);
      Vec3 du = sp.eval_gradient(u, static_cast<int>(t), lam);
      l2 += w * v * v;
      grad += w * du.dot(ginv * du);
      if (k == 2) {
        Mat3 H = sp.eval_covariant_hessian(u, static_cast<int>(t), lam);
        hess += w * tensor2_gnorm2(ginv, H);
      }
    }
  }
  if (parts) *parts = {l2, grad, hess};
  NormReport r;
  r.name = k == 1 ? "H1(Sigma)" : "H2(Sigma)";
  r.method = "quadrature";
  r.value = std::sqrt(l2 + grad + (k == 2 ? hess : 0.0));
  return r;
}

// Trace norms built on the SPD energy form u'Ku = int |grad u|^2 + u^2.
//
// H^{1/2} of boundary data is the square root of the minimal energy among P2
// extensions, found exactly (to solver tolerance) by the Dirichlet solve for
// K; the minimizer is the discrete weak solution of Delta u = u. Tensor data
// is extended componentwise in the chart and the reported value is the
// covariant H^1 energy of the assembled field.
//
// H^{-1/2} is the exact discrete dual: with S the Schur complement of K onto
// the boundary dofs and M the boundary mass, the squared dual norm of data F
// is (MF)' S^{-1} (MF), realized by one full-space solve Kw = [0; MF] (its
// boundary rows then satisfy S w_B = MF). The boundary trace of w is the
// Riesz maximizer, so the duality pairing is sharp by construction.
class TraceNorms {
 public:
  TraceNorms(const P2Space& sp, const BoundaryGeometry& bg)
      : sp_(sp),
        bg_(bg),
        tc_(build_trace_cache(sp, bg)),
        stiffness_(assemble_stiffness(sp)),
        boundary_mass_(assemble_boundary_mass(sp, bg, tc_)) {
    energy_ = stiffness_ + assemble_volume_mass(sp);
    energy_inv_diag_ = energy_.diagonal().cwiseInverse();
  }

  const P2Space& space() const { return sp_; }
  const BoundaryGeometry& boundary() const { return bg_; }
  const TraceCache& trace_cache() const { return tc_; }
  const SparseMat& energy() const { return energy_; }
  const SparseMat& stiffness() const { return stiffness_; }
  const SparseMat& boundary_mass() const { return boundary_mass_; }

  // Minimal-energy extension of scalar boundary data (boundary entries of
  // `boundary_values` are read; the rest is ignored).
  VecX minimizing_extension(const VecX& boundary_values, PcgInfo* info = nullptr,
                            const SolveOptions& opt = {}) const {
    ScalarSolve s = solve_dirichlet_scalar(sp_, energy_, VecX::Zero(sp_.n_dof), boundary_values, opt);
    if (info) *info = s.info;
    return std::move(s.u);
  }

  NormReport h_half(const VecX& boundary_values, VecX* extension = nullptr,
                    const SolveOptions& opt = {}) const {
    ScalarSolve s = solve_dirichlet_scalar(sp_, energy_, VecX::Zero(sp_.n_dof), boundary_values, opt);
    double e = 0;
    for (int d : sp_.boundary_dofs) e += s.u[d] * s.flux[d];  // u'Ku since the load is zero
    if (extension) *extension = std::move(s.u);
    NormReport r;
    r.name = "H1/2(dSigma)";
    r.method = "extension-minimization";
    r.value = std::sqrt(std::max(0.0, e));
    r.solver_residual = s.info.residual;
    return r;
  }

  // Componentwise chart extension of vector boundary data; the value is the
  // covariant H^1 energy of the extended field.
  NormReport h_half_vector(const std::array<VecX, 3>& data, Variance var,
                           std::array<VecX, 3>* extensions = nullptr,
                           const SolveOptions& opt = {}) const {
    std::array<VecX, 3> ext;
    double res = 0;
    for (int c = 0; c < 3; ++c) {
      PcgInfo info;
      ext[c] = minimizing_extension(data[c], &info, opt);
      res = std::max(res, info.residual);
    }
    double e = 0;
    int nq = sp_.nq();
    for (size_t t = 0; t < sp_.mesh.tets.size(); ++t)
      for (int q = 0; q < nq; ++q) {
        const Eigen::Vector4d& lam = sp_.ref_lam[q];
        Vec3 pos = sp_.point(static_cast<int>(t), lam);
        auto J = sp_.metric.jet(pos);
        auto gam = christoffel(J);
        Mat3 ginv = J.g.inverse();
        double w = sp_.rule.weights[q] * 6.0 * sp_.tet_vol[t] * std::sqrt(J.g.determinant());
        Vec3 v;
        Mat3 C;  // C(i,k) = covariant derivative, i the direction slot
        for (int c = 0; c < 3; ++c) {
          v[c] = sp_.eval_value(ext[c], static_cast<int>(t), lam);
          C.col(c) = sp_.eval_gradient(ext[c], static_cast<int>(t), lam);
        }
        if (var == Variance::Contravariant) {
          for (int i = 0; i < 3; ++i)
            for (int kk = 0; kk < 3; ++kk)
              for (int m = 0; m < 3; ++m) C(i, kk) += gam[kk](i, m) * v[m];
          e += w * (v.dot(J.g * v) + (C.transpose() * ginv * C * J.g).trace());
        } else {
          for (int i = 0; i < 3; ++i)
            for (int kk = 0; kk < 3; ++kk)
              for (int m = 0; m < 3; ++m) C(i, kk) -= gam[m](i, kk) * v[m];
          e += w * (v.dot(ginv * v) + (C.transpose() * ginv * C * ginv).trace());
        }
      }
    if (extensions) *extensions = std::move(ext);
    NormReport r;
    r.name = "H1/2(dSigma)";
    r.method = "componentwise-extension";
    r.value = std::sqrt(std::max(0.0, e));
    r.solver_residual = res;
    return r;
  }

  // Symmetric covariant 2-tensor data, component order 00,11,22,01,02,12.
  static constexpr int kSymIdx[6][2] = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}};

  NormReport h_half_tensor2(const std::array<VecX, 6>& data,
                            std::array<VecX, 6>* extensions = nullptr,
                            const SolveOptions& opt = {}) const {
    std::array<VecX, 6> ext;
    double res = 0;
    for (int c = 0; c < 6; ++c) {
      PcgInfo info;
      ext[c] = minimizing_extension(data[c], &info, opt);
      res = std::max(res, info.residual);
    }
    double e = 0;
    int nq = sp_.nq();
    for (size_t t = 0; t < sp_.mesh.tets.size(); ++t)
      for (int q = 0; q < nq; ++q) {
        const Eigen::Vector4d& lam = sp_.ref_lam[q];
        Vec3 pos = sp_.point(static_cast<int>(t), lam);
        auto J = sp_.metric.jet(pos);
        auto gam = christoffel(J);
        Mat3 ginv = J.g.inverse();
        double w = sp_.rule.weights[q] * 6.0 * sp_.tet_vol[t] * std::sqrt(J.g.determinant());
        Mat3 T = Mat3::Zero();
        Mat3 dT[3];  // dT[i](k,l) = d_i T_kl
        for (int i = 0; i < 3; ++i) dT[i].setZero();
        for (int c = 0; c < 6; ++c) {
          int a = kSymIdx[c][0], b = kSymIdx[c][1];
          double v = sp_.eval_value(ext[c], static_cast<int>(t), lam);
          Vec3 dv = sp_.eval_gradient(ext[c], static_cast<int>(t), lam);
          T(a, b) = v;
          T(b, a) = v;
          for (int i = 0; i < 3; ++i) {
            dT[i](a, b) = dv[i];
            dT[i](b, a) = dv[i];
          }
        }
        e += w * tensor2_gnorm2(ginv, T);
        Mat3 cov[3];
        for (int i = 0; i < 3; ++i) {
          cov[i] = dT[i];
          for (int kk = 0; kk < 3; ++kk)
            for (int l = 0; l < 3; ++l)
              for (int m = 0; m < 3; ++m)
                cov[i](kk, l) -= gam[m](i, kk) * T(m, l) + gam[m](i, l) * T(kk, m);
        }
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) e += w * ginv(i, j) * tensor2_cross(ginv, cov[i], cov[j]);
      }
    if (extensions) *extensions = std::move(ext);
    NormReport r;
    r.name = "H1/2(dSigma)";
    r.method = "componentwise-extension";
    r.value = std::sqrt(std::max(0.0, e));
    r.solver_residual = res;
    return r;
  }

  // Dual norm of a linear functional given by its values against the boundary
  // trace basis (a "dual vector": load or flux entries on boundary dofs).
  NormReport h_minus_half_dual(const VecX& dual, VecX* maximizer = nullptr,
                               const SolveOptions& opt = {}) const {
    VecX b = VecX::Zero(sp_.n_dof);
    for (int d : sp_.boundary_dofs) b[d] = dual[d];
    auto apply = [&](const VecX& x) { return VecX(energy_ * x); };
    PcgInfo info;
    VecX w = pcg(sp_.n_dof, apply, b, energy_inv_diag_, opt, &info);
    double e = 0;
    for (int d : sp_.boundary_dofs) e += b[d] * w[d];
    if (maximizer) *maximizer = std::move(w);
    NormReport r;
    r.name = "H-1/2(dSigma)";
    r.method = "schur-dual-solve";
    r.value = std::sqrt(std::max(0.0, e));
    r.solver_residual = info.residual;
    return r;
  }

  // Dual norm of a boundary function given by its dof values.
  NormReport h_minus_half(const VecX& boundary_values, VecX* maximizer = nullptr,
                          const SolveOptions& opt = {}) const {
    VecX restricted = VecX::Zero(sp_.n_dof);
    for (int d : sp_.boundary_dofs) restricted[d] = boundary_values[d];
    return h_minus_half_dual(boundary_mass_ * restricted, maximizer, opt);
  }

  // L2 projection of per-quadrature-point boundary samples onto boundary dof
  // values (mass solve against the trace basis).
  VecX project_boundary_samples(const std::function<double(int, int)>& sample,
                                PcgInfo* info = nullptr, const SolveOptions& opt = {}) const {
    VecX rhs = VecX::Zero(sp_.n_dof);
    int nq = bg_.nq();
    for (size_t f = 0; f < bg_.surf.tris.size(); ++f)
      for (int q = 0; q < nq; ++q) {
        int idx = bg_.qp(static_cast<int>(f), q);
        double phi[10];
        P2Space::basis_values(tc_.lam[idx], phi);
        double wv = bg_.qp_meas[idx] * sample(static_cast<int>(f), q);
        const auto& dofs = sp_.tet_dofs[tc_.tet[idx]];
        for (int a = 0; a < 10; ++a)
          if (phi[a] != 0.0) rhs[dofs[a]] += wv * phi[a];
      }
    VecX inv_diag = VecX::Zero(sp_.n_dof);
    for (int d : sp_.boundary_dofs) {
      double v = boundary_mass_.coeff(d, d);
      inv_diag[d] = v > 0 ? 1.0 / v : 0.0;
    }
    auto apply = [&](const VecX& x) { return VecX(boundary_mass_ * x); };
    return pcg(sp_.n_dof, apply, rhs, inv_diag, opt, info);
  }

 private:
  static double tensor2_cross(const Mat3& ginv, const Mat3& A, const Mat3& B) {
    return (ginv * A * ginv * B.transpose()).trace();
  }

  const P2Space& sp_;
  const BoundaryGeometry& bg_;
  TraceCache tc_;
  SparseMat stiffness_, boundary_mass_, energy_;
  VecX energy_inv_diag_;
};

struct SobolevOptions {
  int restarts = 5;
  int iterations = 30;
  std::uint64_t seed = 20260819ull;
  int ascent_degree = 4;  // quadrature degree while iterating
  int eval_degree = 12;   // quadrature degree of the reported quotient
};

// ||f - fbar||_L6 / ||grad f||_L2 with fbar the boundary mean of f. The
// denominator uses the assembled stiffness form; the numerator integrates the
// sixth power at the requested quadrature degree.
inline double sobolev_quotient(const P2Space& sp, const SparseMat& stiffness,
                               const VecX& boundary_lumped_mass, double boundary_area,
                               const VecX& f, int quad_degree = 12) {
  double denom2 = f.dot(stiffness * f);
  if (denom2 <= 0) return 0.0;
  double fbar = boundary_lumped_mass.dot(f) / boundary_area;
  detail::VolumeRule vr(quad_degree);
  int nq = static_cast<int>(vr.rule.points.size());
  bool flat = sp.metric.is_flat();
  double acc = 0;
  for (size_t t = 0; t < sp.mesh.tets.size(); ++t)
    for (int q = 0; q < nq; ++q) {
      const Eigen::Vector4d& lam = vr.lam[q];
      double u = sp.eval_value(f, static_cast<int>(t), lam) - fbar;
      double w = vr.rule.weights[q] * 6.0 * sp.tet_vol[t];
      if (!flat) w *= std::sqrt(sp.metric.g(sp.point(static_cast<int>(t), lam)).determinant());
      double u2 = u * u;
      acc += w * u2 * u2 * u2;
    }
  return std::pow(acc, 1.0 / 6.0) / std::sqrt(denom2);
}

struct SobolevEstimate {
  NormReport report;
  VecX maximizer;  // P2 coefficients, unit stiffness energy
};

// Lower bound for the Sobolev constant by projected gradient ascent on the
// quotient over the P2 space: iterates are kept on the unit-gradient-energy
// sphere, steps backtrack until the quotient increases, and the best restart
// wins. Restart r depends only on (seed, r), so enlarging the restart set can
// only improve the estimate.
inline SobolevEstimate estimate_sobolev_constant(const P2Space& sp, const TraceNorms& tn,
                                                 const SobolevOptions& opt = {}) {
  const SparseMat& A = tn.stiffness();
  VecX m = tn.boundary_mass() * VecX::Ones(sp.n_dof);
  double area = m.sum();

  detail::VolumeRule vr(opt.ascent_degree);
  int nq = static_cast<int>(vr.rule.points.size());
  int ntet = static_cast<int>(sp.mesh.tets.size());

  // shared basis table and per-point weights for the ascent quadrature
  Eigen::MatrixXd phi(nq, 10);
  for (int q = 0; q < nq; ++q) {
    double row[10];
    P2Space::basis_values(vr.lam[q], row);
    for (int a = 0; a < 10; ++a) phi(q, a) = row[a];
  }
  std::vector<double> wq(size_t(ntet) * nq);
  bool flat = sp.metric.is_flat();
  for (int t = 0; t < ntet; ++t)
    for (int q = 0; q < nq; ++q) {
      double w = vr.rule.weights[q] * 6.0 * sp.tet_vol[t];
      if (!flat) w *= std::sqrt(sp.metric.g(sp.point(t, vr.lam[q])).determinant());
      wq[size_t(t) * nq + q] = w;
    }

  // sixth-power numerator and its fifth-power moments at the ascent degree
  auto numerator = [&](const VecX& f, double fbar, VecX* moment, double* s5) {
    double n6 = 0, acc5 = 0;
    if (moment) moment->setZero();
    for (int t = 0; t < ntet; ++t) {
      const auto& dofs = sp.tet_dofs[t];
      for (int q = 0; q < nq; ++q) {
        double u = -fbar;
        for (int a = 0; a < 10; ++a) u += phi(q, a) * f[dofs[a]];
        double w = wq[size_t(t) * nq + q];
        double u2 = u * u, u4 = u2 * u2;
        n6 += w * u4 * u2;
        if (moment) {
          double wu5 = w * u4 * u;
          acc5 += wu5;
          for (int a = 0; a < 10; ++a) (*moment)[dofs[a]] += wu5 * phi(q, a);
        }
      }
    }
    if (s5) *s5 = acc5;
    return std::pow(n6, 1.0 / 6.0);
  };

  auto ascent_quotient = [&](const VecX& f) {
    double d2 = f.dot(A * f);
    if (d2 <= 0) return 0.0;
    return numerator(f, m.dot(f) / area, nullptr, nullptr) / std::sqrt(d2);
  };

  SobolevEstimate best;
  best.report.name = "cSob(Sigma)";
  best.report.method = "projected-gradient-ascent";
  best.report.value = 0;

  for (int r = 0; r < opt.restarts; ++r) {
    std::mt19937_64 rng(opt.seed + 1000003ull * std::uint64_t(r));
    std::normal_distribution<double> gauss(0.0, 1.0);
    VecX f(sp.n_dof);
    double d2 = 0;
    for (int attempt = 0; attempt < 8 && d2 <= 1e-14; ++attempt) {
      double c[10];
      for (double& x : c) x = gauss(rng);
      for (int d = 0; d < sp.n_dof; ++d) {
        const Vec3& p = sp.dof_pos[d];
        f[d] = c[0] + c[1] * p[0] + c[2] * p[1] + c[3] * p[2] + c[4] * p[0] * p[0] +
               c[5] * p[1] * p[1] + c[6] * p[2] * p[2] + c[7] * p[0] * p[1] + c[8] * p[0] * p[2] +
               c[9] * p[1] * p[2];
      }
      d2 = f.dot(A * f);
    }
    if (d2 <= 1e-14) continue;  // every start degenerate; skip the restart
    f /= std::sqrt(d2);

    double qv = ascent_quotient(f);
    double step = 0.5;
    VecX moment(sp.n_dof);
    for (int it = 0; it < opt.iterations; ++it) {
      double s5 = 0;
      double nval = numerator(f, m.dot(f) / area, &moment, &s5);
      // gradient of the quotient on the unit-energy sphere
      VecX grad = std::pow(nval, -5) * (moment - (s5 / area) * m) - qv * (A * f);
      double gn = grad.norm();
      if (gn < 1e-14) break;
      bool accepted = false;
      for (int bt = 0; bt < 30; ++bt) {
        VecX fn = f + step * grad;
        double dn2 = fn.dot(A * fn);
        if (dn2 > 1e-20) {
          fn /= std::sqrt(dn2);
          double qn = ascent_quotient(fn);
          if (qn > qv) {
            f = std::move(fn);
            qv = qn;
            step = std::min(step * 1.5, 1e3);
            accepted = true;
            break;
          }
        }
        step *= 0.5;
      }
      if (!accepted) break;  // numerically stationary
    }

    double qfinal = sobolev_quotient(sp, A, m, area, f, opt.eval_degree);
    if (qfinal > best.report.value) {
      best.report.value = qfinal;
      best.maximizer = f;
    }
  }
  return best;
}

// The constants the smallness assumptions are phrased against: volumes, the
// Sobolev quotient bound, the trace norm of the boundary normal field, their
// max, and the two smallness measures (curvature in L2, shape operator
// deviation in the trace norm).
struct HypothesisReport {
  double volume = 0;
  double boundary_area = 0;
  double c_sob = 0;  // 0 when the estimate was skipped
  double normal_h_half = 0;
  double lambda = 0;
  double eps_riemann = 0;
  double eps_theta = 0;
  double max_solver_residual = 0;
};

inline HypothesisReport build_hypothesis_report(const P2Space& sp, const BoundaryGeometry& bg,
                                                const TraceNorms& tn, bool with_sobolev = true,
                                                const SobolevOptions& sopt = {},
                                                const SolveOptions& solve_opt = {}) {
  HypothesisReport hr;
  int nq = sp.nq();
  for (size_t t = 0; t < sp.mesh.tets.size(); ++t)
    for (int q = 0; q < nq; ++q) {
      Vec3 pos = sp.point(static_cast<int>(t), sp.ref_lam[q]);
      hr.volume +=
          sp.rule.weights[q] * 6.0 * sp.tet_vol[t] * std::sqrt(sp.metric.g(pos).determinant());
    }
  hr.boundary_area = bg.total_area;

  // trace norm of the vertex-normal field, lifted linearly to the P2 trace
  std::vector<Vec3> vnormal(sp.mesh.vertices.size(), Vec3::Zero());
  for (size_t sv = 0; sv < bg.surf.vertices.size(); ++sv) {
    int vv = bg.surf.to_volume_vertex[sv];
    if (vv >= 0) vnormal[vv] = bg.vertex_normal[sv];
  }
  std::array<VecX, 3> ndata;
  for (int c = 0; c < 3; ++c)
    ndata[c] = pl_lift(sp, [&](int v) { return vnormal[v][c]; });
  NormReport nh = tn.h_half_vector(ndata, Variance::Contravariant, nullptr, solve_opt);
  hr.normal_h_half = nh.value;
  hr.max_solver_residual = std::max(hr.max_solver_residual, nh.solver_residual);

  // curvature smallness: L2 of the full curvature tensor
  hr.eps_riemann = lp_norm_scalar(
                       sp.mesh, sp.metric,
                       [&](const Vec3& p) { return std::sqrt(curvature(sp.metric, p).riemann_norm2()); },
                       2.0)
                       .value;

  // shape-operator smallness: theta - gbar pushed to chart components with the
  // metric-dual tangent coframe (the pointwise chart norm then equals the
  // intrinsic one), projected to boundary dofs, extended componentwise
  {
    int nqb = bg.nq();
    std::vector<std::array<double, 6>> samples(bg.qp_pos.size());
    for (size_t f = 0; f < bg.surf.tris.size(); ++f) {
      const Vec3& t1 = bg.face_t1[f];
      const Vec3& t2 = bg.face_t2[f];
      for (int q = 0; q < nqb; ++q) {
        int idx = bg.qp(static_cast<int>(f), q);
        Mat3 g = sp.metric.g(bg.qp_pos[idx]);
        Mat2 dev = bg.qp_theta[idx] - bg.qp_gbar[idx];
        Mat2 gbar_inv = bg.qp_gbar_inv[idx];
        Vec3 gt[2] = {g * t1, g * t2};
        Vec3 sigma[2];
        for (int a = 0; a < 2; ++a) sigma[a] = gbar_inv(a, 0) * gt[0] + gbar_inv(a, 1) * gt[1];
        Mat3 T = Mat3::Zero();
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) T += dev(a, b) * sigma[a] * sigma[b].transpose();
        for (int c = 0; c < 6; ++c)
          samples[idx][c] = T(TraceNorms::kSymIdx[c][0], TraceNorms::kSymIdx[c][1]);
      }
    }
    std::array<VecX, 6> tdata;
    for (int c = 0; c < 6; ++c) {
      PcgInfo info;
      tdata[c] = tn.project_boundary_samples(
          [&](int f, int q) { return samples[bg.qp(f, q)][c]; }, &info, solve_opt);
      hr.max_solver_residual = std::max(hr.max_solver_residual, info.residual);
    }
    NormReport th = tn.h_half_tensor2(tdata, nullptr, solve_opt);
    hr.eps_theta = th.value;
    hr.max_solver_residual = std::max(hr.max_solver_residual, th.solver_residual);
  }

  if (with_sobolev) hr.c_sob = estimate_sobolev_constant(sp, tn, sopt).report.value;

  hr.lambda = std::max(std::max(hr.volume, 1.0 / hr.boundary_area),
                       std::max(hr.c_sob, hr.normal_h_half));
  return hr;
}

}  // namespace ballmap
