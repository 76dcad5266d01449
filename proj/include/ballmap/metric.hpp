#pragma once

#include <functional>
#include <random>

#include "ballmap/common.hpp"

namespace ballmap {

/// Metric value with first and second coordinate derivatives at a point:
/// dg[k](i,j) = d_k g_ij, d2g[k][l](i,j) = d_k d_l g_ij.
struct MetricJet {
  Mat3 g = Mat3::Identity();
  std::array<Mat3, 3> dg{Mat3::Zero(), Mat3::Zero(), Mat3::Zero()};
  std::array<std::array<Mat3, 3>, 3> d2g{{{Mat3::Zero(), Mat3::Zero(), Mat3::Zero()},
                                          {Mat3::Zero(), Mat3::Zero(), Mat3::Zero()},
                                          {Mat3::Zero(), Mat3::Zero(), Mat3::Zero()}}};
};

struct MetricParams {
  // conformal family: g = exp(2*eps*f) delta with f = amplitude * bump(center,width)
  Vec3 center{0.25, 0.1, -0.15};
  double width = 0.55;
  double amplitude = 1.0;
  // bump-tensor family: g = delta + eps * bump2 * (A + (p . dir) B)
  Vec3 center2{-0.2, 0.15, 0.1};
  double width2 = 0.55;
  Vec3 dir{0.7, -0.4, 0.5};
};

enum class MetricFamily { Flat, Conformal, BumpTensor };

inline const char* family_name(MetricFamily f) {
  switch (f) {
    case MetricFamily::Flat: return "flat";
    case MetricFamily::Conformal: return "conformal";
    case MetricFamily::BumpTensor: return "bump-tensor";
  }
  return "?";
}

namespace detail {

/// Compactly supported C^2 radial profile (1 - |p-c|^2/w^2)^3 on its support.
/// value/grad/hess returned through out-parameters; identically zero outside.
inline void bump_jet(const Vec3& p, const Vec3& c, double w, double& b, Vec3& db, Mat3& d2b) {
  Vec3 q = p - c;
  double s = q.squaredNorm() / (w * w);
  if (s >= 1.0) {
    b = 0;
    db.setZero();
    d2b.setZero();
    return;
  }
  double t = 1.0 - s;
  Vec3 ds = 2.0 * q / (w * w);
  Mat3 d2s = (2.0 / (w * w)) * Mat3::Identity();
  b = t * t * t;
  db = -3.0 * t * t * ds;
  d2b = 6.0 * t * ds * ds.transpose() - 3.0 * t * t * d2s;
}

}  // namespace detail

/// Evaluator for one member of a metric family. Analytic derivatives are
/// part of the family definition; nothing here is differenced numerically.
struct MetricField {
  MetricFamily family = MetricFamily::Flat;
  double eps = 0.0;
  MetricParams params;

  bool is_flat() const { return family == MetricFamily::Flat || eps == 0.0; }

  MetricJet jet(const Vec3& p) const {
    MetricJet J;
    switch (family) {
      case MetricFamily::Flat:
        break;
      case MetricFamily::Conformal: {
        double b;
        Vec3 db;
        Mat3 d2b;
        detail::bump_jet(p, params.center, params.width, b, db, d2b);
        double u = eps * params.amplitude * b;
        Vec3 du = eps * params.amplitude * db;
        Mat3 d2u = eps * params.amplitude * d2b;
        double e2u = std::exp(2.0 * u);
        J.g = e2u * Mat3::Identity();
        for (int k = 0; k < 3; ++k) J.dg[k] = (2.0 * du[k] * e2u) * Mat3::Identity();
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l)
            J.d2g[k][l] = ((4.0 * du[k] * du[l] + 2.0 * d2u(k, l)) * e2u) * Mat3::Identity();
        break;
      }
      case MetricFamily::BumpTensor: {
        double b;
        Vec3 db;
        Mat3 d2b;
        detail::bump_jet(p, params.center2, params.width2, b, db, d2b);
        static const Mat3 A = (Mat3() << 1.0, 0.3, 0.0, 0.3, -0.5, 0.2, 0.0, 0.2, 0.4).finished();
        static const Mat3 B = (Mat3() << 0.0, 0.5, -0.2, 0.5, 0.3, 0.0, -0.2, 0.0, -0.6).finished();
        double lin = p.dot(params.dir);
        // h = b*(A + lin*B); product-rule jets.
        Mat3 h = b * (A + lin * B);
        J.g = Mat3::Identity() + eps * h;
        for (int k = 0; k < 3; ++k)
          J.dg[k] = eps * (db[k] * (A + lin * B) + b * params.dir[k] * B);
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l)
            J.d2g[k][l] = eps * (d2b(k, l) * (A + lin * B) + db[k] * params.dir[l] * B +
                                 db[l] * params.dir[k] * B);
        break;
      }
    }
    return J;
  }

  Mat3 g(const Vec3& p) const { return jet(p).g; }
};

/// Builds a family member and verifies positive-definiteness on a fixed
/// probe grid plus seeded random interior points.
inline MetricField make_metric(MetricFamily family, double eps, MetricParams params = {}) {
  MetricField m;
  m.family = family;
  m.eps = eps;
  m.params = params;

  std::vector<Vec3> probes;
  for (int i = 0; i <= 6; ++i)
    for (int j = 0; j <= 6; ++j)
      for (int k = 0; k <= 6; ++k)
        probes.emplace_back(-1.0 + i / 3.0, -1.0 + j / 3.0, -1.0 + k / 3.0);
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int i = 0; i < 64; ++i) probes.emplace_back(uni(rng), uni(rng), uni(rng));
  for (const auto& p : probes) {
    Eigen::SelfAdjointEigenSolver<Mat3> eig(m.g(p));
    if (eig.eigenvalues().minCoeff() <= 1e-10) {
      throw MetricError("metric is not positive definite at probe point (" +
                        std::to_string(p.x()) + ", " + std::to_string(p.y()) + ", " +
                        std::to_string(p.z()) + ")");
    }
  }
  return m;
}

using Christoffel = std::array<Mat3, 3>;  // [k](i,j) = Gamma^k_ij

inline Christoffel christoffel(const MetricJet& J) {
  Mat3 ginv = J.g.inverse();
  Christoffel G;
  for (int k = 0; k < 3; ++k) {
    G[k].setZero();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int l = 0; l < 3; ++l)
          s += ginv(k, l) * (J.dg[i](j, l) + J.dg[j](i, l) - J.dg[l](i, j));
        G[k](i, j) = 0.5 * s;
      }
  }
  return G;
}

/// dGamma[m][k](i,j) = d_m Gamma^k_ij, assembled from the analytic d2g.
inline std::array<Christoffel, 3> dchristoffel(const MetricJet& J) {
  Mat3 ginv = J.g.inverse();
  std::array<Mat3, 3> dginv;
  for (int m = 0; m < 3; ++m) dginv[m] = -ginv * J.dg[m] * ginv;
  std::array<Christoffel, 3> dG;
  for (int m = 0; m < 3; ++m)
    for (int k = 0; k < 3; ++k) {
      dG[m][k].setZero();
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          double s = 0;
          for (int l = 0; l < 3; ++l) {
            s += dginv[m](k, l) * (J.dg[i](j, l) + J.dg[j](i, l) - J.dg[l](i, j));
            s += ginv(k, l) * (J.d2g[m][i](j, l) + J.d2g[m][j](i, l) - J.d2g[m][l](i, j));
          }
          dG[m][k](i, j) = 0.5 * s;
        }
    }
  return dG;
}

/// Curvature data at a point. Convention (fixed for the whole artifact):
///   R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z,
///   rm(i,j,k,l) = g( R(e_i,e_j) e_k , e_l ),
///   Ric_jk = g^{il} rm(i,j,k,l),  so the round sphere has positive scalar.
struct CurvatureSample {
  Mat3 g, ginv;
  double sqrt_det = 1.0;
  Christoffel gamma;
  double rm[3][3][3][3] = {};
  Mat3 ricci = Mat3::Zero();
  double scalar = 0.0;
  Mat3 einstein = Mat3::Zero();

  double riemann_norm2() const {
    double n2 = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l) {
            double raised = 0;
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 3; ++b)
                for (int c = 0; c < 3; ++c)
                  for (int d = 0; d < 3; ++d)
                    raised += ginv(i, a) * ginv(j, b) * ginv(k, c) * ginv(l, d) * rm[a][b][c][d];
            n2 += raised * rm[i][j][k][l];
          }
    return n2;
  }
};

inline CurvatureSample curvature(const MetricField& metric, const Vec3& p) {
  MetricJet J = metric.jet(p);
  CurvatureSample c;
  c.g = J.g;
  c.ginv = J.g.inverse();
  c.sqrt_det = std::sqrt(J.g.determinant());
  c.gamma = christoffel(J);
  auto dG = dchristoffel(J);

  // R^l_{k;ij} = d_i Gamma^l_jk - d_j Gamma^l_ik
  //            + Gamma^l_im Gamma^m_jk - Gamma^l_jm Gamma^m_ik
  double up[3][3][3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) {
          double s = dG[i][l](j, k) - dG[j][l](i, k);
          for (int m = 0; m < 3; ++m)
            s += c.gamma[l](i, m) * c.gamma[m](j, k) - c.gamma[l](j, m) * c.gamma[m](i, k);
          up[l][k][i][j] = s;
        }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) {
          double s = 0;
          for (int m = 0; m < 3; ++m) s += J.g(l, m) * up[m][k][i][j];
          c.rm[i][j][k][l] = s;
        }
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k) {
      double s = 0;
      for (int i = 0; i < 3; ++i)
        for (int l = 0; l < 3; ++l) s += c.ginv(i, l) * c.rm[i][j][k][l];
      c.ricci(j, k) = s;
    }
  c.scalar = (c.ginv * c.ricci).trace();
  c.einstein = c.ricci - 0.5 * c.scalar * c.g;
  return c;
}

}  // namespace ballmap
