#pragma once

#include "ballmap/common.hpp"

namespace ballmap {

/// Gauss-Legendre nodes/weights on [0,1], exact for polynomials of degree 2n-1.
inline void gauss_legendre_01(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    // Chebyshev initial guess on [-1,1], refined by Newton on P_n.
    double t = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double p0 = 0, p1 = 0;
    for (int it = 0; it < 100; ++it) {
      p0 = 1.0;
      p1 = 0.0;
      for (int k = 0; k < n; ++k) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2 * k + 1) * t * p1 - k * p2) / (k + 1);
      }
      double dp = n * (t * p0 - p1) / (t * t - 1.0);
      double dt = p0 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    p0 = 1.0;
    p1 = 0.0;
    for (int k = 0; k < n; ++k) {
      double p2 = p1;
      p1 = p0;
      p0 = ((2 * k + 1) * t * p1 - k * p2) / (k + 1);
    }
    double dp = n * (t * p0 - p1) / (t * t - 1.0);
    x[i] = 0.5 * (1.0 + t);
    w[i] = 1.0 / ((1.0 - t * t) * dp * dp);
  }
}

/// Quadrature rule on the reference simplex: unit triangle {x,y>=0, x+y<=1}
/// (points carry a zero third coordinate) or unit tetrahedron
/// {x,y,z>=0, x+y+z<=1}. Weights include the reference measure, so they sum
/// to 1/2 (triangle) or 1/6 (tet). Built as a collapsed (Duffy) tensor
/// product of Gauss-Legendre rules, which keeps polynomial exactness up to
/// the declared degree without hard-coded point tables.
struct QuadratureRule {
  int degree = 0;
  int dim = 3;
  std::vector<Vec3> points;
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }

  static QuadratureRule tetrahedron(int degree) {
    QuadratureRule r;
    r.degree = degree;
    r.dim = 3;
    // Duffy map x=u, y=v(1-u), z=w(1-u)(1-v), Jacobian (1-u)^2 (1-v).
    // A degree-d monomial needs GL exactness d+2 in u, d+1 in v, d in w.
    int mu = (degree + 3 + 1) / 2, mv = (degree + 2 + 1) / 2, mw = (degree + 1 + 1) / 2;
    std::vector<double> xu, wu, xv, wv, xw, ww;
    gauss_legendre_01(mu, xu, wu);
    gauss_legendre_01(mv, xv, wv);
    gauss_legendre_01(mw, xw, ww);
    for (int a = 0; a < mu; ++a)
      for (int b = 0; b < mv; ++b)
        for (int c = 0; c < mw; ++c) {
          double u = xu[a], v = xv[b], w = xw[c];
          double jac = (1.0 - u) * (1.0 - u) * (1.0 - v);
          r.points.emplace_back(u, v * (1.0 - u), w * (1.0 - u) * (1.0 - v));
          r.weights.push_back(wu[a] * wv[b] * ww[c] * jac);
        }
    return r;
  }

  static QuadratureRule triangle(int degree) {
    QuadratureRule r;
    r.degree = degree;
    r.dim = 2;
    int mu = (degree + 2 + 1) / 2, mv = (degree + 1 + 1) / 2;
    std::vector<double> xu, wu, xv, wv;
    gauss_legendre_01(mu, xu, wu);
    gauss_legendre_01(mv, xv, wv);
    for (int a = 0; a < mu; ++a)
      for (int b = 0; b < mv; ++b) {
        double u = xu[a], v = xv[b];
        r.points.emplace_back(u, v * (1.0 - u), 0.0);
        r.weights.push_back(wu[a] * wv[b] * (1.0 - u));
      }
    return r;
  }
};

}  // namespace ballmap
