#include "ballmap/quadrature.hpp"

#include <gtest/gtest.h>

using namespace ballmap;

namespace {

// Exact monomial integrals over the reference simplices:
//   tet: x^a y^b z^c -> a! b! c! / (a+b+c+3)!
//   tri: x^a y^b     -> a! b! / (a+b+2)!
double factorial(int n) {
  double f = 1;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}
double tet_monomial(int a, int b, int c) {
  return factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3);
}
double tri_monomial(int a, int b) { return factorial(a) * factorial(b) / factorial(a + b + 2); }

}  // namespace

TEST(Quadrature, GaussLegendreNodes) {
  std::vector<double> x, w;
  gauss_legendre_01(5, x, w);
  double sw = 0, sx = 0;
  for (int i = 0; i < 5; ++i) {
    sw += w[i];
    sx += w[i] * std::pow(x[i], 9.0);
  }
  EXPECT_NEAR(sw, 1.0, 1e-14);
  EXPECT_NEAR(sx, 0.1, 1e-14);  // degree 9 exact with 5 points
}

TEST(Quadrature, TetWeightsSumToReferenceMeasure) {
  for (int deg : {1, 2, 4, 6, 12}) {
    auto r = QuadratureRule::tetrahedron(deg);
    double s = 0;
    for (double w : r.weights) s += w;
    EXPECT_NEAR(s, 1.0 / 6.0, 1e-13) << "degree " << deg;
    for (const auto& p : r.points) {
      EXPECT_GE(p.minCoeff(), 0.0);
      EXPECT_LE(p.sum(), 1.0 + 1e-14);
    }
  }
}

TEST(Quadrature, TriWeightsSumToReferenceMeasure) {
  for (int deg : {1, 2, 4, 8}) {
    auto r = QuadratureRule::triangle(deg);
    double s = 0;
    for (double w : r.weights) s += w;
    EXPECT_NEAR(s, 0.5, 1e-13) << "degree " << deg;
  }
}

TEST(Quadrature, TetExactForDeclaredDegree) {
  for (int deg : {2, 4, 5, 8, 12}) {
    auto r = QuadratureRule::tetrahedron(deg);
    for (int a = 0; a + 0 <= deg; ++a)
      for (int b = 0; a + b <= deg; ++b)
        for (int c = 0; a + b + c <= deg; ++c) {
          double q = 0;
          for (std::size_t i = 0; i < r.size(); ++i)
            q += r.weights[i] * std::pow(r.points[i].x(), a) * std::pow(r.points[i].y(), b) *
                 std::pow(r.points[i].z(), c);
          EXPECT_NEAR(q, tet_monomial(a, b, c), 1e-13)
              << "deg=" << deg << " monomial " << a << "," << b << "," << c;
        }
  }
}

TEST(Quadrature, TriExactForDeclaredDegree) {
  for (int deg : {2, 4, 8}) {
    auto r = QuadratureRule::triangle(deg);
    for (int a = 0; a <= deg; ++a)
      for (int b = 0; a + b <= deg; ++b) {
        double q = 0;
        for (std::size_t i = 0; i < r.size(); ++i)
          q += r.weights[i] * std::pow(r.points[i].x(), a) * std::pow(r.points[i].y(), b);
        EXPECT_NEAR(q, tri_monomial(a, b), 1e-13);
      }
  }
}
