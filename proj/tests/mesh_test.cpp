#include "ballmap/mesh.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace ballmap;

namespace {

TetMesh single_tet() {
  return TetMesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {{0, 1, 2, 3}});
}

// Two tets sharing face (1,2,3): a 5-vertex bipyramid-like solid.
TetMesh two_tets() {
  return TetMesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}},
                 {{0, 1, 2, 3}, {4, 1, 3, 2}});
}

}  // namespace

TEST(Mesh, SingleTetBasics) {
  auto m = single_tet();
  EXPECT_EQ(m.tets.size(), 1u);
  EXPECT_EQ(m.boundary_faces.size(), 4u);
  EXPECT_NEAR(m.total_chart_volume(), 1.0 / 6.0, 1e-15);
  EXPECT_EQ(m.orientation_repairs, 0);
  // All four vertices on the boundary.
  for (char b : m.vertex_on_boundary) EXPECT_EQ(b, 1);
}

TEST(Mesh, OrientationRepairCounted) {
  TetMesh m({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {{0, 2, 1, 3}});
  EXPECT_EQ(m.orientation_repairs, 1);
  EXPECT_GT(m.tet_volume(0), 0.0);
}

TEST(Mesh, SharedFaceNotOnBoundary) {
  auto m = two_tets();
  EXPECT_EQ(m.boundary_faces.size(), 6u);
  EXPECT_NEAR(m.total_chart_volume(), 0.5, 1e-14);
}

TEST(Mesh, RejectsFaceSharedByThreeTets) {
  EXPECT_THROW(TetMesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 0, -1}, {1, 1, 1}},
                       {{0, 1, 2, 3}, {0, 2, 1, 4}, {5, 1, 2, 0}}),
               MeshError);
}

TEST(Mesh, RejectsDegenerateTet) {
  EXPECT_THROW(TetMesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}}, {{0, 1, 2, 3}}), MeshError);
}

TEST(Mesh, RejectsOutOfRangeIndex) {
  EXPECT_THROW(TetMesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2, 7}}), MeshError);
}

TEST(Mesh, GeneratedBallMeetsContract) {
  double h = 0.4;
  auto m = generate_ball_mesh(h);
  EXPECT_LE(m.max_edge_length(), 1.5 * h + 1e-12);
  // Chart volume approximates |B_1| = 4pi/3 at second order.
  double vol = m.total_chart_volume();
  EXPECT_NEAR(vol, 4.0 * kPi / 3.0, 4.0 * kPi / 3.0 * 2.5 * h * h);
  // Boundary vertices exactly on the unit sphere.
  for (std::size_t v = 0; v < m.vertices.size(); ++v)
    if (m.vertex_on_boundary[v]) EXPECT_NEAR(m.vertices[v].norm(), 1.0, 1e-12);
  EXPECT_EQ(m.orientation_repairs, 0);
}

TEST(Mesh, GeneratedBallVolumeConvergesSecondOrder) {
  double exact = 4.0 * kPi / 3.0;
  double e1 = std::abs(generate_ball_mesh(0.6).total_chart_volume() - exact);
  double e2 = std::abs(generate_ball_mesh(0.3).total_chart_volume() - exact);
  EXPECT_GT(e1 / e2, 3.0);  // one halving should shrink the defect ~4x
}

TEST(Mesh, GeneratedBallScalesByRadius) {
  auto m = generate_ball_mesh(0.5, 2.0);
  for (std::size_t v = 0; v < m.vertices.size(); ++v)
    if (m.vertex_on_boundary[v]) EXPECT_NEAR(m.vertices[v].norm(), 2.0, 1e-12);
  EXPECT_NEAR(m.total_chart_volume(), 8.0 * 4.0 * kPi / 3.0, 8.0 * 4.19 * 0.7 * 0.25);
}

TEST(Mesh, BoundaryExtractionIsSphere) {
  auto m = generate_ball_mesh(0.4);
  auto s = extract_boundary(m);
  EXPECT_EQ(s.euler_characteristic(), 2);
  EXPECT_EQ(s.component_count(), 1);
  // Outward orientation: normal of each tri points away from origin.
  for (const auto& f : s.tris) {
    Vec3 n = (s.vertices[f[1]] - s.vertices[f[0]]).cross(s.vertices[f[2]] - s.vertices[f[0]]);
    Vec3 c = (s.vertices[f[0]] + s.vertices[f[1]] + s.vertices[f[2]]) / 3.0;
    EXPECT_GT(n.dot(c), 0.0);
  }
}

TEST(Mesh, NativeRoundTrip) {
  auto m = generate_ball_mesh(0.6);
  auto tmp = std::filesystem::temp_directory_path() / "ballmap_roundtrip.tetmesh";
  save_mesh(m, tmp.string());
  auto m2 = load_mesh(tmp.string(), MeshFormat::NativeAscii);
  ASSERT_EQ(m2.vertices.size(), m.vertices.size());
  ASSERT_EQ(m2.tets.size(), m.tets.size());
  for (std::size_t v = 0; v < m.vertices.size(); ++v)
    EXPECT_EQ(m2.vertices[v], m.vertices[v]);  // %.17g round-trips doubles
  EXPECT_EQ(m2.boundary_faces.size(), m.boundary_faces.size());
  std::filesystem::remove(tmp);
}

TEST(Mesh, NativeParserRejectsGarbage) {
  {
    std::istringstream in("tetmesh 2\n");
    EXPECT_THROW(load_mesh_native(in), ParseError);
  }
  {
    std::istringstream in("tetmesh 1\nvertices 2\n0 0 0\n");
    EXPECT_THROW(load_mesh_native(in), ParseError);
  }
  {
    std::istringstream in("tetmesh 1\nvertices 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\ntets 1\n0 1 2\n");
    EXPECT_THROW(load_mesh_native(in), ParseError);
  }
}

TEST(Mesh, NativeParserAcceptsCommentsAndBoundary) {
  std::istringstream in(
      "# a single tet\n"
      "tetmesh 1\n"
      "vertices 4 # four corners\n"
      "0 0 0\n1 0 0\n0 1 0\n0 0 1\n"
      "tets 1\n0 1 2 3\n"
      "boundary 4\n1 2 3\n0 3 2\n0 1 3\n0 2 1\n");
  auto m = load_mesh_native(in);
  EXPECT_EQ(m.tets.size(), 1u);
}

TEST(Mesh, NativeParserRejectsWrongBoundaryBlock) {
  std::istringstream in(
      "tetmesh 1\n"
      "vertices 5\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n1 1 1\n"
      "tets 2\n0 1 2 3\n4 1 3 2\n"
      "boundary 6\n1 2 3\n0 3 2\n0 1 3\n0 2 1\n4 1 2\n4 2 3\n");
  EXPECT_THROW(load_mesh_native(in), ParseError);  // (1,2,3) is interior here
}

TEST(Mesh, MeditReader) {
  std::istringstream in(
      "MeshVersionFormatted 2\nDimension 3\n"
      "Vertices\n4\n0 0 0 0\n1 0 0 0\n0 1 0 0\n0 0 1 0\n"
      "Tetrahedra\n1\n1 2 3 4 0\n"
      "End\n");
  auto m = load_mesh_medit(in);
  EXPECT_EQ(m.tets.size(), 1u);
  EXPECT_NEAR(m.total_chart_volume(), 1.0 / 6.0, 1e-15);
}
