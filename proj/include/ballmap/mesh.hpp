#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "ballmap/common.hpp"

namespace ballmap {

/// Straight-sided tetrahedral mesh of a chart domain in R^3. Tets are kept
/// positively oriented; the constructor repairs inverted input tuples by a
/// vertex swap and counts the repairs. Boundary faces are stored with
/// outward orientation and must form a closed orientable 2-manifold.
struct TetMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 4>> tets;
  std::vector<std::array<int, 3>> boundary_faces;  // outward oriented
  std::vector<int> boundary_face_tet;              // owning tet per boundary face
  std::vector<char> vertex_on_boundary;
  int orientation_repairs = 0;
  double target_h = 0.0;  // generator target edge length, 0 for loaded meshes

  TetMesh() = default;
  TetMesh(std::vector<Vec3> verts, std::vector<std::array<int, 4>> tet_list)
      : vertices(std::move(verts)), tets(std::move(tet_list)) {
    finalize();
  }

  static double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    return (b - a).cross(c - a).dot(d - a) / 6.0;
  }

  double tet_volume(int t) const {
    const auto& T = tets[t];
    return signed_volume(vertices[T[0]], vertices[T[1]], vertices[T[2]], vertices[T[3]]);
  }

  double max_edge_length() const {
    double m = 0;
    for (const auto& T : tets)
      for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b)
          m = std::max(m, (vertices[T[a]] - vertices[T[b]]).norm());
    return m;
  }

  double total_chart_volume() const {
    double v = 0;
    for (std::size_t t = 0; t < tets.size(); ++t) v += tet_volume(int(t));
    return v;
  }

  /// Faces of a positively oriented tet (v0,v1,v2,v3), outward oriented.
  static std::array<std::array<int, 3>, 4> outward_faces(const std::array<int, 4>& T) {
    return {{{T[1], T[2], T[3]}, {T[0], T[3], T[2]}, {T[0], T[1], T[3]}, {T[0], T[2], T[1]}}};
  }

  void finalize() {
    if (vertices.empty() || tets.empty()) throw MeshError("empty mesh");
    for (const auto& T : tets)
      for (int v : T)
        if (v < 0 || v >= int(vertices.size())) throw MeshError("tet vertex index out of range");

    orientation_repairs = 0;
    for (auto& T : tets) {
      double vol = signed_volume(vertices[T[0]], vertices[T[1]], vertices[T[2]], vertices[T[3]]);
      if (vol < 0) {
        std::swap(T[2], T[3]);
        ++orientation_repairs;
        vol = -vol;
      }
      if (!(vol > 0)) throw MeshError("degenerate tet (zero volume)");
    }

    // Face incidence: key -> (count, owning tet, oriented face as seen from that tet).
    struct FaceRec {
      int count = 0;
      int tet = -1;
      std::array<int, 3> oriented{};
    };
    std::unordered_map<std::uint64_t, FaceRec> faces;
    faces.reserve(tets.size() * 4);
    auto face_key = [](std::array<int, 3> f) {
      std::sort(f.begin(), f.end());
      // Vertex counts stay well under 2^21 in practice; pack sorted triple.
      return (std::uint64_t(f[0]) << 42) | (std::uint64_t(f[1]) << 21) | std::uint64_t(f[2]);
    };
    for (std::size_t t = 0; t < tets.size(); ++t) {
      for (const auto& f : outward_faces(tets[t])) {
        auto& rec = faces[face_key(f)];
        rec.count++;
        if (rec.count == 1) {
          rec.tet = int(t);
          rec.oriented = f;
        }
        if (rec.count > 2) throw MeshError("face shared by more than two tets");
      }
    }

    boundary_faces.clear();
    boundary_face_tet.clear();
    for (const auto& [key, rec] : faces) {
      (void)key;
      if (rec.count == 1) {
        boundary_faces.push_back(rec.oriented);
        boundary_face_tet.push_back(rec.tet);
      }
    }
    // Deterministic order regardless of hash-map iteration.
    std::vector<std::size_t> order(boundary_faces.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return boundary_faces[a] < boundary_faces[b];
    });
    std::vector<std::array<int, 3>> bf(order.size());
    std::vector<int> bt(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      bf[i] = boundary_faces[order[i]];
      bt[i] = boundary_face_tet[order[i]];
    }
    boundary_faces.swap(bf);
    boundary_face_tet.swap(bt);
    if (boundary_faces.empty()) throw MeshError("mesh has no boundary");

    // Closed orientable boundary: every directed boundary edge must appear
    // exactly once, and its reversal exactly once.
    std::unordered_map<std::uint64_t, int> directed;
    directed.reserve(boundary_faces.size() * 3);
    auto dir_key = [](int a, int b) { return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b); };
    for (const auto& f : boundary_faces)
      for (int e = 0; e < 3; ++e)
        if (++directed[dir_key(f[e], f[(e + 1) % 3])] > 1)
          throw MeshError("boundary is not an orientable 2-manifold (repeated directed edge)");
    for (const auto& f : boundary_faces)
      for (int e = 0; e < 3; ++e)
        if (!directed.count(dir_key(f[(e + 1) % 3], f[e])))
          throw MeshError("boundary is not closed (unmatched directed edge)");

    vertex_on_boundary.assign(vertices.size(), 0);
    for (const auto& f : boundary_faces)
      for (int v : f) vertex_on_boundary[v] = 1;
  }
};

namespace detail {

/// Smooth bijection of the cube [-1,1]^3 onto the closed unit ball; the cube
/// surface lands exactly on the unit sphere.
inline Vec3 cube_to_ball(const Vec3& p) {
  double x = p.x(), y = p.y(), z = p.z();
  return Vec3(x * std::sqrt(1.0 - y * y / 2 - z * z / 2 + y * y * z * z / 3),
              y * std::sqrt(1.0 - z * z / 2 - x * x / 2 + z * z * x * x / 3),
              z * std::sqrt(1.0 - x * x / 2 - y * y / 2 + x * x * y * y / 3));
}

}  // namespace detail

/// Structured ball mesh: Freudenthal 6-tet split of an n^3 cube grid pushed
/// through the smooth cube-to-ball map. Boundary vertices are renormalized
/// onto the sphere of the requested radius, so they sit on it to 1e-12.
/// n is increased until the max edge length is <= 1.5 * target_h * radius.
namespace detail {

// Tangential Laplacian smoothing of the sphere boundary (projected back to
// the unit sphere) followed by interior relaxation. Equalizes the vertex fans
// inherited from the cube parameterization; without this, normals at the
// cube-edge image vertices are only first-order accurate and everything
// derived from the interpolated normal field stalls near O(h^0.6).
inline void relax_ball_mesh(TetMesh& mesh, int surf_iters = 5, int vol_iters = 3,
                            double lam = 0.5) {
  size_t nv = mesh.vertices.size();
  std::vector<std::vector<int>> sadj(nv);
  for (const auto& F : mesh.boundary_faces)
    for (int e = 0; e < 3; ++e) {
      sadj[F[e]].push_back(F[(e + 1) % 3]);
      sadj[F[e]].push_back(F[(e + 2) % 3]);
    }
  for (auto& a : sadj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  std::vector<std::vector<int>> vadj(nv);
  for (const auto& T : mesh.tets)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (i != j) vadj[T[i]].push_back(T[j]);
  for (auto& a : vadj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }

  auto all_positive = [&](const std::vector<Vec3>& pos) {
    for (const auto& T : mesh.tets)
      if (TetMesh::signed_volume(pos[T[0]], pos[T[1]], pos[T[2]], pos[T[3]]) <= 0) return false;
    return true;
  };
  // Run one averaging pass at step s, backtracking s until no tet inverts.
  auto safe_pass = [&](bool surface) {
    for (double s = lam; s > lam / 64; s *= 0.5) {
      auto np = mesh.vertices;
      for (size_t v = 0; v < nv; ++v) {
        if (surface) {
          if (sadj[v].empty()) continue;
          Vec3 avg = Vec3::Zero();
          for (int u : sadj[v]) avg += mesh.vertices[u];
          avg /= double(sadj[v].size());
          np[v] = (mesh.vertices[v] + s * (avg - mesh.vertices[v])).normalized();
        } else {
          if (mesh.vertex_on_boundary[v]) continue;
          Vec3 avg = Vec3::Zero();
          for (int u : vadj[v]) avg += mesh.vertices[u];
          avg /= double(vadj[v].size());
          np[v] = mesh.vertices[v] + s * (avg - mesh.vertices[v]);
        }
      }
      if (all_positive(np)) {
        mesh.vertices = std::move(np);
        return;
      }
    }
    // step too small to matter; leave positions as they are
  };
  // interleaved so the interior keeps tracking the moving boundary
  for (int it = 0; it < std::max(surf_iters, vol_iters); ++it) {
    if (it < surf_iters) safe_pass(true);
    if (it < vol_iters) safe_pass(false);
  }
}

}  // namespace detail

inline TetMesh generate_ball_mesh(double target_h, double radius = 1.0) {
  if (!(target_h > 0) || !(radius > 0)) throw MeshError("generate_ball_mesh: bad parameters");
  if (target_h < 0.02) throw MeshError("generate_ball_mesh: target edge length too small");
  int n = std::max(2, int(std::ceil(2.0 * std::sqrt(3.0) / (1.5 * target_h))));
  for (;; ++n) {
    if (n > 256) throw MeshError("generate_ball_mesh: resolution out of range");
    std::vector<Vec3> verts;
    verts.reserve((n + 1) * (n + 1) * (n + 1));
    auto vid = [n](int i, int j, int k) { return (i * (n + 1) + j) * (n + 1) + k; };
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j)
        for (int k = 0; k <= n; ++k) {
          Vec3 cube(2.0 * i / n - 1.0, 2.0 * j / n - 1.0, 2.0 * k / n - 1.0);
          Vec3 q = detail::cube_to_ball(cube);
          bool on_surface = (i == 0 || i == n || j == 0 || j == n || k == 0 || k == n);
          if (on_surface) q.normalize();
          verts.push_back(q);
        }

    // Freudenthal: six tets per cell, one per axis ordering, sharing the
    // main diagonal; even orderings keep positive orientation, odd ones are
    // emitted with the last two corners swapped.
    static const int perms[6][3] = {{0, 1, 2}, {1, 2, 0}, {2, 0, 1}, {0, 2, 1}, {2, 1, 0}, {1, 0, 2}};
    static const bool odd[6] = {false, false, false, true, true, true};
    std::vector<std::array<int, 4>> tets;
    tets.reserve(std::size_t(6) * n * n * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          int base[3] = {i, j, k};
          for (int p = 0; p < 6; ++p) {
            int a[3] = {base[0], base[1], base[2]};
            int v0 = vid(a[0], a[1], a[2]);
            a[perms[p][0]]++;
            int v1 = vid(a[0], a[1], a[2]);
            a[perms[p][1]]++;
            int v2 = vid(a[0], a[1], a[2]);
            a[perms[p][2]]++;
            int v3 = vid(a[0], a[1], a[2]);
            if (odd[p]) std::swap(v2, v3);
            tets.push_back({v0, v1, v2, v3});
          }
        }

    TetMesh mesh(std::move(verts), std::move(tets));
    detail::relax_ball_mesh(mesh);
    for (auto& v : mesh.vertices) v *= radius;
    mesh.target_h = target_h * radius;
    if (mesh.max_edge_length() <= 1.5 * target_h * radius) return mesh;
  }
}

/// Native ASCII format:
///   tetmesh 1
///   vertices N      followed by N lines "x y z"
///   tets M          followed by M lines "i j k l" (0-based)
///   boundary K      optional, K lines "a b c" cross-checked against the mesh
/// '#' starts a comment anywhere.
inline TetMesh load_mesh_native(std::istream& in) {
  auto next_token_line = [&in](std::string& line) -> bool {
    while (std::getline(in, line)) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t\r\n") != std::string::npos) return true;
    }
    return false;
  };
  std::string line;
  if (!next_token_line(line)) throw ParseError("empty mesh file");
  {
    std::istringstream ls(line);
    std::string magic;
    int version = 0;
    ls >> magic >> version;
    if (magic != "tetmesh" || version != 1) throw ParseError("expected header 'tetmesh 1'");
  }

  std::vector<Vec3> verts;
  std::vector<std::array<int, 4>> tets;
  std::vector<std::array<int, 3>> declared_boundary;
  while (next_token_line(line)) {
    std::istringstream ls(line);
    std::string kw;
    long count = 0;
    ls >> kw >> count;
    if (ls.fail() || count < 0) throw ParseError("bad section header: " + line);
    if (kw == "vertices") {
      verts.reserve(count);
      for (long i = 0; i < count; ++i) {
        if (!next_token_line(line)) throw ParseError("truncated vertices section");
        std::istringstream vs(line);
        double x, y, z;
        vs >> x >> y >> z;
        if (vs.fail()) throw ParseError("bad vertex line: " + line);
        verts.emplace_back(x, y, z);
      }
    } else if (kw == "tets") {
      tets.reserve(count);
      for (long i = 0; i < count; ++i) {
        if (!next_token_line(line)) throw ParseError("truncated tets section");
        std::istringstream ts(line);
        std::array<int, 4> T{};
        ts >> T[0] >> T[1] >> T[2] >> T[3];
        if (ts.fail()) throw ParseError("bad tet line: " + line);
        tets.push_back(T);
      }
    } else if (kw == "boundary") {
      declared_boundary.reserve(count);
      for (long i = 0; i < count; ++i) {
        if (!next_token_line(line)) throw ParseError("truncated boundary section");
        std::istringstream bs(line);
        std::array<int, 3> F{};
        bs >> F[0] >> F[1] >> F[2];
        if (bs.fail()) throw ParseError("bad boundary line: " + line);
        declared_boundary.push_back(F);
      }
    } else {
      throw ParseError("unknown section: " + kw);
    }
  }
  if (verts.empty()) throw ParseError("missing vertices section");
  if (tets.empty()) throw ParseError("missing tets section");

  TetMesh mesh(std::move(verts), std::move(tets));
  if (!declared_boundary.empty()) {
    if (declared_boundary.size() != mesh.boundary_faces.size())
      throw ParseError("declared boundary face count does not match mesh boundary");
    std::unordered_set<std::uint64_t> actual;
    auto key = [](std::array<int, 3> f) {
      std::sort(f.begin(), f.end());
      return (std::uint64_t(f[0]) << 42) | (std::uint64_t(f[1]) << 21) | std::uint64_t(f[2]);
    };
    for (const auto& f : mesh.boundary_faces) actual.insert(key(f));
    for (const auto& f : declared_boundary)
      if (!actual.count(key(f))) throw ParseError("declared boundary face is not a boundary face of the mesh");
  }
  return mesh;
}

/// Minimal medit .mesh reader (Vertices / Tetrahedra sections, 1-based).
inline TetMesh load_mesh_medit(std::istream& in) {
  std::vector<Vec3> verts;
  std::vector<std::array<int, 4>> tets;
  std::string kw;
  while (in >> kw) {
    if (kw == "MeshVersionFormatted" || kw == "Dimension") {
      int dummy;
      in >> dummy;
    } else if (kw == "Vertices") {
      long n;
      in >> n;
      if (in.fail() || n <= 0) throw ParseError("medit: bad vertex count");
      verts.reserve(n);
      for (long i = 0; i < n; ++i) {
        double x, y, z;
        int ref;
        in >> x >> y >> z >> ref;
        if (in.fail()) throw ParseError("medit: bad vertex line");
        verts.emplace_back(x, y, z);
      }
    } else if (kw == "Tetrahedra") {
      long n;
      in >> n;
      if (in.fail() || n <= 0) throw ParseError("medit: bad tetrahedra count");
      tets.reserve(n);
      for (long i = 0; i < n; ++i) {
        std::array<int, 4> T{};
        int ref;
        in >> T[0] >> T[1] >> T[2] >> T[3] >> ref;
        if (in.fail()) throw ParseError("medit: bad tetrahedron line");
        for (int& v : T) v -= 1;
        tets.push_back(T);
      }
    } else if (kw == "Triangles" || kw == "Edges" || kw == "Corners" || kw == "Ridges" ||
               kw == "RequiredVertices") {
      long n;
      in >> n;
      int fields = (kw == "Triangles") ? 4 : (kw == "Edges" ? 3 : 1);
      for (long i = 0; i < n * fields; ++i) {
        double dummy;
        in >> dummy;
      }
    } else if (kw == "End") {
      break;
    } else {
      throw ParseError("medit: unsupported section " + kw);
    }
  }
  if (verts.empty() || tets.empty()) throw ParseError("medit: missing vertices or tetrahedra");
  return TetMesh(std::move(verts), std::move(tets));
}

enum class MeshFormat { NativeAscii, MeditMesh };

inline TetMesh load_mesh(const std::string& path, MeshFormat format) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open mesh file: " + path);
  return format == MeshFormat::NativeAscii ? load_mesh_native(in) : load_mesh_medit(in);
}

inline void save_mesh_native(const TetMesh& mesh, std::ostream& out) {
  out << "tetmesh 1\n";
  out << "vertices " << mesh.vertices.size() << "\n";
  char buf[96];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  out << "tets " << mesh.tets.size() << "\n";
  for (const auto& T : mesh.tets) out << T[0] << " " << T[1] << " " << T[2] << " " << T[3] << "\n";
  out << "boundary " << mesh.boundary_faces.size() << "\n";
  for (const auto& f : mesh.boundary_faces) out << f[0] << " " << f[1] << " " << f[2] << "\n";
}

inline void save_mesh(const TetMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open output file: " + path);
  save_mesh_native(mesh, out);
}

/// Closed oriented triangle surface, either extracted from a TetMesh
/// boundary (keeping the outward orientation and the volume-vertex map) or
/// built synthetically for tests.
struct SurfaceMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> tris;
  std::vector<int> to_volume_vertex;  // -1 entries for synthetic surfaces
  std::vector<int> tri_to_boundary_face;

  SurfaceMesh() = default;
  SurfaceMesh(std::vector<Vec3> verts, std::vector<std::array<int, 3>> faces)
      : vertices(std::move(verts)), tris(std::move(faces)) {
    to_volume_vertex.assign(vertices.size(), -1);
    tri_to_boundary_face.assign(tris.size(), -1);
    validate();
  }

  void validate() const {
    std::unordered_map<std::uint64_t, int> directed;
    auto dir_key = [](int a, int b) { return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b); };
    for (const auto& f : tris)
      for (int e = 0; e < 3; ++e)
        if (++directed[dir_key(f[e], f[(e + 1) % 3])] > 1)
          throw TopologyError("surface: repeated directed edge");
    for (const auto& f : tris)
      for (int e = 0; e < 3; ++e)
        if (!directed.count(dir_key(f[(e + 1) % 3], f[e])))
          throw TopologyError("surface: boundary edge in a closed surface");
  }

  std::size_t edge_count() const {
    std::unordered_set<std::uint64_t> edges;
    for (const auto& f : tris)
      for (int e = 0; e < 3; ++e) edges.insert(edge_key(f[e], f[(e + 1) % 3]));
    return edges.size();
  }

  int euler_characteristic() const {
    return int(vertices.size()) - int(edge_count()) + int(tris.size());
  }

  int component_count() const {
    std::vector<int> parent(vertices.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) {
      while (parent[a] != a) a = parent[a] = parent[parent[a]];
      return a;
    };
    for (const auto& f : tris) {
      int a = find(f[0]);
      parent[find(f[1])] = a;
      parent[find(f[2])] = a;
    }
    std::unordered_set<int> roots;
    bool any_used = false;
    std::vector<char> used(vertices.size(), 0);
    for (const auto& f : tris)
      for (int v : f) used[v] = 1, any_used = true;
    (void)any_used;
    for (std::size_t v = 0; v < vertices.size(); ++v)
      if (used[v]) roots.insert(find(int(v)));
    return int(roots.size());
  }

  double chordal_area() const {
    double a = 0;
    for (const auto& f : tris)
      a += 0.5 * (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]).norm();
    return a;
  }
};

inline SurfaceMesh extract_boundary(const TetMesh& mesh) {
  SurfaceMesh s;
  std::vector<int> vol_to_surf(mesh.vertices.size(), -1);
  for (std::size_t fi = 0; fi < mesh.boundary_faces.size(); ++fi) {
    const auto& f = mesh.boundary_faces[fi];
    std::array<int, 3> tri{};
    for (int e = 0; e < 3; ++e) {
      int v = f[e];
      if (vol_to_surf[v] < 0) {
        vol_to_surf[v] = int(s.vertices.size());
        s.vertices.push_back(mesh.vertices[v]);
        s.to_volume_vertex.push_back(v);
      }
      tri[e] = vol_to_surf[v];
    }
    s.tris.push_back(tri);
    s.tri_to_boundary_face.push_back(int(fi));
  }
  s.validate();
  return s;
}

}  // namespace ballmap
