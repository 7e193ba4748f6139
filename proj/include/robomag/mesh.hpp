#pragma once

// Triangle meshes and ASCII STL / OFF readers.

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "robomag/core.hpp"
#include "robomag/kinematics.hpp"

namespace robomag {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::string name;

  Vec3 corner(std::size_t tri, int k) const { return vertices[static_cast<std::size_t>(triangles[tri][k])]; }

  double triangle_area(std::size_t tri) const {
    return 0.5 * (corner(tri, 1) - corner(tri, 0)).cross(corner(tri, 2) - corner(tri, 0)).norm();
  }

  /// Throws InvalidArgument on bad indices, DegenerateGeometry on area <= 1e-12 m^2.
  void validate() const {
    const int nv = static_cast<int>(vertices.size());
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      for (int k : triangles[t]) {
        if (k < 0 || k >= nv)
          throw Error(ErrorKind::InvalidArgument,
                      name + ": triangle " + std::to_string(t) + " index " + std::to_string(k) + " out of range");
      }
      if (!(triangle_area(t) > 1e-12))
        throw Error(ErrorKind::DegenerateGeometry, name + ": triangle " + std::to_string(t) + " has zero area");
    }
  }

  /// Every undirected edge is shared by exactly two triangles.
  bool is_closed() const {
    if (triangles.empty()) return false;
    std::map<std::pair<int, int>, int> edges;
    for (const auto& t : triangles) {
      for (int k = 0; k < 3; ++k) {
        int a = t[k], b = t[(k + 1) % 3];
        if (a > b) std::swap(a, b);
        ++edges[{a, b}];
      }
    }
    for (const auto& [e, n] : edges) {
      if (n != 2) return false;
    }
    return true;
  }
};

/// Rigid transform: rotation (extrinsic x, y, z, rad) then translation (m).
inline TriangleMesh transformed(TriangleMesh mesh, const Vec3& translation, const Vec3& rotation_rad) {
  const Mat3 r = rot_z(rotation_rad.z()) * rot_y(rotation_rad.y()) * rot_x(rotation_rad.x());
  for (auto& v : mesh.vertices) v = r * v + translation;
  return mesh;
}

/// Closed axis-aligned box with outward-facing triangles.
inline TriangleMesh box_mesh(const Vec3& lo, const Vec3& hi, std::string name = "box") {
  TriangleMesh m;
  m.name = std::move(name);
  for (int i = 0; i < 8; ++i)
    m.vertices.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z());
  m.triangles = {{{0, 2, 1}}, {{1, 2, 3}}, {{4, 5, 6}}, {{5, 7, 6}}, {{0, 1, 4}}, {{1, 5, 4}},
                 {{2, 6, 3}}, {{3, 6, 7}}, {{0, 4, 2}}, {{2, 4, 6}}, {{1, 3, 5}}, {{3, 7, 5}}};
  return m;
}

/// Two-triangle rectangle spanned by `origin`, `origin + u`, `origin + v`, `origin + u + v`.
inline TriangleMesh quad_mesh(const Vec3& origin, const Vec3& u, const Vec3& v, std::string name = "quad") {
  TriangleMesh m;
  m.name = std::move(name);
  m.vertices = {origin, origin + u, origin + u + v, origin + v};
  m.triangles = {{{0, 1, 2}}, {{0, 2, 3}}};
  return m;
}

namespace detail {

// Tokeniser that keeps track of line numbers for error messages.
class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  // Next non-empty line with comments ('#') removed. False at EOF.
  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorKind::ParseError, source_ + ":" + std::to_string(line_no_) + ": " + msg);
  }

  int line() const { return line_no_; }

 private:
  std::istream& in_;
  std::string source_;
  int line_no_ = 0;
};

inline TriangleMesh parse_off(std::istream& in, const std::string& source) {
  LineReader rd(in, source);
  std::string line;
  if (!rd.next(line)) rd.fail("empty file");
  std::istringstream head(line);
  std::string magic;
  head >> magic;
  if (magic != "OFF") rd.fail("expected 'OFF' header");
  long nv = -1, nf = -1, ne = 0;
  if (!(head >> nv)) {
    if (!rd.next(line)) rd.fail("missing element counts");
    head = std::istringstream(line);
    head >> nv;
  }
  if (!(head >> nf)) rd.fail("missing face count");
  head >> ne;
  if (nv <= 0 || nf <= 0) rd.fail("vertex and face counts must be positive");

  TriangleMesh m;
  m.name = std::filesystem::path(source).stem().string();
  m.vertices.reserve(static_cast<std::size_t>(nv));
  for (long i = 0; i < nv; ++i) {
    if (!rd.next(line)) rd.fail("unexpected end of file in vertex list");
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z)) rd.fail("malformed vertex");
    m.vertices.emplace_back(x, y, z);
  }
  for (long f = 0; f < nf; ++f) {
    if (!rd.next(line)) rd.fail("unexpected end of file in face list");
    std::istringstream ls(line);
    int k;
    if (!(ls >> k) || k < 3) rd.fail("face needs at least 3 vertices");
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (auto& i : idx) {
      if (!(ls >> i)) rd.fail("malformed face");
      if (i < 0 || i >= nv) rd.fail("face index " + std::to_string(i) + " out of range");
    }
    for (int j = 1; j + 1 < k; ++j) m.triangles.push_back({idx[0], idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(j + 1)]});
  }
  return m;
}

inline TriangleMesh parse_ascii_stl(std::istream& in, const std::string& source) {
  LineReader rd(in, source);
  std::string line;
  if (!rd.next(line)) rd.fail("empty file");
  std::istringstream head(line);
  std::string kw;
  head >> kw;
  if (kw != "solid") rd.fail("expected 'solid'");
  TriangleMesh m;
  std::getline(head >> std::ws, m.name);
  if (m.name.empty()) m.name = std::filesystem::path(source).stem().string();

  // merge identical coordinates so shared edges are recognised
  std::map<std::tuple<double, double, double>, int> index;
  auto vertex_id = [&](const Vec3& v) {
    auto key = std::make_tuple(v.x(), v.y(), v.z());
    auto [it, fresh] = index.emplace(key, static_cast<int>(m.vertices.size()));
    if (fresh) m.vertices.push_back(v);
    return it->second;
  };

  auto expect = [&](const std::string& want) {
    if (!rd.next(line)) rd.fail("unexpected end of file, expected '" + want + "'");
    std::istringstream ls(line);
    std::string w;
    ls >> w;
    if (w != want) rd.fail("expected '" + want + "', found '" + w + "'");
    return ls.str();
  };

  while (true) {
    if (!rd.next(line)) rd.fail("missing 'endsolid'");
    std::istringstream ls(line);
    ls >> kw;
    if (kw == "endsolid") break;
    if (kw != "facet") rd.fail("expected 'facet', found '" + kw + "'");
    expect("outer");
    std::array<int, 3> tri{};
    for (int k = 0; k < 3; ++k) {
      std::istringstream vs(expect("vertex"));
      std::string w;
      double x, y, z;
      vs >> w;
      if (!(vs >> x >> y >> z)) rd.fail("malformed vertex");
      tri[static_cast<std::size_t>(k)] = vertex_id(Vec3(x, y, z));
    }
    expect("endloop");
    expect("endfacet");
    m.triangles.push_back(tri);
  }
  if (m.triangles.empty()) rd.fail("no facets");
  return m;
}

}  // namespace detail

/// Parse ASCII STL or OFF text. The format is taken from the first keyword.
inline TriangleMesh parse_mesh(std::istream& in, const std::string& source) {
  std::string first;
  {
    auto pos = in.tellg();
    in >> first;
    in.clear();
    in.seekg(pos);
  }
  TriangleMesh m;
  if (first.rfind("OFF", 0) == 0) {
    m = detail::parse_off(in, source);
  } else if (first == "solid") {
    m = detail::parse_ascii_stl(in, source);
  } else if (first.empty()) {
    throw Error(ErrorKind::ParseError, source + ":1: empty file");
  } else {
    throw Error(ErrorKind::ParseError, source + ":1: unrecognised mesh format (expected OFF or ASCII STL)");
  }
  m.validate();
  return m;
}

inline TriangleMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, path.string() + ": cannot open");
  return parse_mesh(in, path.string());
}

inline void write_off(const TriangleMesh& m, std::ostream& out) {
  out << "OFF\n" << m.vertices.size() << ' ' << m.triangles.size() << " 0\n";
  out.precision(17);
  for (const auto& v : m.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : m.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

}  // namespace robomag
