#include "imptrack/recon.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "imptrack/common.hpp"
#include "imptrack/nn_index.hpp"

namespace imptrack {

namespace {

int corner_bit(int corner, int axis) { return (corner >> axis) & 1; }

struct CubeTopology {
  std::array<std::array<int, 2>, 12> edges{};  // corner pairs, lower corner first
  std::array<std::array<int, 4>, 6> faces{};   // counter-clockwise seen from outside
  int edge_between(int a, int b) const {
    if (a > b) std::swap(a, b);
    for (int e = 0; e < 12; ++e)
      if (edges[e][0] == a && edges[e][1] == b) return e;
    return -1;
  }
  int axis_of(int e) const { return std::countr_zero(unsigned(edges[e][0] ^ edges[e][1])); }
  bool share_face(int e, int d) const {
    for (int u = 0; u < 3; ++u)
      if (u != axis_of(e) && u != axis_of(d) && corner_bit(edges[e][0], u) == corner_bit(edges[d][0], u))
        return true;
    return false;
  }
};

CubeTopology make_topology() {
  CubeTopology t;
  int n = 0;
  for (int a = 0; a < 8; ++a)
    for (int axis = 0; axis < 3; ++axis)
      if (!corner_bit(a, axis)) t.edges[n++] = {a, a | (1 << axis)};
  int f = 0;
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      const int base = side << axis;
      std::array<int, 4> ring = {base, base | (1 << u), base | (1 << u) | (1 << v), base | (1 << v)};
      // (u, v, axis) is a right-handed frame, so this ring winds around +axis.
      if (side == 0) std::reverse(ring.begin(), ring.end());
      t.faces[f++] = ring;
    }
  }
  return t;
}

const CubeTopology& topology() {
  static const CubeTopology t = make_topology();
  return t;
}

Eigen::Vector3d corner_offset(int c) {
  return Eigen::Vector3d(corner_bit(c, 0), corner_bit(c, 1), corner_bit(c, 2));
}

std::vector<std::array<int, 3>> build_case(int config, const CubeTopology& t) {
  auto inside = [&](int c) { return (config >> c) & 1; };
  std::array<int, 12> next;
  next.fill(-1);
  for (const auto& ring : t.faces) {
    struct Crossing {
      int edge;
      bool leaving;  // inside -> outside in ring order
    };
    std::vector<Crossing> xs;
    for (int i = 0; i < 4; ++i) {
      const int a = ring[i], b = ring[(i + 1) % 4];
      if (inside(a) != inside(b)) xs.push_back({t.edge_between(a, b), inside(a) != 0});
    }
    // Each leaving crossing joins the entering crossing just before it, which
    // cuts off the inside corners between them. On ambiguous faces this keeps
    // diagonal inside corners apart.
    const int m = static_cast<int>(xs.size());
    for (int i = 0; i < m; ++i) {
      if (!xs[i].leaving) continue;
      const Crossing& prev = xs[(i + m - 1) % m];
      next[xs[i].edge] = prev.edge;
    }
  }
  std::vector<std::array<int, 3>> tris;
  std::array<bool, 12> used{};
  for (int start = 0; start < 12; ++start) {
    if (next[start] < 0 || used[start]) continue;
    std::vector<int> loop;
    for (int e = start; !used[e]; e = next[e]) {
      used[e] = true;
      loop.push_back(e);
    }
    // Fan from a vertex none of whose diagonals lies in a cube face; a face
    // diagonal could coincide with one from the neighbouring cube.
    const size_t n = loop.size();
    size_t apex = 0;
    for (size_t s = 0; s < n; ++s) {
      bool ok = true;
      for (size_t k = 2; k + 1 < n && ok; ++k) ok = !t.share_face(loop[s], loop[(s + k) % n]);
      if (ok) {
        apex = s;
        break;
      }
    }
    for (size_t k = 1; k + 1 < n; ++k)
      tris.push_back({loop[apex], loop[(apex + k) % n], loop[(apex + k + 1) % n]});
  }
  return tris;
}

struct CaseTable {
  std::array<std::vector<std::array<int, 3>>, 256> cases;
};

CaseTable make_table() {
  const CubeTopology& t = topology();
  CaseTable table;
  for (int c = 0; c < 256; ++c) table.cases[c] = build_case(c, t);
  // Orient so normals point from inside (negative) to outside: with only
  // corner 0 inside the outward direction is +(1,1,1).
  const auto& probe = table.cases[1].front();
  auto mid = [&](int e) -> Eigen::Vector3d { return 0.5 * (corner_offset(t.edges[e][0]) + corner_offset(t.edges[e][1])); };
  const Eigen::Vector3d n = (mid(probe[1]) - mid(probe[0])).cross(mid(probe[2]) - mid(probe[0]));
  if (n.dot(Eigen::Vector3d::Ones()) < 0.0)
    for (auto& tris : table.cases)
      for (auto& tri : tris) std::swap(tri[1], tri[2]);
  return table;
}

const CaseTable& case_table() {
  static const CaseTable table = make_table();
  return table;
}

}  // namespace

const std::vector<std::array<int, 3>>& marching_cubes_case(int config) {
  if (config < 0 || config > 255) throw std::out_of_range("marching cubes config out of range");
  return case_table().cases[config];
}

TriMesh marching_cubes(const ScalarField& field, int resolution, const GridBounds& bounds,
                       bool* no_surface) {
  if (resolution < 2) throw ConfigError("marching cubes resolution must be >= 2");
  if (!((bounds.hi - bounds.lo).array() > 0.0).all()) throw ConfigError("empty grid bounds");
  const int r = resolution;
  const Eigen::Vector3d step = (bounds.hi - bounds.lo) / double(r - 1);
  auto grid_point = [&](int i, int j, int k) {
    return Eigen::Vector3d(bounds.lo.x() + i * step.x(), bounds.lo.y() + j * step.y(),
                           bounds.lo.z() + k * step.z());
  };
  auto flat = [&](int i, int j, int k) { return (size_t(k) * r + j) * r + i; };

  std::vector<double> values(size_t(r) * r * r);
  Eigen::Matrix3Xd slab(3, r * r);
  Eigen::VectorXd out;
  for (int k = 0; k < r; ++k) {
    for (int j = 0; j < r; ++j)
      for (int i = 0; i < r; ++i) slab.col(j * r + i) = grid_point(i, j, k);
    field(slab, out);
    if (out.size() != slab.cols()) throw NumericError("scalar field returned wrong number of values");
    for (int idx = 0; idx < r * r; ++idx) {
      if (!std::isfinite(out[idx])) throw NumericError("non-finite field value during marching cubes");
      values[size_t(k) * r * r + idx] = out[idx];
    }
  }

  bool any_in = false, any_out = false;
  for (double v : values) (v < 0.0 ? any_in : any_out) = true;
  if (no_surface) *no_surface = !(any_in && any_out);
  TriMesh mesh;
  if (!(any_in && any_out)) return mesh;

  const CubeTopology& topo = topology();
  const CaseTable& table = case_table();
  std::vector<int32_t> edge_vertex(size_t(r) * r * r * 3, -1);
  auto vertex_on = [&](int i, int j, int k, int cell_edge) -> uint32_t {
    const int a = topo.edges[cell_edge][0], b = topo.edges[cell_edge][1];
    const int axis = (a ^ b) == 1 ? 0 : (a ^ b) == 2 ? 1 : 2;
    const int ai = i + corner_bit(a, 0), aj = j + corner_bit(a, 1), ak = k + corner_bit(a, 2);
    const size_t id = flat(ai, aj, ak) * 3 + axis;
    if (edge_vertex[id] >= 0) return uint32_t(edge_vertex[id]);
    const int bi = i + corner_bit(b, 0), bj = j + corner_bit(b, 1), bk = k + corner_bit(b, 2);
    const double va = values[flat(ai, aj, ak)], vb = values[flat(bi, bj, bk)];
    const double tpar = va / (va - vb);
    const Eigen::Vector3d pa = grid_point(ai, aj, ak), pb = grid_point(bi, bj, bk);
    edge_vertex[id] = int32_t(mesh.vertices.size());
    mesh.vertices.push_back(pa + tpar * (pb - pa));
    return uint32_t(edge_vertex[id]);
  };

  for (int k = 0; k + 1 < r; ++k)
    for (int j = 0; j + 1 < r; ++j)
      for (int i = 0; i + 1 < r; ++i) {
        int config = 0;
        for (int c = 0; c < 8; ++c)
          if (values[flat(i + corner_bit(c, 0), j + corner_bit(c, 1), k + corner_bit(c, 2))] < 0.0)
            config |= 1 << c;
        for (const auto& tri : table.cases[config]) {
          const std::array<uint32_t, 3> v = {vertex_on(i, j, k, tri[0]), vertex_on(i, j, k, tri[1]),
                                             vertex_on(i, j, k, tri[2])};
          if (v[0] == v[1] || v[1] == v[2] || v[0] == v[2]) continue;
          mesh.triangles.push_back(v);
        }
      }
  return mesh;
}

TriMesh marching_cubes(const DecoderParams& params, const ShapeCode& z, int resolution,
                       const GridBounds& bounds, bool* no_surface) {
  if (resolution < 8) throw ConfigError("decoder marching cubes resolution must be >= 8");
  if (!((bounds.lo.array() <= -1.0).all() && (bounds.hi.array() >= 1.0).all()))
    throw ConfigError("marching cubes bounds must contain the unit sphere");
  SdfField field(params, z);
  return marching_cubes(
      [&](const Eigen::Matrix3Xd& pts, Eigen::VectorXd& out) {
        constexpr Eigen::Index kBlock = 512;
        out.resize(pts.cols());
        for (Eigen::Index s = 0; s < pts.cols(); s += kBlock) {
          const Eigen::Index m = std::min(kBlock, pts.cols() - s);
          out.segment(s, m) = field.evaluate(pts.middleCols(s, m));
        }
      },
      resolution, bounds, no_surface);
}

PointCloud sample_surface(const TriMesh& mesh, int n, uint64_t seed,
                          std::vector<uint32_t>* triangle_ids) {
  if (n < 0) throw std::invalid_argument("negative sample count");
  if (mesh.empty()) throw std::invalid_argument("cannot sample an empty mesh");
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Eigen::Vector3d& a = mesh.vertices[tri[0]];
    total += 0.5 * (mesh.vertices[tri[1]] - a).cross(mesh.vertices[tri[2]] - a).norm();
    cumulative[t] = total;
  }
  if (!(total > 0.0)) throw std::invalid_argument("mesh has zero surface area");
  Rng rng(seed);
  PointCloud out;
  out.frame = Frame::Normalized;
  out.points.resize(3, n);
  if (triangle_ids) triangle_ids->assign(size_t(n), 0);
  for (int s = 0; s < n; ++s) {
    const double pick = rng.uniform() * total;
    size_t t = size_t(std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
    t = std::min(t, cumulative.size() - 1);
    const double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
    const auto& tri = mesh.triangles[t];
    out.points.col(s) = (1.0 - r1) * mesh.vertices[tri[0]] + r1 * (1.0 - r2) * mesh.vertices[tri[1]] +
                        r1 * r2 * mesh.vertices[tri[2]];
    if (triangle_ids) (*triangle_ids)[size_t(s)] = uint32_t(t);
  }
  return out;
}

double acd_points(const PointCloud& gt_points, const PointCloud& pred_points) {
  if (gt_points.points.cols() == 0) throw std::invalid_argument("acd needs ground-truth points");
  if (pred_points.points.cols() == 0) return std::numeric_limits<double>::infinity();
  const NNIndex index(pred_points.points);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < gt_points.points.cols(); ++i)
    sum += index.nearest(gt_points.points.col(i)).second;
  return sum / double(gt_points.points.cols());
}

double recall_at(const PointCloud& gt_points, const PointCloud& pred_points, double t) {
  if (gt_points.points.cols() == 0) throw std::invalid_argument("recall needs ground-truth points");
  if (pred_points.points.cols() == 0) return 0.0;
  const NNIndex index(pred_points.points);
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < gt_points.points.cols(); ++i)
    if (std::sqrt(index.nearest(gt_points.points.col(i)).second) <= t) ++hits;
  return double(hits) / double(gt_points.points.cols());
}

ShapeMetrics shape_metrics(const PointCloud& gt_points, const DecoderParams& params,
                           const ShapeCode& z, const BoxSize& size,
                           const ShapeMetricOptions& options) {
  ShapeMetrics m;
  const TriMesh mesh = marching_cubes(params, z, options.resolution, options.bounds, &m.no_surface);
  if (mesh.empty()) {
    m.no_surface = true;
    m.acd = std::numeric_limits<double>::infinity();
    m.recall = 0.0;
    return m;
  }
  PointCloud pred = sample_surface(mesh, options.surface_samples, options.seed);
  pred.points /= normalization_scale(size);
  pred.frame = Frame::Canonical;
  m.acd = acd_points(gt_points, pred);
  m.recall = recall_at(gt_points, pred, options.recall_threshold);
  return m;
}

double acd(const PointCloud& gt_points, const DecoderParams& params, const ShapeCode& z,
           const BoxSize& size, const ShapeMetricOptions& options) {
  return shape_metrics(gt_points, params, z, size, options).acd;
}

double acd_decoder_shortcut(const PointCloud& gt_points, const DecoderParams& params,
                            const ShapeCode& z, const BoxSize& size) {
  if (gt_points.points.cols() == 0) throw std::invalid_argument("acd needs ground-truth points");
  const double s = normalization_scale(size);
  SdfField field(params, z);
  const Eigen::VectorXd& v = field.evaluate(s * gt_points.points);
  return (v / s).squaredNorm() / double(v.size());
}

bool is_watertight(const TriMesh& mesh) {
  if (mesh.empty()) return false;
  std::map<std::pair<uint32_t, uint32_t>, int> directed;
  for (const auto& tri : mesh.triangles)
    for (int e = 0; e < 3; ++e) ++directed[{tri[e], tri[(e + 1) % 3]}];
  for (const auto& [edge, count] : directed) {
    if (count != 1) return false;
    auto it = directed.find({edge.second, edge.first});
    if (it == directed.end() || it->second != 1) return false;
  }
  return true;
}

void write_ply(const std::string& path, const TriMesh& mesh) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path);
  f << "ply\nformat binary_little_endian 1.0\n"
    << "element vertex " << mesh.vertices.size() << "\n"
    << "property double x\nproperty double y\nproperty double z\n"
    << "element face " << mesh.triangles.size() << "\n"
    << "property list uchar uint vertex_indices\nend_header\n";
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  for (const auto& v : mesh.vertices) {
    const double xyz[3] = {v.x(), v.y(), v.z()};
    f.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
  }
  for (const auto& tri : mesh.triangles) {
    const unsigned char three = 3;
    f.write(reinterpret_cast<const char*>(&three), 1);
    f.write(reinterpret_cast<const char*>(tri.data()), sizeof(uint32_t) * 3);
  }
  if (!f) throw DataError("failed writing " + path);
}

TriMesh read_ply(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  std::string line;
  size_t nv = 0, nf = 0;
  std::vector<std::string> header;
  while (std::getline(f, line)) {
    if (line == "end_header") break;
    header.push_back(line);
  }
  const std::vector<std::string> expected_props = {
      "property double x", "property double y", "property double z",
      "property list uchar uint vertex_indices"};
  if (header.size() < 2 || header[0] != "ply" || header[1] != "format binary_little_endian 1.0")
    throw DataError("unsupported PLY header in " + path);
  size_t props = 0;
  for (size_t i = 2; i < header.size(); ++i) {
    std::istringstream ss(header[i]);
    std::string kw, what;
    ss >> kw;
    if (kw == "element") {
      size_t count = 0;
      ss >> what >> count;
      if (what == "vertex") nv = count;
      else if (what == "face") nf = count;
      else throw DataError("unsupported PLY element " + what);
    } else if (kw == "property") {
      if (props >= expected_props.size() || header[i] != expected_props[props])
        throw DataError("unsupported PLY property: " + header[i]);
      ++props;
    } else if (kw != "comment") {
      throw DataError("unexpected PLY header line: " + header[i]);
    }
  }
  TriMesh mesh;
  mesh.vertices.resize(nv);
  for (auto& v : mesh.vertices) {
    double xyz[3];
    if (!f.read(reinterpret_cast<char*>(xyz), sizeof(xyz))) throw DataError("truncated PLY " + path);
    v = Eigen::Vector3d(xyz[0], xyz[1], xyz[2]);
  }
  mesh.triangles.resize(nf);
  for (auto& tri : mesh.triangles) {
    unsigned char count = 0;
    if (!f.read(reinterpret_cast<char*>(&count), 1) || count != 3) throw DataError("bad PLY face in " + path);
    if (!f.read(reinterpret_cast<char*>(tri.data()), sizeof(uint32_t) * 3)) throw DataError("truncated PLY " + path);
    for (uint32_t idx : tri)
      if (idx >= nv) throw DataError("PLY face index out of range in " + path);
  }
  return mesh;
}

void write_obj(const std::string& path, const TriMesh& mesh) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open for writing: " + path);
  f.precision(17);
  for (const auto& v : mesh.vertices) f << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) f << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!f) throw DataError("failed writing " + path);
}

}  // namespace imptrack
