#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include <Eigen/Geometry>

#include "imptrack/common.hpp"
#include "imptrack/prior_train.hpp"
#include "imptrack/recon.hpp"

using namespace imptrack;

namespace {

ScalarField sphere(double r) {
  return [r](const Eigen::Matrix3Xd& p, Eigen::VectorXd& v) {
    v = p.colwise().norm().transpose().array() - r;
  };
}

ScalarField torus(double major, double minor) {
  return [=](const Eigen::Matrix3Xd& p, Eigen::VectorXd& v) {
    v.resize(p.cols());
    for (Eigen::Index i = 0; i < p.cols(); ++i)
      v[i] = std::hypot(std::hypot(p(0, i), p(1, i)) - major, p(2, i)) - minor;
  };
}

double signed_volume(const TriMesh& m) {
  double v = 0.0;
  for (const auto& t : m.triangles)
    v += m.vertices[t[0]].dot(m.vertices[t[1]].cross(m.vertices[t[2]])) / 6.0;
  return v;
}

int euler_characteristic(const TriMesh& m) {
  std::set<std::pair<uint32_t, uint32_t>> edges;
  for (const auto& t : m.triangles)
    for (int k = 0; k < 3; ++k) {
      uint32_t a = t[k], b = t[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      edges.insert({a, b});
    }
  return int(m.vertices.size()) - int(edges.size()) + int(m.triangles.size());
}

double max_radial_error(const TriMesh& m, double r) {
  double e = 0.0;
  for (const auto& v : m.vertices) e = std::max(e, std::abs(v.norm() - r));
  return e;
}

}  // namespace

TEST_CASE("case table: empty extremes and crossing edges only") {
  CHECK(marching_cubes_case(0).empty());
  CHECK(marching_cubes_case(255).empty());
  CHECK_THROWS(marching_cubes_case(256));
  // edges enumerated by lower corner then axis; corner bit k is the k-th axis
  std::vector<std::array<int, 2>> edges;
  for (int a = 0; a < 8; ++a)
    for (int axis = 0; axis < 3; ++axis)
      if (!((a >> axis) & 1)) edges.push_back({a, a | (1 << axis)});
  for (int c = 1; c < 255; ++c) {
    const auto& tris = marching_cubes_case(c);
    CHECK(!tris.empty());
    std::set<int> used;
    for (const auto& t : tris) {
      CHECK(t[0] != t[1]);
      CHECK(t[1] != t[2]);
      CHECK(t[0] != t[2]);
      for (int e : t) {
        REQUIRE(e >= 0);
        REQUIRE(e < 12);
        const int a = edges[e][0], b = edges[e][1];
        CHECK(((c >> a) & 1) != ((c >> b) & 1));
        used.insert(e);
      }
    }
    int crossing = 0;
    for (const auto& e : edges) crossing += ((c >> e[0]) & 1) != ((c >> e[1]) & 1);
    CHECK(int(used.size()) == crossing);
  }
  for (int corner = 0; corner < 8; ++corner) CHECK(marching_cubes_case(1 << corner).size() == 1);
}

TEST_CASE("sphere: vertex accuracy, closure, orientation and refinement") {
  const double r = 0.5;
  const TriMesh m64 = marching_cubes(sphere(r), 64);
  const double cell = 2.2 / 63.0;
  CHECK(max_radial_error(m64, r) < 2.0 * cell);
  CHECK(is_watertight(m64));
  CHECK(euler_characteristic(m64) == 2);
  const double vol = 4.0 / 3.0 * std::numbers::pi * r * r * r;
  CHECK(signed_volume(m64) == doctest::Approx(vol).epsilon(0.02));
  double last = 1e9;
  for (int res : {12, 24, 48, 96}) {
    const double e = max_radial_error(marching_cubes(sphere(r), res), r);
    CHECK(e <= last);
    last = e;
  }
  const TriMesh m24 = marching_cubes(sphere(r), 24), m96 = marching_cubes(sphere(r), 96);
  CHECK(std::abs(signed_volume(m96) - vol) < std::abs(signed_volume(m24) - vol));
}

TEST_CASE("torus has genus one") {
  const TriMesh m = marching_cubes(torus(0.6, 0.25), 48);
  CHECK(is_watertight(m));
  CHECK(euler_characteristic(m) == 0);
  CHECK(signed_volume(m) > 0.0);
}

TEST_CASE("random fields give closed meshes including ambiguous cubes") {
  for (uint64_t seed = 0; seed < 300; ++seed) {
    const int res = 7;
    Rng rng(seed);
    std::vector<double> values(res * res * res);
    for (int i = 0; i < res; ++i)
      for (int j = 0; j < res; ++j)
        for (int k = 0; k < res; ++k) {
          const bool border = i == 0 || j == 0 || k == 0 || i == res - 1 || j == res - 1 || k == res - 1;
          values[(i * res + j) * res + k] = border ? 1.0 : rng.uniform(-1.0, 1.0);
        }
    const GridBounds b{Eigen::Vector3d::Zero(), Eigen::Vector3d::Constant(res - 1.0)};
    ScalarField f = [&](const Eigen::Matrix3Xd& p, Eigen::VectorXd& v) {
      v.resize(p.cols());
      for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const int i = int(std::lround(p(0, c))), j = int(std::lround(p(1, c))),
                  k = int(std::lround(p(2, c)));
        v[c] = values[(i * res + j) * res + k];
      }
    };
    bool none = true;
    const TriMesh m = marching_cubes(f, res, b, &none);
    CHECK_FALSE(none);
    CHECK(is_watertight(m));
    CHECK(signed_volume(m) > 0.0);
  }
}

TEST_CASE("fields without a sign change give an empty mesh and the flag") {
  bool none = false;
  const ScalarField pos = [](const Eigen::Matrix3Xd& p, Eigen::VectorXd& v) {
    v = Eigen::VectorXd::Constant(p.cols(), 0.3);
  };
  CHECK(marching_cubes(pos, 16, {}, &none).empty());
  CHECK(none);
  none = false;
  CHECK(marching_cubes(sphere(5.0), 16, {}, &none).empty());
  CHECK(none);
  CHECK_THROWS_AS(marching_cubes(sphere(0.5), 1), ConfigError);
  const ScalarField bad = [](const Eigen::Matrix3Xd& p, Eigen::VectorXd& v) {
    v = Eigen::VectorXd::Constant(p.cols(), std::nan(""));
  };
  CHECK_THROWS_AS(marching_cubes(bad, 8), NumericError);
}

TEST_CASE("surface sampling: count, support and area weighting") {
  TriMesh tri;
  tri.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 0, 3}};
  tri.triangles = {{0, 1, 2}};
  const PointCloud one = sample_surface(tri, 1000, 1);
  CHECK(one.size() == 1000);
  for (Eigen::Index i = 0; i < one.size(); ++i) {
    const Eigen::Vector3d p = one.points.col(i);
    CHECK(p.z() == 0.0);
    CHECK(p.x() >= 0.0);
    CHECK(p.y() >= 0.0);
    CHECK(p.x() / 2.0 + p.y() <= 1.0 + 1e-12);
  }
  CHECK(sample_surface(tri, 0, 1).size() == 0);

  // uniform inside a triangle: the four midpoint sub-triangles are equally likely
  const int n = 100000;
  const PointCloud many = sample_surface(tri, n, 2);
  std::array<int, 4> bins{};
  for (Eigen::Index i = 0; i < many.size(); ++i) {
    const double a = many.points(0, i) / 2.0, b = many.points(1, i);
    bins[a > 0.5 ? 1 : b > 0.5 ? 2 : a + b < 0.5 ? 0 : 3]++;
  }
  double chi2 = 0.0;
  for (int c : bins) chi2 += std::pow(c - n / 4.0, 2) / (n / 4.0);
  CHECK(chi2 < 16.27);  // 3 dof, p = 0.001

  // triangle areas 1 and 3: frequencies 0.25 / 0.75
  TriMesh two = tri;
  two.triangles = {{0, 1, 2}, {0, 1, 4}};
  std::vector<uint32_t> ids;
  const PointCloud s2 = sample_surface(two, n, 3, &ids);
  REQUIRE(ids.size() == size_t(n));
  int first = 0;
  for (auto id : ids) first += id == 0;
  const double e0 = 0.25 * n, e1 = 0.75 * n;
  CHECK(std::pow(first - e0, 2) / e0 + std::pow(n - first - e1, 2) / e1 < 10.83);  // 1 dof
  CHECK_THROWS(sample_surface(TriMesh{}, 10, 1));
}

TEST_CASE("point-set distances and recall") {
  Eigen::Matrix3Xd g(3, 4), p(3, 2);
  g << 0, 1, 2, 3, 0, 0, 0, 0, 0, 0, 0, 0;
  p << 0, 3, 0.1, 0.3, 0, 0;
  const PointCloud gt(g, Frame::Canonical), pred(p, Frame::Canonical);
  CHECK(acd_points(gt, gt) == 0.0);
  // nearest distances 0.1, ~1.005, ~1.005, 0.3
  const double d12 = 1.0 + 0.01;
  CHECK(acd_points(gt, pred) == doctest::Approx((0.01 + d12 + (1 + 0.09) + 0.09) / 4.0));
  CHECK(recall_at(gt, pred, 0.2) == 0.25);
  CHECK(recall_at(gt, pred, 0.35) == 0.5);
  CHECK(recall_at(gt, PointCloud(Eigen::Matrix3Xd(3, 0), Frame::Canonical), 0.2) == 0.0);
  CHECK(recall_at(gt, gt, 1e-9) == 1.0);
  Eigen::Matrix3Xd g3(3, 3), p3(3, 1);
  g3 << 0, 0.15, 0.5, 0, 0, 0, 0, 0, 0;
  p3 << 0.3, 0.0, 0.0;
  // distances 0.3, 0.15, 0.2; only 0.15 is inside 0.18
  CHECK(recall_at(PointCloud(g3, Frame::Canonical), PointCloud(p3, Frame::Canonical), 0.18) ==
        doctest::Approx(1.0 / 3.0));
  double last = 0.0;
  for (double t = 0.0; t < 3.0; t += 0.05) {
    const double r = recall_at(gt, pred, t);
    CHECK(r >= last);
    last = r;
  }
  CHECK(last == 1.0);

  // a wall of points 0.1 away from a dense plane
  Eigen::Matrix3Xd plane(3, 41 * 41), wall(3, 100);
  for (int i = 0; i < 41; ++i)
    for (int j = 0; j < 41; ++j) plane.col(i * 41 + j) << i * 0.025, j * 0.025, 0.0;
  Rng rng(6);
  for (int i = 0; i < 100; ++i) wall.col(i) << rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), 0.1;
  const double a = acd_points(PointCloud(wall, Frame::Canonical), PointCloud(plane, Frame::Canonical));
  CHECK(a >= 0.01);
  CHECK(a < 0.01 + 0.0125 * 0.0125 * 2 + 1e-12);
}

TEST_CASE("PLY round trip and strict reader") {
  const TriMesh m = marching_cubes(sphere(0.5), 16);
  const auto dir = std::filesystem::temp_directory_path() / "imptrack_test_recon";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "sphere.ply").string();
  write_ply(path, m);
  CHECK(read_ply(path) == m);
  write_obj((dir / "sphere.obj").string(), m);
  CHECK(std::filesystem::file_size(dir / "sphere.obj") > 0);

  {
    std::ofstream f(dir / "bad.ply", std::ios::binary);
    f << "ply\nformat ascii 1.0\nend_header\n";
  }
  CHECK_THROWS_AS(read_ply((dir / "bad.ply").string()), DataError);
  // truncated body
  std::filesystem::copy_file(path, dir / "cut.ply", std::filesystem::copy_options::overwrite_existing);
  std::filesystem::resize_file(dir / "cut.ply", std::filesystem::file_size(path) - 7);
  CHECK_THROWS_AS(read_ply((dir / "cut.ply").string()), DataError);
  CHECK_THROWS_AS(read_ply((dir / "missing.ply").string()), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("decoder shape metrics") {
  TrainConfig c;
  c.dims = DecoderDims{8, 32};
  c.samples_per_shape = 2048;
  c.scan_views = 0;
  c.epochs = 30;
  const TrainResult r = train_auto_decoder(sample_shape_family(31, 1), c);
  const ShapeCode& z = r.codes.codes[0];
  CHECK_THROWS_AS(marching_cubes(r.params, z, 7), ConfigError);
  GridBounds small;
  small.lo.setConstant(-0.5);
  CHECK_THROWS_AS(marching_cubes(r.params, z, 16, small), ConfigError);

  const BoxSize size{1.6, 1.9, 4.6};
  const double s = normalization_scale(size);
  const TriMesh mesh = marching_cubes(r.params, z, 96);
  REQUIRE(!mesh.empty());
  PointCloud gt = sample_surface(mesh, 2000, 9);
  gt.points /= s;
  ShapeMetricOptions opt;
  const ShapeMetrics self = shape_metrics(gt, r.params, z, size, opt);
  CHECK_FALSE(self.no_surface);
  CHECK(self.recall == 1.0);
  // sample spacing on the mesh bounds the self distance
  CHECK(self.acd < 1e-3);
  CHECK(acd(gt, r.params, z, size, opt) == self.acd);
  CHECK(acd_decoder_shortcut(gt, r.params, z, size) < 1e-3);

  // shifting the ground truth by 0.1 m along z raises the error to about 0.01
  PointCloud shifted = gt;
  shifted.points.row(2).array() += 0.1;
  const ShapeMetrics off = shape_metrics(shifted, r.params, z, size, opt);
  CHECK(off.acd > self.acd);
  CHECK(off.acd < 0.01 + 1e-3);

  // a code whose field never crosses zero has no surface
  DecoderParams flat = r.params;
  flat.biases.back()[0] += 100.0;
  const ShapeMetrics none = shape_metrics(gt, flat, z, size, opt);
  CHECK(none.no_surface);
  CHECK(std::isinf(none.acd));
  CHECK(none.recall == 0.0);
}
