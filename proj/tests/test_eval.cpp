#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "imptrack/common.hpp"
#include "imptrack/eval.hpp"

using namespace imptrack;

namespace {

TrackletResult synthetic(std::vector<double> iou, std::vector<double> err, int points = 50,
                         double distance = 15.0) {
  TrackletResult r;
  r.name = "t";
  r.iou = std::move(iou);
  r.center_error = std::move(err);
  r.pred.assign(r.iou.size(), Pose{});
  r.gt.assign(r.iou.size(), Pose{});
  r.first_frame_points = points;
  r.mean_distance = distance;
  return r;
}

TrackletResult random_result(Rng& rng, int frames) {
  std::vector<double> iou(frames), err(frames);
  for (int k = 0; k < frames; ++k) {
    iou[k] = rng.uniform();
    err[k] = rng.uniform(0.0, 3.0);
  }
  return synthetic(iou, err, int(rng.uniform(0, 200)), rng.uniform(0, 60));
}

// Area under the success / precision curves by direct threshold sweeps.
double success_auc(const std::vector<double>& iou) {
  const int steps = 20000;
  double area = 0.0;
  for (int s = 0; s < steps; ++s) {
    const double t = (s + 0.5) / steps;
    area += double(std::count_if(iou.begin(), iou.end(), [&](double v) { return v > t; })) /
            double(iou.size());
  }
  return 100.0 * area / steps;
}

double precision_auc(const std::vector<double>& err) {
  const int steps = 20000;
  double area = 0.0;
  for (int s = 0; s < steps; ++s) {
    const double t = 2.0 * (s + 0.5) / steps;
    area += double(std::count_if(err.begin(), err.end(), [&](double v) { return v < t; })) /
            double(err.size());
  }
  return 100.0 * area / steps;
}

}  // namespace

TEST_CASE("success and precision examples") {
  auto sp = success_precision(synthetic({1, 1, 1}, {0, 0, 0}));
  CHECK(sp.success == 100.0);
  CHECK(sp.precision == 100.0);
  sp = success_precision(synthetic({0.5, 0.5}, {1.0, 1.0}));
  CHECK(sp.success == doctest::Approx(50.0));
  CHECK(sp.precision == doctest::Approx(50.0));
  sp = success_precision(synthetic({0, 0}, {2.0, 7.0}));
  CHECK(sp.success == 0.0);
  CHECK(sp.precision == 0.0);
  CHECK_THROWS(success_precision(synthetic({}, {})));
}

TEST_CASE("success and precision equal the curve areas and ignore frame order") {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    TrackletResult r = random_result(rng, 37);
    const auto sp = success_precision(r);
    CHECK(sp.success == doctest::Approx(success_auc(r.iou)).epsilon(1e-3));
    CHECK(sp.precision == doctest::Approx(precision_auc(r.center_error)).epsilon(1e-3));
    CHECK(sp.success >= 0.0);
    CHECK(sp.success <= 100.0);
    std::mt19937 g(trial);
    std::vector<size_t> perm(r.iou.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), g);
    TrackletResult p = r;
    for (size_t i = 0; i < perm.size(); ++i) {
      p.iou[i] = r.iou[perm[i]];
      p.center_error[i] = r.center_error[perm[i]];
    }
    CHECK(success_precision(p).success == doctest::Approx(sp.success).epsilon(1e-12));
    CHECK(success_precision(p).precision == doctest::Approx(sp.precision).epsilon(1e-12));
  }
}

TEST_CASE("accuracy and robustness") {
  auto ar = accuracy_robustness(synthetic({0.8, 0.6, 0.7, 0.9}, {0, 0, 0, 0}));
  CHECK(ar.robustness == 100.0);
  CHECK(ar.drift_frame == -1);
  CHECK(ar.accuracy == doctest::Approx(75.0));

  ar = accuracy_robustness(synthetic(std::vector<double>(8, 0.0), std::vector<double>(8, 5.0)));
  CHECK(ar.drift_frame == 0);
  CHECK(ar.accuracy == 0.0);
  CHECK(ar.robustness == 0.0);

  // 10 good frames then 10 lost ones: drift exactly at the midpoint
  std::vector<double> iou(20, 0.6);
  std::fill(iou.begin() + 10, iou.end(), 0.05);
  ar = accuracy_robustness(synthetic(iou, std::vector<double>(20, 0.0)));
  CHECK(ar.drift_frame == 10);
  CHECK(ar.robustness == doctest::Approx(50.0));
  CHECK(ar.accuracy == doctest::Approx(60.0));

  // four low frames are not a drift; the run must reach five
  iou.assign(12, 0.5);
  std::fill(iou.begin() + 3, iou.begin() + 7, 0.0);
  ar = accuracy_robustness(synthetic(iou, std::vector<double>(12, 0.0)));
  CHECK(ar.drift_frame == -1);
  iou[7] = 0.09;
  ar = accuracy_robustness(synthetic(iou, std::vector<double>(12, 0.0)));
  CHECK(ar.drift_frame == 3);
  CHECK(ar.robustness == doctest::Approx(25.0));
  // exactly 0.1 is not below the threshold
  iou[7] = 0.1;
  CHECK(accuracy_robustness(synthetic(iou, std::vector<double>(12, 0.0))).drift_frame == -1);
}

TEST_CASE("difficulty split boundaries and partition") {
  std::vector<TrackletResult> rs;
  for (int p : {0, 29, 30, 31, 99, 100, 101, 500}) rs.push_back(synthetic({1}, {0}, p));
  const auto d = difficulty_split(rs);
  CHECK(d.hard == std::vector<size_t>{0, 1});
  CHECK(d.medium == std::vector<size_t>{2, 3, 4, 5});
  CHECK(d.easy == std::vector<size_t>{6, 7});
  const auto e = difficulty_split({});
  CHECK(e.easy.empty());
  CHECK(e.medium.empty());
  CHECK(e.hard.empty());

  Rng rng(2);
  std::vector<TrackletResult> many;
  for (int i = 0; i < 200; ++i) many.push_back(random_result(rng, 3));
  const auto s = difficulty_split(many, DifficultyThresholds{60, 20});
  std::vector<int> seen(many.size(), 0);
  for (const auto* part : {&s.easy, &s.medium, &s.hard})
    for (size_t i : *part) ++seen[i];
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  for (size_t i : s.easy) CHECK(many[i].first_frame_points > 60);
  for (size_t i : s.hard) CHECK(many[i].first_frame_points < 20);
}

TEST_CASE("distance bins") {
  std::vector<TrackletResult> rs;
  for (int i = 0; i < 3; ++i) rs.push_back(synthetic({0.5}, {0.5}, 50, 5.0));
  auto bins = distance_bins(rs);
  REQUIRE(bins.size() == 1);
  CHECK(bins[0].lo == 0.0);
  CHECK(bins[0].hi == 10.0);
  CHECK(bins[0].members.size() == 3);

  rs = {synthetic({1}, {0}, 50, 9.999), synthetic({1}, {0}, 50, 10.0), synthetic({1}, {0}, 50, 20.0)};
  bins = distance_bins(rs);
  REQUIRE(bins.size() == 3);
  CHECK(bins[0].members == std::vector<size_t>{0});
  CHECK(bins[1].index == 1);
  CHECK(bins[1].members == std::vector<size_t>{1});
  CHECK(bins[2].lo == 20.0);

  Rng rng(3);
  std::vector<TrackletResult> many;
  for (int i = 0; i < 100; ++i) many.push_back(random_result(rng, 5));
  for (const auto& b : distance_bins(many)) {
    double s = 0, p = 0;
    int n = 0;
    for (const auto& r : many)
      if (r.mean_distance >= b.lo && r.mean_distance < b.hi) {
        s += success_precision(r).success;
        p += success_precision(r).precision;
        ++n;
      }
    CHECK(size_t(n) == b.members.size());
    CHECK(b.success == doctest::Approx(s / n));
    CHECK(b.precision == doctest::Approx(p / n));
  }
}

TEST_CASE("per-frame evaluation from poses") {
  const BoxSize size{1.5, 2.0, 4.0};
  std::vector<Pose> gt{Pose::make(10, 0, -1, 0), Pose::make(11, 0, -1, 0)};
  std::vector<Pose> pred{Pose::make(10, 0, -1, 0), Pose::make(13, 0, -1, 0)};
  const auto r = make_tracklet_result("x", pred, gt, size, 40, 10.5);
  CHECK(r.iou[0] == doctest::Approx(1.0));
  // boxes along x overlapping by 2 of 4 m: IoU = 2 / 6
  CHECK(r.iou[1] == doctest::Approx(1.0 / 3.0));
  CHECK(r.center_error[1] == doctest::Approx(2.0));
  CHECK_THROWS(make_tracklet_result("bad", {gt[0]}, gt, size, 40, 10.0));
}

TEST_CASE("report rows, values and csv round trip") {
  const TrackletResult one = synthetic({0.9, 0.7}, {0.2, 0.4}, 150, 12.0);
  Report rep = aggregate_report({one});
  REQUIRE(rep.rows.size() == 1 + 3 + 1);
  CHECK(rep.rows[0].scope == "overall");
  const auto sp = success_precision(one);
  const auto ar = accuracy_robustness(one);
  CHECK(rep.rows[0].success == sp.success);
  CHECK(rep.rows[0].precision == sp.precision);
  CHECK(rep.rows[0].accuracy == ar.accuracy);
  CHECK(rep.rows[0].robustness == ar.robustness);
  CHECK(std::isnan(rep.rows[0].acd));
  CHECK(rep.rows[1].scope == "easy");
  CHECK(rep.rows[2].count == 0);
  CHECK(std::isnan(rep.rows[2].success));

  Rng rng(4);
  std::vector<TrackletResult> many;
  for (int i = 0; i < 30; ++i) {
    many.push_back(random_result(rng, 9));
    many.back().has_shape = true;
    many.back().acd = rng.uniform(0.0, 0.05);
    many.back().recall = rng.uniform();
  }
  rep = aggregate_report(many);
  CHECK(rep.rows.size() == 1 + 3 + distance_bins(many).size());
  CHECK(rep.rows[0].count == 30);
  CHECK(std::isfinite(rep.rows[0].acd));
  const auto parsed = parse_report_csv(rep.to_csv());
  REQUIRE(parsed.size() == rep.rows.size());
  auto same = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
  for (size_t i = 0; i < parsed.size(); ++i) {
    CHECK(parsed[i].scope == rep.rows[i].scope);
    CHECK(parsed[i].count == rep.rows[i].count);
    CHECK(same(parsed[i].success, rep.rows[i].success));
    CHECK(same(parsed[i].precision, rep.rows[i].precision));
    CHECK(same(parsed[i].accuracy, rep.rows[i].accuracy));
    CHECK(same(parsed[i].robustness, rep.rows[i].robustness));
    CHECK(same(parsed[i].acd, rep.rows[i].acd));
    CHECK(same(parsed[i].recall, rep.rows[i].recall));
  }
  CHECK(aggregate_report(many).to_csv() == rep.to_csv());
  CHECK(aggregate_report(many).to_json() == rep.to_json());
  CHECK_THROWS(parse_report_csv("nonsense\n1,2\n"));
}
