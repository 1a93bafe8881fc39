#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fer/landmarks.hpp"
#include "fer/rng.hpp"

using namespace fer;

namespace {

LandmarkSet transformed(const LandmarkSet& lm, double angle, double scale, double tx, double ty) {
  const double c = std::cos(angle), s = std::sin(angle);
  std::vector<Point2> pts;
  pts.reserve(kLandmarkCount);
  for (const Point2& p : lm.points()) {
    pts.push_back({scale * (c * p.x - s * p.y) + tx, scale * (s * p.x + c * p.y) + ty});
  }
  return LandmarkSet(std::move(pts));
}

double max_point_diff(const LandmarkSet& a, const LandmarkSet& b) {
  double worst = 0.0;
  for (int i = 1; i <= kLandmarkCount; ++i) {
    worst = std::max(worst, std::abs(a.at(i).x - b.at(i).x));
    worst = std::max(worst, std::abs(a.at(i).y - b.at(i).y));
  }
  return worst;
}

}  // namespace

TEST_CASE("landmark set invariants") {
  CHECK_THROWS_AS(LandmarkSet(std::vector<Point2>(67)), DimensionError);
  auto pts = canonical_face_template().points();
  pts[36] = pts[45];  // collapse the outer eye corners
  CHECK_THROWS_WITH_AS(LandmarkSet(std::move(pts)), doctest::Contains("interocular"), Error);
}

TEST_CASE("normalize_face") {
  const LandmarkSet canon = normalize_face(canonical_face_template());

  SUBCASE("already-canonical set is returned unchanged") {
    CHECK(max_point_diff(normalize_face(canon), canon) < 1e-12);
  }
  SUBCASE("30 degree rotation plus (40,-17) translation is undone") {
    LandmarkSet moved = transformed(canon, 30.0 * 3.14159265358979 / 180.0, 1.0, 40.0, -17.0);
    CHECK(max_point_diff(normalize_face(moved), canon) < 1e-6);
  }
  SUBCASE("uniform x3 scale is undone") {
    LandmarkSet scaled = transformed(canon, 0.0, 3.0, 0.0, 0.0);
    CHECK(max_point_diff(normalize_face(scaled), canon) < 1e-6);
  }
  SUBCASE("nose centroid at origin, bridge along -y, interocular 1") {
    double cx = 0.0, cy = 0.0;
    for (int i = 28; i <= 36; ++i) {
      cx += canon.at(i).x;
      cy += canon.at(i).y;
    }
    CHECK(std::abs(cx / 9.0) < 1e-12);
    CHECK(std::abs(cy / 9.0) < 1e-12);
    CHECK(canon.at(31).y < canon.at(28).y);
    CHECK(std::abs(canon.at(31).x - canon.at(28).x) < 1e-12);
    const double eye = std::hypot(canon.at(37).x - canon.at(46).x,
                                  canon.at(37).y - canon.at(46).y);
    CHECK(eye == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("degenerate nose bridge errors") {
    auto pts = canonical_face_template().points();
    pts[27] = pts[30];  // point 28 == point 31
    CHECK_THROWS_WITH_AS(normalize_face(LandmarkSet(std::move(pts))),
                         doctest::Contains("nose bridge"), Error);
  }
}

TEST_CASE("profile_features") {
  auto pts = normalize_face(canonical_face_template()).points();
  pts[0] = {0.0, 0.0};
  pts[1] = {1.0, 0.0};
  pts[2] = {0.0, 1.0};
  FeatureProfile fp = profile_features(LandmarkSet(std::move(pts)));

  SUBCASE("fixture rows") {
    for (int c = 0; c < 4; ++c) CHECK(fp.rows[0][static_cast<std::size_t>(c)] == 0.0);
    CHECK(fp.rows[1][0] == 1.0);
    CHECK(fp.rows[1][1] == 0.0);
    CHECK(fp.rows[1][2] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(fp.rows[1][3] == 0.0);
    CHECK(fp.rows[2][0] == 0.0);
    CHECK(fp.rows[2][1] == 1.0);
    CHECK(fp.rows[2][2] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(fp.rows[2][3] == doctest::Approx(1.5707963267948966).epsilon(1e-15));
  }
  SUBCASE("radial column equals the norm of columns 1-2") {
    for (const auto& r : fp.rows) {
      CHECK(std::abs(r[2] - std::hypot(r[0], r[1])) <= 1e-12);
    }
  }
  SUBCASE("flattened length is 272") {
    CHECK(fp.flattened().size() == 272);
    CHECK(kProfileLength == 272);
  }
  SUBCASE("angles stay in (-pi, pi]") {
    for (const auto& r : fp.rows) {
      CHECK(r[3] > -3.14159265358979324);
      CHECK(r[3] <= 3.14159265358979324);
    }
  }
}

TEST_CASE("profile after normalize is similarity-invariant") {
  const LandmarkSet base = canonical_face_template();
  const FeatureProfile ref = profile_features(normalize_face(base));
  Rng rng(71);
  for (int trial = 0; trial < 25; ++trial) {
    const double angle = rng.uniform(-3.0, 3.0);
    const double scale = rng.uniform(0.2, 5.0);
    const double tx = rng.uniform(-100.0, 100.0);
    const double ty = rng.uniform(-100.0, 100.0);
    FeatureProfile got = profile_features(normalize_face(transformed(base, angle, scale, tx, ty)));
    for (int i = 0; i < kLandmarkCount; ++i) {
      for (int c = 0; c < 4; ++c) {
        CHECK(std::abs(got.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] -
                       ref.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]) < 1e-6);
      }
    }
  }
}

TEST_CASE("landmark sidecar io") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "fer_lm_test";
  fs::create_directories(dir);
  const std::string path = (dir / "face.lms").string();

  const LandmarkSet lm = normalize_face(canonical_face_template());
  save_landmarks(lm, path);
  LandmarkSet back = load_landmarks(path);
  for (int i = 1; i <= kLandmarkCount; ++i) {
    CHECK(std::abs(back.at(i).x - lm.at(i).x) < 1e-5);
    CHECK(std::abs(back.at(i).y - lm.at(i).y) < 1e-5);
  }

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_landmarks((dir / "nope.lms").string()), IoError);
  }
  SUBCASE("wrong index is a parse error with the line number") {
    const std::string bad = (dir / "bad.lms").string();
    std::ofstream out(bad);
    out << "1 0.0 0.0\n3 1.0 1.0\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_landmarks(bad), doctest::Contains(":2:"), ParseError);
  }
  SUBCASE("short file is a parse error") {
    const std::string shortp = (dir / "short.lms").string();
    std::ofstream out(shortp);
    out << "1 0.0 0.0\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_landmarks(shortp), doctest::Contains("68"), ParseError);
  }
  fs::remove_all(dir);
}
