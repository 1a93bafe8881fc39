#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fer/common.hpp"
#include "fer/tensor.hpp"

namespace fer {

inline constexpr int kLandmarkCount = 68;

// 1-based indices of the standard 68-point frontal-face convention.
inline constexpr int kNoseBridgeTop = 28;
inline constexpr int kNoseBridgeBottom = 31;
inline constexpr int kNoseFirst = 28;  // head central point = centroid of 28..36
inline constexpr int kNoseLast = 36;
inline constexpr int kRightEyeOuter = 37;
inline constexpr int kLeftEyeOuter = 46;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// The 68 facial landmark points, indexed 1..68 by convention (accessors take
/// the 1-based index). Finite coordinates, strictly positive interocular
/// distance.
class LandmarkSet {
 public:
  explicit LandmarkSet(std::vector<Point2> points) : points_(std::move(points)) {
    if (points_.size() != kLandmarkCount) {
      throw DimensionError("landmark set needs exactly 68 points, got " +
                           std::to_string(points_.size()));
    }
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!std::isfinite(points_[i].x) || !std::isfinite(points_[i].y)) {
        throw Error("non-finite landmark coordinate at point " + std::to_string(i + 1));
      }
    }
    const Point2 a = at(kRightEyeOuter), b = at(kLeftEyeOuter);
    if (std::hypot(a.x - b.x, a.y - b.y) <= 0.0) {
      throw Error("interocular distance (points 37 and 46) must be strictly positive");
    }
  }

  const Point2& at(int index1) const { return points_[static_cast<std::size_t>(index1 - 1)]; }
  const std::vector<Point2>& points() const { return points_; }

 private:
  std::vector<Point2> points_;
};

/// Per-landmark polar profile: normalized x, normalized y, radial distance
/// from the head central point, angle in (-pi, pi]. 68 rows, 4 columns.
struct FeatureProfile {
  std::array<std::array<double, 4>, kLandmarkCount> rows{};

  std::vector<double> flattened() const {
    std::vector<double> out;
    out.reserve(kLandmarkCount * 4);
    for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
    return out;
  }
};

inline constexpr int kProfileLength = kLandmarkCount * 4;  // 272

/// Canonicalizes a face: head central point (centroid of nose points 28..36)
/// at the origin, nose bridge 28->31 along -y, interocular distance 1.
inline LandmarkSet normalize_face(const LandmarkSet& lm) {
  double cx = 0.0, cy = 0.0;
  for (int i = kNoseFirst; i <= kNoseLast; ++i) {
    cx += lm.at(i).x;
    cy += lm.at(i).y;
  }
  const int n = kNoseLast - kNoseFirst + 1;
  cx /= n;
  cy /= n;

  const Point2 top = lm.at(kNoseBridgeTop), bot = lm.at(kNoseBridgeBottom);
  const double vx = bot.x - top.x, vy = bot.y - top.y;
  const double vlen = std::hypot(vx, vy);
  if (vlen < 1e-12) {
    throw Error("degenerate nose bridge: landmarks 28 and 31 coincide");
  }
  // Rotate the bridge direction onto (0, -1).
  const double theta = -1.5707963267948966192313216916398 - std::atan2(vy, vx);
  const double ct = std::cos(theta), st = std::sin(theta);

  std::vector<Point2> rotated(kLandmarkCount);
  for (int i = 0; i < kLandmarkCount; ++i) {
    const Point2& p = lm.points()[static_cast<std::size_t>(i)];
    const double qx = p.x - cx, qy = p.y - cy;
    rotated[static_cast<std::size_t>(i)] = {ct * qx - st * qy, st * qx + ct * qy};
  }
  const Point2& e1 = rotated[kRightEyeOuter - 1];
  const Point2& e2 = rotated[kLeftEyeOuter - 1];
  const double eye = std::hypot(e1.x - e2.x, e1.y - e2.y);
  for (Point2& p : rotated) {
    p.x /= eye;
    p.y /= eye;
  }
  return LandmarkSet(std::move(rotated));
}

/// Polar profile of a normalized landmark set. A point exactly at the origin
/// profiles as (0, 0, 0, 0).
inline FeatureProfile profile_features(const LandmarkSet& lm) {
  FeatureProfile fp;
  for (int i = 0; i < kLandmarkCount; ++i) {
    const Point2& p = lm.points()[static_cast<std::size_t>(i)];
    const double r = std::hypot(p.x, p.y);
    double angle = 0.0;
    if (r > 0.0) {
      angle = std::atan2(p.y, p.x);
      if (angle <= -3.1415926535897932) angle = 3.141592653589793238462643383279503;
    }
    fp.rows[static_cast<std::size_t>(i)] = {p.x, p.y, r, angle};
  }
  return fp;
}

/// Sidecar format: 68 lines of "index x y", 1-based indices in order.
inline LandmarkSet load_landmarks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open landmark sidecar: " + path);
  std::vector<Point2> pts;
  pts.reserve(kLandmarkCount);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    int idx = 0;
    double x = 0.0, y = 0.0;
    if (!(ls >> idx >> x >> y)) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected \"index x y\"");
    }
    if (idx != static_cast<int>(pts.size()) + 1) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected index " +
                       std::to_string(pts.size() + 1) + ", got " + std::to_string(idx));
    }
    pts.push_back({x, y});
  }
  if (pts.size() != kLandmarkCount) {
    throw ParseError(path + ": expected 68 landmark lines, got " + std::to_string(pts.size()));
  }
  return LandmarkSet(std::move(pts));
}

inline void save_landmarks(const LandmarkSet& lm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write landmark sidecar: " + path);
  for (int i = 1; i <= kLandmarkCount; ++i) {
    const Point2& p = lm.at(i);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%d %.6f %.6f\n", i, p.x, p.y);
    out << buf;
  }
}

/// A plausible upright face template used by the synthetic generator and the
/// geometry tests. Coordinates are in an abstract y-up frame; callers map
/// them into pixel space as needed.
inline LandmarkSet canonical_face_template() {
  std::vector<Point2> p(kLandmarkCount);
  auto set = [&p](int index1, double x, double y) {
    p[static_cast<std::size_t>(index1 - 1)] = {x, y};
  };
  // jaw 1..17
  for (int i = 0; i < 17; ++i) {
    const double t = 3.141592653589793 * i / 16.0;
    set(1 + i, -0.75 * std::cos(t), 0.35 - 0.85 * std::sin(t));
  }
  // brows 18..22 and 23..27
  const double brow_x[5] = {-0.55, -0.45, -0.35, -0.27, -0.20};
  const double brow_y[5] = {0.42, 0.48, 0.50, 0.48, 0.44};
  for (int i = 0; i < 5; ++i) set(18 + i, brow_x[i], brow_y[i]);
  for (int i = 0; i < 5; ++i) set(23 + i, -brow_x[4 - i], brow_y[4 - i]);
  // nose bridge 28..31, nose base 32..36
  set(28, 0.0, 0.35);
  set(29, 0.0, 0.25);
  set(30, 0.0, 0.15);
  set(31, 0.0, 0.05);
  set(32, -0.12, -0.02);
  set(33, -0.06, -0.05);
  set(34, 0.0, -0.06);
  set(35, 0.06, -0.05);
  set(36, 0.12, -0.02);
  // right eye 37..42, left eye 43..48
  set(37, -0.50, 0.30);
  set(38, -0.42, 0.34);
  set(39, -0.34, 0.34);
  set(40, -0.26, 0.30);
  set(41, -0.34, 0.26);
  set(42, -0.42, 0.26);
  set(43, 0.26, 0.30);
  set(44, 0.34, 0.34);
  set(45, 0.42, 0.34);
  set(46, 0.50, 0.30);
  set(47, 0.42, 0.26);
  set(48, 0.34, 0.26);
  // outer lips 49..60
  for (int i = 0; i < 12; ++i) {
    const double t = 2.0 * 3.141592653589793 * i / 12.0;
    set(49 + i, -0.25 * std::cos(t), -0.30 + 0.10 * std::sin(t));
  }
  // inner lips 61..68
  for (int i = 0; i < 8; ++i) {
    const double t = 2.0 * 3.141592653589793 * i / 8.0;
    set(61 + i, -0.15 * std::cos(t), -0.30 + 0.05 * std::sin(t));
  }
  return LandmarkSet(std::move(p));
}

}  // namespace fer
