#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "fer/cnn.hpp"
#include "fer/dataset.hpp"
#include "fer/image.hpp"
#include "fer/landmarks.hpp"
#include "fer/rng.hpp"

// Seeded stand-in for the clinical/scraped data the published experiments
// used: seven class-separable geometric patterns with additive noise, plus
// plausible landmark sidecars.
namespace fer::synthetic {

/// Noise-free class template, values in [0, 1].
inline Tensor class_template(ExpressionClass cls, std::int64_t size = 64) {
  Tensor img({size, size, 1});
  const double n1 = static_cast<double>(size - 1);
  for (std::int64_t y = 0; y < size; ++y) {
    for (std::int64_t x = 0; x < size; ++x) {
      double v = 0.1;
      switch (cls) {
        case ExpressionClass::kAnger:  // horizontal stripes
          v = ((y / (size / 8)) % 2 == 0) ? 0.9 : 0.1;
          break;
        case ExpressionClass::kDisgust:  // vertical stripes
          v = ((x / (size / 8)) % 2 == 0) ? 0.9 : 0.1;
          break;
        case ExpressionClass::kFear:  // diagonal gradient
          v = static_cast<double>(x + y) / (2.0 * n1);
          break;
        case ExpressionClass::kHappy: {  // filled disc
          const double dx = x - n1 / 2.0, dy = y - n1 / 2.0;
          v = (std::sqrt(dx * dx + dy * dy) <= size / 3.0) ? 0.9 : 0.1;
          break;
        }
        case ExpressionClass::kSadness: {  // filled centered square
          const bool in = std::abs(x - n1 / 2.0) <= size / 4.0 &&
                          std::abs(y - n1 / 2.0) <= size / 4.0;
          v = in ? 0.9 : 0.1;
          break;
        }
        case ExpressionClass::kNeutral:  // coarse checkerboard
          v = (((x / (size / 4)) + (y / (size / 4))) % 2 == 0) ? 0.9 : 0.1;
          break;
        case ExpressionClass::kSleep: {  // X cross
          const bool on = std::abs(x - y) < size / 8 || std::abs(x + y - n1) < size / 8;
          v = on ? 0.9 : 0.1;
          break;
        }
      }
      img[static_cast<std::size_t>(y * size + x)] = v;
    }
  }
  return img;
}

inline constexpr double kNoiseSigma = 0.05;

/// One noisy sample as raw [0, 255] pixels (quantized like a decoded image).
inline Tensor render_sample(ExpressionClass cls, std::int64_t size, Rng& rng,
                            double sigma = kNoiseSigma) {
  Tensor img = class_template(cls, size);
  for (std::size_t i = 0; i < img.numel(); ++i) {
    const double v = std::clamp(img[i] + rng.gaussian(0.0, sigma), 0.0, 1.0);
    img[i] = std::floor(v * 255.0 + 0.5);
  }
  return img;
}

/// Landmarks for a synthetic face: the canonical template mapped into pixel
/// coordinates with a mild seeded jitter.
inline LandmarkSet render_landmarks(std::int64_t size, Rng& rng) {
  const LandmarkSet base = canonical_face_template();
  std::vector<Point2> pts;
  pts.reserve(kLandmarkCount);
  const double cx = size / 2.0, cy = size / 2.0;
  const double scale = size / 2.6;
  for (const Point2& p : base.points()) {
    pts.push_back({cx + scale * p.x + rng.gaussian(0.0, 0.2),
                   cy - scale * p.y + rng.gaussian(0.0, 0.2)});
  }
  return LandmarkSet(std::move(pts));
}

/// In-memory dataset ready for train(): per-class noisy samples resized to
/// the model profile and scaled to [0, 1].
inline std::vector<LabeledImage> make_dataset(const CnnConfig& config, int per_class,
                                              std::uint64_t seed, std::int64_t render_size = 64) {
  Rng rng(seed);
  std::vector<LabeledImage> out;
  out.reserve(static_cast<std::size_t>(per_class) * kNumClasses);
  for (int c = 0; c < kNumClasses; ++c) {
    for (int i = 0; i < per_class; ++i) {
      Tensor raw = render_sample(static_cast<ExpressionClass>(c), render_size, rng);
      std::optional<LandmarkSet> lm;
      if (config.aux_landmarks) lm = render_landmarks(render_size, rng);
      out.push_back(prepare_input(config, raw, lm, static_cast<ExpressionClass>(c)));
    }
  }
  return out;
}

/// Writes PGM images (+ sidecars) and a manifest under dir; returns the
/// manifest path.
inline std::string write_dataset(const std::string& dir, int per_class, std::uint64_t seed,
                                 std::int64_t size = 64, bool with_landmarks = false) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Rng rng(seed);
  DatasetManifest manifest;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto cls = static_cast<ExpressionClass>(c);
    for (int i = 0; i < per_class; ++i) {
      const std::string stem = std::string(class_name(cls)) + "_" + std::to_string(i);
      Tensor raw = render_sample(cls, size, rng);
      save_pgm(raw, (fs::path(dir) / (stem + ".pgm")).string());
      ManifestRecord rec;
      rec.image = stem + ".pgm";
      rec.label = cls;
      rec.subject = "subject" + std::to_string(i);
      rec.asd = i % 2;
      if (with_landmarks) {
        save_landmarks(render_landmarks(size, rng), (fs::path(dir) / (stem + ".lms")).string());
        rec.landmarks = stem + ".lms";
      }
      manifest.records.push_back(std::move(rec));
    }
  }
  const std::string mpath = (fs::path(dir) / "dataset.manifest").string();
  save_manifest(manifest, mpath);
  return mpath;
}

/// A 40 s clip whose dominant pattern steps disgust -> neutral -> happy ->
/// sadness every 10 s; frames land as numbered PGMs for the timeline CLI.
inline int write_clip(const std::string& dir, double fps, std::uint64_t seed,
                      std::int64_t size = 64, double seconds = 40.0) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Rng rng(seed);
  const ExpressionClass script[4] = {ExpressionClass::kDisgust, ExpressionClass::kNeutral,
                                     ExpressionClass::kHappy, ExpressionClass::kSadness};
  const int frames = static_cast<int>(seconds * fps);
  for (int i = 0; i < frames; ++i) {
    const double ts = i / fps;
    const int phase = std::min(3, static_cast<int>(ts / 10.0));
    Tensor raw = render_sample(script[phase], size, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06d.pgm", i);
    save_pgm(raw, (fs::path(dir) / name).string());
  }
  return frames;
}

}  // namespace fer::synthetic
