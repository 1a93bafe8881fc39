#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fer/classes.hpp"
#include "fer/common.hpp"
#include "fer/image.hpp"
#include "fer/rng.hpp"

namespace fer {

struct ManifestRecord {
  std::string image;
  std::string landmarks;  // empty when absent
  ExpressionClass label = ExpressionClass::kAnger;
  std::string subject;
  int asd = 0;
  std::optional<double> timestamp;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  int count_asd(int flag) const {
    int n = 0;
    for (const auto& r : records) n += (r.asd == flag) ? 1 : 0;
    return n;
  }
};

/// One record per line, `key=value` fields: image= label= are required,
/// landmarks= subject= asd= ts= optional. Blank lines and #-comments skip.
inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  DatasetManifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    ManifestRecord rec;
    bool have_image = false, have_label = false;
    std::istringstream ls(line);
    std::string field;
    while (ls >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": field \"" + field +
                         "\" is not key=value");
      }
      const std::string key = field.substr(0, eq);
      const std::string val = field.substr(eq + 1);
      if (key == "image") {
        rec.image = val;
        have_image = !val.empty();
      } else if (key == "landmarks") {
        rec.landmarks = val;
      } else if (key == "label") {
        try {
          rec.label = class_from_name(val);
        } catch (const ParseError& e) {
          throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        have_label = true;
      } else if (key == "subject") {
        rec.subject = val;
      } else if (key == "asd") {
        if (val != "0" && val != "1") {
          throw ParseError(path + ":" + std::to_string(lineno) + ": asd must be 0 or 1, got \"" +
                           val + "\"");
        }
        rec.asd = val == "1" ? 1 : 0;
      } else if (key == "ts") {
        try {
          rec.timestamp = std::stod(val);
        } catch (...) {
          throw ParseError(path + ":" + std::to_string(lineno) + ": bad ts \"" + val + "\"");
        }
        if (!(*rec.timestamp >= 0.0)) {
          throw ParseError(path + ":" + std::to_string(lineno) + ": ts must be nonnegative");
        }
      } else {
        throw ParseError(path + ":" + std::to_string(lineno) + ": unknown field \"" + key + "\"");
      }
    }
    if (!have_image) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": missing image= path");
    }
    if (!have_label) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": missing label=");
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  for (const auto& r : m.records) {
    out << "image=" << r.image;
    if (!r.landmarks.empty()) out << " landmarks=" << r.landmarks;
    out << " label=" << class_name(r.label);
    if (!r.subject.empty()) out << " subject=" << r.subject;
    out << " asd=" << r.asd;
    if (r.timestamp) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.3f", *r.timestamp);
      out << " ts=" << buf;
    }
    out << "\n";
  }
}

/// Frame sampling policy: seeded random keep at a rate, or greedy
/// variance-maximizing selection at the same keep count.
struct SamplePolicy {
  double fps = 30.0;
  double keep_rate = 1.0 / 6.0;
  bool variance_max = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(keep_rate > 0.0 && keep_rate <= 1.0)) {
      throw Error("keep rate must be in (0, 1], got " + std::to_string(keep_rate));
    }
  }
};

namespace detail {

inline double frame_l2(const Frame& a, const Frame& b) {
  double acc = 0.0;
  const std::size_t n = std::min(a.pixels.numel(), b.pixels.numel());
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace detail

/// Keeps a subsequence of `frames` (order and identity preserved). Random
/// mode draws a uniform subset of round(n*rate) indices; variance-max mode
/// greedily takes the frame farthest (L2) from the previously kept one,
/// earliest index on ties.
inline std::vector<Frame> sample_frames(const std::vector<Frame>& frames,
                                        const SamplePolicy& policy) {
  policy.validate();
  const std::size_t n = frames.size();
  if (n == 0) return {};
  std::size_t keep = static_cast<std::size_t>(std::llround(policy.keep_rate * static_cast<double>(n)));
  keep = std::min(keep, n);
  if (policy.keep_rate >= 1.0) keep = n;
  if (keep == 0) keep = 1;

  std::vector<std::size_t> chosen;
  if (!policy.variance_max) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(policy.seed);
    rng.shuffle(idx);
    chosen.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
    std::sort(chosen.begin(), chosen.end());
  } else {
    chosen.push_back(0);
    while (chosen.size() < keep) {
      const std::size_t last = chosen.back();
      const std::size_t remaining = keep - chosen.size();
      // candidates must leave room for the picks still owed
      const std::size_t hi = n - remaining;
      std::size_t best = last + 1;
      double best_d = -1.0;
      for (std::size_t cand = last + 1; cand <= hi; ++cand) {
        const double d = detail::frame_l2(frames[cand], frames[last]);
        if (d > best_d) {
          best_d = d;
          best = cand;
        }
      }
      chosen.push_back(best);
    }
  }
  std::vector<Frame> out;
  out.reserve(chosen.size());
  for (std::size_t i : chosen) out.push_back(frames[i]);
  return out;
}

/// Capture-schedule windows: window k covers [start + k*spacing,
/// start + k*spacing + width) with width defaulting to the spacing. Every
/// window must be populated.
inline std::vector<std::vector<Frame>> window_schedule(const std::vector<Frame>& frames,
                                                       double start, double spacing, int windows,
                                                       double width = -1.0) {
  if (!(spacing > 0.0)) throw Error("window spacing must be positive");
  if (windows < 1) throw Error("schedule needs at least one window");
  if (width <= 0.0) width = spacing;
  std::vector<std::vector<Frame>> out(static_cast<std::size_t>(windows));
  for (const Frame& f : frames) {
    for (int k = 0; k < windows; ++k) {
      const double lo = start + k * spacing;
      if (f.timestamp >= lo && f.timestamp < lo + width) {
        out[static_cast<std::size_t>(k)].push_back(f);
      }
    }
  }
  for (int k = 0; k < windows; ++k) {
    if (out[static_cast<std::size_t>(k)].empty()) {
      char label[64];
      if (k > 0) {
        std::snprintf(label, sizeof(label), "t+%gs", k * spacing);
      } else {
        std::snprintf(label, sizeof(label), "t");
      }
      std::ostringstream os;
      os << "empty capture window " << label << " [" << start + k * spacing << ", "
         << start + k * spacing + width << ")";
      throw Error(os.str());
    }
  }
  return out;
}

namespace detail {

// Largest-remainder allocation of the train quota across classes, clamped so
// every class keeps at least one record on each side.
inline std::vector<std::size_t> stratified_train_counts(const std::vector<std::size_t>& class_n,
                                                        double ratio, std::size_t total) {
  const auto target = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total)));
  std::vector<std::size_t> take(class_n.size(), 0);
  std::vector<std::pair<double, std::size_t>> rem;  // fractional part, class
  std::size_t base_sum = 0;
  for (std::size_t c = 0; c < class_n.size(); ++c) {
    if (class_n[c] == 0) continue;
    const double q = ratio * static_cast<double>(class_n[c]);
    take[c] = static_cast<std::size_t>(q);
    base_sum += take[c];
    rem.push_back({q - static_cast<double>(take[c]), c});
  }
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::size_t extra = target > base_sum ? target - base_sum : 0;
  for (const auto& [frac, c] : rem) {
    if (extra == 0) break;
    if (take[c] < class_n[c]) {
      ++take[c];
      --extra;
    }
  }
  // clamp to [1, n_c - 1], rebalancing deterministically
  auto rebalance = [&](std::ptrdiff_t delta) {
    for (std::size_t c = 0; c < take.size() && delta != 0; ++c) {
      if (class_n[c] == 0) continue;
      while (delta > 0 && take[c] + 1 <= class_n[c] - 1) {
        ++take[c];
        --delta;
      }
      while (delta < 0 && take[c] >= 2) {
        --take[c];
        ++delta;
      }
    }
  };
  std::ptrdiff_t drift = 0;
  for (std::size_t c = 0; c < take.size(); ++c) {
    if (class_n[c] == 0) continue;
    if (take[c] < 1) {
      drift -= static_cast<std::ptrdiff_t>(1 - take[c]);
      take[c] = 1;
    }
    if (take[c] > class_n[c] - 1) {
      drift += static_cast<std::ptrdiff_t>(take[c] - (class_n[c] - 1));
      take[c] = class_n[c] - 1;
    }
  }
  rebalance(drift);
  return take;
}

}  // namespace detail

struct SplitResult {
  DatasetManifest train;
  DatasetManifest test;
};

/// Seeded stratified split: every class appears on both sides, the global
/// train count is round(ratio * n).
inline SplitResult split_dataset(const DatasetManifest& manifest, double ratio,
                                 std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error("split ratio must be in (0, 1), got " + std::to_string(ratio));
  }
  std::vector<std::vector<std::size_t>> by_class(kNumClasses);
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    by_class[static_cast<std::size_t>(manifest.records[i].label)].push_back(i);
  }
  std::vector<std::size_t> class_n(kNumClasses, 0);
  for (int c = 0; c < kNumClasses; ++c) {
    class_n[static_cast<std::size_t>(c)] = by_class[static_cast<std::size_t>(c)].size();
    if (class_n[static_cast<std::size_t>(c)] == 1) {
      throw Error(std::string("cannot stratify: class \"") +
                  class_name(static_cast<ExpressionClass>(c)) + "\" has fewer than 2 records");
    }
  }
  const auto take = detail::stratified_train_counts(class_n, ratio, manifest.records.size());

  SplitResult out;
  Rng rng(seed);
  for (int c = 0; c < kNumClasses; ++c) {
    auto& idx = by_class[static_cast<std::size_t>(c)];
    rng.shuffle(idx);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const ManifestRecord& rec = manifest.records[idx[i]];
      if (i < take[static_cast<std::size_t>(c)]) {
        out.train.records.push_back(rec);
      } else {
        out.test.records.push_back(rec);
      }
    }
  }
  return out;
}

/// Seeded k folds with sizes differing by at most one (the first n % k folds
/// take the extra record).
inline std::vector<DatasetManifest> kfold(const DatasetManifest& manifest, int k,
                                          std::uint64_t seed) {
  if (k < 2) throw Error("kfold needs k >= 2, got " + std::to_string(k));
  const std::size_t n = manifest.records.size();
  if (n < static_cast<std::size_t>(k)) {
    throw Error("kfold needs at least k records, got " + std::to_string(n) + " for k=" +
                std::to_string(k));
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);

  std::vector<DatasetManifest> folds(static_cast<std::size_t>(k));
  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t extra = n % static_cast<std::size_t>(k);
  std::size_t cursor = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t len = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    for (std::size_t i = 0; i < len; ++i) {
      folds[static_cast<std::size_t>(f)].records.push_back(manifest.records[idx[cursor++]]);
    }
  }
  return folds;
}

}  // namespace fer
