#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fer/eval.hpp"
#include "fer/rnn.hpp"

// CSV emitters. Fixed 6-decimal formatting everywhere, matching the
// precision of the published tables; identical inputs produce byte-identical
// files.
namespace fer {

inline std::string format6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline constexpr const char* kTimelineHeader =
    "timestamp_s,anger,disgust,fear,happy,sadness,neutral,sleep";

inline std::string timeline_csv(const EmotionTimeline& timeline) {
  std::ostringstream os;
  os << kTimelineHeader << "\n";
  for (const TimelineEntry& e : timeline.entries) {
    os << format6(e.timestamp);
    for (double v : e.dist.scores) os << "," << format6(v);
    os << "\n";
  }
  if (timeline.predicted_next) {
    os << "# next";
    for (double v : timeline.predicted_next->scores) os << "," << format6(v);
    os << "\n";
  }
  return os.str();
}

inline void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write: " + path);
  out << body;
}

inline void write_timeline_csv(const EmotionTimeline& timeline, const std::string& path) {
  write_text(path, timeline_csv(timeline));
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::array<double, kNumClasses> parse_scores(const std::vector<std::string>& fields,
                                                    std::size_t first, const std::string& where) {
  if (fields.size() != first + kNumClasses) {
    throw ParseError(where + ": expected " + std::to_string(first + kNumClasses) +
                     " fields, got " + std::to_string(fields.size()));
  }
  std::array<double, kNumClasses> s{};
  for (int c = 0; c < kNumClasses; ++c) {
    try {
      s[static_cast<std::size_t>(c)] = std::stod(fields[first + static_cast<std::size_t>(c)]);
    } catch (...) {
      throw ParseError(where + ": bad number \"" + fields[first + static_cast<std::size_t>(c)] +
                       "\"");
    }
  }
  return s;
}

}  // namespace detail

/// Parses a timeline CSV written by timeline_csv (or hand-assembled in the
/// same shape). A trailing "# next,..." comment restores predicted_next.
inline EmotionTimeline parse_timeline_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open timeline csv: " + path);
  std::string line;
  if (!std::getline(in, line) || detail::split_csv(line) != detail::split_csv(kTimelineHeader)) {
    throw ParseError(path + ": missing timeline header \"" + kTimelineHeader + "\"");
  }
  EmotionTimeline tl;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    if (line.front() == '#') {
      auto fields = detail::split_csv(line);
      if (!fields.empty() && fields[0] == "# next") {
        tl.predicted_next =
            ExpressionDistribution::make(detail::parse_scores(fields, 1, where), false);
      }
      continue;
    }
    auto fields = detail::split_csv(line);
    if (fields.size() != 1 + kNumClasses) {
      throw ParseError(where + ": expected 8 fields, got " + std::to_string(fields.size()));
    }
    double ts = 0.0;
    try {
      ts = std::stod(fields[0]);
    } catch (...) {
      throw ParseError(where + ": bad timestamp \"" + fields[0] + "\"");
    }
    tl.entries.push_back(
        {ts, ExpressionDistribution::make(detail::parse_scores(fields, 1, where), false)});
  }
  tl.validate();
  if (tl.entries.size() >= 2) tl.spacing = tl.entries[1].timestamp - tl.entries[0].timestamp;
  return tl;
}

/// Table-2-shaped CSV: one row per window labeled t, t+10s, ... with the
/// seven expression columns (the published table transposed).
inline std::string table2_csv(const EmotionTimeline& timeline) {
  std::ostringstream os;
  os << "time,anger,disgust,fear,happy,sadness,neutral,sleep\n";
  const double t0 = timeline.entries.empty() ? 0.0 : timeline.entries.front().timestamp;
  for (const TimelineEntry& e : timeline.entries) {
    const double off = e.timestamp - t0;
    if (off <= 0.0) {
      os << "t";
    } else {
      char label[32];
      std::snprintf(label, sizeof(label), "t+%gs", off);
      os << label;
    }
    for (double v : e.dist.scores) os << "," << format6(v);
    os << "\n";
  }
  return os.str();
}

inline std::string shift_report_text(const ShiftReport& report,
                                     const EmotionTimeline& timeline) {
  std::ostringstream os;
  os << "dominant expression per window:\n";
  for (std::size_t i = 0; i < report.dominants.size(); ++i) {
    os << "  t=" << format6(timeline.entries[i].timestamp) << " "
       << class_name(report.dominants[i]) << "\n";
  }
  if (report.transitions.empty()) {
    os << "no dominant transitions\n";
  } else {
    os << "transitions:\n";
    for (const auto& tr : report.transitions) {
      os << "  " << class_name(tr.from) << " -> " << class_name(tr.to)
         << " at t=" << format6(tr.at) << "\n";
    }
  }
  os << "per-class delta (last - first):\n";
  for (int c = 0; c < kNumClasses; ++c) {
    os << "  " << kClassNames[static_cast<std::size_t>(c)] << " "
       << format6(report.deltas[static_cast<std::size_t>(c)]) << "\n";
  }
  os << "smoothness rank: " << smoothness(timeline) << "\n";
  return os.str();
}

inline std::string fig5_deltas_csv(const ShiftReport& report) {
  std::ostringstream os;
  os << "class,delta\n";
  for (int c = 0; c < kNumClasses; ++c) {
    os << kClassNames[static_cast<std::size_t>(c)] << ","
       << format6(report.deltas[static_cast<std::size_t>(c)]) << "\n";
  }
  return os.str();
}

inline std::string fig7_epochs_csv(const std::vector<double>& epoch_accuracy) {
  std::ostringstream os;
  os << "epoch,accuracy\n";
  for (std::size_t e = 0; e < epoch_accuracy.size(); ++e) {
    os << (e + 1) << "," << format6(epoch_accuracy[e]) << "\n";
  }
  return os.str();
}

inline std::string fig8_comparison_csv(const ComparisonResult& cmp) {
  std::ostringstream os;
  os << "model,accuracy\n";
  os << "baseline," << format6(cmp.baseline_accuracy) << "\n";
  os << "cnn," << format6(cmp.cnn_accuracy) << "\n";
  os << "rcnn," << format6(cmp.rcnn_accuracy) << "\n";
  return os.str();
}

inline std::string fold_report_csv(const std::vector<FoldResult>& folds) {
  std::ostringstream os;
  os << "fold,epoch,train_acc,test_acc\n";
  for (const FoldResult& f : folds) {
    for (std::size_t e = 0; e < f.train_accuracy.size(); ++e) {
      os << f.fold_index << "," << (e + 1) << "," << format6(f.train_accuracy[e]) << ","
         << format6(f.test_accuracy) << "\n";
    }
  }
  return os.str();
}

/// Writes whichever plot-data files have inputs into dir: fig4_timeline.csv,
/// fig5_deltas.csv, fig7_epochs.csv, fig8_comparison.csv.
inline void emit_plot_data(const std::string& dir, const EmotionTimeline* timeline,
                           const ShiftReport* shift, const std::vector<double>* epoch_accuracy,
                           const ComparisonResult* comparison) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw IoError("cannot create output directory: " + dir);
  if (timeline) write_text((fs::path(dir) / "fig4_timeline.csv").string(), timeline_csv(*timeline));
  if (shift) write_text((fs::path(dir) / "fig5_deltas.csv").string(), fig5_deltas_csv(*shift));
  if (epoch_accuracy) {
    write_text((fs::path(dir) / "fig7_epochs.csv").string(), fig7_epochs_csv(*epoch_accuracy));
  }
  if (comparison) {
    write_text((fs::path(dir) / "fig8_comparison.csv").string(), fig8_comparison_csv(*comparison));
  }
}

}  // namespace fer
