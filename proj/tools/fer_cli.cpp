// fer: facial-expression engine CLI.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fer/fer.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string profile;  // full-64 | reduced-32
  std::uint64_t seed = 1;
};

fer::CnnConfig make_config(const CommonOpts& common, bool aux) {
  fer::CnnConfig cfg;
  std::string profile = common.profile;
  if (profile.empty()) {
    if (const char* env = std::getenv("FER_PROFILE")) profile = env;
  }
  if (profile.empty()) profile = "full-64";
  if (profile == "full-64") {
    cfg.input_size = 64;
  } else if (profile == "reduced-32") {
    cfg.input_size = 32;
  } else {
    throw fer::Error("unknown profile \"" + profile + "\" (expected full-64 or reduced-32)");
  }
  cfg.aux_landmarks = aux;
  cfg.seed = common.seed;
  return cfg;
}

std::optional<fer::RawSize> parse_raw_size(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const auto x = s.find('x');
  if (x == std::string::npos) throw fer::Error("--raw-size must be WxH, got \"" + s + "\"");
  fer::RawSize r;
  try {
    r.width = std::stoll(s.substr(0, x));
    r.height = std::stoll(s.substr(x + 1));
  } catch (...) {
    throw fer::Error("--raw-size must be WxH, got \"" + s + "\"");
  }
  if (r.width < 2 || r.height < 2) throw fer::Error("--raw-size extents must be >= 2");
  return r;
}

std::vector<std::string> list_frame_files(const std::string& dir) {
  std::vector<std::string> files;
  if (!fs::is_directory(dir)) throw fer::IoError("frame directory not found: " + dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw fer::Error("no .pgm/.ppm frames in " + dir);
  return files;
}

std::optional<fer::LandmarkSet> sidecar_for(const std::string& image_path, bool required) {
  fs::path p(image_path);
  p.replace_extension(".lms");
  if (fs::exists(p)) return fer::load_landmarks(p.string());
  if (required) {
    throw fer::Error("model needs landmarks but sidecar is missing: " + p.string());
  }
  return std::nullopt;
}

int cmd_train(const CommonOpts& common, const std::string& manifest_path,
              const std::string& out_dir, int folds, double split_ratio, bool aux, bool compare,
              const fer::TrainConfig& tc) {
  const fer::DatasetManifest manifest = fer::load_manifest(manifest_path);
  if (manifest.empty()) throw fer::Error("manifest is empty: " + manifest_path);
  const std::string base_dir = fs::path(manifest_path).parent_path().string();
  const fer::CnnConfig cfg = make_config(common, aux);

  fs::create_directories(out_dir);
  std::vector<fer::FoldResult> fold_rows;
  std::vector<double> fig7_curve;

  if (folds > 0) {
    fer::CvSummary cv = fer::cross_validate(manifest, base_dir, cfg, tc, folds, common.seed);
    fold_rows = cv.folds;
    fig7_curve = cv.mean_train_accuracy;
    std::cerr << "cv mean test accuracy: " << fer::format6(cv.mean_test_accuracy) << "\n";
    // final checkpoint: train on everything
    auto full = fer::load_labeled_dataset(manifest, base_dir, cfg);
    fer::CnnModel model = fer::build_model(cfg);
    fer::train(model, full, tc);
    fer::save_checkpoint(model, (fs::path(out_dir) / "cnn.ckpt").string());
  } else {
    fer::SplitResult split = fer::split_dataset(manifest, split_ratio, common.seed);
    auto train_set = fer::load_labeled_dataset(split.train, base_dir, cfg);
    auto test_set = fer::load_labeled_dataset(split.test, base_dir, cfg);
    fer::CnnModel model = fer::build_model(cfg);
    fer::TrainMetrics metrics = fer::train(model, train_set, tc);
    fer::FoldResult fr;
    fr.fold_index = 0;
    fr.train_accuracy = metrics.epoch_accuracy;
    fr.train_loss = metrics.epoch_loss;
    fr.test_confusion = fer::model_confusion(model, test_set);
    fr.test_accuracy = fer::overall_accuracy(fr.test_confusion);
    fold_rows.push_back(fr);
    fig7_curve = metrics.epoch_accuracy;
    std::cerr << "test accuracy: " << fer::format6(fr.test_accuracy) << "\n";
    fer::save_checkpoint(model, (fs::path(out_dir) / "cnn.ckpt").string());
  }

  fer::write_text((fs::path(out_dir) / "fold_report.csv").string(),
                  fer::fold_report_csv(fold_rows));
  fer::emit_plot_data(out_dir, nullptr, nullptr, &fig7_curve, nullptr);
  if (!fig7_curve.empty()) {
    double curve_mean = 0.0;
    for (double a : fig7_curve) curve_mean += a;
    curve_mean /= static_cast<double>(fig7_curve.size());
    std::cerr << "train accuracy curve mean: " << fer::format6(curve_mean) << "\n";
  }

  if (compare) {
    fer::SplitResult split = fer::split_dataset(manifest, split_ratio, common.seed);
    auto train_set = fer::load_labeled_dataset(split.train, base_dir, cfg);
    auto test_set = fer::load_labeled_dataset(split.test, base_dir, cfg);
    // the pixel baseline always sees the full-64 flatten
    fer::CnnConfig base_cfg = cfg;
    base_cfg.input_size = 64;
    base_cfg.aux_landmarks = false;
    auto base_train = fer::load_labeled_dataset(split.train, base_dir, base_cfg);
    auto base_test = fer::load_labeled_dataset(split.test, base_dir, base_cfg);
    fer::ComparisonResult cmp =
        fer::compare_models(train_set, test_set, base_train, base_test, cfg, tc);
    fer::emit_plot_data(out_dir, nullptr, nullptr, nullptr, &cmp);
    std::cerr << "comparison: baseline " << fer::format6(cmp.baseline_accuracy) << ", cnn "
              << fer::format6(cmp.cnn_accuracy) << ", rcnn " << fer::format6(cmp.rcnn_accuracy)
              << "\n";
  }
  std::cout << "wrote " << (fs::path(out_dir) / "cnn.ckpt").string() << "\n";
  return 0;
}

int cmd_train_rnn(const CommonOpts& common, const std::vector<std::string>& sequence_files,
                  std::int64_t hidden, const std::string& out_dir, fer::TrainConfig tc) {
  std::vector<std::vector<fer::ExpressionDistribution>> series;
  for (const std::string& f : sequence_files) {
    fer::EmotionTimeline tl = fer::parse_timeline_csv(f);
    std::vector<fer::ExpressionDistribution> s;
    for (const auto& e : tl.entries) s.push_back(e.dist);
    series.push_back(std::move(s));
  }
  tc.seed = common.seed;
  fer::RnnCell cell = fer::build_cell(hidden, common.seed);
  fer::train_rnn(cell, series, tc);
  const double acc = fer::rnn_next_step_accuracy(cell, series);
  std::cerr << "next-step training accuracy: " << fer::format6(acc) << "\n";
  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / "rnn.ckpt").string();
  fer::save_checkpoint(cell, path);
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& image,
                const std::string& landmarks, const std::string& raw_size) {
  fer::CnnModel model = fer::load_cnn_checkpoint(checkpoint);
  fer::Tensor raw = fer::load_image_gray(image, parse_raw_size(raw_size));
  std::optional<fer::LandmarkSet> lm;
  if (!landmarks.empty()) lm = fer::load_landmarks(landmarks);
  fer::LabeledImage input = fer::prepare_input(model.config, raw, lm);
  fer::ExpressionDistribution d = fer::forward(model, input.image, input.aux);
  for (int c = 0; c < fer::kNumClasses; ++c) {
    std::cout << (c ? "," : "") << fer::kClassNames[static_cast<std::size_t>(c)];
  }
  std::cout << "\n";
  for (int c = 0; c < fer::kNumClasses; ++c) {
    std::cout << (c ? "," : "") << fer::format6(d.scores[static_cast<std::size_t>(c)]);
  }
  std::cout << "\n";
  std::cerr << "dominant: " << fer::class_name(fer::dominant(d)) << "\n";
  return 0;
}

int cmd_timeline(const CommonOpts& common, const std::string& checkpoint,
                 const std::string& frames_dir, const std::string& rnn_checkpoint, double fps,
                 double start, double spacing, int windows, const std::string& sample_mode,
                 double keep_rate, const std::string& out_file) {
  fer::CnnModel model = fer::load_cnn_checkpoint(checkpoint);
  std::optional<fer::RnnCell> cell;
  if (!rnn_checkpoint.empty()) cell = fer::load_rnn_checkpoint(rnn_checkpoint);

  const std::vector<std::string> files = list_frame_files(frames_dir);
  std::vector<fer::Frame> frames;
  std::vector<fer::LabeledImage> prepared;
  frames.reserve(files.size());
  prepared.reserve(files.size());
  for (std::size_t i = 0; i < files.size(); ++i) {
    fer::Frame f;
    f.pixels = fer::load_image_gray(files[i]);
    f.timestamp = static_cast<double>(i) / fps;
    prepared.push_back(fer::prepare_input(model.config, f.pixels,
                                          sidecar_for(files[i], model.config.aux_landmarks)));
    frames.push_back(std::move(f));
  }

  std::vector<std::size_t> kept_indices(frames.size());
  for (std::size_t i = 0; i < kept_indices.size(); ++i) kept_indices[i] = i;
  if (sample_mode != "none") {
    fer::SamplePolicy policy;
    policy.fps = fps;
    policy.seed = common.seed;
    policy.keep_rate = keep_rate;
    policy.variance_max = sample_mode == "variance-max";
    if (!policy.variance_max && sample_mode != "random") {
      throw fer::Error("unknown --sample mode \"" + sample_mode +
                       "\" (expected none, random or variance-max)");
    }
    std::vector<fer::Frame> kept = fer::sample_frames(frames, policy);
    kept_indices.clear();
    std::size_t cursor = 0;
    for (const fer::Frame& k : kept) {
      while (cursor < frames.size() && frames[cursor].timestamp != k.timestamp) ++cursor;
      kept_indices.push_back(cursor++);
    }
  }

  std::vector<fer::Frame> sampled;
  std::vector<fer::LabeledImage> sampled_inputs;
  for (std::size_t idx : kept_indices) {
    sampled.push_back(frames[idx]);
    sampled_inputs.push_back(prepared[idx]);
  }

  auto frame_windows = fer::window_schedule(sampled, start, spacing, windows);
  std::vector<std::vector<fer::LabeledImage>> input_windows(frame_windows.size());
  std::vector<double> timestamps;
  for (std::size_t k = 0; k < frame_windows.size(); ++k) {
    timestamps.push_back(start + static_cast<double>(k) * spacing);
    std::size_t cursor = 0;
    for (const fer::Frame& wf : frame_windows[k]) {
      while (cursor < sampled.size() && sampled[cursor].timestamp < wf.timestamp) ++cursor;
      input_windows[k].push_back(sampled_inputs[cursor]);
    }
  }

  fer::EmotionTimeline tl =
      fer::build_timeline(model, cell ? &*cell : nullptr, input_windows, timestamps, spacing);
  fer::write_timeline_csv(tl, out_file);
  std::cout << "wrote " << out_file << "\n";
  return 0;
}

int cmd_report(const std::string& timeline_file, const std::string& format,
               const std::string& out_dir) {
  fer::EmotionTimeline tl = fer::parse_timeline_csv(timeline_file);
  if (format == "table2") {
    std::cout << fer::table2_csv(tl);
  } else if (!format.empty()) {
    throw fer::Error("unknown report format \"" + format + "\" (expected table2)");
  }
  if (!out_dir.empty()) {
    fer::ShiftReport shift = fer::detect_shift(tl);
    fer::emit_plot_data(out_dir, &tl, &shift, nullptr, nullptr);
    fer::write_text((fs::path(out_dir) / "shift_report.txt").string(),
                    fer::shift_report_text(shift, tl));
    std::cout << "wrote plot data to " << out_dir << "\n";
  }
  return 0;
}

int cmd_gradcheck(const CommonOpts& common) {
  fer::CnnConfig cfg;
  cfg.input_size = 32;  // gradcheck always runs the reduced profile
  cfg.seed = common.seed;
  bool ok = true;
  for (const auto& res : {fer::gradcheck::check_cnn(cfg, 12, common.seed),
                          fer::gradcheck::check_rnn(8, 4, common.seed)}) {
    std::cout << (res.pass ? "[PASS] " : "[FAIL] ") << res.name
              << " max_rel_err=" << res.max_rel_error << "\n";
    ok = ok && res.pass;
  }
  return ok ? 0 : 1;
}

int cmd_selftest() {
  std::vector<fer::selfcheck::Check> checks;
  checks.push_back(fer::selfcheck::conv_oracle_suite());
  checks.push_back(fer::selfcheck::pool_oracle_suite());
  checks.push_back(fer::selfcheck::batch_norm_oracle_suite());
  checks.push_back(fer::selfcheck::dense_oracle_suite());
  for (const auto& c : fer::selfcheck::activation_fidelity()) checks.push_back(c);
  checks.push_back(fer::selfcheck::partition_suite());
  bool ok = true;
  for (const auto& c : checks) {
    std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << "\n";
    ok = ok && c.pass;
  }
  return ok ? 0 : 1;
}

int cmd_gen_synthetic(const CommonOpts& common, const std::string& out_dir, int per_class,
                      std::int64_t size, bool landmarks, bool clip, double fps) {
  if (clip) {
    const int n = fer::synthetic::write_clip(out_dir, fps, common.seed, size);
    std::cout << "wrote " << n << " clip frames to " << out_dir << "\n";
  } else {
    const std::string manifest =
        fer::synthetic::write_dataset(out_dir, per_class, common.seed, size, landmarks);
    std::cout << "wrote " << manifest << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"facial expression recognition and emotion-timeline engine"};
  app.set_version_flag("--version", fer::kVersion);
  app.require_subcommand(0, 1);
  app.fallthrough();  // --seed / --profile may follow the subcommand

  CommonOpts common;
  app.add_option("--seed", common.seed, "seed for every stochastic step (printed at start)");
  app.add_option("--profile", common.profile,
                 "model profile: full-64 or reduced-32 (env FER_PROFILE overrides the default)");

  fer::TrainConfig tc;
  std::string optimizer = "sgd-momentum";

  // train
  auto* train = app.add_subcommand("train", "train the expression classifier over a manifest");
  std::string manifest_path, out_dir = ".";
  int folds = 0;
  double split_ratio = 0.8;
  bool aux = false, compare = false;
  train->add_option("--manifest", manifest_path, "dataset manifest")->required();
  train->add_option("--out", out_dir, "output directory");
  train->add_option("--folds", folds, "run k-fold cross-validation");
  train->add_option("--split", split_ratio, "train fraction when not folding");
  train->add_option("--epochs", tc.epochs, "training epochs");
  train->add_option("--lr", tc.learning_rate, "learning rate");
  train->add_option("--batch", tc.batch_size, "batch size");
  train->add_option("--optimizer", optimizer, "sgd or sgd-momentum");
  train->add_flag("--aux", aux, "concatenate the 272-value landmark profile");
  train->add_flag("--compare", compare, "write the baseline/cnn/rcnn comparison");

  // train-rnn
  auto* train_rnn_cmd =
      app.add_subcommand("train-rnn", "train the recurrent predictor from timeline CSVs");
  std::vector<std::string> sequence_files;
  std::int64_t hidden = 16;
  std::string rnn_out = ".";
  train_rnn_cmd->add_option("--sequences", sequence_files, "timeline-format CSV series")
      ->required()
      ->expected(-1);
  train_rnn_cmd->add_option("--hidden", hidden, "hidden state size");
  train_rnn_cmd->add_option("--out", rnn_out, "output directory");
  train_rnn_cmd->add_option("--epochs", tc.epochs, "training epochs");
  train_rnn_cmd->add_option("--lr", tc.learning_rate, "learning rate");

  // predict
  auto* predict = app.add_subcommand("predict", "classify one image with a checkpoint");
  std::string ckpt, image, landmarks_file, raw_size;
  predict->add_option("--checkpoint", ckpt, "cnn checkpoint")->required();
  predict->add_option("--image", image, "input image (.pgm/.ppm/.raw)")->required();
  predict->add_option("--landmarks", landmarks_file, "landmark sidecar");
  predict->add_option("--raw-size", raw_size, "WxH for .raw frame dumps");

  // timeline
  auto* timeline = app.add_subcommand("timeline", "emotion timeline over a frame directory");
  std::string frames_dir, rnn_ckpt, timeline_out = "timeline.csv";
  double fps = 30.0, start = 0.0, spacing = 10.0;
  int windows = 4;
  std::string sample_mode = "none";
  double keep_rate = 1.0 / 6.0;
  timeline->add_option("--checkpoint", ckpt, "cnn checkpoint")->required();
  timeline->add_option("--frames", frames_dir, "directory of numbered frames")->required();
  timeline->add_option("--rnn", rnn_ckpt, "rnn checkpoint for the next-window prediction");
  timeline->add_option("--fps", fps, "capture rate of the numbered frames");
  timeline->add_option("--start", start, "schedule start time t (seconds)");
  timeline->add_option("--spacing", spacing, "schedule spacing (seconds)");
  timeline->add_option("--windows", windows, "number of capture windows");
  timeline->add_option("--sample", sample_mode, "frame dropping: none, random or variance-max");
  timeline->add_option("--keep-rate", keep_rate, "kept fraction when sampling");
  timeline->add_option("--out", timeline_out, "timeline CSV path");

  // report
  auto* report = app.add_subcommand("report", "tables, shift report and plot data from a timeline");
  std::string timeline_file, report_format, report_out;
  report->add_option("--timeline", timeline_file, "timeline CSV")->required();
  report->add_option("--format", report_format, "table2 prints the table-2 shape to stdout");
  report->add_option("--out", report_out, "directory for fig4/fig5/shift report files");

  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference checks of the cnn and rnn gradients");
  auto* selftest_cmd = app.add_subcommand("selftest", "oracle and invariant suites");

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "write the synthetic pattern dataset");
  std::string gen_out;
  int per_class = 40;
  std::int64_t gen_size = 64;
  bool gen_landmarks = false, gen_clip = false;
  double gen_fps = 5.0;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--per-class", per_class, "samples per class");
  gen->add_option("--size", gen_size, "image extent");
  gen->add_flag("--landmarks", gen_landmarks, "write landmark sidecars");
  gen->add_flag("--clip", gen_clip, "write a 40s clip with a scripted emotion shift");
  gen->add_option("--fps", gen_fps, "clip frame rate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }

  try {
    if (optimizer == "sgd") {
      tc.optimizer = fer::TrainConfig::Optimizer::kSgd;
    } else if (optimizer == "sgd-momentum") {
      tc.optimizer = fer::TrainConfig::Optimizer::kSgdMomentum09;
    } else {
      throw fer::Error("unknown optimizer \"" + optimizer + "\"");
    }
    tc.seed = common.seed;
    std::cerr << "seed: " << common.seed << "\n";

    if (app.got_subcommand(train)) {
      return cmd_train(common, manifest_path, out_dir, folds, split_ratio, aux, compare, tc);
    }
    if (app.got_subcommand(train_rnn_cmd)) {
      return cmd_train_rnn(common, sequence_files, hidden, rnn_out, tc);
    }
    if (app.got_subcommand(predict)) {
      return cmd_predict(ckpt, image, landmarks_file, raw_size);
    }
    if (app.got_subcommand(timeline)) {
      return cmd_timeline(common, ckpt, frames_dir, rnn_ckpt, fps, start, spacing, windows,
                          sample_mode, keep_rate, timeline_out);
    }
    if (app.got_subcommand(report)) {
      return cmd_report(timeline_file, report_format, report_out);
    }
    if (app.got_subcommand(gradcheck_cmd)) {
      return cmd_gradcheck(common);
    }
    if (app.got_subcommand(selftest_cmd)) {
      return cmd_selftest();
    }
    if (app.got_subcommand(gen)) {
      return cmd_gen_synthetic(common, gen_out, per_class, gen_size, gen_landmarks, gen_clip,
                               gen_fps);
    }
    std::cerr << app.help();
    return 2;
  } catch (const fer::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
