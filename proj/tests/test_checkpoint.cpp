#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fer/checkpoint.hpp"
#include "fer/selfcheck.hpp"

using namespace fer;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path dir;
  TempDir() : dir(fs::temp_directory_path() / ("fer_ckpt_" + std::to_string(::getpid()))) {
    fs::create_directories(dir);
  }
  ~TempDir() { fs::remove_all(dir); }
  std::string operator/(const char* name) const { return (dir / name).string(); }
};

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("cnn checkpoint round-trip keeps predictions within 1e-6") {
  TempDir tmp;
  CnnConfig cfg;
  cfg.input_size = 32;
  cfg.seed = 77;
  CnnModel m = build_model(cfg);
  const std::string path = tmp / "model.ckpt";
  save_checkpoint(m, path);
  CnnModel back = load_cnn_checkpoint(path);
  CHECK(back.config.input_size == 32);
  CHECK(back.config.seed == 77);

  Rng rng(5);
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    Tensor img = selfcheck::random_tensor(rng, {32, 32, 1}, 0.0, 1.0);
    ExpressionDistribution a = forward(m, img);
    ExpressionDistribution b = forward(back, img);
    for (int c = 0; c < 7; ++c) {
      worst = std::max(worst, std::abs(a.scores[static_cast<std::size_t>(c)] -
                                       b.scores[static_cast<std::size_t>(c)]));
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("rnn checkpoint round-trip") {
  TempDir tmp;
  RnnCell c = build_cell(16, 9);
  const std::string path = tmp / "cell.ckpt";
  save_checkpoint(c, path);
  CHECK(checkpoint_kind(path) == "rnn");
  RnnCell back = load_rnn_checkpoint(path);
  CHECK(back.hidden == 16);
  std::array<double, 7> s{};
  s[1] = 1.0;
  auto x = ExpressionDistribution::make(s, true);
  auto a = rnn_step(c, x, RnnState::initial(16));
  auto b = rnn_step(back, x, RnnState::initial(16));
  for (int i = 0; i < 7; ++i) {
    CHECK(std::abs(a.output.scores[static_cast<std::size_t>(i)] -
                   b.output.scores[static_cast<std::size_t>(i)]) <= 1e-6);
  }
}

TEST_CASE("corrupted checkpoints raise distinct error classes") {
  TempDir tmp;
  CnnConfig cfg;
  cfg.input_size = 32;
  CnnModel m = build_model(cfg);
  const std::string good = tmp / "good.ckpt";
  save_checkpoint(m, good);
  const std::vector<char> bytes = slurp(good);

  SUBCASE("bad magic") {
    std::vector<char> bad = bytes;
    bad[0] = 'X';
    bad[1] = 'X';
    bad[2] = 'X';
    bad[3] = 'X';
    const std::string p = tmp / "magic.ckpt";
    spit(p, bad);
    CHECK_THROWS_AS(load_cnn_checkpoint(p), CheckpointMagicError);
  }
  SUBCASE("version mismatch") {
    std::vector<char> bad = bytes;
    // header begins "FERCKPT1\nversion 1\n" — flip the version digit
    const std::string needle = "version 1";
    auto it = std::search(bad.begin(), bad.end(), needle.begin(), needle.end());
    REQUIRE(it != bad.end());
    *(it + 8) = '9';
    const std::string p = tmp / "version.ckpt";
    spit(p, bad);
    CHECK_THROWS_AS(load_cnn_checkpoint(p), CheckpointVersionError);
  }
  SUBCASE("payload truncated by one byte names expected vs actual") {
    std::vector<char> bad = bytes;
    bad.pop_back();
    const std::string p = tmp / "trunc.ckpt";
    spit(p, bad);
    CHECK_THROWS_AS(load_cnn_checkpoint(p), CheckpointTruncatedError);
    try {
      load_cnn_checkpoint(p);
    } catch (const CheckpointTruncatedError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("expected") != std::string::npos);
      CHECK(msg.find("got") != std::string::npos);
    }
  }
  SUBCASE("shape inconsistency") {
    std::vector<char> bad = bytes;
    const std::string needle = "tensor conv1 4 3 3 1 32";
    auto it = std::search(bad.begin(), bad.end(), needle.begin(), needle.end());
    REQUIRE(it != bad.end());
    *(it + 15) = '2';  // claim a 2x3 kernel
    const std::string p = tmp / "shape.ckpt";
    spit(p, bad);
    CHECK_THROWS_AS(load_cnn_checkpoint(p), CheckpointShapeError);
  }
  SUBCASE("kind mismatch") {
    CHECK_THROWS_AS(load_rnn_checkpoint(good), CheckpointShapeError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_cnn_checkpoint(tmp / "absent.ckpt"), IoError);
  }
}
