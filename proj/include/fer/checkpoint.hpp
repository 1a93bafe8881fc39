#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fer/cnn.hpp"
#include "fer/rnn.hpp"

namespace fer {

// Checkpoint layout: a text header (magic, version, kind, config, class
// order, tensor directory with shapes and byte offsets), an `end` line, then
// raw little-endian float32 payload. Compute stays 64-bit; storage is 32.
inline constexpr const char* kCheckpointMagic = "FERCKPT1";
inline constexpr int kCheckpointVersion = 1;

struct CheckpointMagicError : Error {
  using Error::Error;
};
struct CheckpointVersionError : Error {
  using Error::Error;
};
struct CheckpointShapeError : Error {
  using Error::Error;
};
struct CheckpointTruncatedError : Error {
  using Error::Error;
};

namespace detail {

inline void append_f32_le(std::string& out, double v) {
  const auto f = static_cast<float>(v);
  std::uint32_t u = 0;
  std::memcpy(&u, &f, 4);
  out.push_back(static_cast<char>(u & 0xffu));
  out.push_back(static_cast<char>((u >> 8) & 0xffu));
  out.push_back(static_cast<char>((u >> 16) & 0xffu));
  out.push_back(static_cast<char>((u >> 24) & 0xffu));
}

inline double read_f32_le(const unsigned char* p) {
  const std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                          (static_cast<std::uint32_t>(p[1]) << 8) |
                          (static_cast<std::uint32_t>(p[2]) << 16) |
                          (static_cast<std::uint32_t>(p[3]) << 24);
  float f = 0.0f;
  std::memcpy(&f, &u, 4);
  return static_cast<double>(f);
}

struct TensorEntry {
  std::string name;
  std::vector<std::int64_t> shape;
  std::size_t offset = 0;
  std::size_t bytes = 0;
};

struct CheckpointWriter {
  std::map<std::string, std::string> config;
  std::vector<TensorEntry> directory;
  std::string payload;

  void add(const std::string& name, const Tensor& t) {
    TensorEntry e;
    e.name = name;
    e.shape = t.shape();
    e.offset = payload.size();
    e.bytes = t.numel() * 4;
    for (std::size_t i = 0; i < t.numel(); ++i) append_f32_le(payload, t[i]);
    directory.push_back(std::move(e));
  }

  void write(const std::string& kind, const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out << kCheckpointMagic << "\n";
    out << "version " << kCheckpointVersion << "\n";
    out << "kind " << kind << "\n";
    for (const auto& [k, v] : config) out << k << " " << v << "\n";
    out << "classes ";
    for (int i = 0; i < kNumClasses; ++i) {
      out << (i ? "," : "") << kClassNames[static_cast<std::size_t>(i)];
    }
    out << "\n";
    out << "tensors " << directory.size() << "\n";
    for (const TensorEntry& e : directory) {
      out << "tensor " << e.name << " " << e.shape.size();
      for (std::int64_t d : e.shape) out << " " << d;
      out << " " << e.offset << " " << e.bytes << "\n";
    }
    out << "end\n";
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
};

struct CheckpointReader {
  std::string kind;
  std::map<std::string, std::string> config;
  std::vector<TensorEntry> directory;
  std::vector<unsigned char> payload;

  static CheckpointReader open(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    CheckpointReader r;
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointMagic) {
      throw CheckpointMagicError(path + ": bad checkpoint magic (expected " +
                                 std::string(kCheckpointMagic) + ")");
    }
    bool saw_end = false;
    std::size_t expected_bytes = 0;
    while (std::getline(in, line)) {
      if (line == "end") {
        saw_end = true;
        break;
      }
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key == "version") {
        int v = -1;
        ls >> v;
        if (v != kCheckpointVersion) {
          throw CheckpointVersionError(path + ": unsupported checkpoint version " +
                                       std::to_string(v) + " (expected " +
                                       std::to_string(kCheckpointVersion) + ")");
        }
      } else if (key == "kind") {
        ls >> r.kind;
      } else if (key == "classes") {
        std::string order;
        ls >> order;
        std::string expect;
        for (int i = 0; i < kNumClasses; ++i) {
          expect += (i ? "," : "");
          expect += kClassNames[static_cast<std::size_t>(i)];
        }
        if (order != expect) {
          throw CheckpointShapeError(path + ": class order mismatch: " + order);
        }
      } else if (key == "tensors") {
        // count line; directory entries follow
      } else if (key == "tensor") {
        TensorEntry e;
        std::size_t rank = 0;
        ls >> e.name >> rank;
        for (std::size_t i = 0; i < rank; ++i) {
          std::int64_t d = 0;
          ls >> d;
          e.shape.push_back(d);
        }
        ls >> e.offset >> e.bytes;
        if (!ls) throw CheckpointShapeError(path + ": malformed tensor directory line");
        expected_bytes = std::max(expected_bytes, e.offset + e.bytes);
        r.directory.push_back(std::move(e));
      } else {
        std::string rest;
        std::getline(ls, rest);
        if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
        r.config[key] = rest;
      }
    }
    if (!saw_end) throw CheckpointShapeError(path + ": header has no end marker");
    r.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    if (r.payload.size() < expected_bytes) {
      throw CheckpointTruncatedError(path + ": truncated payload: expected " +
                                     std::to_string(expected_bytes) + " bytes, got " +
                                     std::to_string(r.payload.size()));
    }
    if (r.payload.size() > expected_bytes) {
      throw CheckpointShapeError(path + ": payload has " +
                                 std::to_string(r.payload.size() - expected_bytes) +
                                 " trailing bytes");
    }
    return r;
  }

  Tensor take(const std::string& name, const std::vector<std::int64_t>& expect_shape,
              const std::string& path) const {
    for (const TensorEntry& e : directory) {
      if (e.name != name) continue;
      if (e.shape != expect_shape) {
        throw CheckpointShapeError(path + ": tensor " + name + " has shape " +
                                   Tensor::shape_string(e.shape) + ", expected " +
                                   Tensor::shape_string(expect_shape));
      }
      Tensor t(e.shape);
      if (e.bytes != t.numel() * 4) {
        throw CheckpointShapeError(path + ": tensor " + name + " byte count mismatch");
      }
      for (std::size_t i = 0; i < t.numel(); ++i) {
        t[i] = read_f32_le(payload.data() + e.offset + 4 * i);
      }
      return t;
    }
    throw CheckpointShapeError(path + ": tensor " + name + " missing from checkpoint");
  }

  std::string config_at(const std::string& key, const std::string& path) const {
    auto it = config.find(key);
    if (it == config.end()) {
      throw CheckpointShapeError(path + ": config key \"" + key + "\" missing");
    }
    return it->second;
  }
};

}  // namespace detail

inline void save_checkpoint(const CnnModel& m, const std::string& path) {
  detail::CheckpointWriter w;
  w.config["input_size"] = std::to_string(m.config.input_size);
  w.config["padding"] = padding_name(m.config.padding);
  w.config["fc_activation"] = activation_name(m.config.fc_activation);
  w.config["head_activation"] = activation_name(m.config.head_activation);
  w.config["aux_landmarks"] = m.config.aux_landmarks ? "1" : "0";
  w.config["seed"] = std::to_string(m.config.seed);
  w.add("conv1", m.conv1);
  w.add("bn1_gamma", m.bn1_gamma);
  w.add("bn1_beta", m.bn1_beta);
  w.add("bn1_running_mean", m.bn1_state.running_mean);
  w.add("bn1_running_var", m.bn1_state.running_var);
  w.add("conv2", m.conv2);
  w.add("bn2_gamma", m.bn2_gamma);
  w.add("bn2_beta", m.bn2_beta);
  w.add("bn2_running_mean", m.bn2_state.running_mean);
  w.add("bn2_running_var", m.bn2_state.running_var);
  w.add("fc_w", m.fc_w);
  w.add("fc_b", m.fc_b);
  w.add("head_w", m.head_w);
  w.add("head_b", m.head_b);
  w.write("cnn", path);
}

inline void save_checkpoint(const RnnCell& c, const std::string& path) {
  detail::CheckpointWriter w;
  w.config["hidden"] = std::to_string(c.hidden);
  w.config["hidden_activation"] = activation_name(c.hidden_activation);
  w.config["output_activation"] = activation_name(c.output_activation);
  w.add("u", c.u);
  w.add("w", c.w);
  w.add("v", c.v);
  w.add("b_f", c.b_f);
  w.add("b_o", c.b_o);
  w.write("rnn", path);
}

inline std::string checkpoint_kind(const std::string& path) {
  return detail::CheckpointReader::open(path).kind;
}

inline CnnModel load_cnn_checkpoint(const std::string& path) {
  detail::CheckpointReader r = detail::CheckpointReader::open(path);
  if (r.kind != "cnn") {
    throw CheckpointShapeError(path + ": expected a cnn checkpoint, found kind \"" + r.kind +
                               "\"");
  }
  CnnConfig cfg;
  cfg.input_size = std::stoll(r.config_at("input_size", path));
  cfg.padding = padding_from_name(r.config_at("padding", path));
  cfg.fc_activation = activation_from_name(r.config_at("fc_activation", path));
  cfg.head_activation = activation_from_name(r.config_at("head_activation", path));
  cfg.aux_landmarks = r.config_at("aux_landmarks", path) == "1";
  cfg.seed = std::stoull(r.config_at("seed", path));
  cfg.validate();

  CnnModel m;
  m.config = cfg;
  const std::int64_t flat =
      [&] {
        CnnModel probe;
        probe.config = cfg;
        return probe.shape_trace()[3][0];
      }();
  m.conv1 = r.take("conv1", {3, 3, 1, kConv1Filters}, path);
  m.bn1_gamma = r.take("bn1_gamma", {kConv1Filters}, path);
  m.bn1_beta = r.take("bn1_beta", {kConv1Filters}, path);
  m.bn1_state.running_mean = r.take("bn1_running_mean", {kConv1Filters}, path);
  m.bn1_state.running_var = r.take("bn1_running_var", {kConv1Filters}, path);
  m.conv2 = r.take("conv2", {3, 3, kConv1Filters, kConv2Filters}, path);
  m.bn2_gamma = r.take("bn2_gamma", {kConv2Filters}, path);
  m.bn2_beta = r.take("bn2_beta", {kConv2Filters}, path);
  m.bn2_state.running_mean = r.take("bn2_running_mean", {kConv2Filters}, path);
  m.bn2_state.running_var = r.take("bn2_running_var", {kConv2Filters}, path);
  m.fc_w = r.take("fc_w", {flat, kFcWidth}, path);
  m.fc_b = r.take("fc_b", {kFcWidth}, path);
  m.head_w = r.take("head_w", {kFcWidth, kNumClasses}, path);
  m.head_b = r.take("head_b", {kNumClasses}, path);
  return m;
}

inline RnnCell load_rnn_checkpoint(const std::string& path) {
  detail::CheckpointReader r = detail::CheckpointReader::open(path);
  if (r.kind != "rnn") {
    throw CheckpointShapeError(path + ": expected an rnn checkpoint, found kind \"" + r.kind +
                               "\"");
  }
  RnnCell c;
  c.hidden = std::stoll(r.config_at("hidden", path));
  c.hidden_activation = activation_from_name(r.config_at("hidden_activation", path));
  c.output_activation = activation_from_name(r.config_at("output_activation", path));
  c.u = r.take("u", {kNumClasses, c.hidden}, path);
  c.w = r.take("w", {c.hidden, c.hidden}, path);
  c.v = r.take("v", {c.hidden, kNumClasses}, path);
  c.b_f = r.take("b_f", {c.hidden}, path);
  c.b_o = r.take("b_o", {kNumClasses}, path);
  c.validate();
  return c;
}

}  // namespace fer
