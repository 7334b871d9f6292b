#pragma once

// Frozen dual encoder with parameter-efficient tuning. Both paths are linear
// maps with orthonormalized rows; the trainable part is either a low-rank
// delta (B A x added to W x) or a bottleneck adapter applied residually after
// the frozen map (h -> h + U tanh(D h)). Deltas are zero-effective at init,
// so an untrained model predicts exactly like the frozen one.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ollab/errors.hpp"
#include "ollab/numerics.hpp"

namespace ollab {

enum class PetKind { None, LowRank, Adapter };

inline const char* to_string(PetKind k) {
  switch (k) {
    case PetKind::None: return "none";
    case PetKind::LowRank: return "lowrank";
    case PetKind::Adapter: return "adapter";
  }
  return "?";
}

inline PetKind pet_kind_from_string(const std::string& s) {
  if (s == "none") return PetKind::None;
  if (s == "lowrank") return PetKind::LowRank;
  if (s == "adapter") return PetKind::Adapter;
  throw InvalidConfigError("unknown pet kind: " + s);
}

struct ModelConfig {
  std::size_t d_in = 32;
  std::size_t d_desc = 32;
  std::size_t d_embed = 16;
  PetKind pet_kind = PetKind::LowRank;
  int pet_rank = 4;
  int adapter_down_dim = 64;
  bool tune_image = true;
  bool tune_text = true;
  double temperature = 0.07;

  void validate() const {
    if (d_in == 0 || d_desc == 0 || d_embed == 0)
      throw InvalidConfigError("model: dimensions must be positive");
    if (d_embed > d_in || d_embed > d_desc)
      throw InvalidConfigError("model: d_embed must not exceed d_in or d_desc (orthonormal rows)");
    if (!(temperature > 0.0)) throw InvalidConfigError("model: temperature must be > 0");
    if (pet_kind == PetKind::LowRank) {
      std::size_t r = static_cast<std::size_t>(pet_rank);
      if (pet_rank < 1 || r > d_embed || r > d_in || r > d_desc)
        throw InvalidConfigError("model: pet_rank must be in [1, min(d_embed, d_in, d_desc)]");
    }
    if (pet_kind == PetKind::Adapter && adapter_down_dim < 1)
      throw InvalidConfigError("model: adapter_down_dim must be >= 1");
  }
};

// Trainable factors for one encoder path.
//   LowRank: up = B (d_embed x r, zero at init), down = A (r x d_path, small gaussian)
//   Adapter: up = U (d_embed x a, zero at init), down = D (a x d_embed, small gaussian)
struct PetFactors {
  Mat up;
  Mat down;
};

struct PetGrads {
  Mat up;
  Mat down;
};

struct ModelParams {
  ModelConfig config;
  Mat w_img;  // d_embed x d_in, frozen
  Mat w_txt;  // d_embed x d_desc, frozen
  std::optional<PetFactors> pet_img;  // present iff pet_kind != None and tune_image
  std::optional<PetFactors> pet_txt;  // present iff pet_kind != None and tune_text

  std::size_t trainable_parameter_count() const {
    std::size_t n = 0;
    if (pet_img) n += pet_img->up.size() + pet_img->down.size();
    if (pet_txt) n += pet_txt->up.size() + pet_txt->down.size();
    return n;
  }
};

namespace detail {

// Gaussian rows made orthonormal with modified Gram-Schmidt.
inline Mat random_orthonormal_rows(std::size_t rows, std::size_t cols, Rng rng) {
  Mat m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (;;) {
      Vec row = rng.gaussian_vec(cols);
      for (std::size_t p = 0; p < r; ++p) {
        double proj = 0.0;
        for (std::size_t c = 0; c < cols; ++c) proj += m(p, c) * row[c];
        for (std::size_t c = 0; c < cols; ++c) row[c] -= proj * m(p, c);
      }
      double n = norm(row);
      if (n > 1e-8) {
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = row[c] / n;
        break;
      }
    }
  }
  return m;
}

inline PetFactors init_pet(const ModelConfig& cfg, std::size_t d_path_in, Rng rng) {
  PetFactors f;
  if (cfg.pet_kind == PetKind::LowRank) {
    std::size_t r = static_cast<std::size_t>(cfg.pet_rank);
    f.up = Mat(cfg.d_embed, r);  // zero: delta is exactly zero at init
    f.down = Mat(r, d_path_in);
    double std_dev = 1.0 / std::sqrt(static_cast<double>(d_path_in));
    for (double& x : f.down.data) x = rng.next_gaussian() * std_dev;
  } else {
    std::size_t a = static_cast<std::size_t>(cfg.adapter_down_dim);
    f.up = Mat(cfg.d_embed, a);  // zero up-projection, same consequence
    f.down = Mat(a, cfg.d_embed);
    double std_dev = 1.0 / std::sqrt(static_cast<double>(cfg.d_embed));
    for (double& x : f.down.data) x = rng.next_gaussian() * std_dev;
  }
  return f;
}

// One encoder path viewed uniformly by forward/backward.
struct PathRef {
  const Mat* frozen;
  const PetFactors* pet;  // may be null
  PetKind kind;
};

}  // namespace detail

inline ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ModelParams p;
  p.config = config;
  p.w_img = detail::random_orthonormal_rows(config.d_embed, config.d_in, rng.fork(1));
  p.w_txt = detail::random_orthonormal_rows(config.d_embed, config.d_desc, rng.fork(2));
  if (config.pet_kind != PetKind::None) {
    if (config.tune_image) p.pet_img = detail::init_pet(config, config.d_in, rng.fork(3));
    if (config.tune_text) p.pet_txt = detail::init_pet(config, config.d_desc, rng.fork(4));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward passes. The cache keeps every intermediate needed by the manual
// backward pass.
// ---------------------------------------------------------------------------

struct EncodeCache {
  Vec input;
  Vec frozen_out;  // h = W x
  Vec pet_mid;     // A x (low-rank) or tanh(D h) (adapter); empty without PET
  Vec raw;         // pre-normalization feature
  double raw_norm = 0.0;
  Vec out;         // unit-norm feature
};

namespace detail {

inline EncodeCache encode_path(const PathRef& path, const Vec& x) {
  EncodeCache c;
  c.input = x;
  c.frozen_out = matvec(*path.frozen, x);
  c.raw = c.frozen_out;
  if (path.pet) {
    if (path.kind == PetKind::LowRank) {
      c.pet_mid = matvec(path.pet->down, x);
      axpy(c.raw, 1.0, matvec(path.pet->up, c.pet_mid));
    } else {
      c.pet_mid = matvec(path.pet->down, c.frozen_out);
      for (double& v : c.pet_mid) v = std::tanh(v);
      axpy(c.raw, 1.0, matvec(path.pet->up, c.pet_mid));
    }
  }
  c.raw_norm = norm(c.raw);
  c.out = l2_normalize(c.raw);
  return c;
}

// Chains dL/d(out) through the normalization and into the PET factors.
// Frozen weights never receive gradient.
inline void encode_path_backward(const detail::PathRef& path, const EncodeCache& c,
                                 const Vec& d_out, PetGrads& acc) {
  if (!path.pet) return;
  // y = raw/|raw|  =>  dL/draw = (dL/dy - (y . dL/dy) y) / |raw|
  double along = dot(c.out, d_out);
  Vec d_raw(c.raw.size());
  for (std::size_t i = 0; i < d_raw.size(); ++i)
    d_raw[i] = (d_out[i] - along * c.out[i]) / c.raw_norm;

  add_outer(acc.up, d_raw, c.pet_mid);
  Vec back = matvec_t(path.pet->up, d_raw);
  if (path.kind == PetKind::LowRank) {
    add_outer(acc.down, back, c.input);
  } else {
    for (std::size_t i = 0; i < back.size(); ++i) back[i] *= 1.0 - c.pet_mid[i] * c.pet_mid[i];
    add_outer(acc.down, back, c.frozen_out);
  }
}

inline PathRef image_path(const ModelParams& p) {
  return {&p.w_img, p.pet_img ? &*p.pet_img : nullptr, p.config.pet_kind};
}

inline PathRef text_path(const ModelParams& p) {
  return {&p.w_txt, p.pet_txt ? &*p.pet_txt : nullptr, p.config.pet_kind};
}

}  // namespace detail

inline EncodeCache encode_image_cached(const ModelParams& p, const Vec& x) {
  if (x.size() != p.config.d_in) throw ShapeError("encode_image: input dim mismatch");
  return detail::encode_path(detail::image_path(p), x);
}

inline EncodeCache encode_class_cached(const ModelParams& p, const Vec& descriptor) {
  if (descriptor.size() != p.config.d_desc) throw ShapeError("encode_class: descriptor dim mismatch");
  return detail::encode_path(detail::text_path(p), descriptor);
}

inline Vec encode_image(const ModelParams& p, const Vec& x) { return encode_image_cached(p, x).out; }

inline Vec encode_class(const ModelParams& p, const Vec& descriptor) {
  return encode_class_cached(p, descriptor).out;
}

inline PetGrads zero_grads_like(const PetFactors& f) {
  return {Mat(f.up.rows, f.up.cols), Mat(f.down.rows, f.down.cols)};
}

// Probability over the given classes: softmax of cosine similarities / tau.
// Both feature vectors are unit-norm so the dot product is the cosine.
inline Vec predict(const ModelParams& p, const Vec& x, const std::vector<Vec>& class_descriptors) {
  if (class_descriptors.empty()) throw EmptyClassSetError("predict: no class descriptors");
  Vec v = encode_image(p, x);
  Vec logits(class_descriptors.size());
  for (std::size_t i = 0; i < class_descriptors.size(); ++i)
    logits[i] = dot(encode_class(p, class_descriptors[i]), v) / p.config.temperature;
  return softmax(logits);
}

// ---------------------------------------------------------------------------
// Checkpoint: JSON layout, doubles round-trip exactly.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json mat_to_json(const Mat& m) {
  return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

inline Mat mat_from_json(const nlohmann::json& j) {
  Mat m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  m.data = j.at("data").get<std::vector<double>>();
  if (m.data.size() != m.rows * m.cols) throw ParseError("checkpoint: matrix size mismatch");
  return m;
}

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"d_in", c.d_in},           {"d_desc", c.d_desc},
          {"d_embed", c.d_embed},     {"pet_kind", to_string(c.pet_kind)},
          {"pet_rank", c.pet_rank},   {"adapter_down_dim", c.adapter_down_dim},
          {"tune_image", c.tune_image}, {"tune_text", c.tune_text},
          {"temperature", c.temperature}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_in = j.at("d_in").get<std::size_t>();
  c.d_desc = j.at("d_desc").get<std::size_t>();
  c.d_embed = j.at("d_embed").get<std::size_t>();
  c.pet_kind = pet_kind_from_string(j.at("pet_kind").get<std::string>());
  c.pet_rank = j.at("pet_rank").get<int>();
  c.adapter_down_dim = j.at("adapter_down_dim").get<int>();
  c.tune_image = j.at("tune_image").get<bool>();
  c.tune_text = j.at("tune_text").get<bool>();
  c.temperature = j.at("temperature").get<double>();
  return c;
}

}  // namespace detail

inline void save_checkpoint(const ModelParams& p, const std::string& path) {
  nlohmann::json j;
  j["format"] = "ollab-checkpoint-v1";
  j["config"] = detail::model_config_to_json(p.config);
  j["w_img"] = detail::mat_to_json(p.w_img);
  j["w_txt"] = detail::mat_to_json(p.w_txt);
  j["pet_img"] = p.pet_img ? nlohmann::json{{"up", detail::mat_to_json(p.pet_img->up)},
                                            {"down", detail::mat_to_json(p.pet_img->down)}}
                           : nlohmann::json(nullptr);
  j["pet_txt"] = p.pet_txt ? nlohmann::json{{"up", detail::mat_to_json(p.pet_txt->up)},
                                            {"down", detail::mat_to_json(p.pet_txt->down)}}
                           : nlohmann::json(nullptr);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << j.dump(1) << "\n";
  if (!out.good()) throw IoError("failed writing checkpoint: " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "ollab-checkpoint-v1")
      throw ParseError("checkpoint " + path + ": unknown format");
    ModelParams p;
    p.config = detail::model_config_from_json(j.at("config"));
    p.w_img = detail::mat_from_json(j.at("w_img"));
    p.w_txt = detail::mat_from_json(j.at("w_txt"));
    if (!j.at("pet_img").is_null())
      p.pet_img = PetFactors{detail::mat_from_json(j.at("pet_img").at("up")),
                             detail::mat_from_json(j.at("pet_img").at("down"))};
    if (!j.at("pet_txt").is_null())
      p.pet_txt = PetFactors{detail::mat_from_json(j.at("pet_txt").at("up")),
                             detail::mat_from_json(j.at("pet_txt").at("down"))};
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
}

}  // namespace ollab
