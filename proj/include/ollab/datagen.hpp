#pragma once

// Synthetic classification world: Gaussian clusters around random unit
// directions, frozen per-class descriptor vectors with a controllable
// alignment-noise knob (eta), and train/test/held-out splits. Held-out
// classes never enter a stream; they exist for zero-shot evaluation only.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ollab/errors.hpp"
#include "ollab/io.hpp"
#include "ollab/model.hpp"
#include "ollab/numerics.hpp"

namespace ollab {

// Calibrated defaults for the reference world (see tools/calibrate.cpp):
// with d_in=32, d_embed=16, 20 classes, sigma 0.10 and eta 0.85 the frozen
// model scores in the 60-75% zero-shot band.
inline constexpr double kDefaultClusterSigma = 0.10;
inline constexpr double kDefaultAlignmentEta = 0.85;

struct Sample {
  Vec x;
  int y = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct ClassSpec {
  int id = 0;
  Vec mean;
  Vec descriptor;  // frozen at creation, never trained; empty until assigned

  friend bool operator==(const ClassSpec&, const ClassSpec&) = default;
};

struct Dataset {
  std::size_t d_in = 0;
  std::size_t d_desc = 0;  // 0 until descriptors exist
  std::vector<ClassSpec> classes;              // indexed by class id
  std::vector<std::vector<Sample>> train;      // per class; empty for held-out
  std::vector<std::vector<Sample>> test;       // per class
  std::vector<int> held_out;                   // class ids, ascending
  double cluster_sigma = 0.0;
  double separation = 0.0;
  double alignment_eta = -1.0;  // <0 until descriptors exist
  std::uint64_t seed = 0;

  bool is_held_out(int id) const {
    for (int h : held_out)
      if (h == id) return true;
    return false;
  }

  std::vector<int> trainable_class_ids() const {
    std::vector<int> ids;
    for (const auto& c : classes)
      if (!is_held_out(c.id)) ids.push_back(c.id);
    return ids;
  }

  long total_train_samples() const {
    long n = 0;
    for (const auto& t : train) n += static_cast<long>(t.size());
    return n;
  }

  const Vec& descriptor_of(int id) const {
    const Vec& d = classes.at(static_cast<std::size_t>(id)).descriptor;
    if (d.empty()) throw InvalidConfigError("dataset: class has no descriptor yet");
    return d;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct DatagenConfig {
  int num_classes = 20;  // trainable classes; held-out classes come on top
  int held_out_count = 5;
  int per_class_train = 100;
  int per_class_test = 20;
  std::size_t d_in = 32;
  double cluster_sigma = kDefaultClusterSigma;
  double separation = 0.0;  // 0 = auto: 4*cluster_sigma, floored at 1

  void validate() const {
    if (num_classes < 2) throw InvalidConfigError("datagen: num_classes must be >= 2");
    if (held_out_count < 0) throw InvalidConfigError("datagen: held_out_count must be >= 0");
    if (per_class_train < 1 || per_class_test < 1)
      throw InvalidConfigError("datagen: per-class sample counts must be >= 1");
    if (d_in == 0) throw InvalidConfigError("datagen: d_in must be positive");
    if (cluster_sigma < 0.0) throw InvalidConfigError("datagen: cluster_sigma must be >= 0");
    if (separation < 0.0) throw InvalidConfigError("datagen: separation must be >= 0");
  }

  double effective_separation() const {
    if (separation > 0.0) return separation;
    return cluster_sigma > 0.0 ? 4.0 * cluster_sigma : 1.0;
  }
};

namespace detail {

inline Vec random_unit_vec(std::size_t n, Rng& rng) {
  for (;;) {
    Vec v = rng.gaussian_vec(n);
    if (norm(v) > kZeroNormEps) return l2_normalize(v);
  }
}

}  // namespace detail

// Class c gets mean mu_c = separation * (random unit direction); samples are
// mu_c plus isotropic Gaussian noise of std cluster_sigma. Held-out classes
// receive test samples only.
inline Dataset generate_dataset(const DatagenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  int total = cfg.num_classes + cfg.held_out_count;
  double sep = cfg.effective_separation();

  Dataset ds;
  ds.d_in = cfg.d_in;
  ds.cluster_sigma = cfg.cluster_sigma;
  ds.separation = sep;
  ds.seed = seed;
  ds.classes.resize(static_cast<std::size_t>(total));
  ds.train.resize(static_cast<std::size_t>(total));
  ds.test.resize(static_cast<std::size_t>(total));
  for (int c = cfg.num_classes; c < total; ++c) ds.held_out.push_back(c);

  Rng root(seed);
  Rng mean_rng = root.fork(1);
  Rng train_rng = root.fork(2);
  Rng test_rng = root.fork(3);

  for (int c = 0; c < total; ++c) {
    ClassSpec& spec = ds.classes[static_cast<std::size_t>(c)];
    spec.id = c;
    spec.mean = scale(detail::random_unit_vec(cfg.d_in, mean_rng), sep);

    auto draw = [&](Rng& rng) {
      Vec x = spec.mean;
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += rng.next_gaussian() * cfg.cluster_sigma;
      return Sample{std::move(x), c};
    };
    if (c < cfg.num_classes)
      for (int i = 0; i < cfg.per_class_train; ++i)
        ds.train[static_cast<std::size_t>(c)].push_back(draw(train_rng));
    for (int i = 0; i < cfg.per_class_test; ++i)
      ds.test[static_cast<std::size_t>(c)].push_back(draw(test_rng));
  }
  return ds;
}

// Builds the frozen class descriptors. The descriptor of class c is the
// minimum-norm preimage (under the frozen text map, whose rows are
// orthonormal) of the frozen image feature of mu_c, perturbed by eta times
// Gaussian noise and re-normalized:
//
//   e_c = l2_normalize( W_txt^T l2_normalize(W_img mu_c) + eta * g )
//
// eta = 0 makes the encoded descriptor coincide with the clean image feature
// (a perfectly aligned oracle); growing eta degrades the untuned baseline
// toward chance.
inline void make_descriptors(Dataset& ds, const ModelParams& frozen, double eta,
                             std::uint64_t seed) {
  if (eta < 0.0) throw InvalidConfigError("make_descriptors: eta must be >= 0");
  if (frozen.config.d_in != ds.d_in)
    throw InvalidConfigError("make_descriptors: model d_in does not match dataset");
  Rng rng(seed);
  for (auto& spec : ds.classes) {
    Vec image_feat = l2_normalize(matvec(frozen.w_img, spec.mean));
    Vec base = matvec_t(frozen.w_txt, image_feat);
    if (eta > 0.0) axpy(base, eta, rng.gaussian_vec(frozen.config.d_desc));
    spec.descriptor = l2_normalize(base);
  }
  ds.d_desc = frozen.config.d_desc;
  ds.alignment_eta = eta;
}

// ---------------------------------------------------------------------------
// On-disk format: <base>.csv holds one sample per row (class id, then the
// d_in coordinates). Rows are ordered: all train samples grouped by class in
// id order, then all test samples grouped by class. <base>.json holds the
// shape, splits, held-out ids, means and descriptors.
// ---------------------------------------------------------------------------

inline void export_dataset(const Dataset& ds, const std::string& base_path) {
  nlohmann::json j;
  j["format"] = "ollab-dataset-v1";
  j["d_in"] = ds.d_in;
  j["d_desc"] = ds.d_desc;
  j["num_classes"] = ds.classes.size();
  j["held_out"] = ds.held_out;
  j["cluster_sigma"] = ds.cluster_sigma;
  j["separation"] = ds.separation;
  j["alignment_eta"] = ds.alignment_eta;
  j["seed"] = ds.seed;
  nlohmann::json counts = nlohmann::json::array();
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& spec : ds.classes) {
    counts.push_back({{"train", ds.train[static_cast<std::size_t>(spec.id)].size()},
                      {"test", ds.test[static_cast<std::size_t>(spec.id)].size()}});
    nlohmann::json c = {{"id", spec.id}, {"mean", spec.mean}};
    if (spec.descriptor.empty())
      c["descriptor"] = nullptr;
    else
      c["descriptor"] = spec.descriptor;
    classes.push_back(std::move(c));
  }
  j["sample_counts"] = std::move(counts);
  j["classes"] = std::move(classes);
  write_text_file(base_path + ".json", j.dump(1) + "\n");

  std::string csv;
  csv.reserve(1 << 20);
  auto emit = [&](const Sample& s) {
    csv += std::to_string(s.y);
    for (double v : s.x) {
      csv += ',';
      csv += format_double(v);
    }
    csv += '\n';
  };
  for (const auto& per_class : ds.train)
    for (const auto& s : per_class) emit(s);
  for (const auto& per_class : ds.test)
    for (const auto& s : per_class) emit(s);
  write_text_file(base_path + ".csv", csv);
}

inline Dataset load_dataset(const std::string& base_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(base_path + ".json"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(base_path + ".json: " + e.what());
  }

  Dataset ds;
  std::vector<std::size_t> train_counts, test_counts;
  try {
    if (j.at("format").get<std::string>() != "ollab-dataset-v1")
      throw ParseError(base_path + ".json: unknown format");
    ds.d_in = j.at("d_in").get<std::size_t>();
    ds.d_desc = j.at("d_desc").get<std::size_t>();
    ds.held_out = j.at("held_out").get<std::vector<int>>();
    ds.cluster_sigma = j.at("cluster_sigma").get<double>();
    ds.separation = j.at("separation").get<double>();
    ds.alignment_eta = j.at("alignment_eta").get<double>();
    ds.seed = j.at("seed").get<std::uint64_t>();
    std::size_t n = j.at("num_classes").get<std::size_t>();
    for (const auto& c : j.at("sample_counts")) {
      train_counts.push_back(c.at("train").get<std::size_t>());
      test_counts.push_back(c.at("test").get<std::size_t>());
    }
    for (const auto& c : j.at("classes")) {
      ClassSpec spec;
      spec.id = c.at("id").get<int>();
      spec.mean = c.at("mean").get<Vec>();
      if (!c.at("descriptor").is_null()) spec.descriptor = c.at("descriptor").get<Vec>();
      ds.classes.push_back(std::move(spec));
    }
    if (ds.classes.size() != n || train_counts.size() != n)
      throw ParseError(base_path + ".json: class count mismatch");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(base_path + ".json: " + e.what());
  }

  std::vector<CsvRow> rows = read_csv(base_path + ".csv");
  if (rows.empty()) throw ParseError(base_path + ".csv: no sample rows");
  std::size_t expected = 0;
  for (std::size_t c = 0; c < ds.classes.size(); ++c) expected += train_counts[c] + test_counts[c];
  if (rows.size() != expected)
    throw ParseError(base_path + ".csv: expected " + std::to_string(expected) + " rows, found " +
                     std::to_string(rows.size()));

  ds.train.resize(ds.classes.size());
  ds.test.resize(ds.classes.size());
  std::size_t r = 0;
  auto take = [&](std::vector<Sample>& dst, int class_id, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i, ++r) {
      const CsvRow& row = rows[r];
      std::string where = base_path + ".csv line " + std::to_string(row.line);
      if (row.fields.size() != ds.d_in + 1)
        throw ParseError(where + ": expected " + std::to_string(ds.d_in + 1) + " columns, found " +
                         std::to_string(row.fields.size()));
      int y = static_cast<int>(parse_long(row.fields[0], where));
      if (y != class_id)
        throw ParseError(where + ": expected class " + std::to_string(class_id) + ", found " +
                         std::to_string(y));
      Sample s;
      s.y = y;
      s.x.reserve(ds.d_in);
      for (std::size_t k = 1; k < row.fields.size(); ++k)
        s.x.push_back(parse_double(row.fields[k], where));
      dst.push_back(std::move(s));
    }
  };
  for (std::size_t c = 0; c < ds.classes.size(); ++c)
    take(ds.train[c], ds.classes[c].id, train_counts[c]);
  for (std::size_t c = 0; c < ds.classes.size(); ++c)
    take(ds.test[c], ds.classes[c].id, test_counts[c]);
  return ds;
}

}  // namespace ollab
