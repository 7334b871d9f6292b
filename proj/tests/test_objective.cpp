#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "ollab/objective.hpp"

using namespace ollab;

namespace {

ModelParams random_model(Rng& rng, PetKind kind = PetKind::LowRank, bool tune_image = true,
                         bool tune_text = true) {
  ModelConfig cfg;
  cfg.d_in = 6 + static_cast<std::size_t>(rng.next_below(8));
  cfg.d_desc = 6 + static_cast<std::size_t>(rng.next_below(8));
  cfg.d_embed = 4 + static_cast<std::size_t>(rng.next_below(3));
  cfg.pet_kind = kind;
  cfg.pet_rank = 1 + static_cast<int>(rng.next_below(3));
  cfg.adapter_down_dim = 3 + static_cast<int>(rng.next_below(4));
  cfg.tune_image = tune_image;
  cfg.tune_text = tune_text;
  ModelParams p = init_model(cfg, rng.next_u64());
  // move off the zero init so gradients flow everywhere
  auto jiggle = [&](std::optional<PetFactors>& f) {
    if (!f) return;
    for (double& x : f->up.data) x = rng.next_gaussian() * 0.3;
    for (double& x : f->down.data) x = rng.next_gaussian() * 0.3;
  };
  jiggle(p.pet_img);
  jiggle(p.pet_txt);
  return p;
}

struct Instance {
  std::vector<Vec> xs;
  std::vector<int> labels;
  std::vector<std::pair<int, Vec>> batch_descriptors;  // exactly the batch classes
  std::vector<std::pair<int, Vec>> seen_descriptors;   // superset
};

Instance random_instance(const ModelParams& p, Rng& rng, int batch_size, int batch_classes,
                         int extra_seen) {
  Instance inst;
  std::vector<Vec> class_desc;
  for (int c = 0; c < batch_classes + extra_seen; ++c)
    class_desc.push_back(rng.gaussian_vec(p.config.d_desc));
  std::set<int> used;
  for (int i = 0; i < batch_size; ++i) {
    int y = i < batch_classes ? i : static_cast<int>(rng.next_below(
                                        static_cast<std::uint64_t>(batch_classes)));
    inst.xs.push_back(rng.gaussian_vec(p.config.d_in));
    inst.labels.push_back(y);
    used.insert(y);
  }
  for (int c : used) inst.batch_descriptors.emplace_back(c, class_desc[static_cast<std::size_t>(c)]);
  inst.seen_descriptors = inst.batch_descriptors;
  for (int c = batch_classes; c < batch_classes + extra_seen; ++c)
    inst.seen_descriptors.emplace_back(c, class_desc[static_cast<std::size_t>(c)]);
  return inst;
}

double rel_error(const Vec& a, const Vec& b) {
  return norm(sub(a, b)) / std::max({norm(a), norm(b), 1e-12});
}

Vec flatten_grads(const LossOutput& out) {
  Vec v;
  auto push = [&](const std::optional<PetGrads>& g) {
    if (!g) return;
    v.insert(v.end(), g->up.data.begin(), g->up.data.end());
    v.insert(v.end(), g->down.data.begin(), g->down.data.end());
  };
  push(out.image_pet_grads);
  push(out.text_pet_grads);
  return v;
}

std::vector<Mat*> trainable_tensors(ModelParams& p) {
  std::vector<Mat*> t;
  if (p.pet_img) {
    t.push_back(&p.pet_img->up);
    t.push_back(&p.pet_img->down);
  }
  if (p.pet_txt) {
    t.push_back(&p.pet_txt->up);
    t.push_back(&p.pet_txt->down);
  }
  return t;
}

Vec flatten_params(const std::vector<Mat*>& tensors) {
  Vec out;
  for (const Mat* m : tensors) out.insert(out.end(), m->data.begin(), m->data.end());
  return out;
}

void unflatten_params(const Vec& theta, std::vector<Mat*>& tensors) {
  std::size_t k = 0;
  for (Mat* m : tensors)
    for (double& x : m->data) x = theta[k++];
}

// Independent evaluation: encode through the public API, per-sample softmax
// cross-entropy with plain exp/sum.
double direct_loss(const ModelParams& p, const Instance& inst,
                   const std::vector<std::pair<int, Vec>>& descriptors) {
  double total = 0.0;
  for (std::size_t i = 0; i < inst.xs.size(); ++i) {
    Vec v = encode_image(p, inst.xs[i]);
    double denom = 0.0;
    double numer = 0.0;
    for (const auto& [cid, e] : descriptors) {
      double z = std::exp(dot(v, encode_class(p, e)) / p.config.temperature);
      denom += z;
      if (cid == inst.labels[i]) numer = z;
    }
    total += -std::log(numer / denom);
  }
  return total / static_cast<double>(inst.xs.size());
}

}  // namespace

TEST_CASE("single-class batch gives exactly zero loss") {
  Rng rng(2);
  ModelParams p = random_model(rng);
  std::vector<Vec> xs = {rng.gaussian_vec(p.config.d_in), rng.gaussian_vec(p.config.d_in)};
  std::vector<int> labels = {4, 4};
  std::vector<std::pair<int, Vec>> desc = {{4, rng.gaussian_vec(p.config.d_desc)}};
  LossOutput out = sit_loss(p, xs, labels, desc);
  CHECK(out.loss == 0.0);
  CHECK(norm(out.image_feature_grads[0]) == 0.0);
  CHECK(norm(out.text_feature_grads[0].second) == 0.0);
}

TEST_CASE("two classes with equal similarities cost ln 2 per sample") {
  Rng rng(3);
  ModelParams p = random_model(rng);
  Vec shared = rng.gaussian_vec(p.config.d_desc);
  std::vector<Vec> xs = {rng.gaussian_vec(p.config.d_in), rng.gaussian_vec(p.config.d_in)};
  std::vector<int> labels = {0, 1};
  std::vector<std::pair<int, Vec>> desc = {{0, shared}, {1, shared}};
  LossOutput out = sit_loss(p, xs, labels, desc);
  CHECK(out.loss == Catch::Approx(0.6931471805599453).margin(1e-15));
}

TEST_CASE("loss matches the direct per-sample evaluation") {
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    ModelParams p = random_model(rng, trial % 2 ? PetKind::Adapter : PetKind::LowRank);
    Instance inst = random_instance(p, rng, 4, 3, 4);
    LossOutput s = sit_loss(p, inst.xs, inst.labels, inst.batch_descriptors);
    LossOutput a = ait_loss(p, inst.xs, inst.labels, inst.seen_descriptors);
    CHECK(std::abs(s.loss - direct_loss(p, inst, inst.batch_descriptors)) <= 1e-12);
    CHECK(std::abs(a.loss - direct_loss(p, inst, inst.seen_descriptors)) <= 1e-12);
  }
}

TEST_CASE("ait equals sit when the seen set is the batch set") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    ModelParams p = random_model(rng);
    Instance inst = random_instance(p, rng, 5, 3, 0);
    LossOutput s = sit_loss(p, inst.xs, inst.labels, inst.batch_descriptors);
    LossOutput a = ait_loss(p, inst.xs, inst.labels, inst.seen_descriptors);
    CHECK(std::abs(s.loss - a.loss) <= 1e-15);
  }
}

TEST_CASE("adding a seen class strictly increases the loss") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    ModelParams p = random_model(rng);
    Instance inst = random_instance(p, rng, 4, 2, 1);
    LossOutput s = sit_loss(p, inst.xs, inst.labels, inst.batch_descriptors);
    LossOutput a = ait_loss(p, inst.xs, inst.labels, inst.seen_descriptors);
    CHECK(a.loss > s.loss);
  }
}

TEST_CASE("per-sample logit gradients sum to zero") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    ModelParams p = random_model(rng);
    Instance inst = random_instance(p, rng, 1 + static_cast<int>(rng.next_below(6)), 2,
                                    static_cast<int>(rng.next_below(5)));
    LossOutput out = ait_loss(p, inst.xs, inst.labels, inst.seen_descriptors);
    for (std::size_t i = 0; i < inst.xs.size(); ++i) {
      // dL_i/dz_j = p_j - [j == positive]; the sum telescopes to 0
      double sum = 0.0;
      for (std::size_t j = 0; j < out.descriptor_classes.size(); ++j) {
        double coeff = out.probs[i][j] -
                       (out.descriptor_classes[j] == inst.labels[i] ? 1.0 : 0.0);
        sum += coeff;
      }
      CHECK(std::abs(sum) <= 1e-12);
    }
  }
}

TEST_CASE("loss gradients match finite differences through the PET factors") {
  Rng rng(13);
  for (int trial = 0; trial < 12; ++trial) {
    PetKind kind = trial % 2 ? PetKind::Adapter : PetKind::LowRank;
    ModelParams p = random_model(rng, kind);
    Instance inst = random_instance(p, rng, 3, 2, trial % 3);
    bool asym = trial % 3 != 0;
    const auto& descriptors = asym ? inst.seen_descriptors : inst.batch_descriptors;

    LossOutput out = asym ? ait_loss(p, inst.xs, inst.labels, descriptors)
                          : sit_loss(p, inst.xs, inst.labels, descriptors);
    Vec analytic = flatten_grads(out);

    std::vector<Mat*> tensors = trainable_tensors(p);
    Vec theta0 = flatten_params(tensors);
    auto f = [&](const Vec& theta) {
      unflatten_params(theta, tensors);
      double loss = detail::image_text_loss(p, inst.xs, inst.labels, descriptors).loss;
      unflatten_params(theta0, tensors);
      return loss;
    };
    Vec numeric = finite_diff_grad(f, theta0);
    CHECK(rel_error(analytic, numeric) <= 1e-5);
  }
}

TEST_CASE("text feature gradient equals the sum of its role parts") {
  Rng rng(15);
  ModelParams p = random_model(rng);
  Instance inst = random_instance(p, rng, 6, 3, 3);
  LossOutput out = ait_loss(p, inst.xs, inst.labels, inst.seen_descriptors);
  for (const auto& [cid, total] : out.text_feature_grads) {
    const RoleGrads& rg = out.role_grads.at(cid);
    Vec sum = add(add(rg.positive, rg.sym_negative), rg.asym_negative);
    CHECK(rel_error(sum, total) <= 1e-12);
  }
}

TEST_CASE("error cases") {
  Rng rng(17);
  ModelParams p = random_model(rng);
  Vec x = rng.gaussian_vec(p.config.d_in);
  Vec e = rng.gaussian_vec(p.config.d_desc);

  CHECK_THROWS_AS(sit_loss(p, {}, {}, {{0, e}}), EmptyInputError);
  // label without a descriptor
  CHECK_THROWS_AS(sit_loss(p, {x}, {1}, {{0, e}}), InvalidConfigError);  // 0 not in batch
  CHECK_THROWS_AS(ait_loss(p, {x}, {1}, {{0, e}}), MissingPositiveError);
  // duplicate descriptor
  CHECK_THROWS_AS(ait_loss(p, {x}, {0}, {{0, e}, {0, e}}), InvalidConfigError);
}

TEST_CASE("ledger buckets and totals") {
  Rng rng(19);
  ModelParams p = random_model(rng);

  SECTION("symmetric runs have an identically zero asymmetric bucket") {
    GradientLedger ledger;
    for (long step = 0; step < 5; ++step) {
      Instance inst = random_instance(p, rng, 4, 2, 0);
      LossOutput out = sit_loss(p, inst.xs, inst.labels, inst.batch_descriptors);
      std::set<int> batch(inst.labels.begin(), inst.labels.end());
      record_ledger(out, batch, {0, 1}, step, ledger);
    }
    for (const auto& [c, totals] : ledger.totals) CHECK(totals.asym_negative == 0.0);
    for (const auto& e : ledger.timeline)
      if (e.role == GradRole::AsymNegative) CHECK(e.norm == 0.0);
  }

  SECTION("single-class batch records zero in every bucket") {
    GradientLedger ledger;
    std::vector<Vec> xs = {rng.gaussian_vec(p.config.d_in)};
    std::vector<int> labels = {0};
    std::vector<std::pair<int, Vec>> desc = {{0, rng.gaussian_vec(p.config.d_desc)}};
    LossOutput out = sit_loss(p, xs, labels, desc);
    record_ledger(out, {0}, {0}, 0, ledger);
    const auto& t = ledger.totals.at(0);
    CHECK(t.positive == 0.0);
    CHECK(t.sym_negative == 0.0);
    CHECK(t.asym_negative == 0.0);
  }

  SECTION("asymmetric step totals match a hand recomputation") {
    Instance inst = random_instance(p, rng, 5, 2, 3);
    LossOutput out = ait_loss(p, inst.xs, inst.labels, inst.seen_descriptors);
    GradientLedger ledger;
    std::set<int> batch(inst.labels.begin(), inst.labels.end());
    std::vector<int> seen;
    for (const auto& [c, e] : inst.seen_descriptors) seen.push_back(c);
    record_ledger(out, batch, seen, 7, ledger);

    // recompute the per-role contributions from probs and encoded features
    const double tau = p.config.temperature;
    const double inv_n = 1.0 / static_cast<double>(inst.xs.size());
    for (std::size_t j = 0; j < out.descriptor_classes.size(); ++j) {
      int cid = out.descriptor_classes[j];
      Vec pos(p.config.d_embed, 0.0), symn(p.config.d_embed, 0.0), asymn(p.config.d_embed, 0.0);
      for (std::size_t i = 0; i < inst.xs.size(); ++i) {
        Vec v = encode_image(p, inst.xs[i]);
        double coeff = out.probs[i][j] - (cid == inst.labels[i] ? 1.0 : 0.0);
        Vec contrib = scale(v, coeff * inv_n / tau);
        if (cid == inst.labels[i])
          pos = add(pos, contrib);
        else if (batch.count(cid))
          symn = add(symn, contrib);
        else
          asymn = add(asymn, contrib);
      }
      const auto& totals = ledger.totals.at(cid);
      CHECK(std::abs(totals.positive - norm(pos)) <= 1e-10);
      CHECK(std::abs(totals.sym_negative - norm(symn)) <= 1e-10);
      CHECK(std::abs(totals.asym_negative - norm(asymn)) <= 1e-10);
    }

    // occurrence order follows the seen list
    for (std::size_t i = 0; i < seen.size(); ++i)
      CHECK(ledger.occurrence_index.at(seen[i]) == static_cast<int>(i));
  }

  SECTION("cumulative totals are non-decreasing over steps") {
    GradientLedger ledger;
    std::map<int, ClassGradTotals> prev;
    for (long step = 0; step < 8; ++step) {
      Instance inst = random_instance(p, rng, 4, 2, 2);
      LossOutput out = ait_loss(p, inst.xs, inst.labels, inst.seen_descriptors);
      std::set<int> batch(inst.labels.begin(), inst.labels.end());
      record_ledger(out, batch, {0, 1, 2, 3}, step, ledger);
      for (const auto& [c, t] : ledger.totals) {
        if (prev.count(c)) {
          CHECK(t.positive >= prev[c].positive);
          CHECK(t.sym_negative >= prev[c].sym_negative);
          CHECK(t.asym_negative >= prev[c].asym_negative);
        }
        prev[c] = t;
      }
    }
  }
}

TEST_CASE("ledger csv export shape") {
  Rng rng(23);
  ModelParams p = random_model(rng);
  Instance inst = random_instance(p, rng, 3, 2, 1);
  LossOutput out = ait_loss(p, inst.xs, inst.labels, inst.seen_descriptors);
  GradientLedger ledger;
  record_ledger(out, {0, 1}, {0, 1, 2}, 0, ledger);
  auto path = (std::filesystem::temp_directory_path() / "ollab_ledger_test.csv").string();
  export_ledger_csv(ledger, path);
  auto rows = read_csv(path);
  CHECK(rows[0].fields == std::vector<std::string>{"step", "class_id", "role", "norm"});
  CHECK(rows.size() == 1 + 3 * 3);  // header + 3 roles x 3 classes
  std::filesystem::remove(path);
}
