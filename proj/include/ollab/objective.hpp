#pragma once

// Image-text InfoNCE, forward and analytic backward. Two denominators:
//
//   sit_loss - negatives are the classes of the current batch only,
//   ait_loss - negatives are all seen classes.
//
// Per sample i with positive class p and descriptor feature set {t_j}:
//   z_ij = (v_i . t_j) / tau,   L_i = logsumexp_j(z_ij) - z_ip
// and the batch loss is the mean of L_i. Gradients are taken at the
// normalized-feature level and then chained through the encoders into the
// PET factors of each tuned path.
//
// The ledger partitions the per-class text-feature gradient by the role the
// class played: positive (its own samples), symmetric negative (negative but
// present in the batch), asymmetric negative (negative and absent from the
// batch - nonzero only under the all-seen denominator).

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ollab/errors.hpp"
#include "ollab/io.hpp"
#include "ollab/model.hpp"
#include "ollab/numerics.hpp"

namespace ollab {

enum class GradRole { Positive, SymNegative, AsymNegative };

inline const char* to_string(GradRole r) {
  switch (r) {
    case GradRole::Positive: return "positive";
    case GradRole::SymNegative: return "sym_negative";
    case GradRole::AsymNegative: return "asym_negative";
  }
  return "?";
}

// dL/dt_c split by the role class c played, each a d_embed vector.
struct RoleGrads {
  Vec positive;
  Vec sym_negative;
  Vec asym_negative;
};

struct LossOutput {
  double loss = 0.0;
  std::vector<int> descriptor_classes;              // denominator class order
  std::vector<Vec> probs;                           // per sample, over that order
  std::vector<Vec> image_feature_grads;             // per sample, dL/dv_i
  std::vector<std::pair<int, Vec>> text_feature_grads;  // per class, dL/dt_c
  std::map<int, RoleGrads> role_grads;
  std::optional<PetGrads> image_pet_grads;          // present iff image path is tuned
  std::optional<PetGrads> text_pet_grads;           // present iff text path is tuned
};

namespace detail {

inline LossOutput image_text_loss(const ModelParams& params, const std::vector<Vec>& inputs,
                                  const std::vector<int>& labels,
                                  const std::vector<std::pair<int, Vec>>& descriptors) {
  if (inputs.empty()) throw EmptyInputError("image_text_loss: empty batch");
  if (labels.size() != inputs.size())
    throw ShapeError("image_text_loss: labels/inputs size mismatch");
  if (descriptors.empty()) throw EmptyClassSetError("image_text_loss: empty descriptor set");

  const std::size_t n = inputs.size();
  const std::size_t k = descriptors.size();
  const double tau = params.config.temperature;

  std::map<int, std::size_t> class_to_col;
  for (std::size_t j = 0; j < k; ++j) {
    if (!class_to_col.emplace(descriptors[j].first, j).second)
      throw InvalidConfigError("image_text_loss: duplicate descriptor for class " +
                               std::to_string(descriptors[j].first));
  }
  std::vector<std::size_t> positive_col(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = class_to_col.find(labels[i]);
    if (it == class_to_col.end())
      throw MissingPositiveError("image_text_loss: no descriptor for class " +
                                 std::to_string(labels[i]));
    positive_col[i] = it->second;
  }
  std::set<int> batch_classes(labels.begin(), labels.end());

  std::vector<EncodeCache> text_caches;
  text_caches.reserve(k);
  for (const auto& [cid, e] : descriptors) text_caches.push_back(encode_class_cached(params, e));
  std::vector<EncodeCache> image_caches;
  image_caches.reserve(n);
  for (const auto& x : inputs) image_caches.push_back(encode_image_cached(params, x));

  LossOutput out;
  out.descriptor_classes.resize(k);
  for (std::size_t j = 0; j < k; ++j) out.descriptor_classes[j] = descriptors[j].first;
  out.probs.resize(n);
  out.image_feature_grads.assign(n, Vec());
  std::vector<Vec> text_grads(k, Vec(params.config.d_embed, 0.0));
  for (std::size_t j = 0; j < k; ++j) {
    RoleGrads rg;
    rg.positive = Vec(params.config.d_embed, 0.0);
    rg.sym_negative = Vec(params.config.d_embed, 0.0);
    rg.asym_negative = Vec(params.config.d_embed, 0.0);
    out.role_grads.emplace(descriptors[j].first, std::move(rg));
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec& v = image_caches[i].out;
    Vec logits(k);
    for (std::size_t j = 0; j < k; ++j) logits[j] = dot(v, text_caches[j].out) / tau;
    total += log_sum_exp(logits) - logits[positive_col[i]];
    out.probs[i] = softmax(logits);

    // dL_i/dz_ij = p_ij - [j == positive]; chain rule gives the feature grads
    Vec d_v(params.config.d_embed, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      double coeff = out.probs[i][j] - (j == positive_col[i] ? 1.0 : 0.0);
      double w = coeff * inv_n / tau;
      axpy(d_v, w, text_caches[j].out);
      axpy(text_grads[j], w, v);

      RoleGrads& rg = out.role_grads.at(descriptors[j].first);
      if (j == positive_col[i])
        axpy(rg.positive, w, v);
      else if (batch_classes.count(descriptors[j].first))
        axpy(rg.sym_negative, w, v);
      else
        axpy(rg.asym_negative, w, v);
    }
    out.image_feature_grads[i] = std::move(d_v);
  }
  out.loss = total * inv_n;
  if (!std::isfinite(out.loss)) throw Error("image_text_loss: non-finite loss");

  out.text_feature_grads.reserve(k);
  for (std::size_t j = 0; j < k; ++j)
    out.text_feature_grads.emplace_back(descriptors[j].first, text_grads[j]);

  if (params.pet_img) {
    PetGrads g = zero_grads_like(*params.pet_img);
    auto path = detail::image_path(params);
    for (std::size_t i = 0; i < n; ++i)
      encode_path_backward(path, image_caches[i], out.image_feature_grads[i], g);
    out.image_pet_grads = std::move(g);
  }
  if (params.pet_txt) {
    PetGrads g = zero_grads_like(*params.pet_txt);
    auto path = detail::text_path(params);
    for (std::size_t j = 0; j < k; ++j)
      encode_path_backward(path, text_caches[j], text_grads[j], g);
    out.text_pet_grads = std::move(g);
  }
  return out;
}

}  // namespace detail

// Symmetric denominator: the descriptor set must be exactly the classes of
// the current batch.
inline LossOutput sit_loss(const ModelParams& params, const std::vector<Vec>& inputs,
                           const std::vector<int>& labels,
                           const std::vector<std::pair<int, Vec>>& batch_class_descriptors) {
  if (inputs.empty()) throw EmptyInputError("sit_loss: empty batch");
  std::set<int> batch_classes(labels.begin(), labels.end());
  for (const auto& [cid, e] : batch_class_descriptors)
    if (!batch_classes.count(cid))
      throw InvalidConfigError("sit_loss: descriptor class " + std::to_string(cid) +
                               " is not in the batch");
  return detail::image_text_loss(params, inputs, labels, batch_class_descriptors);
}

// Asymmetric denominator: descriptors of all seen classes (a superset of the
// batch classes).
inline LossOutput ait_loss(const ModelParams& params, const std::vector<Vec>& inputs,
                           const std::vector<int>& labels,
                           const std::vector<std::pair<int, Vec>>& seen_class_descriptors) {
  return detail::image_text_loss(params, inputs, labels, seen_class_descriptors);
}

// ---------------------------------------------------------------------------
// Gradient ledger: per step and per class, the norm of each role's
// contribution to dL/dt_c, plus cumulative totals per class.
// ---------------------------------------------------------------------------

struct LedgerEntry {
  long step = 0;
  int class_id = 0;
  GradRole role = GradRole::Positive;
  double norm = 0.0;
};

struct ClassGradTotals {
  double positive = 0.0;
  double sym_negative = 0.0;
  double asym_negative = 0.0;
};

struct GradientLedger {
  std::vector<LedgerEntry> timeline;
  std::map<int, ClassGradTotals> totals;
  std::map<int, int> occurrence_index;  // class -> first-seen order, for plotting
};

inline void record_ledger(const LossOutput& out, const std::set<int>& batch_classes,
                          const std::vector<int>& seen_order, long step, GradientLedger& ledger) {
  (void)batch_classes;  // the decomposition already fixed the roles
  for (std::size_t i = 0; i < seen_order.size(); ++i)
    ledger.occurrence_index.emplace(seen_order[i], static_cast<int>(i));
  for (int cid : out.descriptor_classes) {
    const RoleGrads& rg = out.role_grads.at(cid);
    double pos = norm(rg.positive);
    double sym = norm(rg.sym_negative);
    double asym = norm(rg.asym_negative);
    ledger.timeline.push_back({step, cid, GradRole::Positive, pos});
    ledger.timeline.push_back({step, cid, GradRole::SymNegative, sym});
    ledger.timeline.push_back({step, cid, GradRole::AsymNegative, asym});
    ClassGradTotals& t = ledger.totals[cid];
    t.positive += pos;
    t.sym_negative += sym;
    t.asym_negative += asym;
  }
}

inline void export_ledger_csv(const GradientLedger& ledger, const std::string& path) {
  std::string csv = "step,class_id,role,norm\n";
  for (const auto& e : ledger.timeline)
    csv += std::to_string(e.step) + ',' + std::to_string(e.class_id) + ',' + to_string(e.role) +
           ',' + format_double(e.norm) + '\n';
  write_text_file(path, csv);
}

}  // namespace ollab
