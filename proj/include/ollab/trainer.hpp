#pragma once

// Online training loop and metrics. Single pass over the stream: each batch
// is trained on for a fixed number of iterations and never revisited. The
// learner sees no task boundary; the harness keeps boundary offsets to
// record per-task accuracy, and samples an anytime-accuracy curve every
// eval_period seen samples.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ollab/datagen.hpp"
#include "ollab/errors.hpp"
#include "ollab/model.hpp"
#include "ollab/numerics.hpp"
#include "ollab/objective.hpp"
#include "ollab/streams.hpp"

namespace ollab {

enum class Strategy { SIT, AIT };  // symmetric / asymmetric image-text tuning

inline const char* to_string(Strategy s) { return s == Strategy::SIT ? "sit" : "ait"; }

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "sit") return Strategy::SIT;
  if (s == "ait") return Strategy::AIT;
  throw InvalidConfigError("unknown strategy: " + s);
}

enum class OptimizerKind { Adam, SGD };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::SGD;
  throw InvalidConfigError("unknown optimizer: " + s);
}

struct TrainConfig {
  Strategy strategy = Strategy::SIT;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int iterations_per_batch = 3;
  int batch_size = 16;
  long eval_period = 100;  // samples between anytime-accuracy checks
  std::uint64_t seed = 1;

  void validate() const {
    if (!(lr >= 0.0)) throw InvalidConfigError("train: lr must be >= 0");
    if (iterations_per_batch < 1)
      throw InvalidConfigError("train: iterations_per_batch must be >= 1");
    if (batch_size < 1) throw InvalidConfigError("train: batch_size must be >= 1");
    if (eval_period < 1) throw InvalidConfigError("train: eval_period must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Optimizers. Adam keeps first/second moment estimates per parameter tensor
// and applies bias correction; state is created lazily at the first step.
// ---------------------------------------------------------------------------

struct AdamState {
  Mat m;
  Mat v;
  long t = 0;
};

inline void adam_step(Mat& param, const Mat& grad, AdamState& state, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
  ensure_same_shape(param, grad, "adam_step");
  if (state.t == 0) {
    state.m = Mat(param.rows, param.cols);
    state.v = Mat(param.rows, param.cols);
  }
  ensure_same_shape(param, state.m, "adam_step state");
  ++state.t;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < param.data.size(); ++i) {
    double g = grad.data[i];
    state.m.data[i] = beta1 * state.m.data[i] + (1.0 - beta1) * g;
    state.v.data[i] = beta2 * state.v.data[i] + (1.0 - beta2) * g * g;
    double m_hat = state.m.data[i] / bc1;
    double v_hat = state.v.data[i] / bc2;
    param.data[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

inline void sgd_step(Mat& param, const Mat& grad, double lr) {
  ensure_same_shape(param, grad, "sgd_step");
  for (std::size_t i = 0; i < param.data.size(); ++i) param.data[i] -= lr * grad.data[i];
}

// ---------------------------------------------------------------------------
// Seen-class registry: append-only, ordered by first occurrence.
// ---------------------------------------------------------------------------

struct SeenClassRegistry {
  std::vector<int> order;
  std::map<int, long> first_step;

  bool contains(int id) const { return first_step.count(id) != 0; }

  void observe(int id, long step) {
    if (first_step.emplace(id, step).second) order.push_back(id);
  }
};

// ---------------------------------------------------------------------------
// Evaluation.
// ---------------------------------------------------------------------------

struct EvalResult {
  double accuracy = 0.0;
  Mat confusion;                 // rows: true class in given order; cols: predicted
  std::vector<int> class_order;  // echo of class_ids
};

// Top-1 accuracy over the given class set. Ties in the probability vector
// break toward the lowest class id.
inline EvalResult evaluate(const ModelParams& params, const std::vector<int>& class_ids,
                           const std::vector<Vec>& descriptors,
                           const std::vector<Sample>& test_samples) {
  if (class_ids.empty()) throw EmptyClassSetError("evaluate: no classes");
  if (class_ids.size() != descriptors.size())
    throw ShapeError("evaluate: class_ids/descriptors size mismatch");
  std::map<int, std::size_t> row_of;
  for (std::size_t i = 0; i < class_ids.size(); ++i) row_of[class_ids[i]] = i;

  EvalResult res;
  res.class_order = class_ids;
  res.confusion = Mat(class_ids.size(), class_ids.size());
  long correct = 0;
  for (const auto& s : test_samples) {
    auto it = row_of.find(s.y);
    if (it == row_of.end())
      throw InvalidConfigError("evaluate: test sample class " + std::to_string(s.y) +
                               " not in class set");
    Vec probs = predict(params, s.x, descriptors);
    std::size_t best = 0;
    for (std::size_t j = 1; j < probs.size(); ++j) {
      if (probs[j] > probs[best] ||
          (probs[j] == probs[best] && class_ids[j] < class_ids[best]))
        best = j;
    }
    if (class_ids[best] == s.y) ++correct;
    res.confusion(it->second, best) += 1.0;
  }
  res.accuracy =
      test_samples.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test_samples.size());
  return res;
}

// Accuracy on the held-out classes only, via their frozen descriptors.
inline double zero_shot_eval(const ModelParams& params, const Dataset& ds) {
  if (ds.held_out.empty()) throw EmptyClassSetError("zero_shot_eval: no held-out classes");
  std::vector<int> ids = ds.held_out;
  std::vector<Vec> descriptors;
  std::vector<Sample> samples;
  for (int c : ids) {
    descriptors.push_back(ds.descriptor_of(c));
    const auto& t = ds.test[static_cast<std::size_t>(c)];
    samples.insert(samples.end(), t.begin(), t.end());
  }
  return evaluate(params, ids, descriptors, samples).accuracy;
}

// ---------------------------------------------------------------------------
// Metrics.
// ---------------------------------------------------------------------------

struct CurvePoint {
  long samples_seen = 0;
  double accuracy = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

// Normalized area under the anytime-accuracy curve. Points must sit at
// uniform spacing (i * dn for i = 1..k); the Riemann sum divided by the
// evaluated span reduces to the mean, so a constant curve c scores exactly c.
inline double a_auc(const std::vector<CurvePoint>& curve, long total_samples) {
  if (curve.empty()) throw EmptyCurveError("a_auc: empty curve");
  long dn = curve.front().samples_seen;
  if (dn < 1) throw InvalidCurveError("a_auc: first point must sit at samples_seen >= 1");
  for (std::size_t i = 0; i + 1 < curve.size(); ++i)
    if (curve[i + 1].samples_seen - curve[i].samples_seen != dn)
      throw InvalidCurveError("a_auc: curve points not uniformly spaced");
  if (curve.back().samples_seen > total_samples)
    throw InvalidCurveError("a_auc: curve extends past total_samples");
  // mean via deviations from the first point, so a constant curve c returns
  // exactly c
  double base = curve.front().accuracy;
  double dev = 0.0;
  for (const auto& p : curve) dev += p.accuracy - base;
  return base + dev / static_cast<double>(curve.size());
}

inline double a_avg(const std::vector<double>& task_accuracies) {
  if (task_accuracies.empty()) throw EmptyInputError("a_avg: no task accuracies");
  double s = 0.0;
  for (double a : task_accuracies) s += a;
  return s / static_cast<double>(task_accuracies.size());
}

inline double a_last(const std::vector<double>& task_accuracies) {
  if (task_accuracies.empty()) throw EmptyInputError("a_last: no task accuracies");
  return task_accuracies.back();
}

// ---------------------------------------------------------------------------
// Online training.
// ---------------------------------------------------------------------------

struct RunArtifacts {
  std::vector<CurvePoint> curve;
  std::vector<double> task_accuracies;
  double a_last_value = 0.0;
  double a_avg_value = 0.0;
  double a_auc_value = 0.0;
  Mat confusion;                       // final, classes in occurrence order
  std::vector<int> confusion_classes;
  std::optional<double> zero_shot_before;
  std::optional<double> zero_shot_after;
  GradientLedger ledger;
  SeenClassRegistry registry;
  ModelParams params;  // final parameters
  long total_samples = 0;
  long eval_period = 0;
};

namespace detail {

struct EvalSet {
  std::vector<int> class_ids;
  std::vector<Vec> descriptors;
  std::vector<Sample> samples;
};

inline EvalSet build_eval_set(const Dataset& ds, const std::vector<int>& seen_order) {
  EvalSet e;
  e.class_ids = seen_order;
  for (int c : seen_order) {
    e.descriptors.push_back(ds.descriptor_of(c));
    const auto& t = ds.test[static_cast<std::size_t>(c)];
    e.samples.insert(e.samples.end(), t.begin(), t.end());
  }
  return e;
}

struct PetOptimizer {
  OptimizerKind kind;
  double lr, beta1, beta2, eps;
  AdamState up_state, down_state;

  void apply(PetFactors& f, const PetGrads& g) {
    if (kind == OptimizerKind::Adam) {
      adam_step(f.up, g.up, up_state, lr, beta1, beta2, eps);
      adam_step(f.down, g.down, down_state, lr, beta1, beta2, eps);
    } else {
      sgd_step(f.up, g.up, lr);
      sgd_step(f.down, g.down, lr);
    }
  }
};

}  // namespace detail

inline RunArtifacts train_online(const Dataset& ds, const StreamSchedule& schedule,
                                 ModelParams model, const TrainConfig& cfg) {
  cfg.validate();
  if (model.config.d_in != ds.d_in)
    throw InvalidConfigError("train_online: model d_in does not match dataset");
  if (ds.d_desc == 0)
    throw InvalidConfigError("train_online: dataset has no descriptors");
  long total = schedule.total_samples();
  if (cfg.eval_period > total)
    throw InvalidConfigError("train_online: eval_period exceeds the stream length");

  RunArtifacts art;
  art.total_samples = total;
  art.eval_period = cfg.eval_period;
  if (!ds.held_out.empty()) art.zero_shot_before = zero_shot_eval(model, ds);

  detail::PetOptimizer opt_img{cfg.optimizer, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, {}, {}};
  detail::PetOptimizer opt_txt = opt_img;

  std::vector<StreamBatch> batches =
      iter_batches(schedule, cfg.batch_size, derive_seed(cfg.seed, 0x5e5));
  std::vector<long> task_ends = schedule.task_end_offsets();

  SeenClassRegistry& registry = art.registry;
  detail::EvalSet eval_set;
  bool eval_dirty = true;
  long step = 0;
  long next_eval = cfg.eval_period;
  std::size_t next_task = 0;

  for (const auto& batch : batches) {
    std::set<int> batch_classes;
    for (const auto& ref : batch.samples) {
      if (!registry.contains(ref.class_id)) eval_dirty = true;
      registry.observe(ref.class_id, step);
      batch_classes.insert(ref.class_id);
    }

    std::vector<Vec> xs;
    std::vector<int> ys;
    xs.reserve(batch.samples.size());
    for (const auto& ref : batch.samples) {
      const Sample& s = ds.train[static_cast<std::size_t>(ref.class_id)][static_cast<std::size_t>(ref.index)];
      xs.push_back(s.x);
      ys.push_back(s.y);
    }

    // descriptor set per strategy: batch classes (first occurrence order
    // within the batch) or every seen class (registry order)
    std::vector<std::pair<int, Vec>> descriptors;
    if (cfg.strategy == Strategy::SIT) {
      std::set<int> added;
      for (int y : ys)
        if (added.insert(y).second) descriptors.emplace_back(y, ds.descriptor_of(y));
    } else {
      for (int c : registry.order) descriptors.emplace_back(c, ds.descriptor_of(c));
    }

    for (int it = 0; it < cfg.iterations_per_batch; ++it) {
      LossOutput out = cfg.strategy == Strategy::SIT
                           ? sit_loss(model, xs, ys, descriptors)
                           : ait_loss(model, xs, ys, descriptors);
      record_ledger(out, batch_classes, registry.order, step, art.ledger);
      if (model.pet_img) opt_img.apply(*model.pet_img, *out.image_pet_grads);
      if (model.pet_txt) opt_txt.apply(*model.pet_txt, *out.text_pet_grads);
      ++step;
    }

    bool need_curve = next_eval <= batch.samples_seen;
    bool need_task = next_task < task_ends.size() && task_ends[next_task] <= batch.samples_seen;
    if ((need_curve || need_task) && eval_dirty) {
      eval_set = detail::build_eval_set(ds, registry.order);
      eval_dirty = false;
    }
    if (need_curve || need_task) {
      EvalResult er = evaluate(model, eval_set.class_ids, eval_set.descriptors, eval_set.samples);
      while (next_eval <= batch.samples_seen) {
        art.curve.push_back({next_eval, er.accuracy});
        next_eval += cfg.eval_period;
      }
      while (next_task < task_ends.size() && task_ends[next_task] <= batch.samples_seen) {
        art.task_accuracies.push_back(er.accuracy);
        if (next_task + 1 == task_ends.size()) {
          art.confusion = er.confusion;
          art.confusion_classes = er.class_order;
        }
        ++next_task;
      }
    }
  }

  art.a_last_value = a_last(art.task_accuracies);
  art.a_avg_value = a_avg(art.task_accuracies);
  art.a_auc_value = a_auc(art.curve, total);
  if (!ds.held_out.empty()) art.zero_shot_after = zero_shot_eval(model, ds);
  art.params = std::move(model);
  return art;
}

}  // namespace ollab
