#pragma once

// Stream schedules over a Dataset. A schedule assigns every trainable train
// sample to exactly one task; the batch iterator then serves the
// task-concatenated stream in fixed-size batches with no boundary signal.
//
// Regimes:
//   cil       - classes split into disjoint task groups, all samples home.
//   si_blurry - a seeded fraction of classes is disjoint, the rest leak M%
//               of their samples uniformly over the other tasks; home tasks
//               are a non-degenerate uniform draw.
//   i_blurry  - as si_blurry but every task is home to the same number of
//               disjoint and of blurry classes (remainders to the earliest
//               tasks).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ollab/datagen.hpp"
#include "ollab/errors.hpp"
#include "ollab/io.hpp"
#include "ollab/numerics.hpp"

namespace ollab {

enum class Regime { CIL, IBlurry, SiBlurry };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::CIL: return "cil";
    case Regime::IBlurry: return "i_blurry";
    case Regime::SiBlurry: return "si_blurry";
  }
  return "?";
}

inline Regime regime_from_string(const std::string& s) {
  if (s == "cil") return Regime::CIL;
  if (s == "i_blurry") return Regime::IBlurry;
  if (s == "si_blurry") return Regime::SiBlurry;
  throw InvalidConfigError("unknown regime: " + s);
}

enum class ClassRole { Disjoint, Blurry };

struct SampleRef {
  int class_id = 0;
  int index = 0;  // position in dataset.train[class_id]

  friend auto operator<=>(const SampleRef&, const SampleRef&) = default;
};

struct StreamSchedule {
  Regime regime = Regime::CIL;
  int num_tasks = 0;
  double disjoint_fraction = 1.0;
  int blurry_level = 0;  // M, percent of a blurry class served out of home
  std::uint64_t seed = 0;
  std::vector<std::vector<SampleRef>> tasks;
  std::map<int, ClassRole> roles;
  std::map<int, int> home_task;

  long total_samples() const {
    long n = 0;
    for (const auto& t : tasks) n += static_cast<long>(t.size());
    return n;
  }

  // Cumulative sample count at the end of each task; harness-side only,
  // the learner never sees boundaries.
  std::vector<long> task_end_offsets() const {
    std::vector<long> ends;
    long n = 0;
    for (const auto& t : tasks) {
      n += static_cast<long>(t.size());
      ends.push_back(n);
    }
    return ends;
  }
};

namespace detail {

// ceil((100 - M) * n / 100) without going through floating point.
inline int home_keep_count(int n_samples, int blurry_level) {
  return static_cast<int>(
      (static_cast<long>(100 - blurry_level) * n_samples + 99) / 100);
}

inline void shuffle_tasks_in_place(StreamSchedule& s, Rng& rng) {
  for (auto& task : s.tasks) shuffle(task, rng);
}

// Distributes a blurry class: keep the ceil((1-M/100)*n) head at home, leak
// the tail uniformly over the other tasks. Which samples leak is a seeded
// shuffle of the class's sample indices.
inline void place_blurry_class(StreamSchedule& s, const Dataset& ds, int class_id, int home,
                               Rng& rng) {
  int n = static_cast<int>(ds.train[static_cast<std::size_t>(class_id)].size());
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  shuffle(order, rng);
  int keep = home_keep_count(n, s.blurry_level);
  for (int i = 0; i < n; ++i) {
    int task = home;
    if (i >= keep) {
      std::uint64_t pick = rng.next_below(static_cast<std::uint64_t>(s.num_tasks - 1));
      task = static_cast<int>(pick) + (static_cast<int>(pick) >= home ? 1 : 0);
    }
    s.tasks[static_cast<std::size_t>(task)].push_back({class_id, order[static_cast<std::size_t>(i)]});
  }
}

inline void place_disjoint_class(StreamSchedule& s, const Dataset& ds, int class_id, int home) {
  int n = static_cast<int>(ds.train[static_cast<std::size_t>(class_id)].size());
  for (int i = 0; i < n; ++i) s.tasks[static_cast<std::size_t>(home)].push_back({class_id, i});
}

inline std::vector<int> shuffled_trainable_ids(const Dataset& ds, Rng& rng) {
  std::vector<int> ids = ds.trainable_class_ids();
  shuffle(ids, rng);
  return ids;
}

}  // namespace detail

// Classes partitioned into T near-equal groups (remainder spread to the
// earliest tasks); every sample of a class lives in its task.
inline StreamSchedule make_cil_schedule(const Dataset& ds, int num_tasks, std::uint64_t seed) {
  std::vector<int> ids = ds.trainable_class_ids();
  if (num_tasks < 1) throw InvalidConfigError("cil: num_tasks must be >= 1");
  if (static_cast<std::size_t>(num_tasks) > ids.size())
    throw InvalidConfigError("cil: num_tasks exceeds trainable class count");

  StreamSchedule s;
  s.regime = Regime::CIL;
  s.num_tasks = num_tasks;
  s.disjoint_fraction = 1.0;
  s.blurry_level = 0;
  s.seed = seed;
  s.tasks.resize(static_cast<std::size_t>(num_tasks));

  Rng root(seed);
  Rng assign_rng = root.fork(1);
  Rng order_rng = root.fork(2);

  std::vector<int> shuffled = ids;
  shuffle(shuffled, assign_rng);
  std::size_t base = shuffled.size() / static_cast<std::size_t>(num_tasks);
  std::size_t rem = shuffled.size() % static_cast<std::size_t>(num_tasks);
  std::size_t pos = 0;
  for (int t = 0; t < num_tasks; ++t) {
    std::size_t count = base + (static_cast<std::size_t>(t) < rem ? 1 : 0);
    for (std::size_t k = 0; k < count; ++k, ++pos) {
      int c = shuffled[pos];
      s.roles[c] = ClassRole::Disjoint;
      s.home_task[c] = t;
      detail::place_disjoint_class(s, ds, c, t);
    }
  }
  detail::shuffle_tasks_in_place(s, order_rng);
  return s;
}

namespace detail {

// Shared tail of the two blurry builders once roles and homes are fixed.
inline StreamSchedule build_blurry(const Dataset& ds, Regime regime, int num_tasks,
                                   double disjoint_fraction, int blurry_level, std::uint64_t seed,
                                   const std::map<int, ClassRole>& roles,
                                   const std::map<int, int>& homes, Rng& leak_rng,
                                   Rng& order_rng) {
  StreamSchedule s;
  s.regime = regime;
  s.num_tasks = num_tasks;
  s.disjoint_fraction = disjoint_fraction;
  s.blurry_level = blurry_level;
  s.seed = seed;
  s.tasks.resize(static_cast<std::size_t>(num_tasks));
  s.roles = roles;
  s.home_task = homes;
  for (const auto& [c, role] : roles) {
    if (role == ClassRole::Disjoint)
      detail::place_disjoint_class(s, ds, c, homes.at(c));
    else
      detail::place_blurry_class(s, ds, c, homes.at(c), leak_rng);
  }
  detail::shuffle_tasks_in_place(s, order_rng);
  return s;
}

inline void check_blurry_args(const Dataset& ds, int num_tasks, double disjoint_fraction,
                              int blurry_level) {
  if (num_tasks < 2) throw InvalidConfigError("blurry schedule: num_tasks must be >= 2");
  if (!(disjoint_fraction >= 0.0 && disjoint_fraction <= 1.0))
    throw InvalidConfigError("blurry schedule: disjoint_fraction must be in [0, 1]");
  if (blurry_level < 0 || blurry_level >= 100)
    throw InvalidConfigError("blurry schedule: blurry level must be in [0, 100)");
  if (ds.trainable_class_ids().size() < static_cast<std::size_t>(num_tasks))
    throw InvalidConfigError("blurry schedule: num_tasks exceeds trainable class count");
}

}  // namespace detail

// A seeded disjoint_fraction of classes is tagged Disjoint, the rest Blurry;
// home tasks are a uniform draw, redrawn until every task is home to at
// least one class.
inline StreamSchedule make_si_blurry_schedule(const Dataset& ds, int num_tasks,
                                              double disjoint_fraction, int blurry_level,
                                              std::uint64_t seed) {
  detail::check_blurry_args(ds, num_tasks, disjoint_fraction, blurry_level);
  Rng root(seed);
  Rng role_rng = root.fork(1);
  Rng home_rng = root.fork(2);
  Rng leak_rng = root.fork(3);
  Rng order_rng = root.fork(4);

  std::vector<int> ids = detail::shuffled_trainable_ids(ds, role_rng);
  std::size_t n_disjoint = static_cast<std::size_t>(
      std::llround(disjoint_fraction * static_cast<double>(ids.size())));
  std::map<int, ClassRole> roles;
  for (std::size_t i = 0; i < ids.size(); ++i)
    roles[ids[i]] = i < n_disjoint ? ClassRole::Disjoint : ClassRole::Blurry;

  std::map<int, int> homes;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    homes.clear();
    std::vector<int> count(static_cast<std::size_t>(num_tasks), 0);
    for (int c : ids) {
      int t = static_cast<int>(home_rng.next_below(static_cast<std::uint64_t>(num_tasks)));
      homes[c] = t;
      ++count[static_cast<std::size_t>(t)];
    }
    bool ok = true;
    for (int k : count) ok = ok && k > 0;
    if (ok)
      return detail::build_blurry(ds, Regime::SiBlurry, num_tasks, disjoint_fraction,
                                  blurry_level, seed, roles, homes, leak_rng, order_rng);
  }
  throw InvalidConfigError("si_blurry: could not draw a non-degenerate home assignment");
}

// As Si-Blurry, but each task is home to floor(n_disjoint/T) disjoint and
// floor(n_blurry/T) blurry classes, remainders to the earliest tasks.
inline StreamSchedule make_i_blurry_schedule(const Dataset& ds, int num_tasks,
                                             double disjoint_fraction, int blurry_level,
                                             std::uint64_t seed) {
  detail::check_blurry_args(ds, num_tasks, disjoint_fraction, blurry_level);
  Rng root(seed);
  Rng role_rng = root.fork(1);
  Rng leak_rng = root.fork(3);
  Rng order_rng = root.fork(4);

  std::vector<int> ids = detail::shuffled_trainable_ids(ds, role_rng);
  std::size_t n_disjoint = static_cast<std::size_t>(
      std::llround(disjoint_fraction * static_cast<double>(ids.size())));

  std::map<int, ClassRole> roles;
  std::map<int, int> homes;
  auto deal = [&](std::size_t begin, std::size_t end, ClassRole role) {
    std::size_t n = end - begin;
    std::size_t base = n / static_cast<std::size_t>(num_tasks);
    std::size_t rem = n % static_cast<std::size_t>(num_tasks);
    std::size_t pos = begin;
    for (int t = 0; t < num_tasks; ++t) {
      std::size_t count = base + (static_cast<std::size_t>(t) < rem ? 1 : 0);
      for (std::size_t k = 0; k < count; ++k, ++pos) {
        roles[ids[pos]] = role;
        homes[ids[pos]] = t;
      }
    }
  };
  deal(0, n_disjoint, ClassRole::Disjoint);
  deal(n_disjoint, ids.size(), ClassRole::Blurry);
  return detail::build_blurry(ds, Regime::IBlurry, num_tasks, disjoint_fraction, blurry_level,
                              seed, roles, homes, leak_rng, order_rng);
}

// ---------------------------------------------------------------------------
// Batch iteration. Tasks are concatenated (each re-shuffled task-locally from
// the serving seed) and chopped into fixed-size batches; per-task tails carry
// over into the next task so only the final batch of the stream may be short.
// ---------------------------------------------------------------------------

struct StreamBatch {
  std::vector<SampleRef> samples;
  long step = 0;          // batch index
  long samples_seen = 0;  // cumulative, including this batch
};

inline std::vector<StreamBatch> iter_batches(const StreamSchedule& schedule, int batch_size,
                                             std::uint64_t seed) {
  if (batch_size < 1) throw InvalidConfigError("iter_batches: batch_size must be >= 1");
  Rng rng(seed);
  std::vector<SampleRef> stream;
  stream.reserve(static_cast<std::size_t>(schedule.total_samples()));
  for (const auto& task : schedule.tasks) {
    std::vector<SampleRef> order = task;
    shuffle(order, rng);
    stream.insert(stream.end(), order.begin(), order.end());
  }

  std::vector<StreamBatch> batches;
  long step = 0;
  long seen = 0;
  for (std::size_t i = 0; i < stream.size(); i += static_cast<std::size_t>(batch_size)) {
    StreamBatch b;
    std::size_t end = std::min(stream.size(), i + static_cast<std::size_t>(batch_size));
    b.samples.assign(stream.begin() + static_cast<std::ptrdiff_t>(i),
                     stream.begin() + static_cast<std::ptrdiff_t>(end));
    seen += static_cast<long>(b.samples.size());
    b.step = step++;
    b.samples_seen = seen;
    batches.push_back(std::move(b));
  }
  return batches;
}

// Schedule dump for stream visualizations: one row per scheduled sample in
// task-concatenated order.
inline void export_schedule_csv(const StreamSchedule& schedule, const Dataset& ds,
                                const std::string& path) {
  std::vector<long> offsets(ds.classes.size() + 1, 0);
  for (std::size_t c = 0; c < ds.classes.size(); ++c)
    offsets[c + 1] = offsets[c] + static_cast<long>(ds.train[c].size());

  std::string csv = "step,sample_id,class_id,role,home_task\n";
  long step = 0;
  for (const auto& task : schedule.tasks) {
    for (const auto& ref : task) {
      long sid = offsets[static_cast<std::size_t>(ref.class_id)] + ref.index;
      csv += std::to_string(step++) + ',' + std::to_string(sid) + ',' +
             std::to_string(ref.class_id) + ',' +
             (schedule.roles.at(ref.class_id) == ClassRole::Disjoint ? "disjoint" : "blurry") +
             ',' + std::to_string(schedule.home_task.at(ref.class_id)) + '\n';
    }
  }
  write_text_file(path, csv);
}

}  // namespace ollab
