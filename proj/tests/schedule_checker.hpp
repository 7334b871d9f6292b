#pragma once

// Brute-force schedule verifier used by the stream tests and the acceptance
// suite. Checks the invariants from first principles (multiset counting over
// the raw task lists), independent of how the builders assemble a schedule.

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ollab/datagen.hpp"
#include "ollab/streams.hpp"

namespace ollab_test {

struct CheckResult {
  bool ok = true;
  std::string what;
};

inline CheckResult fail(const std::string& msg) { return {false, msg}; }

// ceil((100 - M) * n / 100), recomputed here on purpose.
inline long expected_home_count(long n, int m) {
  long keep = ((100L - m) * n + 99L) / 100L;
  return keep;
}

inline CheckResult check_schedule(const ollab::StreamSchedule& s, const ollab::Dataset& ds) {
  using ollab::ClassRole;
  std::vector<int> trainable = ds.trainable_class_ids();
  std::set<int> trainable_set(trainable.begin(), trainable.end());

  // role/home maps cover exactly the trainable classes
  if (s.roles.size() != trainable.size() || s.home_task.size() != trainable.size())
    return fail("role/home maps do not cover the trainable classes");
  for (int c : trainable)
    if (!s.roles.count(c) || !s.home_task.count(c)) return fail("class missing from maps");

  // sample conservation: every trainable train sample exactly once
  std::map<std::pair<int, int>, int> multiplicity;
  for (const auto& task : s.tasks)
    for (const auto& ref : task) ++multiplicity[{ref.class_id, ref.index}];
  long expected_total = 0;
  for (int c : trainable) {
    long n = static_cast<long>(ds.train[static_cast<std::size_t>(c)].size());
    expected_total += n;
    for (int i = 0; i < n; ++i) {
      auto it = multiplicity.find({c, i});
      if (it == multiplicity.end()) return fail("missing sample");
      if (it->second != 1) return fail("sample served more than once");
    }
  }
  if (static_cast<long>(multiplicity.size()) != expected_total)
    return fail("stream contains unexpected samples");

  // per-class placement
  for (int c : trainable) {
    int home = s.home_task.at(c);
    if (home < 0 || home >= s.num_tasks) return fail("home task out of range");
    long n = static_cast<long>(ds.train[static_cast<std::size_t>(c)].size());
    long at_home = 0, away = 0;
    std::set<int> tasks_with_class;
    for (int t = 0; t < s.num_tasks; ++t) {
      for (const auto& ref : s.tasks[static_cast<std::size_t>(t)]) {
        if (ref.class_id != c) continue;
        tasks_with_class.insert(t);
        (t == home ? at_home : away) += 1;
      }
    }
    if (s.roles.at(c) == ClassRole::Disjoint) {
      if (away != 0) return fail("disjoint class leaked out of its home task");
      if (tasks_with_class.size() > 1) return fail("disjoint class appears in two tasks");
    } else {
      long keep = expected_home_count(n, s.blurry_level);
      if (at_home != keep) return fail("blurry home count mismatch");
      if (away != n - keep) return fail("blurry leakage count mismatch");
    }
  }

  // every task serves data
  for (const auto& task : s.tasks)
    if (task.empty()) return fail("empty task");
  return {};
}

// The classical-regime invariants: everything disjoint, nothing leaked.
inline CheckResult check_cil_invariants(const ollab::StreamSchedule& s, const ollab::Dataset& ds) {
  CheckResult base = check_schedule(s, ds);
  if (!base.ok) return base;
  for (const auto& [c, role] : s.roles)
    if (role != ollab::ClassRole::Disjoint) return fail("non-disjoint class in CIL-shaped schedule");
  return {};
}

}  // namespace ollab_test
