#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <set>

#include "ollab/streams.hpp"
#include "schedule_checker.hpp"

using namespace ollab;
using ollab_test::check_schedule;
using ollab_test::check_cil_invariants;

namespace {

Dataset tiny_dataset(int num_classes = 7, int per_class = 10, std::uint64_t seed = 3) {
  DatagenConfig cfg;
  cfg.num_classes = num_classes;
  cfg.held_out_count = 1;
  cfg.per_class_train = per_class;
  cfg.per_class_test = 3;
  cfg.d_in = 6;
  return generate_dataset(cfg, seed);
}

std::vector<SampleRef> sorted_refs(const StreamSchedule& s) {
  std::vector<SampleRef> all;
  for (const auto& t : s.tasks) all.insert(all.end(), t.begin(), t.end());
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

TEST_CASE("cil splits classes into near-equal groups") {
  Dataset ds = tiny_dataset(7);
  StreamSchedule s = make_cil_schedule(ds, 3, 11);
  std::vector<std::size_t> group_sizes(3, 0);
  for (const auto& [c, home] : s.home_task) ++group_sizes[static_cast<std::size_t>(home)];
  CHECK(group_sizes == std::vector<std::size_t>{3, 2, 2});
  auto res = check_cil_invariants(s, ds);
  INFO(res.what);
  CHECK(res.ok);
}

TEST_CASE("cil with one task holds every class") {
  Dataset ds = tiny_dataset(5);
  StreamSchedule s = make_cil_schedule(ds, 1, 2);
  CHECK(s.tasks.size() == 1);
  CHECK(s.tasks[0].size() == static_cast<std::size_t>(ds.total_train_samples()));
  CHECK(check_cil_invariants(s, ds).ok);
}

TEST_CASE("cil rejects more tasks than classes") {
  Dataset ds = tiny_dataset(4);
  CHECK_THROWS_AS(make_cil_schedule(ds, 5, 1), InvalidConfigError);
  CHECK_THROWS_AS(make_cil_schedule(ds, 0, 1), InvalidConfigError);
}

TEST_CASE("si_blurry role counts follow the fraction") {
  Dataset ds = tiny_dataset(10);
  StreamSchedule s = make_si_blurry_schedule(ds, 3, 0.5, 20, 4);
  int disjoint = 0, blurry = 0;
  for (const auto& [c, role] : s.roles) (role == ClassRole::Disjoint ? disjoint : blurry)++;
  CHECK(disjoint == 5);
  CHECK(blurry == 5);
  auto res = check_schedule(s, ds);
  INFO(res.what);
  CHECK(res.ok);
}

TEST_CASE("si_blurry with zero blur keeps every class home") {
  Dataset ds = tiny_dataset(8);
  StreamSchedule s = make_si_blurry_schedule(ds, 3, 0.25, 0, 9);
  for (int c : ds.trainable_class_ids()) {
    int home = s.home_task.at(c);
    for (int t = 0; t < s.num_tasks; ++t) {
      if (t == home) continue;
      for (const auto& ref : s.tasks[static_cast<std::size_t>(t)]) CHECK(ref.class_id != c);
    }
  }
  CHECK(check_schedule(s, ds).ok);
}

TEST_CASE("si_blurry reference configuration passes the exhaustive checker") {
  DatagenConfig cfg;
  cfg.num_classes = 20;
  cfg.held_out_count = 5;
  cfg.per_class_train = 100;
  cfg.per_class_test = 20;
  cfg.d_in = 32;
  Dataset ds = generate_dataset(cfg, 7);
  StreamSchedule s = make_si_blurry_schedule(ds, 5, 0.5, 10, 1);
  auto res = check_schedule(s, ds);
  INFO(res.what);
  CHECK(res.ok);
  CHECK(s.tasks.size() == 5);
  CHECK(s.total_samples() == 2000);
}

TEST_CASE("si_blurry with fraction one satisfies the cil invariants") {
  Dataset ds = tiny_dataset(9);
  StreamSchedule s = make_si_blurry_schedule(ds, 3, 1.0, 30, 5);
  auto res = check_cil_invariants(s, ds);
  INFO(res.what);
  CHECK(res.ok);
}

TEST_CASE("si_blurry argument validation") {
  Dataset ds = tiny_dataset(6);
  CHECK_THROWS_AS(make_si_blurry_schedule(ds, 1, 0.5, 10, 1), InvalidConfigError);
  CHECK_THROWS_AS(make_si_blurry_schedule(ds, 3, 1.5, 10, 1), InvalidConfigError);
  CHECK_THROWS_AS(make_si_blurry_schedule(ds, 3, 0.5, 100, 1), InvalidConfigError);
  CHECK_THROWS_AS(make_si_blurry_schedule(ds, 7, 0.5, 10, 1), InvalidConfigError);
}

TEST_CASE("i_blurry deals constant home counts to every task") {
  DatagenConfig cfg;
  cfg.num_classes = 20;
  cfg.held_out_count = 0;
  cfg.per_class_train = 10;
  cfg.per_class_test = 2;
  cfg.d_in = 6;
  Dataset ds = generate_dataset(cfg, 8);
  StreamSchedule s = make_i_blurry_schedule(ds, 5, 0.5, 10, 2);
  std::vector<int> disjoint_homes(5, 0), blurry_homes(5, 0);
  for (const auto& [c, role] : s.roles) {
    auto& counts = role == ClassRole::Disjoint ? disjoint_homes : blurry_homes;
    ++counts[static_cast<std::size_t>(s.home_task.at(c))];
  }
  for (int t = 0; t < 5; ++t) {
    CHECK(disjoint_homes[static_cast<std::size_t>(t)] == 2);
    CHECK(blurry_homes[static_cast<std::size_t>(t)] == 2);
  }
  CHECK(check_schedule(s, ds).ok);
}

TEST_CASE("i_blurry home ratio property over 100 seeds") {
  DatagenConfig cfg;
  cfg.num_classes = 12;
  cfg.held_out_count = 0;
  cfg.per_class_train = 8;
  cfg.per_class_test = 2;
  cfg.d_in = 5;
  Dataset ds = generate_dataset(cfg, 14);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    StreamSchedule s = make_i_blurry_schedule(ds, 4, 0.5, 25, seed);
    std::vector<int> dh(4, 0), bh(4, 0);
    for (const auto& [c, role] : s.roles)
      ++(role == ClassRole::Disjoint ? dh : bh)[static_cast<std::size_t>(s.home_task.at(c))];
    for (int t = 0; t < 4; ++t) {
      // 6 disjoint, 6 blurry over 4 tasks: earliest tasks take the remainder
      CHECK(dh[static_cast<std::size_t>(t)] == (t < 2 ? 2 : 1));
      CHECK(bh[static_cast<std::size_t>(t)] == (t < 2 ? 2 : 1));
    }
    auto res = check_schedule(s, ds);
    INFO(res.what);
    REQUIRE(res.ok);
  }
}

TEST_CASE("i_blurry with fraction one reduces to the cil shape") {
  Dataset ds = tiny_dataset(9);
  StreamSchedule s = make_i_blurry_schedule(ds, 3, 1.0, 40, 3);
  CHECK(check_cil_invariants(s, ds).ok);
}

TEST_CASE("iter_batches counts and conservation") {
  DatagenConfig cfg;
  cfg.num_classes = 20;
  cfg.held_out_count = 0;
  cfg.per_class_train = 100;
  cfg.per_class_test = 2;
  cfg.d_in = 4;
  Dataset ds = generate_dataset(cfg, 77);
  StreamSchedule s = make_si_blurry_schedule(ds, 5, 0.5, 10, 6);
  REQUIRE(s.total_samples() == 2000);

  auto batches = iter_batches(s, 16, 123);
  CHECK(batches.size() == 125);
  long total = 0;
  std::vector<SampleRef> streamed;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const auto& b = batches[i];
    CHECK(b.step == static_cast<long>(i));
    total += static_cast<long>(b.samples.size());
    CHECK(b.samples_seen == total);
    if (i + 1 < batches.size()) CHECK(b.samples.size() == 16);
    streamed.insert(streamed.end(), b.samples.begin(), b.samples.end());
  }
  CHECK(total == 2000);

  std::sort(streamed.begin(), streamed.end());
  CHECK(streamed == sorted_refs(s));

  SECTION("batch size covering the stream yields a single batch") {
    auto one = iter_batches(s, 4000, 9);
    CHECK(one.size() == 1);
    CHECK(one[0].samples.size() == 2000);
  }

  SECTION("serving order is deterministic in the seed") {
    auto again = iter_batches(s, 16, 123);
    for (std::size_t i = 0; i < batches.size(); ++i)
      CHECK(again[i].samples == batches[i].samples);
    auto other = iter_batches(s, 16, 124);
    bool any_diff = false;
    for (std::size_t i = 0; i < batches.size(); ++i)
      any_diff = any_diff || other[i].samples != batches[i].samples;
    CHECK(any_diff);
  }

  SECTION("invalid batch size") {
    CHECK_THROWS_AS(iter_batches(s, 0, 1), InvalidConfigError);
  }
}

TEST_CASE("task end offsets are cumulative") {
  Dataset ds = tiny_dataset(6, 10);
  StreamSchedule s = make_cil_schedule(ds, 3, 2);
  auto ends = s.task_end_offsets();
  REQUIRE(ends.size() == 3);
  CHECK(ends.back() == s.total_samples());
  for (std::size_t i = 0; i + 1 < ends.size(); ++i) CHECK(ends[i] < ends[i + 1]);
}

TEST_CASE("schedule csv export") {
  Dataset ds = tiny_dataset(5, 6);
  StreamSchedule s = make_si_blurry_schedule(ds, 2, 0.4, 50, 13);
  auto path = (std::filesystem::temp_directory_path() / "ollab_sched_test.csv").string();
  export_schedule_csv(s, ds, path);
  auto rows = read_csv(path);
  REQUIRE(rows.size() == static_cast<std::size_t>(s.total_samples()) + 1);
  CHECK(rows[0].fields ==
        std::vector<std::string>{"step", "sample_id", "class_id", "role", "home_task"});
  std::set<std::string> sample_ids;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(rows[i].fields.size() == 5);
    CHECK(rows[i].fields[0] == std::to_string(i - 1));
    sample_ids.insert(rows[i].fields[1]);
    int cid = static_cast<int>(parse_long(rows[i].fields[2], "test"));
    CHECK((rows[i].fields[3] == "disjoint") ==
          (s.roles.at(cid) == ClassRole::Disjoint));
    CHECK(rows[i].fields[4] == std::to_string(s.home_task.at(cid)));
  }
  CHECK(sample_ids.size() == static_cast<std::size_t>(s.total_samples()));
  std::filesystem::remove(path);
}
