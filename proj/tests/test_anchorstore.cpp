#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "anchorworld/anchorstore.hpp"
#include "anchorworld/rng.hpp"

using namespace anchorworld;
using namespace anchorworld::store;

namespace {

percept::Percept make_percept(const std::string& category, double t,
                              const Eigen::Vector3d& pos = {0, 0, 0}) {
  percept::Percept p;
  p.category = category;
  p.confidence = 0.8;
  p.color_hist = std::vector<double>(percept::kColorHistBins, 1.0 / percept::kColorHistBins);
  p.size_box = {0.1, 0.1, 0.1};
  p.position = pos;
  p.timestamp = t;
  return p;
}

}  // namespace

TEST_CASE("acquire generates per-category counters starting at one") {
  AnchorStore store;
  CHECK(store.acquire(make_percept("cup", 0.0), 0.0) == "cup-1");
  CHECK(store.acquire(make_percept("cup", 0.1), 0.1) == "cup-2");
  CHECK(store.acquire(make_percept("cup", 0.2), 0.2) == "cup-3");
  CHECK(store.acquire(make_percept("cup", 0.3), 0.3) == "cup-4");
}

TEST_CASE("interleaved categories keep independent counters") {
  AnchorStore store;
  CHECK(store.acquire(make_percept("cup", 0.0), 0.0) == "cup-1");
  CHECK(store.acquire(make_percept("ball", 0.1), 0.1) == "ball-1");
  CHECK(store.acquire(make_percept("cup", 0.2), 0.2) == "cup-2");
}

TEST_CASE("re-acquire replaces attributes and advances the observation time") {
  AnchorStore store;
  const auto id = store.acquire(make_percept("cup", 1.0, {0, 0, 0}), 1.0);
  const auto fresh = make_percept("cup", 6.0, {0.5, 0.1, 0.0});
  store.re_acquire(id, fresh, 6.0);
  const Anchor& a = store.at(id);
  CHECK(a.last_observed == 6.0);
  CHECK(a.attributes.position == fresh.position);
  CHECK(a.attributes.timestamp == fresh.timestamp);
  CHECK(a.status == AnchorStatus::kObserved);
  CHECK(a.history_len == 2);
}

TEST_CASE("track overwrites only the position and marks the anchor tracked") {
  AnchorStore store;
  const auto percept = make_percept("cup", 1.0, {0, 0, 0});
  const auto id = store.acquire(percept, 1.0);
  const Eigen::Vector3d estimate{0.2, 0.3, 0.1};
  store.track(id, estimate, 2.0);
  const Anchor& a = store.at(id);
  CHECK(a.attributes.position == estimate);
  CHECK(a.attributes.color_hist == percept.color_hist);
  CHECK(a.attributes.size_box == percept.size_box);
  CHECK(a.attributes.category == percept.category);
  CHECK(a.status == AnchorStatus::kTracked);
  CHECK(a.last_observed == 1.0);  // no percept arrived
}

TEST_CASE("track then re-acquire restores observed status and percept truth") {
  AnchorStore store;
  const auto id = store.acquire(make_percept("cup", 1.0), 1.0);
  store.track(id, {0.5, 0.5, 0.5}, 2.0);
  CHECK(store.at(id).status == AnchorStatus::kTracked);
  const auto fresh = make_percept("cup", 3.0, {0.6, 0.5, 0.5});
  store.re_acquire(id, fresh, 3.0);
  CHECK(store.at(id).status == AnchorStatus::kObserved);
  CHECK(store.at(id).attributes.position == fresh.position);
  CHECK(store.at(id).last_observed == 3.0);
}

TEST_CASE("unknown ids and time regressions are rejected") {
  AnchorStore store;
  const auto id = store.acquire(make_percept("cup", 5.0), 5.0);
  CHECK_THROWS_AS(store.re_acquire("cup-9", make_percept("cup", 6.0), 6.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(store.track("cup-9", {0, 0, 0}, 6.0), std::invalid_argument);
  CHECK_THROWS_AS(store.re_acquire(id, make_percept("cup", 4.0), 4.0),
                  std::invalid_argument);
}

TEST_CASE("re-acquire is the only operation that advances last_observed") {
  AnchorStore store;
  const auto id = store.acquire(make_percept("cup", 1.0), 1.0);
  store.track(id, {1, 1, 1}, 2.0);
  store.track(id, {2, 2, 2}, 3.0);
  CHECK(store.at(id).last_observed == 1.0);
  store.re_acquire(id, make_percept("cup", 9.0), 9.0);
  CHECK(store.at(id).last_observed == 9.0);
}

TEST_CASE("tracked anchors without feed beyond the age limit become lost") {
  AnchorStore store;
  const auto id = store.acquire(make_percept("cup", 0.0), 0.0);
  store.track(id, {0, 0, 0}, 1.0);
  store.apply_lost_policy(31.0, 30.0);
  CHECK(store.at(id).status == AnchorStatus::kTracked);  // fed at t=1, age 30 exactly
  store.apply_lost_policy(31.5, 30.0);
  CHECK(store.at(id).status == AnchorStatus::kLost);
  // lost anchors stay in the store and can still be re-acquired
  store.re_acquire(id, make_percept("cup", 40.0), 40.0);
  CHECK(store.at(id).status == AnchorStatus::kObserved);
}

TEST_CASE("observed anchors never become lost without tracking") {
  AnchorStore store;
  const auto id = store.acquire(make_percept("cup", 0.0), 0.0);
  store.apply_lost_policy(1000.0, 30.0);
  CHECK(store.at(id).status == AnchorStatus::kObserved);
}

TEST_CASE("snapshot and restore round-trip the whole store") {
  const auto path = std::filesystem::temp_directory_path() / "anchorworld_store_test.json";

  SUBCASE("empty store") {
    AnchorStore store;
    store.save(path);
    const auto restored = AnchorStore::restore(path);
    CHECK(restored.size() == 0);
  }

  SUBCASE("random anchors round-trip field-identical") {
    Rng rng(41);
    AnchorStore store;
    const std::vector<std::string> cats{"cup", "ball", "box"};
    for (int i = 0; i < 10; ++i) {
      const auto& cat = cats[rng.next_u64() % cats.size()];
      const double t = i * 0.7;
      const auto id = store.acquire(
          make_percept(cat, t, {rng.uniform01(), rng.uniform01(), rng.uniform01()}), t);
      if (rng.uniform01() < 0.5)
        store.track(id, {rng.uniform01(), rng.uniform01(), rng.uniform01()}, t + 0.5);
    }
    store.save(path);
    const auto restored = AnchorStore::restore(path);
    REQUIRE(restored.size() == store.size());
    const auto original = store.anchors();
    const auto loaded = restored.anchors();
    for (std::size_t i = 0; i < original.size(); ++i) {
      CHECK(loaded[i]->id == original[i]->id);
      CHECK(loaded[i]->status == original[i]->status);
      CHECK(loaded[i]->last_observed == original[i]->last_observed);
      CHECK(loaded[i]->last_feed == original[i]->last_feed);
      CHECK(loaded[i]->history_len == original[i]->history_len);
      CHECK(loaded[i]->attributes.position == original[i]->attributes.position);
      CHECK(loaded[i]->attributes.color_hist == original[i]->attributes.color_hist);
    }
  }

  SUBCASE("counters survive restore") {
    AnchorStore store;
    store.acquire(make_percept("cup", 0.0), 0.0);
    store.acquire(make_percept("cup", 0.1), 0.1);
    store.acquire(make_percept("cup", 0.2), 0.2);
    store.save(path);
    auto restored = AnchorStore::restore(path);
    CHECK(restored.acquire(make_percept("cup", 1.0), 1.0) == "cup-4");
  }

  std::filesystem::remove(path);
}

TEST_CASE("version mismatches are rejected on restore") {
  const auto path = std::filesystem::temp_directory_path() / "anchorworld_store_bad.json";
  {
    std::ofstream out(path);
    out << R"({"version": 7, "counters": {}, "last_frame_time": 0, "anchors": []})";
  }
  CHECK_THROWS_AS(AnchorStore::restore(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("no id is ever emitted twice across random operation sequences") {
  const auto path = std::filesystem::temp_directory_path() / "anchorworld_store_ids.json";
  Rng rng(43);
  AnchorStore store;
  std::set<std::string> issued;
  double t = 0.0;
  const std::vector<std::string> cats{"cup", "ball"};
  for (int step = 0; step < 300; ++step) {
    t += 0.5;
    const double u = rng.uniform01();
    if (u < 0.5) {
      const auto id = store.acquire(make_percept(cats[rng.next_u64() % 2], t), t);
      CHECK_FALSE(issued.contains(id));
      issued.insert(id);
    } else if (u < 0.9 && !issued.empty()) {
      auto it = issued.begin();
      std::advance(it, rng.next_u64() % issued.size());
      const auto& anchor = store.at(*it);
      store.re_acquire(*it, make_percept(anchor.attributes.category, t), t);
    } else {
      // snapshot round-trip mid-sequence must not recycle counters
      store.save(path);
      store = AnchorStore::restore(path);
    }
  }
  std::filesystem::remove(path);
}
