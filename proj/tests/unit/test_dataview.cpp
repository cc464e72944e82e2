#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "spot/dataview.hpp"
#include "support/backends.hpp"
#include "support/random_data.hpp"

namespace spot {
namespace {

using namespace std::chrono_literals;

std::shared_ptr<const Dataset> three_rows() {
  Column x(FacetKind::continuous), y(FacetKind::continuous);
  for (double v : {1.0, 2.0, 3.0}) {
    x.push_back(Value{v});
    y.push_back(Value{v});
  }
  return Dataset::create({"three", "three", "", {{"x", FacetKind::continuous, "", ""}, {"y", FacetKind::continuous, "", ""}}, 0},
                         {std::move(x), std::move(y)});
}

Filter unit_bins(std::string id, std::string facet) {
  return Filter{std::move(id), {{std::move(facet), ContinuousBins{1.0, 4.0, 3}}}, {{AggregateOp::count, std::nullopt}}, {}, "histogram-vertical"};
}

std::vector<std::uint64_t> counts(const std::vector<GroupRow>& rows) {
  std::vector<std::uint64_t> out;
  for (const auto& r : rows) out.push_back(r.count);
  return out;
}

std::map<std::string, UpdateEvent> by_filter(std::vector<UpdateEvent> events) {
  std::map<std::string, UpdateEvent> out;
  for (auto& e : events) out[e.filter_id] = std::move(e);
  return out;
}

std::shared_ptr<Backend> memory(std::shared_ptr<const Dataset> ds) { return std::make_shared<MemoryBackend>(std::move(ds)); }

TEST(DataView, AddToEmptyView) {
  DataView view(memory(three_rows()));
  EXPECT_EQ(view.revision(), 0u);
  auto events = view.add_filter(unit_bins("A", "x")).collect();
  EXPECT_EQ(view.revision(), 1u);
  EXPECT_EQ(view.filters().size(), 1u);
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].revision, 1u);
  EXPECT_EQ(events[0].sequence, 0u);
}

TEST(DataView, RemoveOnlyFilterLeavesEmptyUpdates) {
  DataView view(memory(three_rows()));
  view.add_filter(unit_bins("A", "x")).collect();
  EXPECT_TRUE(view.remove_filter("A").collect().empty());
  EXPECT_TRUE(view.update_all().collect().empty());
  EXPECT_EQ(view.revision(), 2u);
}

TEST(DataView, SecondFilterEmitsOneEventPerFilter) {
  DataView view(memory(three_rows()));
  view.add_filter(unit_bins("A", "x")).collect();
  auto stream = view.add_filter(unit_bins("B", "y"));
  EXPECT_EQ(stream.revision(), 2u);
  auto events = stream.collect();
  ASSERT_EQ(events.size(), 2u);
  std::set<std::string> ids;
  std::set<std::size_t> seq;
  for (const auto& e : events) {
    EXPECT_EQ(e.revision, 2u);
    ids.insert(e.filter_id);
    seq.insert(e.sequence);
  }
  EXPECT_EQ(ids, (std::set<std::string>{"A", "B"}));
  EXPECT_EQ(seq, (std::set<std::size_t>{0, 1}));
}

// Brute force over the three rows: with y in [2,4) only rows 2 and 3 remain,
// which fall in x bins 1 and 2. B ignores its own selection.
TEST(DataView, ThreeRowCrossfilter) {
  DataView view(memory(three_rows()));
  view.add_filter(unit_bins("A", "x")).collect();
  view.add_filter(unit_bins("B", "y")).collect();
  auto ev = by_filter(view.set_selection("B", RangeSelection{2.0, 4.0}).collect());
  EXPECT_EQ(counts(ev["A"].rows), (std::vector<std::uint64_t>{0, 1, 1}));
  EXPECT_EQ(counts(ev["B"].rows), (std::vector<std::uint64_t>{1, 1, 1}));
  EXPECT_EQ(ev["A"].rows[0].values[0], std::optional<double>(0.0));

  ev = by_filter(view.clear_selection("B").collect());
  EXPECT_EQ(counts(ev["A"].rows), (std::vector<std::uint64_t>{1, 1, 1}));
  EXPECT_EQ(counts(ev["B"].rows), (std::vector<std::uint64_t>{1, 1, 1}));
}

TEST(DataView, IncludeSelfAppliesOwnSelection) {
  DataView view(memory(three_rows()), ViewOptions{true, nullptr, 2});
  view.add_filter(unit_bins("A", "x")).collect();
  view.add_filter(unit_bins("B", "y")).collect();
  auto ev = by_filter(view.set_selection("B", RangeSelection{2.0, 4.0}).collect());
  EXPECT_EQ(counts(ev["B"].rows), (std::vector<std::uint64_t>{0, 1, 1}));
}

TEST(DataView, EmptySelectionZeroesOtherFilters) {
  DataView view(memory(three_rows()));
  view.add_filter(unit_bins("A", "x")).collect();
  view.add_filter(unit_bins("B", "y")).collect();
  view.add_filter(Filter{"C", {{"x", ContinuousBins{0.0, 8.0, 4}}}, {{AggregateOp::sum, "y"}}, {}, "line"}).collect();
  auto ev = by_filter(view.set_selection("B", RangeSelection{1.25, 1.5}).collect());
  EXPECT_EQ(counts(ev["A"].rows), (std::vector<std::uint64_t>{0, 0, 0}));
  EXPECT_EQ(counts(ev["C"].rows), (std::vector<std::uint64_t>{0, 0, 0, 0}));
  for (const auto& r : ev["C"].rows) EXPECT_FALSE(r.values[0].has_value());
  EXPECT_EQ(counts(ev["B"].rows), (std::vector<std::uint64_t>{1, 1, 1}));
}

TEST(DataView, SetThenClearIsIdentity) {
  std::mt19937_64 rng(3);
  auto ds = testing::random_dataset(rng, {400, 0.1, false, false});
  DataView view(memory(ds));
  for (int i = 0; i < 3; ++i) view.add_filter(testing::random_filter(rng, ds->descriptor(), "f" + std::to_string(i), false)).collect();
  auto before = by_filter(view.update_all().collect());
  auto f1 = *view.find_filter("f1");
  FilterSelection sel(f1.partitions.size());
  sel[0] = testing::random_selection_for(rng, f1.partitions[0]);
  view.set_selection("f1", sel).collect();
  auto after = by_filter(view.clear_selection("f1").collect());
  for (const auto& [id, ev] : before) EXPECT_EQ(after[id].rows, ev.rows) << id;
}

TEST(DataView, UnselectedViewMatchesPlainAggregate) {
  std::mt19937_64 rng(5);
  auto ds = testing::random_dataset(rng, {300, 0.1, false, true});
  DataView view(memory(ds));
  std::vector<Filter> filters;
  for (int i = 0; i < 4; ++i) {
    filters.push_back(testing::random_filter(rng, ds->descriptor(), "f" + std::to_string(i), false));
    view.add_filter(filters.back()).collect();
  }
  auto ev = view.update_all().collect();
  ASSERT_EQ(ev.size(), 4u);
  for (const auto& e : ev) {
    auto f = *view.find_filter(e.filter_id);
    EXPECT_EQ(e.rows, aggregate(*ds, AggregateRequest{f.partitions, f.aggregates, {}}));
  }
}

TEST(DataView, PropertySelfExclusion) {
  std::mt19937_64 rng(17);
  for (int iter = 0; iter < 40; ++iter) {
    auto ds = testing::random_dataset(rng, {200, 0.15, false, false});
    DataView view(memory(ds), ViewOptions{false, nullptr, 2});
    view.add_filter(testing::random_filter(rng, ds->descriptor(), "A", false)).collect();
    view.add_filter(testing::random_filter(rng, ds->descriptor(), "B", true)).collect();
    auto before = by_filter(view.update_all().collect());
    auto a = *view.find_filter("A");
    FilterSelection sel(a.partitions.size());
    sel.back() = testing::random_selection_for(rng, a.partitions.back());
    auto after = by_filter(view.set_selection("A", sel).collect());
    EXPECT_EQ(after["A"].rows, before["A"].rows) << "iteration " << iter;
  }
}

TEST(DataView, PropertyCrossEffectEqualsBackendPredicate) {
  std::mt19937_64 rng(19);
  for (int iter = 0; iter < 40; ++iter) {
    auto ds = testing::random_dataset(rng, {250, 0.1, false, false});
    DataView view(memory(ds), ViewOptions{false, nullptr, 2});
    auto a = testing::random_filter(rng, ds->descriptor(), "A", false);
    auto b = testing::random_filter(rng, ds->descriptor(), "B", true);
    view.add_filter(a).collect();
    auto ev = by_filter(view.add_filter(b).collect());
    AggregateRequest req{a.partitions, a.aggregates, {}};
    for (std::size_t i = 0; i < b.selection.size(); ++i)
      if (b.selection[i]) req.predicate.push_back({b.partitions[i], *b.selection[i]});
    EXPECT_EQ(ev["A"].rows, aggregate(*ds, req)) << "iteration " << iter;
  }
}

TEST(DataView, RevisionsAreMonotonePerFilter) {
  std::mt19937_64 rng(23);
  auto ds = testing::random_dataset(rng, {20000, 0.05, false, false});
  DataView view(memory(ds), ViewOptions{false, nullptr, 4});
  std::mutex m;
  std::map<std::string, std::vector<std::uint64_t>> seen;
  auto sub = view.subscribe([&](const UpdateEvent& e) {
    std::lock_guard lock(m);
    seen[e.filter_id].push_back(e.revision);
  });
  for (int i = 0; i < 3; ++i) view.add_filter(testing::random_filter(rng, ds->descriptor(), "f" + std::to_string(i), false));
  std::uint64_t expected_revision = 3;
  for (int i = 0; i < 30; ++i) {
    auto f = *view.find_filter("f" + std::to_string(i % 3));
    FilterSelection sel(f.partitions.size());
    sel[0] = testing::random_selection_for(rng, f.partitions[0]);
    auto stream = view.set_selection(f.id, sel);
    EXPECT_EQ(stream.revision(), ++expected_revision);
  }
  view.wait_idle();
  auto snap = view.snapshot();
  EXPECT_TRUE(snap.settled);
  EXPECT_EQ(snap.revision, expected_revision);
  std::lock_guard lock(m);
  for (const auto& [id, revs] : seen) {
    EXPECT_TRUE(std::is_sorted(revs.begin(), revs.end())) << id;
    EXPECT_EQ(revs.back(), expected_revision) << id;
  }
}

TEST(DataView, SupersededStreamEnds) {
  auto inner = memory(three_rows());
  auto gated = std::make_shared<testing::GatedBackend>(inner, "y");
  DataView view(gated, ViewOptions{false, nullptr, 2});
  auto first = view.add_filter(unit_bins("B", "y"));
  auto second = view.add_filter(unit_bins("A", "x"));
  gated->release();
  EXPECT_TRUE(first.collect().empty());
  EXPECT_TRUE(first.superseded());
  auto events = second.collect();
  EXPECT_EQ(events.size(), 2u);
  for (const auto& e : events) EXPECT_EQ(e.revision, 2u);
}

TEST(DataView, FastFilterIsDeliveredWhileAnotherIsHeld) {
  auto gated = std::make_shared<testing::GatedBackend>(memory(three_rows()), "y");
  DataView view(gated, ViewOptions{false, nullptr, 2});
  view.add_filter(unit_bins("A", "x"));
  view.wait_idle();
  auto stream = view.add_filter(unit_bins("B", "y"));
  auto first = stream.next_for(5s);
  ASSERT_TRUE(first.has_value());
  EXPECT_EQ(first->filter_id, "A");
  for (int i = 0; i < 500 && !gated->gated_call_started(); ++i) std::this_thread::sleep_for(10ms);
  EXPECT_TRUE(gated->gated_call_started());
  EXPECT_FALSE(stream.next_for(50ms).has_value());
  gated->release();
  auto second = stream.next_for(5s);
  ASSERT_TRUE(second.has_value());
  EXPECT_EQ(second->filter_id, "B");
  EXPECT_EQ(second->sequence, 1u);
}

TEST(DataView, BackendFailureIsPerFilter) {
  auto failing = std::make_shared<testing::FailingBackend>(memory(three_rows()), std::set<std::string>{"y"});
  DataView view(failing);
  view.add_filter(unit_bins("A", "x")).collect();
  auto ev = by_filter(view.add_filter(unit_bins("B", "y")).collect());
  ASSERT_TRUE(ev["B"].error.has_value());
  EXPECT_EQ(ev["B"].error->code, ErrorCode::Backend);
  EXPECT_TRUE(ev["A"].ok());
  EXPECT_EQ(counts(ev["A"].rows), (std::vector<std::uint64_t>{1, 1, 1}));
}

TEST(DataView, MutationErrors) {
  DataView view(memory(three_rows()));
  view.add_filter(unit_bins("A", "x")).collect();
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Backend;
  };
  EXPECT_EQ(code_of([&] { view.add_filter(unit_bins("A", "y")); }), ErrorCode::Conflict);
  EXPECT_EQ(code_of([&] { view.remove_filter("nope"); }), ErrorCode::NotFound);
  EXPECT_EQ(code_of([&] { view.set_selection("nope", RangeSelection{1, 2}); }), ErrorCode::NotFound);
  EXPECT_EQ(code_of([&] { view.set_selection("A", RangeSelection{3, 2}); }), ErrorCode::InvalidSelection);
  EXPECT_EQ(code_of([&] { view.set_selection("A", RangeSelection{2, 2}); }), ErrorCode::InvalidSelection);
  EXPECT_EQ(code_of([&] { view.set_selection("A", RangeSelection{10, 20}); }), ErrorCode::InvalidSelection);
  EXPECT_EQ(code_of([&] { view.set_selection("A", CategorySelection{{"a"}}); }), ErrorCode::InvalidSelection);
  EXPECT_EQ(code_of([&] { view.set_selection("A", FilterSelection{RangeSelection{1, 2}, RangeSelection{1, 2}}); }),
            ErrorCode::InvalidSelection);
  Filter wide{"W", {{"x", ContinuousBins{}}, {"y", ContinuousBins{}}, {"x", ContinuousBins{}}, {"y", ContinuousBins{}}}, {}, {}, ""};
  EXPECT_EQ(code_of([&] { view.add_filter(wide); }), ErrorCode::LimitExceeded);
  Filter many{"M", {{"x", ContinuousBins{}}}, std::vector<AggregateSpec>(5, {AggregateOp::count, std::nullopt}), {}, ""};
  EXPECT_EQ(code_of([&] { view.add_filter(many); }), ErrorCode::LimitExceeded);
  EXPECT_EQ(code_of([&] { view.add_filter(Filter{"N", {}, {}, {}, ""}); }), ErrorCode::InvalidArgument);
  // failed mutations leave the revision alone
  EXPECT_EQ(view.revision(), 1u);
}

TEST(DataView, CategorySelectionMustUseListedCategories) {
  std::mt19937_64 rng(29);
  auto ds = testing::random_dataset(rng, {50, 0.0, false, false});
  DataView view(memory(ds));
  view.add_filter(Filter{"C", {{"c", CategoryGrouping{std::vector<std::string>{"alpha", "beta"}}}}, {}, {}, "pie"}).collect();
  EXPECT_THROW(view.set_selection("C", CategorySelection{{"gamma"}}), Error);
  EXPECT_NO_THROW(view.set_selection("C", CategorySelection{{"beta"}}).collect());
}

TEST(DataView, SnapshotTracksResults) {
  DataView view(memory(three_rows()));
  view.add_filter(unit_bins("A", "x")).collect();
  view.add_filter(unit_bins("B", "y")).collect();
  view.set_selection("B", RangeSelection{2.0, 4.0}).collect();
  auto snap = view.snapshot();
  EXPECT_TRUE(snap.settled);
  EXPECT_EQ(snap.revision, 3u);
  ASSERT_EQ(snap.results.size(), 2u);
  EXPECT_EQ(snap.results["A"].revision, 3u);
  EXPECT_EQ(counts(snap.results["A"].rows), (std::vector<std::uint64_t>{0, 1, 1}));
}

TEST(DataView, SharedPoolAcrossViews) {
  auto pool = std::make_shared<ThreadPool>(2);
  DataView v1(memory(three_rows()), ViewOptions{false, pool, 0});
  DataView v2(memory(three_rows()), ViewOptions{false, pool, 0});
  v1.add_filter(unit_bins("A", "x")).collect();
  v1.add_filter(unit_bins("B", "y")).collect();
  v2.add_filter(unit_bins("A", "x")).collect();
  v2.add_filter(unit_bins("B", "y")).collect();
  auto e1 = by_filter(v1.set_selection("B", RangeSelection{2.0, 4.0}).collect());
  auto e2 = by_filter(v2.update_all().collect());
  EXPECT_EQ(counts(e1["A"].rows), (std::vector<std::uint64_t>{0, 1, 1}));
  EXPECT_EQ(counts(e2["A"].rows), (std::vector<std::uint64_t>{1, 1, 1}));
}

}  // namespace
}  // namespace spot
