#include <gtest/gtest.h>

#include <random>

#include "spot/session.hpp"
#include "support/backends.hpp"
#include "support/random_data.hpp"

namespace spot {
namespace {

std::shared_ptr<const Dataset> three_rows(std::string id = "three") {
  Column x(FacetKind::continuous), y(FacetKind::continuous);
  for (double v : {1.0, 2.0, 3.0}) {
    x.push_back(Value{v});
    y.push_back(Value{v});
  }
  return Dataset::create({id, "Three rows", "two facets", {{"x", FacetKind::continuous, "", "m"}, {"y", FacetKind::continuous, "", ""}}, 0},
                         {std::move(x), std::move(y)});
}

Filter unit_bins(std::string id, std::string facet) {
  return Filter{std::move(id), {{std::move(facet), ContinuousBins{1.0, 4.0, 3}}}, {{AggregateOp::count, std::nullopt}}, {}, "histogram-vertical"};
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Backend;
}

std::string path_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const DocumentError& e) {
    return e.path();
  }
  return "";
}

std::unique_ptr<DataView> linked_view(std::shared_ptr<Backend> backend) {
  auto view = std::make_unique<DataView>(std::move(backend), ViewOptions{false, nullptr, 2});
  view->add_filter(unit_bins("A", "x")).collect();
  view->add_filter(unit_bins("B", "y")).collect();
  view->set_selection("B", RangeSelection{2.0, 4.0}).collect();
  return view;
}

TEST(JsonIo, FilterRoundTrip) {
  std::mt19937_64 rng(41);
  auto ds = testing::random_dataset(rng, {10, 0.0, false, true});
  for (int i = 0; i < 200; ++i) {
    auto f = testing::random_filter(rng, ds->descriptor(), "f" + std::to_string(i), i % 2 == 0);
    auto back = filter_from_json(Json::parse(to_json(f).dump()), "");
    EXPECT_EQ(back, f);
  }
}

TEST(JsonIo, GroupRowsRoundTripExactly) {
  std::mt19937_64 rng(43);
  for (int i = 0; i < 60; ++i) {
    auto ds = testing::random_dataset(rng, {150, 0.1, false, true});
    auto rows = aggregate(*ds, testing::random_request(rng, ds->descriptor()));
    auto back = group_rows_from_json(Json::parse(to_json(rows).dump()), "");
    ASSERT_EQ(back.size(), rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      EXPECT_EQ(back[r], rows[r]);
      for (std::size_t k = 0; k < rows[r].keys.size(); ++k)
        if (const auto* b = std::get_if<BinKey>(&rows[r].keys[k])) EXPECT_EQ(std::get<BinKey>(back[r].keys[k]).label, b->label);
    }
  }
}

TEST(JsonIo, EventAndDeltaRoundTrip) {
  UpdateEvent ok{7, "A", {GroupRow{{BinKey{0, "[0,1)"}}, 2, {1.5, std::nullopt}}}, std::nullopt, 1};
  EXPECT_EQ(update_event_from_json(to_json(ok)), ok);
  UpdateEvent bad{8, "B", {}, EventError{ErrorCode::Backend, "down"}, 0};
  EXPECT_EQ(update_event_from_json(to_json(bad)), bad);

  ViewDelta add{ViewDelta::Op::add, unit_bins("A", "x"), "", {}};
  auto add2 = view_delta_from_json(to_json(add));
  EXPECT_EQ(add2.filter, add.filter);
  ViewDelta sel{ViewDelta::Op::select, std::nullopt, "A", {RangeSelection{1, 2}}};
  auto sel2 = view_delta_from_json(to_json(sel));
  EXPECT_EQ(sel2.filter_id, "A");
  EXPECT_EQ(sel2.selection, sel.selection);
}

TEST(JsonIo, ErrorsCarryPointers) {
  EXPECT_EQ(path_of([] { view_delta_from_json(Json::parse(R"({"op":"add"})")); }), "/filter");
  EXPECT_EQ(path_of([] { view_delta_from_json(Json::parse(R"({"op":"jump"})")); }), "/op");
  EXPECT_EQ(path_of([] {
              filter_from_json(Json::parse(R"({"id":"a","partitions":[{"facet":"x","grouping":"bins","lo":0,"hi":"1","binCount":2}]})"), "");
            }),
            "/partitions/0/hi");
  EXPECT_EQ(path_of([] { selection_from_json(Json::parse(R"({"range":[1]})"), "/s"); }), "/s/range");
}

TEST(Session, SaveIsByteDeterministic) {
  auto view = linked_view(std::make_shared<MemoryBackend>(three_rows()));
  std::map<std::string, Json> layout{{"A", Json{{"x", 0}, {"y", 0}, {"w", 6}, {"h", 4}}}};
  auto first = save_session(*view, layout);
  auto second = save_session(*view, layout);
  EXPECT_EQ(first, second);
  EXPECT_EQ(first.back(), '\n');
  EXPECT_EQ(first.rfind("{\"cachedResults\":", 0), 0u);
  EXPECT_EQ(first.find("\n"), first.size() - 1);
}

TEST(Session, EmptyDashboardIsValid) {
  DataView view(std::make_shared<MemoryBackend>(three_rows()));
  auto doc = save_session(view);
  auto s = load_session(doc);
  EXPECT_TRUE(s.charts.empty());
  EXPECT_EQ(s.datasets.size(), 1u);
  EXPECT_FALSE(s.saved_stale);
}

TEST(Session, DescriptorHasNoRows) {
  auto view = linked_view(std::make_shared<MemoryBackend>(three_rows()));
  auto j = Json::parse(save_session(*view));
  const auto& d = j["datasets"][0];
  EXPECT_EQ(d["name"], "Three rows");
  EXPECT_EQ(d["rowCount"], 3);
  EXPECT_FALSE(d.contains("rows"));
  EXPECT_EQ(d["facets"][0]["units"], "m");
}

// Structural diff: only chart selections and the cached results may change.
TEST(Session, SelectionChangeTouchesOnlySelectionsAndResults) {
  auto view = linked_view(std::make_shared<MemoryBackend>(three_rows()));
  auto before = Json::parse(save_session(*view));
  view->set_selection("A", RangeSelection{1.0, 2.0}).collect();
  auto after = Json::parse(save_session(*view));
  auto diff = Json::diff(before, after);
  ASSERT_FALSE(diff.empty());
  for (const auto& op : diff) {
    const auto path = op["path"].get<std::string>();
    const bool selection = path.rfind("/charts/", 0) == 0 && path.find("/selection") != std::string::npos;
    const bool results = path.rfind("/cachedResults", 0) == 0;
    EXPECT_TRUE(selection || results) << path;
  }
}

TEST(Session, LoadOfSaveIsIdentity) {
  auto view = linked_view(std::make_shared<MemoryBackend>(three_rows()));
  auto s = make_session(view->snapshot(), {{"B", Json{{"x", 6}}}});
  auto loaded = load_session(save_session(s));
  EXPECT_EQ(loaded, s);
  EXPECT_EQ(save_session(loaded), save_session(s));
}

TEST(Session, TruncatedDocumentIsParseError) {
  auto view = linked_view(std::make_shared<MemoryBackend>(three_rows()));
  auto doc = save_session(*view);
  for (std::size_t cut : {std::size_t{0}, std::size_t{1}, doc.size() / 2, doc.size() - 2})
    EXPECT_EQ(code_of([&] { load_session(doc.substr(0, cut)); }), ErrorCode::ParseError) << cut;
}

TEST(Session, RejectsNewerVersion) {
  auto view = linked_view(std::make_shared<MemoryBackend>(three_rows()));
  auto j = Json::parse(save_session(*view));
  j["formatVersion"] = 2;
  EXPECT_EQ(code_of([&] { load_session(j.dump()); }), ErrorCode::UnsupportedVersion);
  j["formatVersion"] = "1";
  EXPECT_EQ(code_of([&] { load_session(j.dump()); }), ErrorCode::ParseError);
}

TEST(Session, HandEditedSelectionOutOfRangeNamesChart) {
  auto view = linked_view(std::make_shared<MemoryBackend>(three_rows()));
  auto j = Json::parse(save_session(*view));
  j["charts"][1]["selection"] = Json::array({Json{{"range", {50, 60}}}});
  try {
    load_session(j.dump());
    FAIL();
  } catch (const DocumentError& e) {
    EXPECT_EQ(e.code(), ErrorCode::ValidationError);
    EXPECT_EQ(e.path(), "/charts/1");
    EXPECT_NE(std::string(e.what()).find("'B'"), std::string::npos);
  }
}

TEST(Session, InvariantViolations) {
  auto view = linked_view(std::make_shared<MemoryBackend>(three_rows()));
  const auto j = Json::parse(save_session(*view));
  auto edit = [&](auto&& fn) {
    Json k = j;
    fn(k);
    return code_of([&] { load_session(k.dump()); });
  };
  EXPECT_EQ(edit([](Json& k) { k["charts"][0]["partitions"][0]["facet"] = "nope"; }), ErrorCode::ValidationError);
  EXPECT_EQ(edit([](Json& k) { k["charts"][1]["id"] = "A"; }), ErrorCode::ValidationError);
  EXPECT_EQ(edit([](Json& k) { k["cachedResults"]["filters"]["A"]["revision"] = 99; }), ErrorCode::ValidationError);
  EXPECT_EQ(edit([](Json& k) { k["cachedResults"]["filters"]["Z"] = k["cachedResults"]["filters"]["A"]; }), ErrorCode::ValidationError);
  EXPECT_EQ(edit([](Json& k) { k["extra"] = 1; }), ErrorCode::ParseError);
  EXPECT_EQ(edit([](Json& k) { k.erase("charts"); }), ErrorCode::ParseError);
  EXPECT_EQ(edit([](Json& k) { k["datasets"].push_back(k["datasets"][0]); }), ErrorCode::ValidationError);
}

TEST(Session, RestoreLiveRecomputesCachedResults) {
  auto backend = std::make_shared<MemoryBackend>(three_rows());
  auto view = linked_view(backend);
  auto session = load_session(save_session(*view));
  auto restored = restore(session, [&](const std::string& id) -> std::shared_ptr<Backend> {
    return id == "three" ? backend : nullptr;
  });
  ASSERT_TRUE(restored.is_live());
  restored.update.collect();
  auto snap = restored.live->snapshot();
  ASSERT_EQ(snap.results.size(), session.cached_results.size());
  for (const auto& [id, cached] : session.cached_results) EXPECT_EQ(snap.results[id].rows, cached.rows) << id;
  EXPECT_EQ(snap.filters, session.filters());
}

TEST(Session, RestoreWithoutDatasetIsFrozenAndCallsNothing) {
  auto view = linked_view(std::make_shared<MemoryBackend>(three_rows()));
  auto session = load_session(save_session(*view));
  auto counting = std::make_shared<testing::WrappedBackend>(std::make_shared<MemoryBackend>(three_rows("other")));
  auto restored = restore(session, [&](const std::string&) -> std::shared_ptr<Backend> { return nullptr; });
  ASSERT_FALSE(restored.is_live());
  ASSERT_TRUE(restored.frozen);
  EXPECT_EQ(restored.frozen->result("A")->rows, session.cached_results["A"].rows);
  EXPECT_EQ(restored.frozen->events().size(), 2u);

  // a backend with a different id is a mismatch and stays untouched
  auto mismatch = restore(session, [&](const std::string&) -> std::shared_ptr<Backend> { return counting; });
  ASSERT_FALSE(mismatch.is_live());
  EXPECT_FALSE(mismatch.frozen->mismatches().empty());
  EXPECT_EQ(counting->calls.load(), 0);
}

TEST(Session, RestoreFallsBackOnKindMismatch) {
  auto view = linked_view(std::make_shared<MemoryBackend>(three_rows()));
  auto session = load_session(save_session(*view));
  Column x(FacetKind::categorical), y(FacetKind::continuous);
  x.push_back(Value{"a"});
  y.push_back(Value{1.0});
  auto other = Dataset::create({"three", "t", "", {{"x", FacetKind::categorical, "", ""}, {"y", FacetKind::continuous, "", ""}}, 0},
                               {std::move(x), std::move(y)});
  auto restored = restore(session, [&](const std::string&) -> std::shared_ptr<Backend> { return std::make_shared<MemoryBackend>(other); });
  ASSERT_FALSE(restored.is_live());
  ASSERT_EQ(restored.frozen->mismatches().size(), 1u);
  EXPECT_NE(restored.frozen->mismatches()[0].find("'x'"), std::string::npos);
}

TEST(Session, RestoreAcceptsFacetSuperset) {
  auto view = linked_view(std::make_shared<MemoryBackend>(three_rows()));
  auto session = load_session(save_session(*view));
  Column x(FacetKind::continuous), y(FacetKind::continuous), z(FacetKind::categorical);
  for (double v : {1.0, 2.0, 3.0}) {
    x.push_back(Value{v});
    y.push_back(Value{v});
    z.push_back(Value{"k"});
  }
  auto wider = Dataset::create(
      {"three", "t", "", {{"x", FacetKind::continuous, "", ""}, {"y", FacetKind::continuous, "", ""}, {"z", FacetKind::categorical, "", ""}}, 0},
      {std::move(x), std::move(y), std::move(z)});
  auto restored = restore(session, [&](const std::string&) -> std::shared_ptr<Backend> { return std::make_shared<MemoryBackend>(wider); });
  ASSERT_TRUE(restored.is_live());
  auto events = restored.update.collect();
  EXPECT_EQ(events.size(), 2u);
}

TEST(Session, InFlightUpdateIsSavedStale) {
  auto gated = std::make_shared<testing::GatedBackend>(std::make_shared<MemoryBackend>(three_rows()), "y");
  DataView view(gated, ViewOptions{false, nullptr, 2});
  view.add_filter(unit_bins("A", "x"));
  auto stream = view.add_filter(unit_bins("B", "y"));
  auto first = stream.next();
  auto s = load_session(save_session(view));
  EXPECT_TRUE(s.saved_stale);
  ASSERT_EQ(session_warnings(s).size(), 1u);
  EXPECT_EQ(session_warnings(s)[0].code, WarningCode::SavedStale);
  gated->release();
  stream.collect();
  EXPECT_FALSE(load_session(save_session(view)).saved_stale);
}

TEST(Session, PropertyRoundTripReproducesResults) {
  std::mt19937_64 rng(47);
  for (int iter = 0; iter < 25; ++iter) {
    auto ds = testing::random_dataset(rng, {300, 0.1, false, true});
    auto backend = std::make_shared<MemoryBackend>(ds);
    DataView view(backend, ViewOptions{iter % 5 == 0, nullptr, 2});
    const int n = 1 + iter % 4;
    for (int i = 0; i < n; ++i) view.add_filter(testing::random_filter(rng, ds->descriptor(), "c" + std::to_string(i), i % 2 == 1));
    view.wait_idle();
    const auto doc = save_session(view);
    EXPECT_EQ(doc, save_session(view));
    auto restored = restore(load_session(doc), [&](const std::string&) -> std::shared_ptr<Backend> { return backend; });
    ASSERT_TRUE(restored.is_live());
    restored.update.collect();
    auto want = view.snapshot();
    auto got = restored.live->snapshot();
    for (const auto& f : want.filters) EXPECT_EQ(got.results[f.id].rows, want.results[f.id].rows) << "iteration " << iter << " " << f.id;
  }
}

}  // namespace
}  // namespace spot
