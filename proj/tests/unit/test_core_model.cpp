#include <gtest/gtest.h>

#include <random>

#include "spot/dataset.hpp"
#include "spot/engine.hpp"
#include "spot/ingest.hpp"
#include "support/random_data.hpp"

namespace spot {
namespace {

std::shared_ptr<const Dataset> make_numbers(std::string name, std::vector<Value> values, FacetKind kind = FacetKind::continuous) {
  Column c(kind);
  for (auto& v : values) c.push_back(v);
  return Dataset::create({name, name, "", {{"v", kind, "", ""}}, 0}, {std::move(c)});
}

std::shared_ptr<const Dataset> make_xy(std::string name, std::vector<std::string> facet_names, std::size_t rows) {
  DatasetDescriptor d{name, name, "", {}, 0};
  std::vector<Column> cols;
  for (const auto& f : facet_names) {
    d.facets.push_back({f, FacetKind::continuous, "", ""});
    Column c(FacetKind::continuous);
    for (std::size_t r = 0; r < rows; ++r) c.push_back(Value{static_cast<double>(r)});
    cols.push_back(std::move(c));
  }
  return Dataset::create(std::move(d), std::move(cols));
}

TEST(FacetStats, SimpleColumn) {
  auto ds = make_numbers("a", {1.0, 2.0, 3.0});
  auto s = facet_stats(*ds, "v");
  EXPECT_EQ(s.min, Value{1.0});
  EXPECT_EQ(s.max, Value{3.0});
  EXPECT_EQ(s.distinct_count, 3u);
  EXPECT_EQ(s.missing_count, 0u);
}

TEST(FacetStats, AllMissing) {
  auto ds = make_numbers("a", {Value{}, Value{}});
  auto s = facet_stats(*ds, "v");
  EXPECT_EQ(s.missing_count, 2u);
  EXPECT_EQ(s.distinct_count, 0u);
  EXPECT_TRUE(s.min.is_missing());
  EXPECT_TRUE(s.max.is_missing());
}

TEST(FacetStats, UnknownFacetIsNotFound) {
  auto ds = make_numbers("a", {1.0});
  try {
    facet_stats(*ds, "nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotFound);
  }
}

TEST(FacetStats, CategoricalSamples) {
  auto ds = make_numbers("a", {"b", "a", "b", Value{}, "c", "b"}, FacetKind::categorical);
  auto s = facet_stats(*ds, "v");
  EXPECT_EQ(s.distinct_count, 3u);
  EXPECT_EQ(s.missing_count, 1u);
  EXPECT_EQ(s.min, Value{"a"});
  EXPECT_EQ(s.max, Value{"c"});
  ASSERT_EQ(s.sample_categories.size(), 3u);
  EXPECT_EQ(s.sample_categories[0], (CategoryCount{"b", 3}));
  EXPECT_EQ(s.sample_categories[1], (CategoryCount{"a", 1}));
  EXPECT_EQ(s.sample_categories[2], (CategoryCount{"c", 1}));
}

// Frozen from a Python csv.DictReader scan of data/titanic.csv: 177 rows have an empty Age cell.
TEST(FacetStats, TitanicAgeMissingMatchesTextScan) {
  auto table = parse_csv(read_file(SPOT_DATA_DIR "/titanic.csv"));
  auto ds = load_dataset(table).dataset;
  auto s = facet_stats(*ds, "Age");
  EXPECT_EQ(s.missing_count, 177u);
  EXPECT_EQ(s.min, Value{0.42});
  EXPECT_EQ(s.max, Value{80.0});
}

TEST(FacetStats, PropertyMinMaxBoundEveryValue) {
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 50; ++iter) {
    auto ds = testing::random_dataset(rng, {static_cast<std::size_t>(1 + iter * 7), 0.2, false, true});
    for (const auto& f : ds->facets()) {
      auto s = facet_stats(*ds, f.name);
      EXPECT_LE(s.missing_count, ds->row_count());
      const auto& col = ds->column(f.name);
      bool any = false;
      for (std::size_t r = 0; r < ds->row_count(); ++r) {
        Value v = col.value(r);
        if (v.is_missing()) continue;
        any = true;
        EXPECT_FALSE(v < s.min);
        EXPECT_FALSE(s.max < v);
      }
      if (any) EXPECT_GE(s.distinct_count, 1u);
    }
  }
}

TEST(Combine, SharedFacetsOnly) {
  auto a = make_xy("A", {"x", "y"}, 10);
  auto b = make_xy("B", {"y", "z"}, 5);
  auto c = combine_datasets({a, b});
  EXPECT_EQ(c->row_count(), 15u);
  ASSERT_EQ(c->facets().size(), 2u);
  EXPECT_EQ(c->facets()[0].name, "y");
  EXPECT_EQ(c->facets()[1].name, "_dataset");
  EXPECT_EQ(c->facets()[1].kind, FacetKind::categorical);
}

TEST(Combine, SameDatasetTwiceSplitsEvenly) {
  auto a1 = make_xy("A1", {"x"}, 4);
  auto a2 = make_xy("A2", {"x"}, 4);
  auto c = combine_datasets({a1, a2});
  EXPECT_EQ(c->row_count(), 8u);
  auto s = facet_stats(*c, "_dataset");
  ASSERT_EQ(s.sample_categories.size(), 2u);
  EXPECT_EQ(s.sample_categories[0].count, s.sample_categories[1].count);
}

// Brute force: enumerate the rows of the combined dataset and count provenance labels.
TEST(Combine, ProvenanceCountsByEnumeration) {
  auto a = make_xy("models-a", {"mass", "sigma", "extra"}, 3);
  auto b = make_xy("models-b", {"sigma", "mass"}, 3);
  auto c = combine_datasets({a, b});
  std::map<std::string, int> counts;
  for (std::size_t r = 0; r < c->row_count(); ++r) ++counts[c->column("_dataset").value(r).label()];
  EXPECT_EQ(counts["models-a"], 3);
  EXPECT_EQ(counts["models-b"], 3);
  EXPECT_TRUE(c->facet_index("mass") && c->facet_index("sigma"));
  EXPECT_FALSE(c->facet_index("extra"));
}

TEST(Combine, GroupByDatasetReproducesRowCounts) {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 10; ++iter) {
    auto a = testing::random_dataset(rng, {static_cast<std::size_t>(5 + iter), 0.1, false, false});
    auto b = testing::random_dataset(rng, {static_cast<std::size_t>(20 - iter), 0.1, false, false});
    auto a2 = Dataset::create({"a", "first", "", a->facets(), 0}, [&] {
      std::vector<Column> cols;
      for (std::size_t i = 0; i < a->facets().size(); ++i) cols.push_back(a->column(i));
      return cols;
    }());
    auto c = combine_datasets({a2, b});
    EXPECT_EQ(c->row_count(), a->row_count() + b->row_count());
    AggregateRequest req{{{"_dataset", CategoryGrouping{}}}, {{AggregateOp::count, std::nullopt}}, {}};
    auto rows = aggregate(*c, req);
    ASSERT_EQ(rows.size(), 2u);
    std::map<std::string, std::uint64_t> by_name;
    for (const auto& r : rows) by_name[std::get<CategoryKey>(r.keys[0]).label] = r.count;
    EXPECT_EQ(by_name["first"], a->row_count());
    EXPECT_EQ(by_name["random"], b->row_count());
  }
}

TEST(Combine, Errors) {
  auto a = make_xy("A", {"x"}, 2);
  auto b = make_xy("B", {"y"}, 2);
  try {
    combine_datasets({a, b});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IncompatibleDatasets);
  }
  auto c = make_numbers("C", {"p"}, FacetKind::categorical);
  auto d = make_numbers("D", {1.0});
  try {
    combine_datasets({c, d});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IncompatibleDatasets);
  }
  EXPECT_THROW(combine_datasets({a}), Error);
}

TEST(Dataset, RejectsDuplicateFacetsAndRaggedColumns) {
  Column c1(FacetKind::continuous), c2(FacetKind::continuous);
  c1.push_back(Value{1.0});
  EXPECT_THROW(Dataset::create({"d", "d", "", {{"a", FacetKind::continuous, "", ""}, {"a", FacetKind::continuous, "", ""}}, 0},
                               {c1, c1}),
               Error);
  EXPECT_THROW(Dataset::create({"d", "d", "", {{"a", FacetKind::continuous, "", ""}, {"b", FacetKind::continuous, "", ""}}, 0},
                               {c1, c2}),
               Error);
  Column bad(FacetKind::continuous);
  EXPECT_THROW(bad.push_back(Value{"text"}), Error);
}

}  // namespace
}  // namespace spot
