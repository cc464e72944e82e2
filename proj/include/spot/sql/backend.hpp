#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <memory>

#include "spot/dataview.hpp"
#include "spot/ingest.hpp"
#include "spot/sql/compiler.hpp"
#include "spot/sql/sqlite.hpp"

namespace spot::sql {

/// How a table becomes a dataset. Facet names are column names; kinds are
/// inferred from declared column types unless overridden. Datetime columns
/// hold epoch milliseconds.
struct BindOptions {
  std::string dataset_id;
  std::string name;
  std::string description;
  /// Columns to expose; empty means all.
  std::vector<std::string> columns;
  std::map<std::string, FacetKind> kinds;
};

namespace detail {

inline std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

inline bool declared_numeric(const std::string& type) {
  const auto t = upper(type);
  for (const char* k : {"INT", "REAL", "FLOA", "DOUB", "NUM", "DEC"})
    if (t.find(k) != std::string::npos) return true;
  return false;
}

inline bool declared_time(const std::string& type) {
  const auto t = upper(type);
  return t.find("DATE") != std::string::npos || t.find("TIME") != std::string::npos;
}

/// Existing single-column indexes, keyed by column name.
inline std::map<std::string, std::string> single_column_indexes(Connection& conn, const Dialect& d, const std::string& table) {
  std::map<std::string, std::string> out;
  std::vector<std::string> names;
  {
    Statement list(conn, "PRAGMA index_list(" + d.quote_identifier(table) + ")");
    while (list.step()) names.push_back(list.text(1));
  }
  for (const auto& name : names) {
    Statement info(conn, "PRAGMA index_info(" + d.quote_identifier(name) + ")");
    std::vector<std::string> cols;
    while (info.step()) cols.push_back(info.text(2));
    if (cols.size() == 1 && !out.count(cols[0])) out.emplace(cols[0], name);
  }
  return out;
}

}  // namespace detail

/// Reads the table's columns and builds the binding. Unknown table or
/// requested column → NotFound.
inline TableBinding bind_table(ConnectionPool& pool, const std::string& table, const BindOptions& options = {},
                               const DetectionConfig& detection = {}) {
  const SqliteDialect d;
  auto conn = pool.acquire();
  std::vector<std::pair<std::string, std::string>> columns;
  {
    Statement info(*conn, "PRAGMA table_info(" + d.quote_identifier(table) + ")");
    while (info.step()) columns.emplace_back(info.text(1), info.text(2));
  }
  if (columns.empty()) throw Error(ErrorCode::NotFound, "table '" + table + "' does not exist");
  if (!options.columns.empty()) {
    std::vector<std::pair<std::string, std::string>> chosen;
    for (const auto& want : options.columns) {
      auto it = std::find_if(columns.begin(), columns.end(), [&](const auto& c) { return c.first == want; });
      if (it == columns.end()) throw Error(ErrorCode::NotFound, "table '" + table + "' has no column '" + want + "'");
      chosen.push_back(*it);
    }
    columns = std::move(chosen);
  }
  for (const auto& [facet, kind] : options.kinds) {
    if (std::none_of(columns.begin(), columns.end(), [&](const auto& c) { return c.first == facet; }))
      throw Error(ErrorCode::NotFound, "kind override for unknown column '" + facet + "'");
  }

  std::uint64_t rows = 0;
  {
    Statement count(*conn, "SELECT COUNT(*) FROM " + d.quote_identifier(table));
    if (count.step()) rows = static_cast<std::uint64_t>(count.int64(0));
  }
  const auto indexes = detail::single_column_indexes(*conn, d, table);

  TableBinding b;
  b.table = table;
  b.descriptor.id = options.dataset_id.empty() ? table : options.dataset_id;
  b.descriptor.name = options.name.empty() ? table : options.name;
  b.descriptor.description = options.description;
  b.descriptor.row_count = rows;
  const auto category_limit =
      std::max<std::uint64_t>(detection.categorical_min_limit,
                              static_cast<std::uint64_t>(detection.categorical_row_fraction * static_cast<double>(rows)));
  for (const auto& [name, type] : columns) {
    FacetKind kind;
    if (auto it = options.kinds.find(name); it != options.kinds.end()) {
      kind = it->second;
    } else if (detail::declared_time(type)) {
      kind = FacetKind::datetime;
    } else if (detail::declared_numeric(type)) {
      kind = FacetKind::continuous;
    } else {
      Statement distinct(*conn, "SELECT COUNT(DISTINCT " + d.quote_identifier(name) + ") FROM " + d.quote_identifier(table));
      distinct.step();
      kind = static_cast<std::uint64_t>(distinct.int64(0)) <= category_limit ? FacetKind::categorical : FacetKind::text;
    }
    b.descriptor.facets.push_back({name, kind, "", ""});
    ColumnBinding c{name, name, type, std::nullopt};
    if (auto it = indexes.find(name); it != indexes.end()) c.index_name = it->second;
    b.columns.push_back(std::move(c));
  }
  return b;
}

struct IndexReport {
  std::vector<std::string> created;
  /// Facets whose column already had an index; reported, not recreated.
  std::vector<std::string> existing;
  Warnings warnings;
};

inline std::string index_name_for(const std::string& table, const std::string& column) {
  std::string out = "spot_idx_";
  for (char c : table + "_" + column) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

/// Creates one single-column index per facet unless the column already has
/// one. Without write permission every missing index becomes an
/// IndexSkipped warning and queries keep working.
inline IndexReport ensure_indices(ConnectionPool& pool, TableBinding& binding, const std::vector<std::string>& facets) {
  const SqliteDialect d;
  IndexReport report;
  auto conn = pool.acquire();
  auto indexes = detail::single_column_indexes(*conn, d, binding.table);
  for (const auto& facet : facets) {
    auto& col = binding.column(facet);
    if (auto it = indexes.find(col.column); it != indexes.end()) {
      col.index_name = it->second;
      report.existing.push_back(it->second);
      continue;
    }
    const auto name = index_name_for(binding.table, col.column);
    try {
      conn->execute("CREATE INDEX " + d.quote_identifier(name) + " ON " + d.quote_identifier(binding.table) + " (" +
                    d.quote_identifier(col.column) + ")");
      col.index_name = name;
      indexes.emplace(col.column, name);
      report.created.push_back(name);
    } catch (const Error& e) {
      report.warnings.push_back({WarningCode::IndexSkipped, facet, e.detail()});
    }
  }
  return report;
}

/// Runs aggregations as grouped SQL queries; only group rows leave the
/// database. Empty bins are filled in here so results match MemoryBackend.
class SqlBackend : public Backend {
 public:
  SqlBackend(std::shared_ptr<ConnectionPool> pool, TableBinding binding, std::shared_ptr<const Dialect> dialect = sqlite_dialect())
      : pool_(std::move(pool)), binding_(std::move(binding)), dialect_(std::move(dialect)) {}

  const DatasetDescriptor& descriptor() const override { return binding_.descriptor; }
  const TableBinding& binding() const { return binding_; }
  const std::shared_ptr<ConnectionPool>& pool() const { return pool_; }

  CompiledQuery compile(const AggregateRequest& request) const { return compile_aggregation(binding_, *dialect_, request); }

  std::vector<GroupRow> aggregate(const AggregateRequest& request, std::stop_token stop = {}) override {
    const auto query = compile(request);
    auto conn = pool_->acquire();
    InterruptGuard guard(*conn, stop);
    Statement stmt(*conn, query.sql);
    stmt.bind_all(query.params);

    const auto np = static_cast<int>(request.partitions.size());
    std::vector<GroupRow> rows;
    while (stmt.step()) {
      GroupRow row;
      for (int i = 0; i < np; ++i) {
        const auto& p = request.partitions[static_cast<std::size_t>(i)];
        if (p.is_continuous()) {
          const int index = static_cast<int>(stmt.int64(i));
          row.keys.push_back(BinKey{index, bin_label(p.bins(), index)});
        } else if (p.is_datetime()) {
          row.keys.push_back(TimeKey{Timestamp{stmt.int64(i)}});
        } else {
          row.keys.push_back(CategoryKey{stmt.text(i)});
        }
      }
      row.count = static_cast<std::uint64_t>(stmt.int64(np));
      int col = np + 1;
      for (const auto& a : request.aggregates) {
        if (a.op == AggregateOp::count) {
          row.values.push_back(static_cast<double>(row.count));
        } else {
          row.values.push_back(stmt.is_null(col) ? std::nullopt : std::optional<double>(stmt.real(col)));
          ++col;
        }
      }
      rows.push_back(std::move(row));
    }
    sort_rows(rows);
    return densify(request.partitions, request.aggregates, std::move(rows));
  }

  FacetStats scan_stats(std::string_view facet) override {
    const auto& f = binding_.descriptor.facet(facet);
    const auto col = dialect_->quote_identifier(binding_.column(facet).column);
    const auto table = dialect_->quote_identifier(binding_.table);
    auto conn = pool_->acquire();
    FacetStats stats;
    if (f.kind == FacetKind::continuous || f.kind == FacetKind::datetime) {
      Statement s(*conn, "SELECT MIN(" + col + "), MAX(" + col + "), COUNT(DISTINCT " + col + "), COUNT(*) - COUNT(" + col +
                             ") FROM " + table);
      s.step();
      stats.distinct_count = static_cast<std::size_t>(s.int64(2));
      stats.missing_count = static_cast<std::size_t>(s.int64(3));
      if (!s.is_null(0)) {
        if (f.kind == FacetKind::continuous) {
          stats.min = Value{s.real(0)};
          stats.max = Value{s.real(1)};
        } else {
          stats.min = Value{Timestamp{s.int64(0)}};
          stats.max = Value{Timestamp{s.int64(1)}};
        }
      }
      return stats;
    }
    Statement s(*conn, "SELECT " + col + ", COUNT(*) FROM " + table + " GROUP BY " + col);
    std::vector<CategoryCount> counts;
    while (s.step()) {
      if (s.is_null(0))
        stats.missing_count = static_cast<std::size_t>(s.int64(1));
      else
        counts.push_back({s.text(0), static_cast<std::size_t>(s.int64(1))});
    }
    std::sort(counts.begin(), counts.end(), [](const auto& a, const auto& b) { return a.label < b.label; });
    stats.distinct_count = counts.size();
    if (counts.empty()) return stats;
    stats.min = Value{counts.front().label};
    stats.max = Value{counts.back().label};
    if (f.kind == FacetKind::categorical) {
      std::stable_sort(counts.begin(), counts.end(), [](const auto& a, const auto& b) { return a.count > b.count; });
      if (counts.size() > kSampleCategoryLimit) counts.resize(kSampleCategoryLimit);
      stats.sample_categories = std::move(counts);
    }
    return stats;
  }

 private:
  std::shared_ptr<ConnectionPool> pool_;
  TableBinding binding_;
  std::shared_ptr<const Dialect> dialect_;
};

/// One query per filter, at most pool-size at a time; each completion is
/// reported as it happens. Failures become error events for that filter.
inline std::vector<UpdateEvent> execute_view(SqlBackend& backend, const std::vector<Filter>& filters, std::uint64_t revision = 0,
                                             bool include_self = false,
                                             const std::function<void(const UpdateEvent&)>& on_event = {}) {
  return run_filters(backend, filters, revision, include_self, backend.pool()->size(), on_event);
}

}  // namespace spot::sql
