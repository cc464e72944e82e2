#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "spot/query.hpp"
#include "spot/sql/dialect.hpp"

namespace spot::sql {

struct ColumnBinding {
  std::string facet;
  std::string column;
  std::string sql_type;
  /// Name of a single-column index on this column, when one is known.
  std::optional<std::string> index_name;
};

/// Maps a dataset's facets onto the columns of one table.
struct TableBinding {
  std::string table;
  DatasetDescriptor descriptor;
  std::vector<ColumnBinding> columns;

  const ColumnBinding& column(std::string_view facet) const {
    for (const auto& c : columns)
      if (c.facet == facet) return c;
    throw Error(ErrorCode::NotFound, "facet '" + std::string(facet) + "' is not bound to a column of " + table);
  }

  ColumnBinding& column(std::string_view facet) {
    return const_cast<ColumnBinding&>(static_cast<const TableBinding&>(*this).column(facet));
  }
};

using SqlParam = std::variant<std::int64_t, double, std::string>;

struct CompiledQuery {
  std::string sql;
  std::vector<SqlParam> params;
  /// Result columns: one per partition, the row count, one per non-count aggregate.
  std::size_t arity = 0;
  friend bool operator==(const CompiledQuery&, const CompiledQuery&) = default;
};

namespace detail {

class ParamList {
 public:
  explicit ParamList(const Dialect& d) : dialect_(d) {}
  std::string add(SqlParam p) {
    params_.push_back(std::move(p));
    return dialect_.placeholder(params_.size());
  }
  std::vector<SqlParam> take() { return std::move(params_); }

 private:
  const Dialect& dialect_;
  std::vector<SqlParam> params_;
};

inline std::string in_list(ParamList& params, const std::vector<std::string>& labels) {
  std::string out = "(";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) out += ", ";
    out += params.add(labels[i]);
  }
  return out + ")";
}

/// Same arithmetic, in the same order, as bin_index(): floor((v - lo) * n / (hi - lo)),
/// clamped to the last bin, NULL outside [lo, hi].
inline std::string bin_expression(const Dialect& d, ParamList& params, const std::string& col, const ContinuousBins& b) {
  const auto lo = params.add(b.lo);
  const auto hi = params.add(b.hi);
  const auto n = params.add(static_cast<double>(b.bin_count));
  const auto last = params.add(static_cast<std::int64_t>(b.bin_count - 1));
  const auto index = d.floor_nonnegative("((" + col + " - " + lo + ") * " + n + ") / (" + hi + " - " + lo + ")");
  return "CASE WHEN " + col + " >= " + lo + " AND " + col + " <= " + hi + " THEN " + d.least(index, last) + " END";
}

inline std::string key_expression(const Dialect& d, ParamList& params, const TableBinding& binding, const PartitionSpec& p) {
  const auto col = d.quote_identifier(binding.column(p.facet).column);
  if (p.is_continuous()) return bin_expression(d, params, col, p.bins());
  if (p.is_datetime()) return d.truncate_ms(col, p.datetime().interval);
  const auto& list = p.categories().categories;
  if (!list) return col;
  if (list->empty()) return "CAST(NULL AS TEXT)";
  return "CASE WHEN " + col + " IN " + in_list(params, *list) + " THEN " + col + " END";
}

inline std::string predicate_term(const Dialect& d, ParamList& params, const TableBinding& binding, const PredicateTerm& term) {
  const auto col = d.quote_identifier(binding.column(term.partition.facet).column);
  if (const auto* r = std::get_if<RangeSelection>(&term.selection))
    return col + " >= " + params.add(r->lo) + " AND " + col + " < " + params.add(r->hi);
  const auto& labels = std::get<CategorySelection>(term.selection).labels;
  return col + " IN " + in_list(params, std::vector<std::string>(labels.begin(), labels.end()));
}

}  // namespace detail

/// One grouped query for the request. Every user-supplied value travels as a
/// parameter, so the SQL text depends only on the request's structure.
inline CompiledQuery compile_aggregation(const TableBinding& binding, const Dialect& d, const AggregateRequest& request) {
  validate_request(binding.descriptor, request);
  detail::ParamList params(d);

  std::string inner = "SELECT ";
  bool first = true;
  auto item = [&](const std::string& expr, const std::string& alias) {
    if (!first) inner += ", ";
    first = false;
    inner += expr + " AS " + d.quote_identifier(alias);
  };
  for (std::size_t i = 0; i < request.partitions.size(); ++i)
    item(detail::key_expression(d, params, binding, request.partitions[i]), "k" + std::to_string(i));

  std::vector<std::string> outer_aggs;
  for (std::size_t i = 0; i < request.aggregates.size(); ++i) {
    const auto& a = request.aggregates[i];
    if (a.op == AggregateOp::count) continue;
    const auto alias = "a" + std::to_string(i);
    item(d.quote_identifier(binding.column(*a.facet).column), alias);
    const auto q = d.quote_identifier(alias);
    switch (a.op) {
      case AggregateOp::sum: outer_aggs.push_back("SUM(" + q + ")"); break;
      case AggregateOp::avg: outer_aggs.push_back("AVG(" + q + ")"); break;
      case AggregateOp::min: outer_aggs.push_back("MIN(" + q + ")"); break;
      case AggregateOp::max: outer_aggs.push_back("MAX(" + q + ")"); break;
      case AggregateOp::stddev: outer_aggs.push_back(d.stddev_pop(q)); break;
      case AggregateOp::count: break;
    }
  }
  inner += " FROM " + d.quote_identifier(binding.table);
  for (std::size_t i = 0; i < request.predicate.size(); ++i)
    inner += (i ? " AND " : " WHERE ") + detail::predicate_term(d, params, binding, request.predicate[i]);

  std::string keys, not_null;
  for (std::size_t i = 0; i < request.partitions.size(); ++i) {
    const auto k = d.quote_identifier("k" + std::to_string(i));
    keys += (i ? ", " : "") + k;
    not_null += (i ? " AND " : "") + k + " IS NOT NULL";
  }
  std::string sql = "SELECT " + keys + ", COUNT(*)";
  for (const auto& a : outer_aggs) sql += ", " + a;
  sql += " FROM (" + inner + ") AS " + d.quote_identifier("s") + " WHERE " + not_null + " GROUP BY " + keys + " ORDER BY " + keys;

  return CompiledQuery{std::move(sql), params.take(), request.partitions.size() + 1 + outer_aggs.size()};
}

}  // namespace spot::sql
