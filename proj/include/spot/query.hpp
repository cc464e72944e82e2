#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "spot/dataset.hpp"

namespace spot {

inline constexpr std::size_t kMaxPartitions = 3;
inline constexpr std::size_t kMaxAggregates = 4;
inline constexpr int kMaxBinCount = 10000;
inline constexpr int kDefaultBinCount = 20;
/// Upper bound on rows a dense (histogram-filled) result may contain.
inline constexpr std::size_t kMaxDenseCells = std::size_t{1} << 20;

struct ContinuousBins {
  double lo = 0.0;
  double hi = 1.0;
  int bin_count = kDefaultBinCount;
  friend bool operator==(const ContinuousBins&, const ContinuousBins&) = default;
};

/// nullopt categories means "auto": every label forms a group.
struct CategoryGrouping {
  std::optional<std::vector<std::string>> categories;
  friend bool operator==(const CategoryGrouping&, const CategoryGrouping&) = default;
};

struct DatetimeGrouping {
  TimeInterval interval = TimeInterval::day;
  friend bool operator==(const DatetimeGrouping&, const DatetimeGrouping&) = default;
};

using Grouping = std::variant<ContinuousBins, CategoryGrouping, DatetimeGrouping>;

struct PartitionSpec {
  std::string facet;
  Grouping grouping;

  bool is_continuous() const { return std::holds_alternative<ContinuousBins>(grouping); }
  bool is_categorical() const { return std::holds_alternative<CategoryGrouping>(grouping); }
  bool is_datetime() const { return std::holds_alternative<DatetimeGrouping>(grouping); }
  const ContinuousBins& bins() const { return std::get<ContinuousBins>(grouping); }
  const CategoryGrouping& categories() const { return std::get<CategoryGrouping>(grouping); }
  const DatetimeGrouping& datetime() const { return std::get<DatetimeGrouping>(grouping); }

  void validate() const {
    if (facet.empty()) throw Error(ErrorCode::InvalidArgument, "partition needs a facet");
    if (is_continuous()) {
      const auto& b = bins();
      if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || !(b.lo < b.hi))
        throw Error(ErrorCode::InvalidArgument, "partition on '" + facet + "' needs lo < hi");
      if (b.bin_count < 1 || b.bin_count > kMaxBinCount)
        throw Error(ErrorCode::InvalidArgument, "bin_count must be within [1, 10000]");
    } else if (is_categorical() && categories().categories) {
      std::set<std::string> seen(categories().categories->begin(), categories().categories->end());
      if (seen.size() != categories().categories->size())
        throw Error(ErrorCode::InvalidArgument, "category list for '" + facet + "' has duplicates");
    }
  }

  friend bool operator==(const PartitionSpec&, const PartitionSpec&) = default;
};

/// Whether a grouping may be applied to a facet of the given kind.
inline bool grouping_accepts(const Grouping& g, FacetKind kind) {
  if (std::holds_alternative<ContinuousBins>(g)) return kind == FacetKind::continuous;
  if (std::holds_alternative<DatetimeGrouping>(g)) return kind == FacetKind::datetime;
  return kind == FacetKind::categorical || kind == FacetKind::text;
}

enum class AggregateOp { count, sum, avg, min, max, stddev };

inline std::string_view to_string(AggregateOp op) {
  switch (op) {
    case AggregateOp::count: return "count";
    case AggregateOp::sum: return "sum";
    case AggregateOp::avg: return "avg";
    case AggregateOp::min: return "min";
    case AggregateOp::max: return "max";
    case AggregateOp::stddev: return "stddev";
  }
  return "count";
}

inline std::optional<AggregateOp> aggregate_op_from_string(std::string_view s) {
  if (s == "count") return AggregateOp::count;
  if (s == "sum") return AggregateOp::sum;
  if (s == "avg") return AggregateOp::avg;
  if (s == "min") return AggregateOp::min;
  if (s == "max") return AggregateOp::max;
  if (s == "stddev") return AggregateOp::stddev;
  return std::nullopt;
}

struct AggregateSpec {
  AggregateOp op = AggregateOp::count;
  std::optional<std::string> facet;
  friend bool operator==(const AggregateSpec&, const AggregateSpec&) = default;
};

/// Half-open [lo, hi). Datetime ranges are epoch milliseconds.
struct RangeSelection {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const RangeSelection&, const RangeSelection&) = default;
};

/// Labels combine by OR.
struct CategorySelection {
  std::set<std::string> labels;
  friend bool operator==(const CategorySelection&, const CategorySelection&) = default;
};

using Selection = std::variant<RangeSelection, CategorySelection>;

inline void validate_selection(const Selection& s) {
  if (const auto* r = std::get_if<RangeSelection>(&s)) {
    if (!std::isfinite(r->lo) || !std::isfinite(r->hi) || !(r->lo < r->hi))
      throw Error(ErrorCode::InvalidSelection, "range selection needs lo < hi");
  } else if (std::get<CategorySelection>(s).labels.empty()) {
    throw Error(ErrorCode::InvalidSelection, "category selection must not be empty");
  }
}

inline bool selection_accepts(const Selection& s, FacetKind kind) {
  if (std::holds_alternative<RangeSelection>(s)) return kind == FacetKind::continuous || kind == FacetKind::datetime;
  return kind == FacetKind::categorical || kind == FacetKind::text;
}

/// A selection placed on one partition; predicates are conjunctions of these.
struct PredicateTerm {
  PartitionSpec partition;
  Selection selection;
  friend bool operator==(const PredicateTerm&, const PredicateTerm&) = default;
};

struct BinKey {
  int index = 0;
  std::string label;
  friend bool operator==(const BinKey& a, const BinKey& b) { return a.index == b.index; }
  friend auto operator<=>(const BinKey& a, const BinKey& b) { return a.index <=> b.index; }
};

struct CategoryKey {
  std::string label;
  friend auto operator<=>(const CategoryKey&, const CategoryKey&) = default;
};

struct TimeKey {
  Timestamp start;
  friend auto operator<=>(const TimeKey&, const TimeKey&) = default;
};

using GroupKey = std::variant<BinKey, CategoryKey, TimeKey>;

/// values[i] is nullopt when aggregate i has no input in this group.
struct GroupRow {
  std::vector<GroupKey> keys;
  std::uint64_t count = 0;
  std::vector<std::optional<double>> values;

  friend bool operator==(const GroupRow&, const GroupRow&) = default;
};

struct AggregateRequest {
  std::vector<PartitionSpec> partitions;
  std::vector<AggregateSpec> aggregates;
  std::vector<PredicateTerm> predicate;
  friend bool operator==(const AggregateRequest&, const AggregateRequest&) = default;
};

/// Lower edge of bin i (i == bin_count gives hi).
inline double bin_edge(const ContinuousBins& b, int i) {
  if (i >= b.bin_count) return b.hi;
  return b.lo + (b.hi - b.lo) * static_cast<double>(i) / static_cast<double>(b.bin_count);
}

/// "[lo,hi)" for inner bins, "[lo,hi]" for the last one.
inline std::string bin_label(const ContinuousBins& b, int index) {
  return "[" + format_number(bin_edge(b, index)) + "," + format_number(bin_edge(b, index + 1)) +
         (index + 1 == b.bin_count ? "]" : ")");
}

/// floor((v - lo) * n / (hi - lo)), with v == hi clamped into the last bin.
/// Returns -1 outside [lo, hi].
inline int bin_index(double v, const ContinuousBins& b) {
  if (!(v >= b.lo && v <= b.hi)) return -1;
  double scaled = (v - b.lo) * static_cast<double>(b.bin_count) / (b.hi - b.lo);
  int idx = static_cast<int>(std::floor(scaled));
  return std::min(idx, b.bin_count - 1);
}

inline std::optional<GroupKey> partition_key(const Value& value, const PartitionSpec& spec) {
  if (value.is_missing()) return std::nullopt;
  if (spec.is_continuous()) {
    if (!value.is_number()) return std::nullopt;
    int idx = bin_index(value.number(), spec.bins());
    if (idx < 0) return std::nullopt;
    return GroupKey{BinKey{idx, bin_label(spec.bins(), idx)}};
  }
  if (spec.is_datetime()) {
    if (!value.is_time()) return std::nullopt;
    return GroupKey{TimeKey{truncate(value.time(), spec.datetime().interval)}};
  }
  if (!value.is_label()) return std::nullopt;
  const auto& list = spec.categories().categories;
  if (list && std::find(list->begin(), list->end(), value.label()) == list->end()) return std::nullopt;
  return GroupKey{CategoryKey{value.label()}};
}

/// Checks limits, facet existence and kind compatibility against a dataset
/// descriptor. Both backends call this before doing any work.
inline void validate_request(const DatasetDescriptor& dataset, const AggregateRequest& request) {
  if (request.partitions.empty()) throw Error(ErrorCode::InvalidArgument, "at least one partition is required");
  if (request.partitions.size() > kMaxPartitions)
    throw Error(ErrorCode::LimitExceeded, "at most 3 partitions are allowed");
  if (request.aggregates.size() > kMaxAggregates)
    throw Error(ErrorCode::LimitExceeded, "at most 4 aggregates are allowed");
  for (const auto& p : request.partitions) {
    p.validate();
    const Facet& f = dataset.facet(p.facet);
    if (!grouping_accepts(p.grouping, f.kind))
      throw Error(ErrorCode::KindMismatch, "facet '" + p.facet + "' of kind " + std::string(to_string(f.kind)) +
                                               " cannot use this partition type");
  }
  for (const auto& a : request.aggregates) {
    if (a.op == AggregateOp::count) {
      if (a.facet) throw Error(ErrorCode::InvalidArgument, "count takes no facet");
      continue;
    }
    if (!a.facet) throw Error(ErrorCode::InvalidArgument, std::string(to_string(a.op)) + " requires a facet");
    const Facet& f = dataset.facet(*a.facet);
    if (f.kind != FacetKind::continuous)
      throw Error(ErrorCode::KindMismatch,
                  std::string(to_string(a.op)) + " needs a continuous facet, '" + f.name + "' is " + std::string(to_string(f.kind)));
  }
  for (const auto& term : request.predicate) {
    const Facet& f = dataset.facet(term.partition.facet);
    validate_selection(term.selection);
    if (!selection_accepts(term.selection, f.kind))
      throw Error(ErrorCode::InvalidSelection, "selection type does not fit facet '" + f.name + "'");
  }
}

inline bool key_less(const std::vector<GroupKey>& a, const std::vector<GroupKey>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

inline void sort_rows(std::vector<GroupRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const GroupRow& a, const GroupRow& b) { return key_less(a.keys, b.keys); });
}

/// Sorts rows by key tuple and, when any partition is continuous, fills the
/// grid of every bin x every observed key of the other partitions with
/// zero-count rows (count aggregates 0, all others absent). Shared by both backends so their output shapes agree.
inline std::vector<GroupRow> densify(const std::vector<PartitionSpec>& partitions,
                                     const std::vector<AggregateSpec>& aggregates, std::vector<GroupRow> rows) {
  sort_rows(rows);
  bool any_continuous = std::any_of(partitions.begin(), partitions.end(), [](const auto& p) { return p.is_continuous(); });
  if (!any_continuous) return rows;

  std::vector<std::vector<GroupKey>> axes(partitions.size());
  std::size_t cells = 1;
  for (std::size_t p = 0; p < partitions.size(); ++p) {
    if (partitions[p].is_continuous()) {
      const auto& b = partitions[p].bins();
      for (int i = 0; i < b.bin_count; ++i) axes[p].push_back(BinKey{i, bin_label(b, i)});
    } else {
      std::set<GroupKey> observed;
      for (const auto& r : rows) observed.insert(r.keys[p]);
      axes[p].assign(observed.begin(), observed.end());
    }
    if (axes[p].empty()) return rows;
    if (cells > kMaxDenseCells / axes[p].size())
      throw Error(ErrorCode::LimitExceeded, "dense histogram would exceed " + std::to_string(kMaxDenseCells) + " rows");
    cells *= axes[p].size();
  }

  std::vector<GroupRow> dense;
  dense.reserve(cells);
  std::vector<std::size_t> pos(partitions.size(), 0);
  auto it = rows.begin();
  for (std::size_t cell = 0; cell < cells; ++cell) {
    std::vector<GroupKey> keys;
    keys.reserve(partitions.size());
    for (std::size_t p = 0; p < partitions.size(); ++p) keys.push_back(axes[p][pos[p]]);
    if (it != rows.end() && it->keys == keys) {
      dense.push_back(std::move(*it));
      ++it;
    } else {
      GroupRow empty{std::move(keys), 0, std::vector<std::optional<double>>(aggregates.size())};
      for (std::size_t a = 0; a < aggregates.size(); ++a)
        if (aggregates[a].op == AggregateOp::count) empty.values[a] = 0.0;
      dense.push_back(std::move(empty));
    }
    for (std::size_t p = partitions.size(); p-- > 0;) {
      if (++pos[p] < axes[p].size()) break;
      pos[p] = 0;
    }
  }
  return dense;
}

/// Partition used when a chart has a facet but no configured grouping:
/// 20 bins over [min, max] for numbers, all labels for categories, and a
/// time interval scaled to the observed span for datetimes.
inline PartitionSpec default_partition(const Facet& facet, const FacetStats& stats) {
  switch (facet.kind) {
    case FacetKind::continuous: {
      double lo = stats.min.is_number() ? stats.min.number() : 0.0;
      double hi = stats.max.is_number() ? stats.max.number() : lo + 1.0;
      if (!(lo < hi)) hi = lo + 1.0;
      return PartitionSpec{facet.name, ContinuousBins{lo, hi, kDefaultBinCount}};
    }
    case FacetKind::datetime: {
      TimeInterval interval = TimeInterval::day;
      if (stats.min.is_time() && stats.max.is_time()) {
        const std::int64_t span = stats.max.time().ms - stats.min.time().ms;
        constexpr std::int64_t hour = 3600000, day = 24 * hour;
        if (span > 2 * 365 * day)
          interval = TimeInterval::year;
        else if (span > 60 * day)
          interval = TimeInterval::month;
        else if (span > 2 * day)
          interval = TimeInterval::day;
        else if (span > 2 * hour)
          interval = TimeInterval::hour;
        else
          interval = TimeInterval::minute;
      }
      return PartitionSpec{facet.name, DatetimeGrouping{interval}};
    }
    default: return PartitionSpec{facet.name, CategoryGrouping{}};
  }
}

}  // namespace spot
