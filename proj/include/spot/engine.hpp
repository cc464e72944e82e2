#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <stop_token>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "spot/dataset.hpp"
#include "spot/query.hpp"

namespace spot {

/// One dataset behind one execution strategy. Implementations must be safe
/// for concurrent aggregate() calls.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual const DatasetDescriptor& descriptor() const = 0;
  virtual std::vector<GroupRow> aggregate(const AggregateRequest& request, std::stop_token stop = {}) = 0;
  virtual FacetStats scan_stats(std::string_view facet) = 0;
};

struct AggregateOptions {
  /// Worker threads for one call; row ranges get private accumulators that
  /// are merged at the end.
  unsigned threads = 1;
  std::size_t min_rows_per_thread = std::size_t{1} << 16;
};

namespace detail {

inline constexpr std::uint32_t kNoGroup = std::numeric_limits<std::uint32_t>::max();
inline constexpr std::size_t kDenseTableLimit = std::size_t{1} << 22;
inline constexpr std::size_t kStopCheckInterval = std::size_t{1} << 16;

/// Mergeable running state for one aggregate in one group.
struct Accumulator {
  std::uint64_t n = 0;
  double sum = 0.0;
  double compensation = 0.0;
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    // Neumaier summation
    double t = sum + x;
    if (std::fabs(sum) >= std::fabs(x))
      compensation += (sum - t) + x;
    else
      compensation += (x - t) + sum;
    sum = t;
    if (x < min) min = x;
    if (x > max) max = x;
    // Welford
    double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }

  void merge(const Accumulator& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    double t = sum + o.sum;
    if (std::fabs(sum) >= std::fabs(o.sum))
      compensation += (sum - t) + o.sum;
    else
      compensation += (o.sum - t) + sum;
    sum = t;
    compensation += o.compensation;
    min = std::min(min, o.min);
    max = std::max(max, o.max);
    const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
    const double total = na + nb;
    const double delta = o.mean - mean;
    mean += delta * nb / total;
    m2 += o.m2 + delta * delta * na * nb / total;
    n += o.n;
  }

  std::optional<double> result(AggregateOp op, std::uint64_t group_count) const {
    if (op == AggregateOp::count) return static_cast<double>(group_count);
    if (n == 0) return std::nullopt;
    switch (op) {
      case AggregateOp::sum: return sum + compensation;
      case AggregateOp::avg: return (sum + compensation) / static_cast<double>(n);
      case AggregateOp::min: return min;
      case AggregateOp::max: return max;
      case AggregateOp::stddev: return std::sqrt(std::max(0.0, m2 / static_cast<double>(n)));
      default: return std::nullopt;
    }
  }
};

struct GroupState {
  std::uint64_t count = 0;
  std::vector<Accumulator> aggs;
};

/// Maps a row to a local key index along one partition axis.
struct PartitionAxis {
  enum class Mode { bins, codes, times } mode;
  std::span<const double> numbers;
  std::span<const std::uint32_t> codes;
  ContinuousBins bins;
  std::vector<std::uint8_t> code_allowed;  // codes mode
  std::vector<std::uint32_t> row_local;    // times mode, precomputed per row
  std::vector<std::int64_t> time_keys;     // times mode, sorted
  const std::vector<std::string>* dictionary = nullptr;
  std::size_t dimension = 0;

  std::uint32_t local(std::size_t row) const {
    switch (mode) {
      case Mode::bins: {
        int idx = bin_index(numbers[row], bins);
        return idx < 0 ? kNoGroup : static_cast<std::uint32_t>(idx);
      }
      case Mode::codes: {
        std::uint32_t c = codes[row];
        return (c == Column::kMissingCode || !code_allowed[c]) ? kNoGroup : c;
      }
      case Mode::times: return row_local[row];
    }
    return kNoGroup;
  }

  GroupKey key(std::uint32_t local_index) const {
    switch (mode) {
      case Mode::bins: return BinKey{static_cast<int>(local_index), bin_label(bins, static_cast<int>(local_index))};
      case Mode::codes: return CategoryKey{(*dictionary)[local_index]};
      case Mode::times: return TimeKey{Timestamp{time_keys[local_index]}};
    }
    return CategoryKey{};
  }
};

inline PartitionAxis make_axis(const Column& column, const PartitionSpec& spec) {
  PartitionAxis axis{};
  if (spec.is_continuous()) {
    axis.mode = PartitionAxis::Mode::bins;
    axis.numbers = column.numbers();
    axis.bins = spec.bins();
    axis.dimension = static_cast<std::size_t>(spec.bins().bin_count);
  } else if (spec.is_categorical()) {
    axis.mode = PartitionAxis::Mode::codes;
    axis.codes = column.codes();
    axis.dictionary = &column.dictionary();
    axis.dimension = column.dictionary().size();
    const auto& list = spec.categories().categories;
    axis.code_allowed.assign(axis.dimension, list ? 0 : 1);
    if (list) {
      std::unordered_set<std::string> wanted(list->begin(), list->end());
      for (std::size_t c = 0; c < axis.dimension; ++c)
        if (wanted.count(column.dictionary()[c])) axis.code_allowed[c] = 1;
    }
  } else {
    axis.mode = PartitionAxis::Mode::times;
    const auto interval = spec.datetime().interval;
    auto times = column.times();
    std::vector<std::int64_t> truncated(times.size(), Column::kMissingTime);
    for (std::size_t r = 0; r < times.size(); ++r)
      if (times[r] != Column::kMissingTime) truncated[r] = truncate(Timestamp{times[r]}, interval).ms;
    std::vector<std::int64_t> keys;
    for (auto t : truncated)
      if (t != Column::kMissingTime) keys.push_back(t);
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    std::unordered_map<std::int64_t, std::uint32_t> local_of;
    for (std::size_t i = 0; i < keys.size(); ++i) local_of.emplace(keys[i], static_cast<std::uint32_t>(i));
    axis.row_local.assign(times.size(), kNoGroup);
    for (std::size_t r = 0; r < times.size(); ++r)
      if (truncated[r] != Column::kMissingTime) axis.row_local[r] = local_of[truncated[r]];
    axis.time_keys = std::move(keys);
    axis.dimension = axis.time_keys.size();
  }
  return axis;
}

/// One conjunct of the row predicate, bound to a concrete column.
struct RowTest {
  FacetKind kind;
  std::span<const double> numbers;
  std::span<const std::int64_t> times;
  std::span<const std::uint32_t> codes;
  double lo = 0.0, hi = 0.0;
  std::vector<std::uint8_t> allowed;

  bool pass(std::size_t row) const {
    switch (kind) {
      case FacetKind::continuous: {
        double v = numbers[row];
        return v >= lo && v < hi;
      }
      case FacetKind::datetime: {
        auto t = times[row];
        if (t == Column::kMissingTime) return false;
        double d = static_cast<double>(t);
        return d >= lo && d < hi;
      }
      default: {
        auto c = codes[row];
        return c != Column::kMissingCode && allowed[c];
      }
    }
  }
};

inline RowTest make_test(const Column& column, const Selection& selection) {
  RowTest test{column.kind(), {}, {}, {}, 0.0, 0.0, {}};
  if (const auto* r = std::get_if<RangeSelection>(&selection)) {
    test.numbers = column.numbers();
    test.times = column.times();
    test.lo = r->lo;
    test.hi = r->hi;
  } else {
    const auto& labels = std::get<CategorySelection>(selection).labels;
    test.codes = column.codes();
    test.allowed.assign(column.dictionary().size(), 0);
    for (std::size_t c = 0; c < column.dictionary().size(); ++c)
      if (labels.count(column.dictionary()[c])) test.allowed[c] = 1;
  }
  return test;
}

/// Group table for one row range; dense array when the key space is small,
/// hash map otherwise.
class GroupTable {
 public:
  GroupTable(std::size_t key_space, std::size_t aggregate_count)
      : dense_(key_space <= kDenseTableLimit), aggregate_count_(aggregate_count) {
    if (dense_) {
      counts_.assign(key_space, 0);
      accs_.assign(key_space * aggregate_count, Accumulator{});
    }
  }

  void add(std::uint64_t key, std::span<const std::span<const double>> values, std::size_t row) {
    if (dense_) {
      ++counts_[key];
      Accumulator* a = accs_.data() + key * aggregate_count_;
      for (std::size_t i = 0; i < aggregate_count_; ++i) {
        if (values[i].empty()) continue;
        double x = values[i][row];
        if (!std::isnan(x)) a[i].add(x);
      }
      return;
    }
    auto& g = sparse_[key];
    if (g.aggs.empty()) g.aggs.resize(aggregate_count_);
    ++g.count;
    for (std::size_t i = 0; i < aggregate_count_; ++i) {
      if (values[i].empty()) continue;
      double x = values[i][row];
      if (!std::isnan(x)) g.aggs[i].add(x);
    }
  }

  void merge(const GroupTable& other) {
    if (dense_) {
      for (std::size_t k = 0; k < counts_.size(); ++k) {
        counts_[k] += other.counts_[k];
        for (std::size_t i = 0; i < aggregate_count_; ++i)
          accs_[k * aggregate_count_ + i].merge(other.accs_[k * aggregate_count_ + i]);
      }
      return;
    }
    for (const auto& [key, g] : other.sparse_) {
      auto& mine = sparse_[key];
      if (mine.aggs.empty()) mine.aggs.resize(aggregate_count_);
      mine.count += g.count;
      for (std::size_t i = 0; i < aggregate_count_; ++i) mine.aggs[i].merge(g.aggs[i]);
    }
  }

  template <typename Fn>
  void for_each_group(Fn&& fn) const {
    if (dense_) {
      for (std::size_t k = 0; k < counts_.size(); ++k)
        if (counts_[k])
          fn(static_cast<std::uint64_t>(k), counts_[k],
             std::span<const Accumulator>(accs_.data() + k * aggregate_count_, aggregate_count_));
      return;
    }
    for (const auto& [key, g] : sparse_) fn(key, g.count, std::span<const Accumulator>(g.aggs));
  }

 private:
  bool dense_;
  std::size_t aggregate_count_;
  std::vector<std::uint64_t> counts_;
  std::vector<Accumulator> accs_;
  std::unordered_map<std::uint64_t, GroupState> sparse_;
};

}  // namespace detail

/// Columnar group-by over one dataset: bins/labels/time intervals per
/// partition, up to four aggregates, rows filtered by the predicate
/// conjunction. Output is sorted by key tuple; continuous partitions come
/// back dense (empty bins with count 0).
inline std::vector<GroupRow> aggregate(const Dataset& dataset, const AggregateRequest& request,
                                       const AggregateOptions& options = {}, std::stop_token stop = {}) {
  validate_request(dataset.descriptor(), request);

  std::vector<detail::PartitionAxis> axes;
  std::vector<std::uint64_t> strides;
  std::uint64_t key_space = 1;
  for (const auto& p : request.partitions) {
    axes.push_back(detail::make_axis(dataset.column(p.facet), p));
    strides.push_back(key_space);
    const auto dim = std::max<std::uint64_t>(axes.back().dimension, 1);
    if (key_space > std::numeric_limits<std::uint64_t>::max() / dim)
      throw Error(ErrorCode::LimitExceeded, "group key space overflows 64 bits");
    key_space *= dim;
  }

  std::vector<detail::RowTest> tests;
  for (const auto& term : request.predicate) tests.push_back(detail::make_test(dataset.column(term.partition.facet), term.selection));

  std::vector<std::span<const double>> values;
  for (const auto& a : request.aggregates)
    values.push_back(a.op == AggregateOp::count ? std::span<const double>{} : dataset.column(*a.facet).numbers());

  const std::size_t rows = dataset.row_count();
  auto scan = [&](std::size_t begin, std::size_t end, detail::GroupTable& table) {
    for (std::size_t row = begin; row < end; ++row) {
      if ((row - begin) % detail::kStopCheckInterval == 0 && stop.stop_requested())
        throw Error(ErrorCode::Cancelled, "aggregation cancelled");
      bool keep = true;
      for (const auto& t : tests)
        if (!t.pass(row)) {
          keep = false;
          break;
        }
      if (!keep) continue;
      std::uint64_t key = 0;
      for (std::size_t p = 0; p < axes.size(); ++p) {
        auto local = axes[p].local(row);
        if (local == detail::kNoGroup) {
          keep = false;
          break;
        }
        key += local * strides[p];
      }
      if (keep) table.add(key, values, row);
    }
  };

  unsigned threads = std::max(1u, options.threads);
  threads = static_cast<unsigned>(
      std::min<std::size_t>(threads, std::max<std::size_t>(1, rows / std::max<std::size_t>(1, options.min_rows_per_thread))));

  detail::GroupTable table(key_space, request.aggregates.size());
  if (threads <= 1) {
    scan(0, rows, table);
  } else {
    std::vector<detail::GroupTable> partials(threads, detail::GroupTable(key_space, request.aggregates.size()));
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> workers;
      const std::size_t chunk = (rows + threads - 1) / threads;
      for (unsigned t = 0; t < threads; ++t) {
        workers.emplace_back([&, t] {
          try {
            scan(std::min(rows, t * chunk), std::min(rows, (t + 1) * chunk), partials[t]);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    for (const auto& partial : partials) table.merge(partial);
  }

  std::vector<GroupRow> out;
  table.for_each_group([&](std::uint64_t key, std::uint64_t count, std::span<const detail::Accumulator> accs) {
    GroupRow row;
    row.count = count;
    for (std::size_t p = 0; p < axes.size(); ++p) {
      const auto dim = std::max<std::uint64_t>(axes[p].dimension, 1);
      row.keys.push_back(axes[p].key(static_cast<std::uint32_t>((key / strides[p]) % dim)));
    }
    for (std::size_t i = 0; i < request.aggregates.size(); ++i)
      row.values.push_back(accs[i].result(request.aggregates[i].op, count));
    out.push_back(std::move(row));
  });
  return densify(request.partitions, request.aggregates, std::move(out));
}

/// Columnar statistics kernel; same contract as facet_stats().
inline FacetStats scan_stats(const Dataset& dataset, std::string_view facet_name) {
  const Column& column = dataset.column(facet_name);
  FacetStats stats;
  switch (column.kind()) {
    case FacetKind::continuous: {
      std::vector<double> present;
      present.reserve(column.size());
      for (double v : column.numbers())
        if (!std::isnan(v)) present.push_back(v);
      stats.missing_count = column.size() - present.size();
      if (present.empty()) break;
      std::sort(present.begin(), present.end());
      stats.min = Value{present.front()};
      stats.max = Value{present.back()};
      stats.distinct_count = static_cast<std::size_t>(std::unique(present.begin(), present.end()) - present.begin());
      break;
    }
    case FacetKind::datetime: {
      std::vector<std::int64_t> present;
      for (auto t : column.times())
        if (t != Column::kMissingTime) present.push_back(t);
      stats.missing_count = column.size() - present.size();
      if (present.empty()) break;
      std::sort(present.begin(), present.end());
      stats.min = Value{Timestamp{present.front()}};
      stats.max = Value{Timestamp{present.back()}};
      stats.distinct_count = static_cast<std::size_t>(std::unique(present.begin(), present.end()) - present.begin());
      break;
    }
    default: {
      const auto& dict = column.dictionary();
      std::vector<std::size_t> freq(dict.size(), 0);
      for (auto c : column.codes()) {
        if (c == Column::kMissingCode)
          ++stats.missing_count;
        else
          ++freq[c];
      }
      std::vector<std::uint32_t> used;
      for (std::uint32_t c = 0; c < dict.size(); ++c)
        if (freq[c]) used.push_back(c);
      stats.distinct_count = used.size();
      if (used.empty()) break;
      std::sort(used.begin(), used.end(), [&](auto a, auto b) { return dict[a] < dict[b]; });
      stats.min = Value{dict[used.front()]};
      stats.max = Value{dict[used.back()]};
      if (column.kind() == FacetKind::categorical) {
        std::stable_sort(used.begin(), used.end(), [&](auto a, auto b) { return freq[a] > freq[b]; });
        for (std::size_t i = 0; i < used.size() && i < kSampleCategoryLimit; ++i)
          stats.sample_categories.push_back({dict[used[i]], freq[used[i]]});
      }
      break;
    }
  }
  return stats;
}

/// In-process columnar backend.
class MemoryBackend : public Backend {
 public:
  explicit MemoryBackend(std::shared_ptr<const Dataset> dataset, AggregateOptions options = {})
      : dataset_(std::move(dataset)), options_(options) {}

  const DatasetDescriptor& descriptor() const override { return dataset_->descriptor(); }

  std::vector<GroupRow> aggregate(const AggregateRequest& request, std::stop_token stop = {}) override {
    return spot::aggregate(*dataset_, request, options_, stop);
  }

  FacetStats scan_stats(std::string_view facet) override { return spot::scan_stats(*dataset_, facet); }

  const std::shared_ptr<const Dataset>& dataset() const { return dataset_; }

 private:
  std::shared_ptr<const Dataset> dataset_;
  AggregateOptions options_;
};

}  // namespace spot
