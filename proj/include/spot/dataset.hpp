#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "spot/error.hpp"
#include "spot/value.hpp"

namespace spot {

struct Facet {
  std::string name;
  FacetKind kind = FacetKind::continuous;
  std::string description;
  std::string units;

  friend bool operator==(const Facet&, const Facet&) = default;
};

/// Everything about a dataset except its rows. Shared by both backends and
/// embedded in session documents.
struct DatasetDescriptor {
  std::string id;
  std::string name;
  std::string description;
  std::vector<Facet> facets;
  std::size_t row_count = 0;

  const Facet* find_facet(std::string_view facet_name) const {
    for (const auto& f : facets)
      if (f.name == facet_name) return &f;
    return nullptr;
  }

  const Facet& facet(std::string_view facet_name) const {
    if (const auto* f = find_facet(facet_name)) return *f;
    throw Error(ErrorCode::NotFound, "unknown facet '" + std::string(facet_name) + "'");
  }

  friend bool operator==(const DatasetDescriptor&, const DatasetDescriptor&) = default;
};

/// Columnar storage for one facet.
///
/// continuous: doubles, NaN marks missing.
/// datetime: epoch milliseconds, kMissingTime marks missing.
/// categorical/text: dictionary codes, kMissingCode marks missing.
class Column {
 public:
  static constexpr std::uint32_t kMissingCode = std::numeric_limits<std::uint32_t>::max();
  static constexpr std::int64_t kMissingTime = std::numeric_limits<std::int64_t>::min();

  explicit Column(FacetKind kind = FacetKind::continuous) : kind_(kind) {}

  FacetKind kind() const { return kind_; }

  std::size_t size() const {
    switch (kind_) {
      case FacetKind::continuous: return numbers_.size();
      case FacetKind::datetime: return times_.size();
      default: return codes_.size();
    }
  }

  /// Appends one cell; throws KindMismatch when the value does not conform.
  void push_back(const Value& v) {
    if (v.is_missing()) {
      push_missing();
      return;
    }
    switch (kind_) {
      case FacetKind::continuous:
        if (!v.is_number()) throw Error(ErrorCode::KindMismatch, "continuous column expects numbers");
        numbers_.push_back(v.number());
        return;
      case FacetKind::datetime:
        if (!v.is_time()) throw Error(ErrorCode::KindMismatch, "datetime column expects timestamps");
        times_.push_back(v.time().ms);
        return;
      default:
        if (!v.is_label()) throw Error(ErrorCode::KindMismatch, "label column expects strings");
        codes_.push_back(intern(v.label()));
        return;
    }
  }

  void push_missing() {
    switch (kind_) {
      case FacetKind::continuous: numbers_.push_back(std::numeric_limits<double>::quiet_NaN()); return;
      case FacetKind::datetime: times_.push_back(kMissingTime); return;
      default: codes_.push_back(kMissingCode); return;
    }
  }

  void reserve(std::size_t n) {
    switch (kind_) {
      case FacetKind::continuous: numbers_.reserve(n); return;
      case FacetKind::datetime: times_.reserve(n); return;
      default: codes_.reserve(n); return;
    }
  }

  bool is_missing(std::size_t row) const {
    switch (kind_) {
      case FacetKind::continuous: return std::isnan(numbers_[row]);
      case FacetKind::datetime: return times_[row] == kMissingTime;
      default: return codes_[row] == kMissingCode;
    }
  }

  Value value(std::size_t row) const {
    if (is_missing(row)) return Value{};
    switch (kind_) {
      case FacetKind::continuous: return Value{numbers_[row]};
      case FacetKind::datetime: return Value{Timestamp{times_[row]}};
      default: return Value{dictionary_[codes_[row]]};
    }
  }

  std::span<const double> numbers() const { return numbers_; }
  std::span<const std::int64_t> times() const { return times_; }
  std::span<const std::uint32_t> codes() const { return codes_; }
  const std::vector<std::string>& dictionary() const { return dictionary_; }

 private:
  std::uint32_t intern(const std::string& label) {
    auto [it, inserted] = index_.try_emplace(label, static_cast<std::uint32_t>(dictionary_.size()));
    if (inserted) dictionary_.push_back(label);
    return it->second;
  }

  FacetKind kind_;
  std::vector<double> numbers_;
  std::vector<std::int64_t> times_;
  std::vector<std::uint32_t> codes_;
  std::vector<std::string> dictionary_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// Immutable once built; share through shared_ptr<const Dataset>.
class Dataset {
 public:
  /// row_count in the descriptor is ignored and recomputed from the columns.
  static std::shared_ptr<const Dataset> create(DatasetDescriptor descriptor, std::vector<Column> columns) {
    if (descriptor.facets.size() != columns.size())
      throw Error(ErrorCode::InvalidArgument, "facet/column count mismatch");
    std::set<std::string> names;
    for (std::size_t i = 0; i < descriptor.facets.size(); ++i) {
      const auto& f = descriptor.facets[i];
      if (f.name.empty()) throw Error(ErrorCode::InvalidArgument, "facet name must be non-empty");
      if (!names.insert(f.name).second) throw Error(ErrorCode::InvalidArgument, "duplicate facet name '" + f.name + "'");
      if (columns[i].kind() != f.kind) throw Error(ErrorCode::KindMismatch, "column kind differs for facet '" + f.name + "'");
    }
    std::size_t rows = columns.empty() ? 0 : columns.front().size();
    for (const auto& c : columns)
      if (c.size() != rows) throw Error(ErrorCode::InvalidArgument, "columns differ in length");
    descriptor.row_count = rows;
    return std::shared_ptr<const Dataset>(new Dataset(std::move(descriptor), std::move(columns)));
  }

  const DatasetDescriptor& descriptor() const { return descriptor_; }
  const std::string& id() const { return descriptor_.id; }
  const std::string& name() const { return descriptor_.name; }
  std::size_t row_count() const { return descriptor_.row_count; }
  const std::vector<Facet>& facets() const { return descriptor_.facets; }

  std::optional<std::size_t> facet_index(std::string_view facet_name) const {
    for (std::size_t i = 0; i < descriptor_.facets.size(); ++i)
      if (descriptor_.facets[i].name == facet_name) return i;
    return std::nullopt;
  }

  const Column& column(std::size_t index) const { return columns_.at(index); }

  const Column& column(std::string_view facet_name) const {
    auto idx = facet_index(facet_name);
    if (!idx) throw Error(ErrorCode::NotFound, "unknown facet '" + std::string(facet_name) + "'");
    return columns_[*idx];
  }

 private:
  Dataset(DatasetDescriptor d, std::vector<Column> c) : descriptor_(std::move(d)), columns_(std::move(c)) {}

  DatasetDescriptor descriptor_;
  std::vector<Column> columns_;
};

struct CategoryCount {
  std::string label;
  std::size_t count = 0;
  friend bool operator==(const CategoryCount&, const CategoryCount&) = default;
};

/// min/max are Missing when the facet has no non-missing values. For label
/// facets they are the lexicographic extremes.
struct FacetStats {
  Value min;
  Value max;
  std::size_t distinct_count = 0;
  std::size_t missing_count = 0;
  std::vector<CategoryCount> sample_categories;

  friend bool operator==(const FacetStats&, const FacetStats&) = default;
};

/// At most this many categories are reported, most frequent first, ties by label.
inline constexpr std::size_t kSampleCategoryLimit = 64;

/// Row-at-a-time reference computation over Values. The engine has its own
/// columnar kernel (scan_stats) that must agree with this one.
inline FacetStats facet_stats(const Dataset& dataset, std::string_view facet_name) {
  auto idx = dataset.facet_index(facet_name);
  if (!idx) throw Error(ErrorCode::NotFound, "unknown facet '" + std::string(facet_name) + "'");
  const Column& column = dataset.column(*idx);
  const FacetKind kind = column.kind();

  FacetStats stats;
  std::set<Value> distinct;
  std::map<std::string, std::size_t> frequencies;
  for (std::size_t row = 0; row < column.size(); ++row) {
    Value v = column.value(row);
    if (v.is_missing()) {
      ++stats.missing_count;
      continue;
    }
    if (stats.min.is_missing() || v < stats.min) stats.min = v;
    if (stats.max.is_missing() || stats.max < v) stats.max = v;
    if (kind == FacetKind::categorical) ++frequencies[v.label()];
    distinct.insert(std::move(v));
  }
  stats.distinct_count = distinct.size();

  if (kind == FacetKind::categorical) {
    for (auto& [label, count] : frequencies) stats.sample_categories.push_back({label, count});
    std::stable_sort(stats.sample_categories.begin(), stats.sample_categories.end(),
                     [](const CategoryCount& a, const CategoryCount& b) { return a.count > b.count; });
    if (stats.sample_categories.size() > kSampleCategoryLimit) stats.sample_categories.resize(kSampleCategoryLimit);
  }
  return stats;
}

inline constexpr std::string_view kProvenanceFacet = "_dataset";

/// Union-style concatenation restricted to the facets every input shares
/// (exact name and kind), plus a categorical "_dataset" facet naming each
/// row's source dataset.
inline std::shared_ptr<const Dataset> combine_datasets(std::span<const std::shared_ptr<const Dataset>> inputs) {
  if (inputs.size() < 2) throw Error(ErrorCode::InvalidArgument, "combine_datasets needs at least two datasets");

  std::vector<Facet> shared;
  for (const auto& facet : inputs.front()->facets()) {
    bool everywhere = true;
    for (const auto& other : inputs.subspan(1)) {
      auto idx = other->facet_index(facet.name);
      if (!idx) {
        everywhere = false;
        break;
      }
      if (other->facets()[*idx].kind != facet.kind)
        throw Error(ErrorCode::IncompatibleDatasets, "facet '" + facet.name + "' has different kinds across datasets");
    }
    if (everywhere) shared.push_back(facet);
  }
  if (shared.empty()) throw Error(ErrorCode::IncompatibleDatasets, "datasets share no facets");
  for (const auto& f : shared)
    if (f.name == kProvenanceFacet)
      throw Error(ErrorCode::IncompatibleDatasets, "inputs already carry a '_dataset' facet");

  DatasetDescriptor out;
  std::size_t total = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    out.id += (i ? "+" : "") + inputs[i]->id();
    out.name += (i ? " + " : "") + inputs[i]->name();
    total += inputs[i]->row_count();
  }
  out.description = "Combined dataset over shared facets";
  out.facets = shared;
  out.facets.push_back(Facet{std::string(kProvenanceFacet), FacetKind::categorical, "Source dataset", ""});

  std::vector<Column> columns;
  for (const auto& f : shared) {
    Column column(f.kind);
    column.reserve(total);
    for (const auto& input : inputs) {
      const Column& src = input->column(f.name);
      for (std::size_t row = 0; row < src.size(); ++row) column.push_back(src.value(row));
    }
    columns.push_back(std::move(column));
  }
  Column provenance(FacetKind::categorical);
  provenance.reserve(total);
  for (const auto& input : inputs) {
    Value label{input->name()};
    for (std::size_t row = 0; row < input->row_count(); ++row) provenance.push_back(label);
  }
  columns.push_back(std::move(provenance));
  return Dataset::create(std::move(out), std::move(columns));
}

inline std::shared_ptr<const Dataset> combine_datasets(std::initializer_list<std::shared_ptr<const Dataset>> inputs) {
  std::vector<std::shared_ptr<const Dataset>> v(inputs);
  return combine_datasets(std::span<const std::shared_ptr<const Dataset>>(v));
}

}  // namespace spot
