#pragma once

#include <nlohmann/json.hpp>

#include "spot/dataview.hpp"

namespace spot {

using Json = nlohmann::json;

/// Compact canonical text: sorted keys (nlohmann objects are ordered maps),
/// shortest round-trip floats, trailing newline.
inline std::string canonical_dump(const Json& j) { return j.dump() + "\n"; }

namespace json_detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& message) {
  throw DocumentError(ErrorCode::ParseError, path.empty() ? "/" : path, message);
}

/// JSON pointer step; '~' and '/' in keys are escaped.
inline std::string at(const std::string& path, std::string_view key) {
  std::string out = path + "/";
  for (char c : key) {
    if (c == '~')
      out += "~0";
    else if (c == '/')
      out += "~1";
    else
      out += c;
  }
  return out;
}
inline std::string at(const std::string& path, std::size_t index) { return path + "/" + std::to_string(index); }

inline const Json& object(const Json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  return j;
}

inline const Json& array(const Json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array");
  return j;
}

inline const Json& member(const Json& j, std::string_view key, const std::string& path) {
  object(j, path);
  auto it = j.find(key);
  if (it == j.end()) fail(at(path, key), "missing member");
  return *it;
}

inline const Json* optional_member(const Json& j, std::string_view key, const std::string& path) {
  object(j, path);
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return nullptr;
  return &*it;
}

inline std::string string(const Json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "expected a finite number");
  return v;
}

inline std::uint64_t count(const Json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
    fail(path, "expected a non-negative integer");
  return j.get<std::uint64_t>();
}

inline std::int64_t integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<std::int64_t>();
}

inline bool boolean(const Json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected a boolean");
  return j.get<bool>();
}

}  // namespace json_detail

// ---- values and descriptors ----

inline Json to_json(const Value& v) {
  if (v.is_missing()) return nullptr;
  if (v.is_number()) return v.number();
  if (v.is_time()) return format_timestamp(v.time());
  return v.label();
}

inline Json to_json(const Facet& f) {
  Json j{{"name", f.name}, {"kind", std::string(to_string(f.kind))}};
  if (!f.description.empty()) j["description"] = f.description;
  if (!f.units.empty()) j["units"] = f.units;
  return j;
}

inline Facet facet_from_json(const Json& j, const std::string& path) {
  using namespace json_detail;
  Facet f;
  f.name = string(member(j, "name", path), at(path, "name"));
  auto kind = string(member(j, "kind", path), at(path, "kind"));
  auto k = facet_kind_from_string(kind);
  if (!k) fail(at(path, "kind"), "unknown facet kind '" + kind + "'");
  f.kind = *k;
  if (const auto* d = optional_member(j, "description", path)) f.description = string(*d, at(path, "description"));
  if (const auto* u = optional_member(j, "units", path)) f.units = string(*u, at(path, "units"));
  return f;
}

inline Json to_json(const DatasetDescriptor& d) {
  Json facets = Json::array();
  for (const auto& f : d.facets) facets.push_back(to_json(f));
  return Json{{"id", d.id}, {"name", d.name}, {"description", d.description}, {"rowCount", d.row_count}, {"facets", facets}};
}

inline DatasetDescriptor descriptor_from_json(const Json& j, const std::string& path) {
  using namespace json_detail;
  DatasetDescriptor d;
  d.id = string(member(j, "id", path), at(path, "id"));
  d.name = string(member(j, "name", path), at(path, "name"));
  if (const auto* desc = optional_member(j, "description", path)) d.description = string(*desc, at(path, "description"));
  if (const auto* rc = optional_member(j, "rowCount", path)) d.row_count = count(*rc, at(path, "rowCount"));
  const auto fpath = at(path, "facets");
  const auto& facets = array(member(j, "facets", path), fpath);
  std::set<std::string> names;
  for (std::size_t i = 0; i < facets.size(); ++i) {
    d.facets.push_back(facet_from_json(facets[i], at(fpath, i)));
    if (!names.insert(d.facets.back().name).second) fail(at(fpath, i), "duplicate facet '" + d.facets.back().name + "'");
  }
  return d;
}

inline Json to_json(const FacetStats& s) {
  Json cats = Json::array();
  for (const auto& c : s.sample_categories) cats.push_back(Json{{"label", c.label}, {"count", c.count}});
  return Json{{"min", to_json(s.min)},
              {"max", to_json(s.max)},
              {"distinctCount", s.distinct_count},
              {"missingCount", s.missing_count},
              {"sampleCategories", cats}};
}

// ---- query specs ----

inline Json to_json(const PartitionSpec& p) {
  Json j{{"facet", p.facet}};
  if (p.is_continuous()) {
    j["grouping"] = "bins";
    j["lo"] = p.bins().lo;
    j["hi"] = p.bins().hi;
    j["binCount"] = p.bins().bin_count;
  } else if (p.is_categorical()) {
    j["grouping"] = "categories";
    if (p.categories().categories) j["categories"] = *p.categories().categories;
  } else {
    j["grouping"] = "interval";
    j["interval"] = std::string(to_string(p.datetime().interval));
  }
  return j;
}

inline PartitionSpec partition_from_json(const Json& j, const std::string& path) {
  using namespace json_detail;
  PartitionSpec p;
  p.facet = string(member(j, "facet", path), at(path, "facet"));
  auto grouping = string(member(j, "grouping", path), at(path, "grouping"));
  if (grouping == "bins") {
    ContinuousBins b;
    b.lo = number(member(j, "lo", path), at(path, "lo"));
    b.hi = number(member(j, "hi", path), at(path, "hi"));
    auto n = integer(member(j, "binCount", path), at(path, "binCount"));
    if (n < 1 || n > kMaxBinCount) fail(at(path, "binCount"), "bin count must be within [1, 10000]");
    b.bin_count = static_cast<int>(n);
    if (!(b.lo < b.hi)) fail(path, "lo must be below hi");
    p.grouping = b;
  } else if (grouping == "categories") {
    CategoryGrouping g;
    if (const auto* list = optional_member(j, "categories", path)) {
      const auto lpath = at(path, "categories");
      array(*list, lpath);
      std::vector<std::string> labels;
      for (std::size_t i = 0; i < list->size(); ++i) labels.push_back(string((*list)[i], at(lpath, i)));
      g.categories = std::move(labels);
    }
    p.grouping = std::move(g);
  } else if (grouping == "interval") {
    auto name = string(member(j, "interval", path), at(path, "interval"));
    auto interval = time_interval_from_string(name);
    if (!interval) fail(at(path, "interval"), "unknown interval '" + name + "'");
    p.grouping = DatetimeGrouping{*interval};
  } else {
    fail(at(path, "grouping"), "unknown grouping '" + grouping + "'");
  }
  return p;
}

inline Json to_json(const AggregateSpec& a) {
  Json j{{"op", std::string(to_string(a.op))}};
  if (a.facet) j["facet"] = *a.facet;
  return j;
}

inline AggregateSpec aggregate_from_json(const Json& j, const std::string& path) {
  using namespace json_detail;
  AggregateSpec a;
  auto name = string(member(j, "op", path), at(path, "op"));
  auto op = aggregate_op_from_string(name);
  if (!op) fail(at(path, "op"), "unknown aggregate '" + name + "'");
  a.op = *op;
  if (const auto* f = optional_member(j, "facet", path)) a.facet = string(*f, at(path, "facet"));
  return a;
}

inline Json to_json(const Selection& s) {
  if (const auto* r = std::get_if<RangeSelection>(&s)) return Json{{"range", Json::array({r->lo, r->hi})}};
  Json labels = Json::array();
  for (const auto& l : std::get<CategorySelection>(s).labels) labels.push_back(l);
  return Json{{"categories", labels}};
}

inline Selection selection_from_json(const Json& j, const std::string& path) {
  using namespace json_detail;
  object(j, path);
  if (j.contains("range")) {
    const auto rpath = at(path, "range");
    const auto& r = array(j["range"], rpath);
    if (r.size() != 2) fail(rpath, "range needs [lo, hi]");
    return RangeSelection{number(r[0], at(rpath, 0)), number(r[1], at(rpath, 1))};
  }
  if (j.contains("categories")) {
    const auto cpath = at(path, "categories");
    const auto& c = array(j["categories"], cpath);
    CategorySelection s;
    for (std::size_t i = 0; i < c.size(); ++i) s.labels.insert(string(c[i], at(cpath, i)));
    return s;
  }
  fail(path, "selection needs 'range' or 'categories'");
}

inline Json to_json(const FilterSelection& s) {
  Json j = Json::array();
  for (const auto& one : s) j.push_back(one ? to_json(*one) : Json(nullptr));
  return j;
}

inline FilterSelection filter_selection_from_json(const Json& j, const std::string& path) {
  using namespace json_detail;
  FilterSelection out;
  if (j.is_null()) return out;
  array(j, path);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].is_null())
      out.emplace_back();
    else
      out.emplace_back(selection_from_json(j[i], at(path, i)));
  }
  return out;
}

inline Json to_json(const Filter& f) {
  Json parts = Json::array(), aggs = Json::array();
  for (const auto& p : f.partitions) parts.push_back(to_json(p));
  for (const auto& a : f.aggregates) aggs.push_back(to_json(a));
  return Json{{"id", f.id}, {"chartKind", f.chart_kind}, {"partitions", parts}, {"aggregates", aggs}, {"selection", to_json(f.selection)}};
}

inline Filter filter_from_json(const Json& j, const std::string& path) {
  using namespace json_detail;
  Filter f;
  f.id = string(member(j, "id", path), at(path, "id"));
  if (const auto* k = optional_member(j, "chartKind", path)) f.chart_kind = string(*k, at(path, "chartKind"));
  const auto ppath = at(path, "partitions");
  const auto& parts = array(member(j, "partitions", path), ppath);
  for (std::size_t i = 0; i < parts.size(); ++i) f.partitions.push_back(partition_from_json(parts[i], at(ppath, i)));
  if (const auto* aggs = optional_member(j, "aggregates", path)) {
    const auto apath = at(path, "aggregates");
    array(*aggs, apath);
    for (std::size_t i = 0; i < aggs->size(); ++i) f.aggregates.push_back(aggregate_from_json((*aggs)[i], at(apath, i)));
  }
  if (const auto* sel = optional_member(j, "selection", path)) f.selection = filter_selection_from_json(*sel, at(path, "selection"));
  return f;
}

// ---- results ----

inline Json to_json(const GroupKey& k) {
  if (const auto* b = std::get_if<BinKey>(&k)) return Json{{"bin", b->index}, {"label", b->label}};
  if (const auto* c = std::get_if<CategoryKey>(&k)) return Json{{"category", c->label}};
  const auto& t = std::get<TimeKey>(k);
  return Json{{"time", t.start.ms}, {"label", format_timestamp(t.start)}};
}

inline GroupKey group_key_from_json(const Json& j, const std::string& path) {
  using namespace json_detail;
  object(j, path);
  if (j.contains("bin")) {
    auto index = integer(j["bin"], at(path, "bin"));
    if (index < 0 || index >= kMaxBinCount) fail(at(path, "bin"), "bin index out of range");
    return BinKey{static_cast<int>(index), string(member(j, "label", path), at(path, "label"))};
  }
  if (j.contains("category")) return CategoryKey{string(j["category"], at(path, "category"))};
  if (j.contains("time")) return TimeKey{Timestamp{integer(j["time"], at(path, "time"))}};
  fail(path, "key needs 'bin', 'category' or 'time'");
}

inline Json to_json(const GroupRow& r) {
  Json keys = Json::array(), values = Json::array();
  for (const auto& k : r.keys) keys.push_back(to_json(k));
  for (const auto& v : r.values) values.push_back(v ? Json(*v) : Json(nullptr));
  return Json{{"keys", keys}, {"count", r.count}, {"values", values}};
}

inline GroupRow group_row_from_json(const Json& j, const std::string& path) {
  using namespace json_detail;
  GroupRow r;
  const auto kpath = at(path, "keys");
  const auto& keys = array(member(j, "keys", path), kpath);
  for (std::size_t i = 0; i < keys.size(); ++i) r.keys.push_back(group_key_from_json(keys[i], at(kpath, i)));
  r.count = count(member(j, "count", path), at(path, "count"));
  const auto vpath = at(path, "values");
  const auto& values = array(member(j, "values", path), vpath);
  for (std::size_t i = 0; i < values.size(); ++i)
    r.values.push_back(values[i].is_null() ? std::nullopt : std::optional<double>(number(values[i], at(vpath, i))));
  return r;
}

inline Json to_json(const std::vector<GroupRow>& rows) {
  Json j = Json::array();
  for (const auto& r : rows) j.push_back(to_json(r));
  return j;
}

inline std::vector<GroupRow> group_rows_from_json(const Json& j, const std::string& path) {
  json_detail::array(j, path);
  std::vector<GroupRow> rows;
  for (std::size_t i = 0; i < j.size(); ++i) rows.push_back(group_row_from_json(j[i], json_detail::at(path, i)));
  return rows;
}

inline Json to_json(const EventError& e) { return Json{{"code", std::string(to_string(e.code))}, {"message", e.message}}; }

inline Json to_json(const UpdateEvent& e) {
  Json j{{"type", "update"}, {"revision", e.revision}, {"filterId", e.filter_id}, {"sequence", e.sequence}};
  if (e.error)
    j["error"] = to_json(*e.error);
  else
    j["rows"] = to_json(e.rows);
  return j;
}

inline UpdateEvent update_event_from_json(const Json& j, const std::string& path = "") {
  using namespace json_detail;
  UpdateEvent e;
  e.revision = count(member(j, "revision", path), at(path, "revision"));
  e.filter_id = string(member(j, "filterId", path), at(path, "filterId"));
  e.sequence = count(member(j, "sequence", path), at(path, "sequence"));
  if (const auto* err = optional_member(j, "error", path)) {
    const auto epath = at(path, "error");
    auto name = string(member(*err, "code", epath), at(epath, "code"));
    auto code = error_code_from_string(name);
    if (!code) fail(at(epath, "code"), "unknown error code '" + name + "'");
    e.error = EventError{*code, string(member(*err, "message", epath), at(epath, "message"))};
  } else {
    e.rows = group_rows_from_json(member(j, "rows", path), at(path, "rows"));
  }
  return e;
}

inline Json to_json(const Warning& w) {
  return Json{{"code", std::string(to_string(w.code))}, {"subject", w.subject}, {"message", w.message}};
}

inline Json error_json(const Error& e) {
  Json j{{"code", std::string(to_string(e.code()))}, {"message", e.detail()}};
  if (const auto* d = dynamic_cast<const DocumentError*>(&e)) j["path"] = d->path();
  if (const auto* r = dynamic_cast<const MalformedRowError*>(&e)) j["row"] = r->row();
  return Json{{"error", j}};
}

// ---- view deltas ----

struct ViewDelta {
  enum class Op { add, remove, select } op = Op::add;
  std::optional<Filter> filter;  // add
  std::string filter_id;         // remove, select
  FilterSelection selection;     // select; empty clears
};

inline Json to_json(const ViewDelta& d) {
  switch (d.op) {
    case ViewDelta::Op::add: return Json{{"op", "add"}, {"filter", to_json(*d.filter)}};
    case ViewDelta::Op::remove: return Json{{"op", "remove"}, {"filterId", d.filter_id}};
    case ViewDelta::Op::select: return Json{{"op", "select"}, {"filterId", d.filter_id}, {"selection", to_json(d.selection)}};
  }
  return nullptr;
}

inline ViewDelta view_delta_from_json(const Json& j, const std::string& path = "") {
  using namespace json_detail;
  ViewDelta d;
  auto op = string(member(j, "op", path), at(path, "op"));
  if (op == "add") {
    d.op = ViewDelta::Op::add;
    d.filter = filter_from_json(member(j, "filter", path), at(path, "filter"));
  } else if (op == "remove") {
    d.op = ViewDelta::Op::remove;
    d.filter_id = string(member(j, "filterId", path), at(path, "filterId"));
  } else if (op == "select") {
    d.op = ViewDelta::Op::select;
    d.filter_id = string(member(j, "filterId", path), at(path, "filterId"));
    if (const auto* s = optional_member(j, "selection", path)) d.selection = filter_selection_from_json(*s, at(path, "selection"));
  } else {
    fail(at(path, "op"), "unknown op '" + op + "'");
  }
  return d;
}

/// Applies a delta; the returned stream carries the new revision.
inline UpdateStream apply_delta(DataView& view, const ViewDelta& d) {
  switch (d.op) {
    case ViewDelta::Op::add: return view.add_filter(*d.filter);
    case ViewDelta::Op::remove: return view.remove_filter(d.filter_id);
    case ViewDelta::Op::select: return view.set_selection(d.filter_id, d.selection);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown delta");
}

}  // namespace spot
