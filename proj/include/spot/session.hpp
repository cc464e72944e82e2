#pragma once

#include <functional>
#include <memory>

#include "spot/json_io.hpp"

namespace spot {

inline constexpr int kSessionFormatVersion = 1;
inline constexpr std::string_view kSessionExtension = ".spot.json";

struct ChartState {
  Filter filter;
  /// Grid geometry and other dashboard settings; stored, never interpreted.
  Json layout = Json::object();
  friend bool operator==(const ChartState&, const ChartState&) = default;
};

/// Everything needed to show an analysis again: dataset descriptor (no
/// rows), chart definitions with selections, and the last results.
struct Session {
  int format_version = kSessionFormatVersion;
  std::vector<DatasetDescriptor> datasets;
  std::vector<ChartState> charts;
  std::uint64_t revision = 0;
  bool saved_stale = false;
  bool include_self = false;
  std::map<std::string, FilterResult> cached_results;

  std::vector<Filter> filters() const {
    std::vector<Filter> out;
    for (const auto& c : charts) out.push_back(c.filter);
    return out;
  }

  friend bool operator==(const Session&, const Session&) = default;
};

/// Captures a view; layouts are keyed by filter id. The document is marked
/// stale when some filter has no result for the current revision.
inline Session make_session(const ViewSnapshot& snap, const std::map<std::string, Json>& layouts = {}) {
  Session s;
  s.datasets.push_back(snap.descriptor);
  s.revision = snap.revision;
  s.include_self = snap.include_self;
  s.saved_stale = !snap.settled;
  for (const auto& f : snap.filters) {
    ChartState c{f, Json::object()};
    if (auto it = layouts.find(f.id); it != layouts.end()) c.layout = it->second;
    s.charts.push_back(std::move(c));
    if (auto it = snap.results.find(f.id); it != snap.results.end()) s.cached_results.emplace(f.id, it->second);
  }
  return s;
}

inline Json to_json(const Session& s) {
  Json datasets = Json::array(), charts = Json::array(), cached = Json::object();
  for (const auto& d : s.datasets) datasets.push_back(to_json(d));
  for (const auto& c : s.charts) {
    Json j = to_json(c.filter);
    j["layout"] = c.layout;
    charts.push_back(std::move(j));
  }
  for (const auto& [id, r] : s.cached_results) {
    Json j{{"revision", r.revision}};
    if (r.error)
      j["error"] = to_json(*r.error);
    else
      j["rows"] = to_json(r.rows);
    cached[id] = std::move(j);
  }
  return Json{{"formatVersion", s.format_version},
              {"datasets", datasets},
              {"charts", charts},
              {"cachedResults",
               {{"revision", s.revision}, {"savedStale", s.saved_stale}, {"includeSelf", s.include_self}, {"filters", cached}}}};
}

/// Canonical bytes: identical sessions give identical output.
inline std::string save_session(const Session& s) { return canonical_dump(to_json(s)); }

/// Waits for nothing: an in-flight update is recorded as savedStale.
inline std::string save_session(const DataView& view, const std::map<std::string, Json>& layouts = {}) {
  return save_session(make_session(view.snapshot(), layouts));
}

inline Warnings session_warnings(const Session& s) {
  Warnings w;
  if (s.saved_stale)
    w.push_back({WarningCode::SavedStale, "cachedResults", "saved while an update was in flight; cached results may mix revisions"});
  return w;
}

namespace session_detail {

[[noreturn]] inline void invalid(const std::string& path, const std::string& message) {
  throw DocumentError(ErrorCode::ValidationError, path, message);
}

}  // namespace session_detail

/// Checks cross-references: charts against the dataset descriptor, unique
/// ids, cached results against charts and revision.
inline void validate_session(const Session& s) {
  using session_detail::invalid;
  if (s.datasets.size() > 1) invalid("/datasets", "a session holds at most one dataset");
  if (!s.charts.empty() && s.datasets.empty()) invalid("/datasets", "charts need a dataset descriptor");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < s.charts.size(); ++i) {
    const auto& f = s.charts[i].filter;
    const auto path = "/charts/" + std::to_string(i);
    if (!ids.insert(f.id).second) invalid(path + "/id", "chart '" + f.id + "' appears twice");
    if (!s.charts[i].layout.is_object()) invalid(path + "/layout", "chart '" + f.id + "': layout must be an object");
    try {
      validate_filter(s.datasets.front(), f);
    } catch (const Error& e) {
      invalid(path, "chart '" + f.id + "': " + e.detail());
    }
  }
  for (const auto& [id, r] : s.cached_results) {
    const auto path = json_detail::at("/cachedResults/filters", id);
    if (!ids.count(id)) invalid(path, "cached result for unknown chart '" + id + "'");
    if (r.revision > s.revision) invalid(path + "/revision", "cached result is newer than the session revision");
  }
}

inline Session session_from_json(const Json& j) {
  using namespace json_detail;
  const std::string root;
  object(j, "/");
  static const std::set<std::string> allowed = {"formatVersion", "datasets", "charts", "cachedResults"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) fail("/" + it.key(), "unknown top-level member");

  Session s;
  const auto& version = member(j, "formatVersion", root);
  auto v = integer(version, "/formatVersion");
  if (v > kSessionFormatVersion)
    throw DocumentError(ErrorCode::UnsupportedVersion, "/formatVersion",
                        "format version " + std::to_string(v) + " is newer than supported version " +
                            std::to_string(kSessionFormatVersion));
  if (v < 1) fail("/formatVersion", "format version must be at least 1");
  s.format_version = static_cast<int>(v);

  const auto& datasets = array(member(j, "datasets", root), "/datasets");
  for (std::size_t i = 0; i < datasets.size(); ++i) s.datasets.push_back(descriptor_from_json(datasets[i], at("/datasets", i)));

  const auto& charts = array(member(j, "charts", root), "/charts");
  for (std::size_t i = 0; i < charts.size(); ++i) {
    const auto path = at("/charts", i);
    ChartState c{filter_from_json(charts[i], path), Json::object()};
    if (const auto* layout = optional_member(charts[i], "layout", path)) c.layout = *layout;
    s.charts.push_back(std::move(c));
  }

  const auto& cached = object(member(j, "cachedResults", root), "/cachedResults");
  s.revision = count(member(cached, "revision", "/cachedResults"), "/cachedResults/revision");
  if (const auto* stale = optional_member(cached, "savedStale", "/cachedResults"))
    s.saved_stale = boolean(*stale, "/cachedResults/savedStale");
  if (const auto* self = optional_member(cached, "includeSelf", "/cachedResults"))
    s.include_self = boolean(*self, "/cachedResults/includeSelf");
  const auto& filters = object(member(cached, "filters", "/cachedResults"), "/cachedResults/filters");
  for (auto it = filters.begin(); it != filters.end(); ++it) {
    const std::string& id = it.key();
    const Json& entry = it.value();
    const auto path = at("/cachedResults/filters", id);
    FilterResult r;
    r.revision = count(member(entry, "revision", path), path + "/revision");
    if (const auto* err = optional_member(entry, "error", path)) {
      auto name = string(member(*err, "code", path + "/error"), path + "/error/code");
      auto code = error_code_from_string(name);
      if (!code) fail(path + "/error/code", "unknown error code '" + name + "'");
      r.error = EventError{*code, string(member(*err, "message", path + "/error"), path + "/error/message")};
    } else {
      r.rows = group_rows_from_json(member(entry, "rows", path), path + "/rows");
    }
    s.cached_results.emplace(id, std::move(r));
  }
  validate_session(s);
  return s;
}

/// Parses and validates a session document. Nothing is returned unless the
/// whole document is valid.
inline Session load_session(std::string_view bytes) {
  Json j;
  try {
    j = Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::parse_error& e) {
    throw DocumentError(ErrorCode::ParseError, "/", "byte " + std::to_string(e.byte) + ": not valid JSON");
  }
  return session_from_json(j);
}

/// Read-only view over cached results; never touches a backend.
class FrozenView {
 public:
  explicit FrozenView(Session session, std::vector<std::string> mismatches = {})
      : session_(std::move(session)), mismatches_(std::move(mismatches)) {}

  const Session& session() const { return session_; }
  std::uint64_t revision() const { return session_.revision; }
  std::vector<Filter> filters() const { return session_.filters(); }
  /// Why the session could not be restored live.
  const std::vector<std::string>& mismatches() const { return mismatches_; }

  const FilterResult* result(std::string_view filter_id) const {
    auto it = session_.cached_results.find(std::string(filter_id));
    return it == session_.cached_results.end() ? nullptr : &it->second;
  }

  /// Cached results shaped as the events a live view would have delivered.
  std::vector<UpdateEvent> events() const {
    std::vector<UpdateEvent> out;
    for (const auto& c : session_.charts) {
      if (const auto* r = result(c.filter.id))
        out.push_back(UpdateEvent{r->revision, c.filter.id, r->rows, r->error, out.size()});
    }
    return out;
  }

 private:
  Session session_;
  std::vector<std::string> mismatches_;
};

/// Differences that stop a live restore: a session facet missing from the
/// live dataset or with another kind. Extra live facets are fine.
inline std::vector<std::string> facet_mismatches(const DatasetDescriptor& saved, const DatasetDescriptor& live) {
  std::vector<std::string> out;
  if (saved.id != live.id) out.push_back("dataset id '" + live.id + "' differs from '" + saved.id + "'");
  for (const auto& f : saved.facets) {
    const Facet* g = live.find_facet(f.name);
    if (!g)
      out.push_back("facet '" + f.name + "' is missing");
    else if (g->kind != f.kind)
      out.push_back("facet '" + f.name + "' is " + std::string(to_string(g->kind)) + ", session expects " +
                    std::string(to_string(f.kind)));
  }
  return out;
}

struct RestoreResult {
  std::unique_ptr<DataView> live;
  std::optional<FrozenView> frozen;
  /// Stream of the update triggered on the live view.
  UpdateStream update;

  bool is_live() const { return live != nullptr; }
};

/// Finds a backend for a dataset id, or null when it is not available.
using BackendLookup = std::function<std::shared_ptr<Backend>(const std::string& dataset_id)>;

/// Rebuilds a live view when the dataset is available with compatible
/// facets, otherwise falls back to a frozen view of the cached results.
inline RestoreResult restore(const Session& session, const BackendLookup& lookup, ViewOptions options = {}) {
  RestoreResult out;
  if (session.datasets.empty()) {
    out.frozen.emplace(session, std::vector<std::string>{"session has no dataset"});
    return out;
  }
  const auto& saved = session.datasets.front();
  auto backend = lookup ? lookup(saved.id) : nullptr;
  if (!backend) {
    out.frozen.emplace(session, std::vector<std::string>{"dataset '" + saved.id + "' is not available"});
    return out;
  }
  auto mismatches = facet_mismatches(saved, backend->descriptor());
  if (!mismatches.empty()) {
    out.frozen.emplace(session, std::move(mismatches));
    return out;
  }
  options.include_self = session.include_self;
  auto view = std::make_unique<DataView>(std::move(backend), std::move(options));
  try {
    out.update = view->replace_filters(session.filters());
  } catch (const Error& e) {
    out.frozen.emplace(session, std::vector<std::string>{e.detail()});
    return out;
  }
  out.live = std::move(view);
  return out;
}

}  // namespace spot
