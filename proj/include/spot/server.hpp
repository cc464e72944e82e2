#pragma once

// HTTP service: dataset catalog, per-client data views with pushed updates
// over Server-Sent Events, uploads, and hosted sessions.

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "spot/engine.hpp"
#include "spot/ingest.hpp"
#include "spot/json_io.hpp"
#include "spot/session.hpp"
#include "spot/sql.hpp"

namespace spot::server {

inline constexpr std::size_t kDefaultMaxUploadBytes = std::size_t{256} << 20;
inline constexpr std::string_view kClientHeader = "X-Spot-Client";
inline constexpr std::string_view kDatabaseUrlEnv = "SPOT_DATABASE_URL";

struct DatasetEntry {
  std::string id;
  std::string name;
  std::string description;
  /// Exactly one of file and table is set.
  std::optional<std::string> file;
  std::optional<std::string> table;
  std::map<std::string, FacetKind> kinds;
  char delimiter = ',';
  /// Facets to index for table sources; all facets when absent.
  std::optional<std::vector<std::string>> indices;
};

struct ServerConfig {
  std::string listen = "127.0.0.1:8080";
  std::size_t pool_size = sql::kDefaultPoolSize;
  /// Global computation budget shared by every view; 0 picks a default.
  unsigned workers = 0;
  std::size_t max_upload_bytes = kDefaultMaxUploadBytes;
  /// Fallback when SPOT_DATABASE_URL is not set.
  std::optional<std::string> database_url;
  std::optional<std::string> static_dir;
  std::chrono::milliseconds heartbeat{15000};
  std::vector<DatasetEntry> datasets;
  /// Relative file paths resolve against this directory.
  std::filesystem::path base_dir = ".";
};

struct ListenAddress {
  std::string host;
  int port = 0;
};

inline ListenAddress parse_listen(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0)
    throw Error(ErrorCode::InvalidArgument, "listen address '" + std::string(text) + "' must be host:port");
  ListenAddress out{std::string(text.substr(0, colon)), 0};
  const auto port = text.substr(colon + 1);
  if (port.empty() || port.size() > 5 || !std::all_of(port.begin(), port.end(), [](char c) { return c >= '0' && c <= '9'; }))
    throw Error(ErrorCode::InvalidArgument, "listen port '" + std::string(port) + "' is not a number");
  out.port = std::stoi(std::string(port));
  if (out.port > 65535) throw Error(ErrorCode::InvalidArgument, "listen port " + std::string(port) + " is out of range");
  return out;
}

namespace detail {

inline void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, const std::string& path,
                       std::vector<std::string>& problems) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      problems.push_back(json_detail::at(path, it.key()) + ": unknown key");
  }
}

inline DatasetEntry entry_from_json(const Json& j, const std::string& path, std::vector<std::string>& problems) {
  using namespace json_detail;
  DatasetEntry e;
  object(j, path);
  check_keys(j, {"id", "name", "description", "file", "table", "kinds", "delimiter", "indices"}, path, problems);
  e.id = string(member(j, "id", path), at(path, "id"));
  if (e.id.empty()) problems.push_back(at(path, "id") + ": must not be empty");
  if (const auto* v = optional_member(j, "name", path)) e.name = string(*v, at(path, "name"));
  if (const auto* v = optional_member(j, "description", path)) e.description = string(*v, at(path, "description"));
  if (const auto* v = optional_member(j, "file", path)) e.file = string(*v, at(path, "file"));
  if (const auto* v = optional_member(j, "table", path)) e.table = string(*v, at(path, "table"));
  if (e.file.has_value() == e.table.has_value()) problems.push_back(path + ": needs exactly one of 'file' and 'table'");
  if (const auto* v = optional_member(j, "kinds", path)) {
    object(*v, at(path, "kinds"));
    for (auto it = v->begin(); it != v->end(); ++it) {
      const auto kp = at(at(path, "kinds"), it.key());
      auto kind = facet_kind_from_string(string(it.value(), kp));
      if (!kind)
        problems.push_back(kp + ": unknown kind '" + it.value().get<std::string>() + "'");
      else
        e.kinds[it.key()] = *kind;
    }
  }
  if (const auto* v = optional_member(j, "delimiter", path)) {
    auto d = string(*v, at(path, "delimiter"));
    if (d == "\\t") d = "\t";
    if (d != "," && d != ";" && d != "\t")
      problems.push_back(at(path, "delimiter") + ": must be one of ',', ';', '\\t'");
    else
      e.delimiter = d[0];
  }
  if (const auto* v = optional_member(j, "indices", path)) {
    array(*v, at(path, "indices"));
    e.indices.emplace();
    for (std::size_t i = 0; i < v->size(); ++i) e.indices->push_back(string((*v)[i], at(at(path, "indices"), i)));
  }
  return e;
}

}  // namespace detail

/// Validates the whole document and reports every offending entry at once.
inline ServerConfig config_from_json(const Json& j) {
  using namespace json_detail;
  ServerConfig c;
  std::vector<std::string> problems;
  auto attempt = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      problems.push_back(e.detail());
    }
  };
  object(j, "");
  detail::check_keys(j, {"listen", "poolSize", "workers", "maxUploadBytes", "databaseUrl", "staticDir", "heartbeatMs", "datasets"},
                     "", problems);
  attempt([&] {
    if (const auto* v = optional_member(j, "listen", "")) {
      c.listen = string(*v, "/listen");
      try {
        parse_listen(c.listen);
      } catch (const Error& e) {
        fail("/listen", e.detail());
      }
    }
  });
  attempt([&] {
    if (const auto* v = optional_member(j, "poolSize", "")) c.pool_size = count(*v, "/poolSize");
    if (c.pool_size == 0) fail("/poolSize", "must be at least 1");
  });
  attempt([&] {
    if (const auto* v = optional_member(j, "workers", "")) c.workers = static_cast<unsigned>(count(*v, "/workers"));
  });
  attempt([&] {
    if (const auto* v = optional_member(j, "maxUploadBytes", "")) c.max_upload_bytes = count(*v, "/maxUploadBytes");
  });
  attempt([&] {
    if (const auto* v = optional_member(j, "databaseUrl", "")) c.database_url = string(*v, "/databaseUrl");
  });
  attempt([&] {
    if (const auto* v = optional_member(j, "staticDir", "")) c.static_dir = string(*v, "/staticDir");
  });
  attempt([&] {
    if (const auto* v = optional_member(j, "heartbeatMs", "")) c.heartbeat = std::chrono::milliseconds(count(*v, "/heartbeatMs"));
  });
  if (const auto* list = optional_member(j, "datasets", "")) {
    attempt([&] { array(*list, "/datasets"); });
    if (list->is_array()) {
      std::map<std::string, std::size_t> seen;
      for (std::size_t i = 0; i < list->size(); ++i) {
        const auto path = at("/datasets", i);
        attempt([&] {
          auto e = detail::entry_from_json((*list)[i], path, problems);
          if (auto [it, fresh] = seen.emplace(e.id, i); !fresh)
            problems.push_back(path + ": duplicate id '" + e.id + "' (also /datasets/" + std::to_string(it->second) + ")");
          c.datasets.push_back(std::move(e));
        });
      }
    }
  }
  if (!problems.empty()) {
    std::string message = "invalid server config";
    for (const auto& p : problems) message += "\n  " + p;
    throw Error(ErrorCode::ValidationError, message);
  }
  return c;
}

inline ServerConfig load_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Json j;
  try {
    j = Json::parse(bytes);
  } catch (const Json::parse_error& e) {
    throw DocumentError(ErrorCode::ParseError, "/", std::string("config is not valid JSON: ") + e.what());
  }
  auto config = config_from_json(j);
  config.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return config;
}

/// SPOT_DATABASE_URL wins over the config value.
inline std::optional<std::string> resolve_database_url(const ServerConfig& config) {
  if (const char* env = std::getenv(std::string(kDatabaseUrlEnv).c_str()); env && *env) return std::string(env);
  return config.database_url;
}

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::Conflict: return 409;
    case ErrorCode::Backend: return 502;
    case ErrorCode::Cancelled: return 503;
    default: return 400;
  }
}

/// Hex string of the given number of random bits.
inline std::string random_hex(std::size_t bits) {
  static std::mutex mutex;
  static std::random_device device;
  std::lock_guard lock(mutex);
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < bits / 32; ++i) {
    auto word = static_cast<std::uint32_t>(device());
    for (int k = 0; k < 8; ++k) out += digits[(word >> (28 - 4 * k)) & 0xF];
  }
  return out;
}

struct CatalogEntry {
  std::string id;
  std::string name;
  std::string description;
  std::string source;  // file, table, upload
  std::shared_ptr<Backend> backend;
  /// Set when the source could not be loaded; such entries cannot back views.
  std::optional<std::string> degraded;
  Warnings warnings;

  bool ready() const { return backend && !degraded; }
};

inline Json to_json(const CatalogEntry& e) {
  Json j{{"id", e.id}, {"name", e.name}, {"description", e.description}, {"source", e.source},
         {"status", e.ready() ? "ready" : "degraded"}};
  if (e.degraded) j["message"] = *e.degraded;
  if (e.ready()) {
    j["rowCount"] = e.backend->descriptor().row_count;
    Json facets = Json::array();
    for (const auto& f : e.backend->descriptor().facets) facets.push_back(spot::to_json(f));
    j["facets"] = std::move(facets);
  }
  if (!e.warnings.empty()) {
    Json w = Json::array();
    for (const auto& x : e.warnings) w.push_back(spot::to_json(x));
    j["warnings"] = std::move(w);
  }
  return j;
}

inline std::shared_ptr<const Dataset> ingest_bytes(std::string_view bytes, bool json, char delimiter,
                                                   const std::map<std::string, FacetKind>& kinds, LoadOptions options,
                                                   Warnings* warnings = nullptr) {
  auto table = parse_input(bytes, json ? InputFormat::json : InputFormat::csv, CsvDialect{delimiter});
  auto loaded = load_dataset(table, kinds, options);
  if (warnings) *warnings = std::move(loaded.warnings);
  return loaded.dataset;
}

/// Per-view outbox of serialized SSE messages.
class EventChannel {
 public:
  static constexpr std::size_t kCapacity = 10000;

  void push(std::string message) {
    {
      std::lock_guard lock(mutex_);
      if (closed_) return;
      if (queue_.size() >= kCapacity) queue_.pop_front();
      queue_.push_back(std::move(message));
    }
    cv_.notify_all();
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  /// Next message, or nullopt after the timeout or once closed and drained.
  std::optional<std::string> pop_for(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) return std::nullopt;
    auto out = std::move(queue_.front());
    queue_.pop_front();
    return out;
  }

  bool finished() const {
    std::lock_guard lock(mutex_);
    return closed_ && queue_.empty();
  }

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::string> queue_;
  bool closed_ = false;
};

inline std::string sse_message(std::string_view event, const Json& data) {
  return "event: " + std::string(event) + "\ndata: " + data.dump() + "\n\n";
}

struct ViewRecord {
  std::string id;
  std::string client;
  std::string dataset_id;
  std::shared_ptr<EventChannel> channel = std::make_shared<EventChannel>();
  std::unique_ptr<DataView> view;
  DataView::Subscription subscription;
};

class Server {
 public:
  explicit Server(ServerConfig config) : config_(std::move(config)) {
    listen_ = parse_listen(config_.listen);
    pool_ = std::make_shared<ThreadPool>(config_.workers ? config_.workers : ThreadPool::default_size());
    load_catalog();
    routes();
  }

  ~Server() { stop(); }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and serves on a background thread. A busy port is a Conflict.
  void start() {
    if (thread_.joinable()) return;
    http_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    if (listen_.port == 0) {
      port_ = http_.bind_to_any_port(listen_.host);
      if (port_ < 0) throw Error(ErrorCode::Conflict, "cannot listen on " + listen_.host);
    } else {
      if (!http_.bind_to_port(listen_.host, listen_.port))
        throw Error(ErrorCode::Conflict, "cannot listen on " + config_.listen + ": address already in use or unavailable");
      port_ = listen_.port;
    }
    thread_ = std::thread([this] { http_.listen_after_bind(); });
    http_.wait_until_ready();
  }

  /// Lets in-flight updates finish and reach their streams, then shuts down.
  void stop() {
    if (!thread_.joinable()) return;
    stopping_ = true;
    std::map<std::string, std::shared_ptr<ViewRecord>> views;
    {
      std::lock_guard lock(mutex_);
      views = views_;
    }
    for (const auto& [id, v] : views) {
      v->view->wait_idle_for(std::chrono::seconds(10));
      v->channel->close();
    }
    http_.stop();
    thread_.join();
    std::lock_guard lock(mutex_);
    views_.clear();
  }

  /// Blocks until stop() is called from elsewhere.
  void wait() {
    while (thread_.joinable() && http_.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }

  int port() const { return port_; }
  const ServerConfig& config() const { return config_; }

  std::vector<std::shared_ptr<const CatalogEntry>> datasets() const {
    std::lock_guard lock(mutex_);
    return {catalog_.begin(), catalog_.end()};
  }

  std::shared_ptr<const CatalogEntry> dataset(std::string_view id) const {
    std::lock_guard lock(mutex_);
    for (const auto& e : catalog_)
      if (e->id == id) return e;
    return nullptr;
  }

 private:
  void load_catalog() {
    std::shared_ptr<sql::ConnectionPool> db;
    std::optional<std::string> db_error;
    auto database = [&]() -> std::shared_ptr<sql::ConnectionPool> {
      if (db || db_error) return db;
      auto url = resolve_database_url(config_);
      if (!url) {
        db_error = "no database configured; set " + std::string(kDatabaseUrlEnv);
        return nullptr;
      }
      try {
        db = std::make_shared<sql::ConnectionPool>(*url, config_.pool_size);
      } catch (const Error& e) {
        db_error = e.detail();
      }
      return db;
    };

    for (const auto& entry : config_.datasets) {
      auto e = std::make_shared<CatalogEntry>();
      e->id = entry.id;
      e->name = entry.name.empty() ? entry.id : entry.name;
      e->description = entry.description;
      e->source = entry.file ? "file" : "table";
      try {
        if (entry.file) {
          auto path = std::filesystem::path(*entry.file);
          if (path.is_relative()) path = config_.base_dir / path;
          const auto bytes = read_file(path);
          const bool json = path.extension() == ".json" || sniff_format(bytes) == InputFormat::json;
          auto ds = ingest_bytes(bytes, json, entry.delimiter, entry.kinds, {e->id, e->name, e->description, {}}, &e->warnings);
          e->backend = std::make_shared<MemoryBackend>(std::move(ds));
        } else {
          auto pool = database();
          if (!pool) throw Error(ErrorCode::Backend, *db_error);
          sql::BindOptions options{e->id, e->name, e->description, {}, entry.kinds};
          auto binding = sql::bind_table(*pool, *entry.table, options);
          std::vector<std::string> facets;
          if (entry.indices) {
            facets = *entry.indices;
          } else {
            for (const auto& f : binding.descriptor.facets) facets.push_back(f.name);
          }
          auto report = sql::ensure_indices(*pool, binding, facets);
          e->warnings = std::move(report.warnings);
          e->backend = std::make_shared<sql::SqlBackend>(pool, std::move(binding));
        }
      } catch (const Error& err) {
        e->degraded = err.detail();
        e->backend.reset();
      }
      catalog_.push_back(std::move(e));
    }
  }

  static void reply(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void reply_error(httplib::Response& res, const Error& e) { reply(res, http_status(e.code()), error_json(e)); }

  static Json parse_body(const httplib::Request& req) {
    try {
      return Json::parse(req.body);
    } catch (const Json::parse_error& e) {
      throw DocumentError(ErrorCode::ParseError, "/", std::string("request body is not valid JSON: ") + e.what());
    }
  }

  template <class F>
  static httplib::Server::Handler guarded(F fn) {
    return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        reply_error(res, e);
      } catch (const Json::exception& e) {
        reply_error(res, Error(ErrorCode::InvalidArgument, e.what()));
      } catch (const std::exception& e) {
        reply(res, 500, Json{{"error", {{"code", "Internal"}, {"message", e.what()}}}});
      }
    };
  }

  static std::string client_of(const httplib::Request& req) {
    if (req.has_header(std::string(kClientHeader).c_str())) return req.get_header_value(std::string(kClientHeader).c_str());
    if (req.has_param("client")) return req.get_param_value("client");
    return "";
  }

  std::shared_ptr<ViewRecord> find_view(const httplib::Request& req) const {
    const auto& id = req.path_params.at("id");
    std::lock_guard lock(mutex_);
    auto it = views_.find(id);
    // another client's view is reported as absent
    if (it == views_.end() || it->second->client != client_of(req)) throw Error(ErrorCode::NotFound, "no view '" + id + "'");
    return it->second;
  }

  std::shared_ptr<const CatalogEntry> ready_dataset(const std::string& id) const {
    auto e = dataset(id);
    if (!e) throw Error(ErrorCode::NotFound, "no dataset '" + id + "'");
    if (!e->ready()) throw Error(ErrorCode::Conflict, "dataset '" + id + "' is unavailable: " + e->degraded.value_or("not loaded"));
    return e;
  }

  void routes() {
    http_.set_payload_max_length(config_.max_upload_bytes);
    if (config_.static_dir) http_.set_mount_point("/", *config_.static_dir);

    http_.Get("/api/datasets", guarded([this](const httplib::Request&, httplib::Response& res) {
                Json list = Json::array();
                for (const auto& e : datasets()) list.push_back(to_json(*e));
                reply(res, 200, list);
              }));

    http_.Get("/api/datasets/:id/facets", guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto e = ready_dataset(req.path_params.at("id"));
                Json facets = Json::array();
                for (const auto& f : e->backend->descriptor().facets) {
                  auto stats = e->backend->scan_stats(f.name);
                  Json j = spot::to_json(f);
                  j["stats"] = spot::to_json(stats);
                  if (f.kind != FacetKind::text) j["defaultPartition"] = spot::to_json(default_partition(f, stats));
                  facets.push_back(std::move(j));
                }
                reply(res, 200, Json{{"datasetId", e->id}, {"facets", std::move(facets)}});
              }));

    http_.Post("/api/datasets", guarded([this](const httplib::Request& req, httplib::Response& res) { upload(req, res); }));

    http_.Post("/api/views", guarded([this](const httplib::Request& req, httplib::Response& res) { create_view(req, res); }));

    http_.Get("/api/views/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto v = find_view(req);
                auto snap = v->view->snapshot();
                Json filters = Json::array();
                for (const auto& f : snap.filters) filters.push_back(spot::to_json(f));
                Json results = Json::object();
                for (const auto& [id, r] : snap.results) {
                  Json jr{{"revision", r.revision}};
                  if (r.error)
                    jr["error"] = spot::to_json(*r.error);
                  else
                    jr["rows"] = spot::to_json(r.rows);
                  results[id] = std::move(jr);
                }
                reply(res, 200,
                      Json{{"viewId", v->id},
                           {"datasetId", v->dataset_id},
                           {"revision", snap.revision},
                           {"includeSelf", snap.include_self},
                           {"settled", snap.settled},
                           {"filters", std::move(filters)},
                           {"results", std::move(results)}});
              }));

    http_.Post("/api/views/:id/deltas", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 auto v = find_view(req);
                 const auto delta = view_delta_from_json(parse_body(req));
                 auto stream = apply_delta(*v->view, delta);
                 reply(res, 200, Json{{"revision", stream.revision()}});
               }));

    http_.Get("/api/views/:id/session", guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto v = find_view(req);
                v->view->wait_idle_for(std::chrono::seconds(30));
                res.set_content(save_session(*v->view), "application/json");
              }));

    http_.Get("/api/views/:id/stream", guarded([this](const httplib::Request& req, httplib::Response& res) { stream(req, res); }));

    http_.Delete("/api/views/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   auto v = find_view(req);
                   {
                     std::lock_guard lock(mutex_);
                     views_.erase(v->id);
                   }
                   v->subscription.reset();
                   v->channel->close();
                   res.status = 204;
                 }));

    http_.Post("/api/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 auto session = load_session(req.body);
                 Json warnings = Json::array();
                 for (const auto& w : session_warnings(session)) warnings.push_back(spot::to_json(w));
                 const auto id = random_hex(128);
                 {
                   std::lock_guard lock(mutex_);
                   sessions_.emplace(id, std::make_shared<const std::string>(req.body));
                 }
                 reply(res, 201, Json{{"id", id}, {"url", "/sessions/" + id}, {"warnings", std::move(warnings)}});
               }));

    http_.Get("/sessions/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const auto& id = req.path_params.at("id");
                std::shared_ptr<const std::string> doc;
                {
                  std::lock_guard lock(mutex_);
                  if (auto it = sessions_.find(id); it != sessions_.end()) doc = it->second;
                }
                if (!doc) throw Error(ErrorCode::NotFound, "no session '" + id + "'");
                res.set_content(*doc, "application/json");
              }));
  }

  void upload(const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data() || !req.has_file("file"))
      throw Error(ErrorCode::InvalidArgument, "upload needs a multipart field 'file'");
    const auto file = req.get_file_value("file");
    auto field = [&](const char* name) { return req.has_file(name) ? req.get_file_value(name).content : std::string(); };
    std::string id = field("id");
    if (id.empty()) id = std::filesystem::path(file.filename).stem().string();
    if (id.empty()) throw Error(ErrorCode::InvalidArgument, "upload needs an 'id' field or a file name");
    std::map<std::string, FacetKind> kinds;
    if (auto k = field("kinds"); !k.empty()) {
      Json j;
      try {
        j = Json::parse(k);
      } catch (const Json::parse_error& e) {
        throw DocumentError(ErrorCode::ParseError, "/kinds", e.what());
      }
      json_detail::object(j, "/kinds");
      for (auto it = j.begin(); it != j.end(); ++it) {
        auto kind = facet_kind_from_string(json_detail::string(it.value(), json_detail::at("/kinds", it.key())));
        if (!kind) throw Error(ErrorCode::InvalidArgument, "unknown kind for '" + it.key() + "'");
        kinds[it.key()] = *kind;
      }
    }
    char delimiter = ',';
    if (auto d = field("delimiter"); !d.empty()) {
      if (d == "\\t") d = "\t";
      if (d != "," && d != ";" && d != "\t") throw Error(ErrorCode::InvalidArgument, "delimiter must be ',', ';' or tab");
      delimiter = d[0];
    }
    const bool json = std::filesystem::path(file.filename).extension() == ".json" || sniff_format(file.content) == InputFormat::json;

    auto e = std::make_shared<CatalogEntry>();
    e->id = id;
    e->name = field("name").empty() ? id : field("name");
    e->description = field("description");
    e->source = "upload";
    auto ds = ingest_bytes(file.content, json, delimiter, kinds, {e->id, e->name, e->description, {}}, &e->warnings);
    e->backend = std::make_shared<MemoryBackend>(std::move(ds));
    {
      std::lock_guard lock(mutex_);
      for (const auto& existing : catalog_)
        if (existing->id == id) throw Error(ErrorCode::Conflict, "dataset id '" + id + "' is taken");
      catalog_.push_back(e);
    }
    reply(res, 201, to_json(*e));
  }

  void create_view(const httplib::Request& req, httplib::Response& res) {
    using namespace json_detail;
    const auto body = parse_body(req);
    object(body, "");
    const auto dataset_id = string(member(body, "dataset", ""), "/dataset");
    std::vector<Filter> filters;
    if (const auto* list = optional_member(body, "filters", "")) {
      array(*list, "/filters");
      for (std::size_t i = 0; i < list->size(); ++i) filters.push_back(filter_from_json((*list)[i], at("/filters", i)));
    }
    bool include_self = false;
    if (const auto* v = optional_member(body, "includeSelf", "")) include_self = boolean(*v, "/includeSelf");
    if (stopping_) throw Error(ErrorCode::Cancelled, "server is shutting down");

    auto entry = ready_dataset(dataset_id);
    auto record = std::make_shared<ViewRecord>();
    record->id = random_hex(64);
    record->client = client_of(req);
    if (record->client.empty()) record->client = random_hex(64);
    record->dataset_id = dataset_id;
    ViewOptions options;
    options.include_self = include_self;
    options.pool = pool_;
    record->view = std::make_unique<DataView>(entry->backend, options);
    record->subscription = record->view->subscribe(
        [channel = std::weak_ptr<EventChannel>(record->channel)](const UpdateEvent& e) {
          if (auto c = channel.lock()) c->push(sse_message("update", spot::to_json(e)));
        });
    std::uint64_t revision = 0;
    if (!filters.empty()) revision = record->view->replace_filters(std::move(filters)).revision();
    {
      std::lock_guard lock(mutex_);
      views_.emplace(record->id, record);
    }
    reply(res, 201,
          Json{{"viewId", record->id},
               {"clientId", record->client},
               {"revision", revision},
               {"streamUrl", "/api/views/" + record->id + "/stream?client=" + record->client}});
  }

  void stream(const httplib::Request& req, httplib::Response& res) {
    auto v = find_view(req);
    res.set_header("Cache-Control", "no-cache");
    auto hello = std::make_shared<std::string>(
        sse_message("hello", Json{{"type", "hello"}, {"viewId", v->id}, {"revision", v->view->revision()}}));
    auto channel = v->channel;
    auto idle = std::make_shared<std::chrono::steady_clock::time_point>(std::chrono::steady_clock::now());
    const auto heartbeat = config_.heartbeat;
    res.set_chunked_content_provider(
        "text/event-stream", [this, channel, hello, idle, heartbeat](std::size_t, httplib::DataSink& sink) {
          auto write = [&](const std::string& s) {
            *idle = std::chrono::steady_clock::now();
            return sink.write(s.data(), s.size());
          };
          if (!hello->empty()) {
            if (!write(*hello)) return false;
            hello->clear();
          }
          if (auto msg = channel->pop_for(std::chrono::milliseconds(200))) return write(*msg);
          if (channel->finished() || (stopping_ && !http_.is_running())) {
            sink.done();
            return true;
          }
          if (std::chrono::steady_clock::now() - *idle >= heartbeat) return write(": keepalive\n\n");
          return sink.is_writable();
        });
  }

  ServerConfig config_;
  ListenAddress listen_;
  std::shared_ptr<ThreadPool> pool_;
  httplib::Server http_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<bool> stopping_{false};

  mutable std::mutex mutex_;
  std::vector<std::shared_ptr<CatalogEntry>> catalog_;
  std::map<std::string, std::shared_ptr<ViewRecord>> views_;
  std::map<std::string, std::shared_ptr<const std::string>> sessions_;
};

}  // namespace spot::server
