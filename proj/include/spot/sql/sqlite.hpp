#pragma once

#include <sqlite3.h>

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <stop_token>
#include <string>
#include <vector>

#include "spot/error.hpp"
#include "spot/sql/compiler.hpp"

namespace spot::sql {

/// Where the database lives, parsed from "sqlite:///path/to/file.db",
/// "sqlite://relative.db" or "sqlite::memory:". PostgreSQL URLs are
/// recognised so they can be rejected with a clear message.
struct DatabaseUrl {
  enum class Scheme { sqlite, postgresql } scheme = Scheme::sqlite;
  std::string path;
  bool memory = false;
  bool read_only = false;

  static DatabaseUrl parse(std::string_view url) {
    DatabaseUrl out;
    auto starts = [&](std::string_view p) { return url.substr(0, p.size()) == p; };
    if (starts("postgresql://") || starts("postgres://")) {
      out.scheme = Scheme::postgresql;
      out.path = std::string(url);
      return out;
    }
    if (url == "sqlite::memory:") {
      out.memory = true;
      return out;
    }
    if (!starts("sqlite://")) throw Error(ErrorCode::InvalidArgument, "unsupported database url '" + std::string(url) + "'");
    std::string_view rest = url.substr(9);
    if (auto q = rest.find("?mode=ro"); q != std::string_view::npos) {
      out.read_only = true;
      rest = rest.substr(0, q);
    }
    if (rest.empty()) throw Error(ErrorCode::InvalidArgument, "database url has no path");
    out.path = std::string(rest);
    return out;
  }
};

namespace detail {

struct StddevState {
  std::int64_t n;
  double mean;
  double m2;
};

// Population standard deviation with the same Welford update the engine uses.
inline void stddev_step(sqlite3_context* ctx, int, sqlite3_value** argv) {
  if (sqlite3_value_type(argv[0]) == SQLITE_NULL) return;
  auto* s = static_cast<StddevState*>(sqlite3_aggregate_context(ctx, sizeof(StddevState)));
  if (!s) {
    sqlite3_result_error_nomem(ctx);
    return;
  }
  const double x = sqlite3_value_double(argv[0]);
  ++s->n;
  const double delta = x - s->mean;
  s->mean += delta / static_cast<double>(s->n);
  s->m2 += delta * (x - s->mean);
}

inline void stddev_final(sqlite3_context* ctx) {
  auto* s = static_cast<StddevState*>(sqlite3_aggregate_context(ctx, 0));
  if (!s || s->n == 0) {
    sqlite3_result_null(ctx);
    return;
  }
  sqlite3_result_double(ctx, std::sqrt(std::max(0.0, s->m2 / static_cast<double>(s->n))));
}

inline int progress_check(void* token) { return static_cast<std::stop_token*>(token)->stop_requested() ? 1 : 0; }

}  // namespace detail

/// One SQLite connection with the spot functions registered.
class Connection {
 public:
  Connection(const std::string& filename, bool read_only, bool uri = false) {
    int flags = (read_only ? SQLITE_OPEN_READONLY : SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE) | SQLITE_OPEN_NOMUTEX;
    if (uri) flags |= SQLITE_OPEN_URI;
    sqlite3* db = nullptr;
    int rc = sqlite3_open_v2(filename.c_str(), &db, flags, nullptr);
    db_.reset(db);
    if (rc != SQLITE_OK) throw Error(ErrorCode::Backend, "cannot open database '" + filename + "': " + message());
    sqlite3_busy_timeout(db, 5000);
    rc = sqlite3_create_function_v2(db, "stddev_pop", 1, SQLITE_UTF8 | SQLITE_DETERMINISTIC, nullptr, nullptr,
                                    detail::stddev_step, detail::stddev_final, nullptr);
    if (rc != SQLITE_OK) throw Error(ErrorCode::Backend, "cannot register stddev_pop: " + message());
  }

  sqlite3* handle() const { return db_.get(); }
  std::string message() const { return db_ ? sqlite3_errmsg(db_.get()) : "out of memory"; }

  void execute(const std::string& sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_.get(), sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : message();
      sqlite3_free(err);
      throw Error(ErrorCode::Backend, msg);
    }
  }

  /// Extended result code of the last failure.
  int last_error() const { return sqlite3_extended_errcode(db_.get()); }

 private:
  struct Closer {
    void operator()(sqlite3* db) const { sqlite3_close_v2(db); }
  };
  std::unique_ptr<sqlite3, Closer> db_;
};

class Statement {
 public:
  Statement(Connection& conn, const std::string& sql) : conn_(&conn) {
    sqlite3_stmt* stmt = nullptr;
    if (sqlite3_prepare_v2(conn.handle(), sql.c_str(), static_cast<int>(sql.size()), &stmt, nullptr) != SQLITE_OK)
      throw Error(ErrorCode::Backend, "prepare failed: " + conn.message());
    stmt_.reset(stmt);
  }

  void bind(int index, const SqlParam& p) {
    int rc = SQLITE_OK;
    if (const auto* i = std::get_if<std::int64_t>(&p))
      rc = sqlite3_bind_int64(stmt_.get(), index, *i);
    else if (const auto* d = std::get_if<double>(&p))
      rc = sqlite3_bind_double(stmt_.get(), index, *d);
    else {
      const auto& s = std::get<std::string>(p);
      rc = sqlite3_bind_text(stmt_.get(), index, s.data(), static_cast<int>(s.size()), SQLITE_TRANSIENT);
    }
    if (rc != SQLITE_OK) throw Error(ErrorCode::Backend, "bind failed: " + conn_->message());
  }

  void bind_all(const std::vector<SqlParam>& params) {
    for (std::size_t i = 0; i < params.size(); ++i) bind(static_cast<int>(i + 1), params[i]);
  }

  void bind_null(int index) { sqlite3_bind_null(stmt_.get(), index); }

  /// True while a row is available.
  bool step() {
    int rc = sqlite3_step(stmt_.get());
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    if (rc == SQLITE_INTERRUPT) throw Error(ErrorCode::Cancelled, "query cancelled");
    throw Error(ErrorCode::Backend, "query failed: " + conn_->message());
  }

  void reset() {
    sqlite3_reset(stmt_.get());
    sqlite3_clear_bindings(stmt_.get());
  }

  bool is_null(int col) const { return sqlite3_column_type(stmt_.get(), col) == SQLITE_NULL; }
  std::int64_t int64(int col) const { return sqlite3_column_int64(stmt_.get(), col); }
  double real(int col) const { return sqlite3_column_double(stmt_.get(), col); }
  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_.get(), col);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_.get(), col)))
             : std::string();
  }

 private:
  struct Finalizer {
    void operator()(sqlite3_stmt* s) const { sqlite3_finalize(s); }
  };
  Connection* conn_;
  std::unique_ptr<sqlite3_stmt, Finalizer> stmt_;
};

/// Installs a progress handler that interrupts the running statement once
/// stop is requested.
class InterruptGuard {
 public:
  InterruptGuard(Connection& conn, std::stop_token stop) : conn_(conn), stop_(std::move(stop)) {
    if (stop_.stop_possible()) sqlite3_progress_handler(conn_.handle(), 1000, detail::progress_check, &stop_);
  }
  ~InterruptGuard() { sqlite3_progress_handler(conn_.handle(), 0, nullptr, nullptr); }
  InterruptGuard(const InterruptGuard&) = delete;
  InterruptGuard& operator=(const InterruptGuard&) = delete;

 private:
  Connection& conn_;
  std::stop_token stop_;
};

inline constexpr std::size_t kDefaultPoolSize = 8;

/// Bounded set of connections to one database; acquire() blocks while all
/// are in use.
class ConnectionPool {
 public:
  class Lease {
   public:
    Lease(ConnectionPool* pool, std::unique_ptr<Connection> conn) : pool_(pool), conn_(std::move(conn)) {}
    Lease(Lease&&) = default;
    Lease& operator=(Lease&&) = delete;
    ~Lease() {
      if (conn_) pool_->release(std::move(conn_));
    }
    Connection& operator*() const { return *conn_; }
    Connection* operator->() const { return conn_.get(); }

   private:
    ConnectionPool* pool_;
    std::unique_ptr<Connection> conn_;
  };

  explicit ConnectionPool(const DatabaseUrl& url, std::size_t size = kDefaultPoolSize) : size_(std::max<std::size_t>(1, size)) {
    if (url.scheme == DatabaseUrl::Scheme::postgresql)
      throw Error(ErrorCode::Backend, "PostgreSQL connections are not available in this build; use a sqlite:// url");
    read_only_ = url.read_only;
    if (url.memory) {
      static std::atomic<int> counter{0};
      filename_ = "file:spot_memory_" + std::to_string(++counter) + "?mode=memory&cache=shared";
      uri_ = true;
      // the shared in-memory database lives as long as one connection is open
      keeper_ = std::make_unique<Connection>(filename_, false, true);
    } else {
      filename_ = url.path;
    }
    idle_.push_back(open());
    created_ = 1;
  }

  explicit ConnectionPool(std::string_view url, std::size_t size = kDefaultPoolSize)
      : ConnectionPool(DatabaseUrl::parse(url), size) {}

  std::size_t size() const { return size_; }
  bool read_only() const { return read_only_; }

  Lease acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return !idle_.empty() || created_ < size_; });
    peak_ = std::max(peak_, ++in_use_);
    if (!idle_.empty()) {
      auto conn = std::move(idle_.back());
      idle_.pop_back();
      return Lease(this, std::move(conn));
    }
    ++created_;
    lock.unlock();
    try {
      return Lease(this, open());
    } catch (...) {
      std::lock_guard relock(mutex_);
      --created_;
      --in_use_;
      cv_.notify_one();
      throw;
    }
  }

  /// Most leases held at once so far.
  std::size_t peak_in_use() const {
    std::lock_guard lock(mutex_);
    return peak_;
  }

 private:
  std::unique_ptr<Connection> open() { return std::make_unique<Connection>(filename_, read_only_, uri_); }

  void release(std::unique_ptr<Connection> conn) {
    {
      std::lock_guard lock(mutex_);
      idle_.push_back(std::move(conn));
      --in_use_;
    }
    cv_.notify_one();
  }

  std::size_t size_;
  std::string filename_;
  bool uri_ = false;
  bool read_only_ = false;
  std::unique_ptr<Connection> keeper_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<std::unique_ptr<Connection>> idle_;
  std::size_t created_ = 0;
  std::size_t in_use_ = 0;
  std::size_t peak_ = 0;
};

}  // namespace spot::sql
