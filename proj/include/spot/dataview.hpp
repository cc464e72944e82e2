#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "spot/engine.hpp"
#include "spot/thread_pool.hpp"

namespace spot {

/// One optional selection per partition of a filter; empty means no selection.
using FilterSelection = std::vector<std::optional<Selection>>;

struct Filter {
  std::string id;
  std::vector<PartitionSpec> partitions;
  std::vector<AggregateSpec> aggregates;
  FilterSelection selection;
  std::string chart_kind;

  bool has_selection() const {
    for (const auto& s : selection)
      if (s) return true;
    return false;
  }

  friend bool operator==(const Filter&, const Filter&) = default;
};

/// Checks a selection against the filter's partitions: right shape, right
/// kind, and overlapping the partition's domain.
inline void validate_filter_selection(const DatasetDescriptor& descriptor, const Filter& filter,
                                      const FilterSelection& selection) {
  if (selection.empty()) return;
  if (selection.size() != filter.partitions.size())
    throw Error(ErrorCode::InvalidSelection, "filter '" + filter.id + "' has " +
                                                 std::to_string(filter.partitions.size()) + " partitions but " +
                                                 std::to_string(selection.size()) + " selections");
  for (std::size_t i = 0; i < selection.size(); ++i) {
    if (!selection[i]) continue;
    const auto& s = *selection[i];
    const auto& p = filter.partitions[i];
    validate_selection(s);
    if (!selection_accepts(s, descriptor.facet(p.facet).kind))
      throw Error(ErrorCode::InvalidSelection, "selection kind does not fit facet '" + p.facet + "'");
    if (p.is_continuous()) {
      const auto& r = std::get<RangeSelection>(s);
      const auto& b = p.bins();
      if (!(r.lo <= b.hi && r.hi > b.lo))
        throw Error(ErrorCode::InvalidSelection, "selection on '" + p.facet + "' lies outside the partition range");
    } else if (p.is_categorical() && p.categories().categories) {
      const auto& list = *p.categories().categories;
      for (const auto& label : std::get<CategorySelection>(s).labels)
        if (std::find(list.begin(), list.end(), label) == list.end())
          throw Error(ErrorCode::InvalidSelection, "label '" + label + "' is not a category of '" + p.facet + "'");
    }
  }
}

inline void validate_filter(const DatasetDescriptor& descriptor, const Filter& filter) {
  if (filter.id.empty()) throw Error(ErrorCode::InvalidArgument, "filter id must not be empty");
  if (filter.partitions.empty()) throw Error(ErrorCode::InvalidArgument, "filter '" + filter.id + "' needs a partition");
  validate_request(descriptor, AggregateRequest{filter.partitions, filter.aggregates, {}});
  validate_filter_selection(descriptor, filter, filter.selection);
}

/// The request for filters[index]: its own partitions and aggregates, with
/// the selections of every other filter (and its own when include_self).
inline AggregateRequest filter_request(const std::vector<Filter>& filters, std::size_t index, bool include_self = false) {
  const Filter& f = filters.at(index);
  AggregateRequest req{f.partitions, f.aggregates, {}};
  for (std::size_t j = 0; j < filters.size(); ++j) {
    if (j == index && !include_self) continue;
    const Filter& g = filters[j];
    for (std::size_t i = 0; i < g.selection.size(); ++i)
      if (g.selection[i]) req.predicate.push_back({g.partitions[i], *g.selection[i]});
  }
  return req;
}

struct EventError {
  ErrorCode code = ErrorCode::Backend;
  std::string message;
  friend bool operator==(const EventError&, const EventError&) = default;
};

struct UpdateEvent {
  std::uint64_t revision = 0;
  std::string filter_id;
  std::vector<GroupRow> rows;
  std::optional<EventError> error;
  /// Delivery position within the revision, starting at 0.
  std::size_t sequence = 0;

  bool ok() const { return !error; }
  friend bool operator==(const UpdateEvent&, const UpdateEvent&) = default;
};

/// Runs one filter's request, turning failures into an error payload.
inline UpdateEvent evaluate_filter(Backend& backend, const std::vector<Filter>& filters, std::size_t index,
                                   std::uint64_t revision, bool include_self, std::stop_token stop = {}) {
  UpdateEvent ev;
  ev.revision = revision;
  ev.filter_id = filters[index].id;
  try {
    ev.rows = backend.aggregate(filter_request(filters, index, include_self), stop);
  } catch (const Error& e) {
    ev.error = EventError{e.code(), e.what()};
  } catch (const std::exception& e) {
    ev.error = EventError{ErrorCode::Backend, e.what()};
  }
  return ev;
}

/// Evaluates every filter once with up to `parallelism` concurrent backend
/// calls. on_event runs for each completion, in completion order, one at a
/// time; the returned events are in that same order.
inline std::vector<UpdateEvent> run_filters(Backend& backend, const std::vector<Filter>& filters, std::uint64_t revision,
                                            bool include_self, std::size_t parallelism,
                                            const std::function<void(const UpdateEvent&)>& on_event = {}) {
  std::vector<UpdateEvent> out;
  std::mutex m;
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < filters.size(); i = next++) {
      auto ev = evaluate_filter(backend, filters, i, revision, include_self);
      std::lock_guard lock(m);
      ev.sequence = out.size();
      if (on_event) on_event(ev);
      out.push_back(std::move(ev));
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(1, parallelism), filters.size());
  {
    std::vector<std::jthread> threads;
    for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(work);
    work();
  }
  return out;
}

/// Last completed result for one filter.
struct FilterResult {
  std::uint64_t revision = 0;
  std::vector<GroupRow> rows;
  std::optional<EventError> error;
  friend bool operator==(const FilterResult&, const FilterResult&) = default;
};

struct ViewSnapshot {
  DatasetDescriptor descriptor;
  std::uint64_t revision = 0;
  bool include_self = false;
  std::vector<Filter> filters;
  std::map<std::string, FilterResult> results;
  /// True when every filter has a result for the current revision and
  /// nothing is in flight.
  bool settled = true;
};

namespace detail {

struct StreamState {
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<UpdateEvent> queue;
  std::uint64_t revision = 0;
  std::size_t expected = 0;
  std::size_t delivered = 0;
  bool superseded = false;

  bool closed() const { return superseded || delivered >= expected; }

  void push(UpdateEvent ev) {
    {
      std::lock_guard lock(mutex);
      queue.push_back(std::move(ev));
      ++delivered;
    }
    cv.notify_all();
  }

  void supersede() {
    {
      std::lock_guard lock(mutex);
      superseded = true;
    }
    cv.notify_all();
  }
};

}  // namespace detail

/// Events of one update run, in delivery order. The stream ends once every
/// filter has reported or a newer update has superseded it.
class UpdateStream {
 public:
  UpdateStream() = default;
  explicit UpdateStream(std::shared_ptr<detail::StreamState> state) : state_(std::move(state)) {}

  std::uint64_t revision() const { return state_ ? state_->revision : 0; }

  /// Blocks for the next event; nullopt once the stream has ended.
  std::optional<UpdateEvent> next() {
    if (!state_) return std::nullopt;
    std::unique_lock lock(state_->mutex);
    state_->cv.wait(lock, [&] { return !state_->queue.empty() || state_->closed(); });
    return pop_locked();
  }

  /// Like next(), giving up after the timeout.
  std::optional<UpdateEvent> next_for(std::chrono::milliseconds timeout) {
    if (!state_) return std::nullopt;
    std::unique_lock lock(state_->mutex);
    state_->cv.wait_for(lock, timeout, [&] { return !state_->queue.empty() || state_->closed(); });
    return pop_locked();
  }

  std::vector<UpdateEvent> collect() {
    std::vector<UpdateEvent> out;
    while (auto ev = next()) out.push_back(std::move(*ev));
    return out;
  }

  bool superseded() const {
    if (!state_) return false;
    std::lock_guard lock(state_->mutex);
    return state_->superseded;
  }

 private:
  std::optional<UpdateEvent> pop_locked() {
    if (state_->queue.empty()) return std::nullopt;
    UpdateEvent ev = std::move(state_->queue.front());
    state_->queue.pop_front();
    return ev;
  }

  std::shared_ptr<detail::StreamState> state_;
};

struct ViewOptions {
  /// Apply a filter's own selection to its own result (off: crossfilter style).
  bool include_self = false;
  /// Shared worker budget; a private pool is created when null.
  std::shared_ptr<ThreadPool> pool;
  unsigned workers = ThreadPool::default_size();
};

/// Linked filters over one backend. Mutations are serialized and each bumps
/// the revision by one and recomputes every filter concurrently; results of
/// superseded runs are dropped, so per filter observers see revisions in
/// increasing order.
class DataView {
  struct Impl;

 public:
  using Callback = std::function<void(const UpdateEvent&)>;

  class Subscription {
   public:
    Subscription() = default;
    Subscription(const Subscription&) = delete;
    Subscription& operator=(const Subscription&) = delete;
    Subscription(Subscription&& o) noexcept : impl_(std::move(o.impl_)), id_(o.id_) {}
    Subscription& operator=(Subscription&& o) noexcept {
      reset();
      impl_ = std::move(o.impl_);
      id_ = o.id_;
      return *this;
    }
    ~Subscription() { reset(); }

    /// Must not be called from inside the callback itself.
    void reset();

   private:
    friend class DataView;
    Subscription(std::weak_ptr<Impl> impl, std::uint64_t id) : impl_(std::move(impl)), id_(id) {}
    std::weak_ptr<Impl> impl_;
    std::uint64_t id_ = 0;
  };

  explicit DataView(std::shared_ptr<Backend> backend, ViewOptions options = {})
      : impl_(std::make_shared<Impl>()) {
    if (!backend) throw Error(ErrorCode::InvalidArgument, "data view needs a backend");
    impl_->backend = std::move(backend);
    impl_->include_self = options.include_self;
    pool_ = options.pool ? options.pool : std::make_shared<ThreadPool>(options.workers);
  }

  DataView(const DataView&) = delete;
  DataView& operator=(const DataView&) = delete;

  ~DataView() {
    std::lock_guard lock(impl_->mutex);
    impl_->stop.request_stop();
    if (impl_->stream) impl_->stream->supersede();
  }

  const DatasetDescriptor& descriptor() const { return impl_->backend->descriptor(); }
  const std::shared_ptr<Backend>& backend() const { return impl_->backend; }
  bool include_self() const { return impl_->include_self; }

  std::uint64_t revision() const {
    std::lock_guard lock(impl_->mutex);
    return impl_->revision;
  }

  std::vector<Filter> filters() const {
    std::lock_guard lock(impl_->mutex);
    return *impl_->filters;
  }

  std::optional<Filter> find_filter(std::string_view id) const {
    std::lock_guard lock(impl_->mutex);
    for (const auto& f : *impl_->filters)
      if (f.id == id) return f;
    return std::nullopt;
  }

  UpdateStream add_filter(Filter filter) {
    std::lock_guard writer(write_mutex_);
    validate_filter(descriptor(), filter);
    auto next = std::make_shared<std::vector<Filter>>(filters());
    for (const auto& f : *next)
      if (f.id == filter.id) throw Error(ErrorCode::Conflict, "filter id '" + filter.id + "' already exists");
    next->push_back(std::move(filter));
    return start(std::move(next), true);
  }

  UpdateStream remove_filter(std::string_view id) {
    std::lock_guard writer(write_mutex_);
    auto next = std::make_shared<std::vector<Filter>>(filters());
    auto it = std::find_if(next->begin(), next->end(), [&](const Filter& f) { return f.id == id; });
    if (it == next->end()) throw Error(ErrorCode::NotFound, "no filter '" + std::string(id) + "'");
    next->erase(it);
    return start(std::move(next), true);
  }

  /// Swaps in a whole filter list as one mutation.
  UpdateStream replace_filters(std::vector<Filter> filters) {
    std::lock_guard writer(write_mutex_);
    std::set<std::string> ids;
    for (const auto& f : filters) {
      validate_filter(descriptor(), f);
      if (!ids.insert(f.id).second) throw Error(ErrorCode::Conflict, "filter id '" + f.id + "' is used twice");
    }
    return start(std::make_shared<std::vector<Filter>>(std::move(filters)), true);
  }

  /// Replaces the filter's selection; an empty FilterSelection clears it.
  UpdateStream set_selection(std::string_view id, FilterSelection selection) {
    std::lock_guard writer(write_mutex_);
    auto next = std::make_shared<std::vector<Filter>>(filters());
    auto it = std::find_if(next->begin(), next->end(), [&](const Filter& f) { return f.id == id; });
    if (it == next->end()) throw Error(ErrorCode::NotFound, "no filter '" + std::string(id) + "'");
    bool any = false;
    for (const auto& s : selection) any = any || s.has_value();
    if (!any) selection.clear();
    validate_filter_selection(descriptor(), *it, selection);
    it->selection = std::move(selection);
    return start(std::move(next), true);
  }

  /// Selection on the first partition only.
  UpdateStream set_selection(std::string_view id, Selection selection) {
    auto f = find_filter(id);
    if (!f) throw Error(ErrorCode::NotFound, "no filter '" + std::string(id) + "'");
    FilterSelection s(f->partitions.size());
    s[0] = std::move(selection);
    return set_selection(id, std::move(s));
  }

  UpdateStream clear_selection(std::string_view id) { return set_selection(id, FilterSelection{}); }

  /// Recomputes every filter at the current revision.
  UpdateStream update_all() {
    std::lock_guard writer(write_mutex_);
    std::shared_ptr<const std::vector<Filter>> current;
    {
      std::lock_guard lock(impl_->mutex);
      current = impl_->filters;
    }
    return start(std::move(current), false);
  }

  /// Invoked for every delivered event, on a worker thread, in delivery order.
  [[nodiscard]] Subscription subscribe(Callback callback) {
    std::lock_guard lock(impl_->delivery_mutex);
    const auto id = ++impl_->next_subscriber;
    impl_->subscribers.emplace(id, std::move(callback));
    return Subscription(impl_, id);
  }

  /// Waits until the latest update run has delivered every event.
  void wait_idle() const {
    std::unique_lock lock(impl_->mutex);
    impl_->idle_cv.wait(lock, [&] { return impl_->pending == 0; });
  }

  bool wait_idle_for(std::chrono::milliseconds timeout) const {
    std::unique_lock lock(impl_->mutex);
    return impl_->idle_cv.wait_for(lock, timeout, [&] { return impl_->pending == 0; });
  }

  ViewSnapshot snapshot() const {
    std::lock_guard lock(impl_->mutex);
    ViewSnapshot s;
    s.descriptor = impl_->backend->descriptor();
    s.revision = impl_->revision;
    s.include_self = impl_->include_self;
    s.filters = *impl_->filters;
    s.results = impl_->results;
    s.settled = impl_->pending == 0;
    for (const auto& f : s.filters) {
      auto it = s.results.find(f.id);
      if (it == s.results.end() || it->second.revision != s.revision) s.settled = false;
    }
    return s;
  }

 private:
  struct Impl {
    std::shared_ptr<Backend> backend;
    bool include_self = false;

    mutable std::mutex mutex;
    std::condition_variable idle_cv;
    std::shared_ptr<const std::vector<Filter>> filters = std::make_shared<std::vector<Filter>>();
    std::uint64_t revision = 0;
    std::uint64_t generation = 0;
    std::size_t pending = 0;
    std::stop_source stop;
    std::shared_ptr<detail::StreamState> stream;
    std::map<std::string, FilterResult> results;

    std::mutex delivery_mutex;
    std::uint64_t next_subscriber = 0;
    std::map<std::uint64_t, Callback> subscribers;

    void finish(std::uint64_t generation_id, UpdateEvent ev) {
      std::lock_guard delivery(delivery_mutex);
      std::shared_ptr<detail::StreamState> target;
      {
        std::lock_guard lock(mutex);
        if (generation_id != generation) return;
        ev.sequence = stream->delivered;
        results[ev.filter_id] = FilterResult{ev.revision, ev.rows, ev.error};
        target = stream;
      }
      for (const auto& [id, cb] : subscribers) {
        try {
          cb(ev);
        } catch (...) {
        }
      }
      {
        std::lock_guard lock(mutex);
        if (generation_id == generation && pending > 0 && --pending == 0) idle_cv.notify_all();
      }
      target->push(std::move(ev));
    }
  };

  UpdateStream start(std::shared_ptr<const std::vector<Filter>> filters, bool bump) {
    auto state = std::make_shared<detail::StreamState>();
    std::uint64_t generation_id = 0;
    std::uint64_t revision = 0;
    std::stop_token token;
    {
      std::lock_guard lock(impl_->mutex);
      impl_->stop.request_stop();
      if (impl_->stream) impl_->stream->supersede();
      impl_->stop = std::stop_source{};
      token = impl_->stop.get_token();
      if (bump) ++impl_->revision;
      revision = impl_->revision;
      generation_id = ++impl_->generation;
      impl_->filters = filters;
      std::erase_if(impl_->results, [&](const auto& entry) {
        return std::none_of(filters->begin(), filters->end(), [&](const Filter& f) { return f.id == entry.first; });
      });
      impl_->pending = filters->size();
      state->revision = revision;
      state->expected = filters->size();
      impl_->stream = state;
      if (impl_->pending == 0) impl_->idle_cv.notify_all();
    }
    for (std::size_t i = 0; i < filters->size(); ++i) {
      pool_->submit([impl = impl_, filters, i, generation_id, revision, token] {
        if (token.stop_requested()) return;
        auto ev = evaluate_filter(*impl->backend, *filters, i, revision, impl->include_self, token);
        impl->finish(generation_id, std::move(ev));
      });
    }
    return UpdateStream(state);
  }

  std::shared_ptr<Impl> impl_;
  std::shared_ptr<ThreadPool> pool_;
  std::mutex write_mutex_;
};

inline void DataView::Subscription::reset() {
  if (auto impl = impl_.lock()) {
    std::lock_guard lock(impl->delivery_mutex);
    impl->subscribers.erase(id_);
  }
  impl_.reset();
}

}  // namespace spot
