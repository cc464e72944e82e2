#pragma once

// Test client helpers: JSON requests and a background Server-Sent Events reader.

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "spot/json_io.hpp"

namespace spot::testing {

struct SseEvent {
  std::string event;
  Json data;
};

class SseReader {
 public:
  SseReader(int port, std::string path) : port_(port), path_(std::move(path)) {
    thread_ = std::thread([this] { run(); });
  }

  ~SseReader() {
    stop_ = true;
    thread_.join();
  }

  /// Waits until pred holds over the events so far.
  bool wait_for(const std::function<bool(const std::vector<SseEvent>&)>& pred,
                std::chrono::milliseconds timeout = std::chrono::seconds(10)) {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, timeout, [&] { return pred(events_) || (finished_ && !pred(events_)); }) && pred(events_);
  }

  bool wait_finished(std::chrono::milliseconds timeout = std::chrono::seconds(10)) {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, timeout, [&] { return finished_; });
  }

  std::vector<SseEvent> events() const {
    std::lock_guard lock(mutex_);
    return events_;
  }

  /// Update events only.
  std::vector<Json> updates() const {
    std::vector<Json> out;
    for (const auto& e : events())
      if (e.event == "update") out.push_back(e.data);
    return out;
  }

 private:
  void run() {
    httplib::Client client("127.0.0.1", port_);
    client.set_read_timeout(30, 0);
    std::string buffer;
    client.Get(path_, [&](const char* data, std::size_t n) {
      buffer.append(data, n);
      for (auto end = buffer.find("\n\n"); end != std::string::npos; end = buffer.find("\n\n")) {
        parse(buffer.substr(0, end));
        buffer.erase(0, end + 2);
      }
      return !stop_.load();
    });
    std::lock_guard lock(mutex_);
    finished_ = true;
    cv_.notify_all();
  }

  void parse(const std::string& block) {
    SseEvent ev;
    std::string data;
    std::size_t pos = 0;
    while (pos < block.size()) {
      auto nl = block.find('\n', pos);
      auto line = block.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
      pos = nl == std::string::npos ? block.size() : nl + 1;
      if (line.rfind("event: ", 0) == 0) ev.event = line.substr(7);
      if (line.rfind("data: ", 0) == 0) data += line.substr(6);
    }
    if (ev.event.empty()) return;
    ev.data = Json::parse(data);
    std::lock_guard lock(mutex_);
    events_.push_back(std::move(ev));
    cv_.notify_all();
  }

  int port_;
  std::string path_;
  std::atomic<bool> stop_{false};
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<SseEvent> events_;
  bool finished_ = false;
  std::thread thread_;
};

}  // namespace spot::testing
