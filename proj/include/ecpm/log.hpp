#pragma once

#include <atomic>
#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>

namespace ecpm {

// Hard errors: shape mismatches, bad arguments, malformed files.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Soft conditions (constant channels, clamped logs, skipped steps) go through
// a replaceable sink so tests can observe them.
using WarnSink = std::function<void(const std::string&)>;

namespace detail {
inline WarnSink& warn_sink() {
  static WarnSink sink = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}
inline std::mutex& warn_mutex() {
  static std::mutex m;
  return m;
}
inline std::atomic<long>& warn_counter() {
  static std::atomic<long> n{0};
  return n;
}
}  // namespace detail

inline void warn(const std::string& msg) {
  detail::warn_counter().fetch_add(1);
  std::lock_guard<std::mutex> lock(detail::warn_mutex());
  if (detail::warn_sink()) detail::warn_sink()(msg);
}

inline long warning_count() { return detail::warn_counter().load(); }

// Swaps the sink for the lifetime of the guard.
class ScopedWarnSink {
 public:
  explicit ScopedWarnSink(WarnSink sink) {
    std::lock_guard<std::mutex> lock(detail::warn_mutex());
    previous_ = std::move(detail::warn_sink());
    detail::warn_sink() = std::move(sink);
  }
  ~ScopedWarnSink() {
    std::lock_guard<std::mutex> lock(detail::warn_mutex());
    detail::warn_sink() = std::move(previous_);
  }
  ScopedWarnSink(const ScopedWarnSink&) = delete;
  ScopedWarnSink& operator=(const ScopedWarnSink&) = delete;

 private:
  WarnSink previous_;
};

}  // namespace ecpm
