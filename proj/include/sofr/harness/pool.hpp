#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "sofr/errors.hpp"

namespace sofr::harness {

/// Runs body(i) for i in [0, count) on up to `jobs` threads (0 = hardware
/// concurrency). Each index writes only its own slot, so results never depend
/// on the thread count. Every index runs; the failure with the lowest index
/// is rethrown.
template <class Body>
void parallel_for(std::size_t count, int jobs, Body&& body) {
  std::size_t workers = jobs > 0 ? static_cast<std::size_t>(jobs) : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  std::vector<std::exception_ptr> errors(count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const NotIdentifiableError&) {
      throw;
    } catch (const Error& e) {
      std::string what = e.what();
      const std::string prefix = std::string(to_string(e.kind())) + ": ";
      if (what.rfind(prefix, 0) == 0) what.erase(0, prefix.size());
      throw Error(e.kind(), "replicate " + std::to_string(i) + ": " + what);
    }
  }
}

}  // namespace sofr::harness
