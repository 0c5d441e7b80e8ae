#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rgbdi {

// Error hierarchy. The CLI maps each family onto an exit code.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (exit code 2).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Missing, malformed or misaligned input data (exit code 3).
class DataError : public Error {
public:
  using Error::Error;
};

/// A numerical routine could not produce a result (exit code 4).
class NumericalError : public Error {
public:
  using Error::Error;
};

/// Too few samples to define the requested quantity.
class InsufficientDataError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

/// ICP cannot constrain all six degrees of freedom, or did not converge onto the target.
class RegistrationError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

/// Exhaustive enumeration would exceed its configured cap.
class InstanceTooLargeError : public Error {
public:
  using Error::Error;
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  return 1;
}

/// Static-partition parallel loop over [0, n). Each index is visited exactly once; results
/// written per index are therefore independent of the worker count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t max_workers = 0) {
  std::size_t workers = max_workers ? max_workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace rgbdi
