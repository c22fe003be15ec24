#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace mmphate {

using Real = double;
using Index = std::ptrdiff_t;
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using SparseMatrix = Eigen::SparseMatrix<Real, Eigen::RowMajor, std::int64_t>;

/// Failure classes; the CLI maps each one onto its own exit code.
enum class ErrorKind { io, validation, numerical };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::validation, what);
}

/// Rethrows an Error with a prefix naming where it happened.
template <typename F>
auto annotate(const std::string& where, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), where + ": " + e.what());
  }
}

namespace parallel {

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> n{0};
  return n;
}
}  // namespace detail

/// 0 selects hardware concurrency.
inline void set_threads(int n) { detail::thread_setting().store(std::max(0, n)); }

inline int threads() {
  int n = detail::thread_setting().load();
  if (n > 0) return n;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Static contiguous partition of [begin, end). Each index is handled by exactly one
/// worker, so results are independent of the worker count as long as fn(i) only
/// writes state owned by i.
template <typename F>
void for_each_index(Index begin, Index end, F&& fn) {
  const Index count = end - begin;
  if (count <= 0) return;
  const Index workers = std::min<Index>(threads(), count);
  if (workers <= 1) {
    for (Index i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  auto run = [&](Index w) {
    const Index lo = begin + count * w / workers;
    const Index hi = begin + count * (w + 1) / workers;
    try {
      for (Index i = lo; i < hi; ++i) fn(i);
    } catch (...) {
      errors[static_cast<std::size_t>(w)] = std::current_exception();
    }
  };
  for (Index w = 1; w < workers; ++w) pool.emplace_back(run, w);
  run(0);
  for (auto& t : pool) t.join();
  // lowest-index failure wins so the reported error does not depend on scheduling
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace parallel
}  // namespace mmphate
