#ifndef HKPROP_PARALLEL_HPP
#define HKPROP_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

#include "hkprop/types.hpp"

namespace hkprop {

/// Runs fn(i) for i in [0, n). Each index must write only to its own slots,
/// so the result is identical for every thread count.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int nt = std::min<std::size_t>(threads, n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

/// Fixed-order pairwise (tree) reduction of block partial sums. The block
/// sums are accumulated sequentially; blocks are then merged by halving,
/// which keeps the rounding pattern independent of any thread layout.
class PairwiseAccumulator {
 public:
  static constexpr std::size_t kBlock = 256;

  void add(Complex v) {
    acc_ += v;
    if (++fill_ == kBlock) flush();
  }

  Complex total() {
    flush();
    std::vector<Complex> level = blocks_;
    while (level.size() > 1) {
      std::vector<Complex> up;
      up.reserve((level.size() + 1) / 2);
      for (std::size_t i = 0; i + 1 < level.size(); i += 2)
        up.push_back(level[i] + level[i + 1]);
      if (level.size() % 2) up.push_back(level.back());
      level.swap(up);
    }
    return level.empty() ? Complex{0.0, 0.0} : level[0];
  }

 private:
  void flush() {
    if (fill_ > 0) {
      blocks_.push_back(acc_);
      acc_ = Complex{0.0, 0.0};
      fill_ = 0;
    }
  }

  Complex acc_{0.0, 0.0};
  std::size_t fill_ = 0;
  std::vector<Complex> blocks_;
};

}  // namespace hkprop

#endif
