#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace batchcov {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent generator for replication `index` under `seed`.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL)));
}

/// Compensated (Neumaier) summation.
class NeumaierSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  void merge(const NeumaierSum& o) {
    add(o.sum_);
    add(o.comp_);
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Running first and second moments of a stream of replication outputs.
struct MomentAccumulator {
  NeumaierSum s1;
  NeumaierSum s2;
  std::uint64_t count = 0;

  void add(double x) {
    s1.add(x);
    s2.add(x * x);
    ++count;
  }
  void merge(const MomentAccumulator& o) {
    s1.merge(o.s1);
    s2.merge(o.s2);
    count += o.count;
  }
  double mean() const { return count ? s1.value() / static_cast<double>(count) : 0.0; }
  /// Sample variance with the n-1 divisor.
  double variance() const {
    if (count < 2) return 0.0;
    const double n = static_cast<double>(count);
    const double m = s1.value() / n;
    return std::max(0.0, (s2.value() - n * m * m) / (n - 1.0));
  }
};

inline int default_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Fixed replication blocks; the block size, not the worker count, defines the summation order.
inline constexpr std::uint64_t kChunkSize = 4096;

/// Runs body(begin, end) over [0, total) in fixed chunks and returns per-chunk results in chunk order.
template <class Acc>
std::vector<Acc> run_chunked(std::uint64_t total, int workers,
                             const std::function<Acc(std::uint64_t, std::uint64_t)>& body,
                             std::uint64_t chunk = kChunkSize) {
  const std::uint64_t nchunks = (total + chunk - 1) / chunk;
  std::vector<Acc> out(nchunks);
  if (nchunks == 0) return out;
  workers = std::max(1, std::min<int>(workers, static_cast<int>(std::min<std::uint64_t>(nchunks, 1024))));

  std::atomic<std::uint64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::uint64_t c = next.fetch_add(1);
      if (c >= nchunks) return;
      try {
        const std::uint64_t b = c * chunk;
        out[c] = body(b, std::min(total, b + chunk));
      } catch (...) {
        std::lock_guard<std::mutex> lk(error_mutex);
        if (!error) error = std::current_exception();
        next.store(nchunks);
      }
    }
  };

  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

/// Chunked reduction merged in chunk order.
template <class Acc>
Acc reduce_chunked(std::uint64_t total, int workers, const std::function<Acc(std::uint64_t, std::uint64_t)>& body,
                   std::uint64_t chunk = kChunkSize) {
  auto parts = run_chunked<Acc>(total, workers, body, chunk);
  Acc acc{};
  for (const auto& p : parts) acc.merge(p);
  return acc;
}

}  // namespace batchcov
