#include "mpl/kernels.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mpl::kernels {

namespace {

const Impl* impl_for(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return &scalar_impl();
#ifdef MPL_BUILD_AVX2
    case Isa::avx2:
      return &avx2_impl();
#endif
#ifdef MPL_BUILD_AVX512
    case Isa::avx512:
      return &avx512_impl();
#endif
#ifdef MPL_BUILD_NEON
    case Isa::neon:
      return &neon_impl();
#endif
    default:
      return nullptr;
  }
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
#if defined(__x86_64__)
    case Isa::avx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Isa::avx512:
      return __builtin_cpu_supports("avx512f");
#endif
#if defined(__aarch64__)
    case Isa::neon:
      return true;
#endif
    default:
      return false;
  }
}

Isa pick_default() {
  if (const char* env = std::getenv("MPL_KERNELS")) {
    const std::string s(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512, Isa::neon}) {
      if (s == isa_name(isa)) {
        if (!isa_supported(isa)) {
          raise(Err::config_error,
                strfmt("MPL_KERNELS=%s requested but not supported on this "
                       "machine",
                       s.c_str()));
        }
        return isa;
      }
    }
    raise(Err::config_error,
          strfmt("MPL_KERNELS=%s is not one of scalar|avx2|avx512|neon",
                 s.c_str()));
  }
  for (Isa isa : {Isa::avx512, Isa::avx2, Isa::neon}) {
    if (isa_supported(isa)) return isa;
  }
  return Isa::scalar;
}

std::atomic<const Impl*> g_impl{nullptr};
std::atomic<int> g_isa{-1};

const Impl& active() {
  const Impl* impl = g_impl.load(std::memory_order_acquire);
  if (!impl) {
    Isa isa = pick_default();
    impl = impl_for(isa);
    g_isa.store(int(isa), std::memory_order_relaxed);
    g_impl.store(impl, std::memory_order_release);
  }
  return *impl;
}

// ------------------------------------------------------------- worker pool
// One task object per run(), shared_ptr-owned so a lagging worker can never
// touch a newer generation's state.
struct PoolTask {
  std::vector<std::pair<i64, i64>> ranges;
  const std::function<void(i64, i64)>* fn = nullptr;
  std::atomic<i64> next{0};
  std::atomic<i64> pending{0};
};

class Pool {
public:
  static Pool& get() {
    static Pool pool;
    return pool;
  }

  ~Pool() { shutdown(); }

  void resize(int n) {
    shutdown();
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = false;
    }
    for (int i = 0; i < n - 1; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  void run(std::vector<std::pair<i64, i64>> ranges,
           const std::function<void(i64, i64)>& fn) {
    auto task = std::make_shared<PoolTask>();
    task->ranges = std::move(ranges);
    task->fn = &fn;
    task->pending.store(i64(task->ranges.size()), std::memory_order_relaxed);
    {
      std::lock_guard<std::mutex> lk(mu_);
      current_ = task;
      ++generation_;
    }
    cv_work_.notify_all();
    work(*task);  // calling thread participates
    std::unique_lock<std::mutex> lk(mu_);
    cv_done_.wait(lk, [&] { return task->pending.load() == 0; });
  }

private:
  void worker_loop() {
    u64 seen = 0;
    for (;;) {
      std::shared_ptr<PoolTask> task;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_work_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        task = current_;
      }
      if (task) work(*task);
    }
  }

  void work(PoolTask& task) {
    const i64 n = i64(task.ranges.size());
    for (;;) {
      const i64 idx = task.next.fetch_add(1, std::memory_order_relaxed);
      if (idx >= n) break;
      (*task.fn)(task.ranges[idx].first, task.ranges[idx].second);
      if (task.pending.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        std::lock_guard<std::mutex> lk(mu_);
        cv_done_.notify_all();
      }
    }
  }

  void shutdown() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_work_.notify_all();
    for (auto& w : workers_) w.join();
    workers_.clear();
  }

  std::mutex mu_;
  std::condition_variable cv_work_, cv_done_;
  std::vector<std::thread> workers_;
  std::shared_ptr<PoolTask> current_;
  u64 generation_ = 0;
  bool stop_ = false;
};

std::atomic<int> g_threads{1};
thread_local bool tl_in_worker = false;

}  // namespace

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::avx512:
      return "avx512";
    case Isa::neon:
      return "neon";
  }
  return "?";
}

bool isa_supported(Isa isa) {
  return impl_for(isa) != nullptr && cpu_supports(isa);
}

Isa active_isa() {
  active();
  return Isa(g_isa.load(std::memory_order_relaxed));
}

void force_isa(Isa isa) {
  if (!isa_supported(isa)) {
    raise(Err::config_error,
          strfmt("kernel variant %s not supported on this machine",
                 isa_name(isa)));
  }
  g_isa.store(int(isa), std::memory_order_relaxed);
  g_impl.store(impl_for(isa), std::memory_order_release);
}

int thread_count() { return g_threads.load(std::memory_order_relaxed); }

void set_thread_count(int n) {
  if (n < 1) n = 1;
  g_threads.store(n, std::memory_order_relaxed);
  if (n > 1) Pool::get().resize(n);
}

void parallel_for(i64 n, i64 grain, const std::function<void(i64, i64)>& fn) {
  if (n <= 0) return;
  const int threads = thread_count();
  if (threads <= 1 || tl_in_worker || n <= grain) {
    fn(0, n);
    return;
  }
  i64 chunks = std::min<i64>(threads, (n + grain - 1) / grain);
  std::vector<std::pair<i64, i64>> ranges;
  ranges.reserve(chunks);
  const i64 per = (n + chunks - 1) / chunks;
  for (i64 b = 0; b < n; b += per) ranges.emplace_back(b, std::min(n, b + per));
  std::function<void(i64, i64)> task = [&](i64 lo, i64 hi) {
    tl_in_worker = true;
    fn(lo, hi);
    tl_in_worker = false;
  };
  Pool::get().run(std::move(ranges), task);
}

// ------------------------------------------------------------------- gemm
namespace {

void gemm_nn_threaded(i64 m, i64 n, i64 k, const double* a, i64 lda,
                      const double* b, i64 ldb, double* c, i64 ldc,
                      bool accumulate) {
  const Impl& impl = active();
  const int threads = thread_count();
  if (threads <= 1 || tl_in_worker || m * n * k < (i64(1) << 16)) {
    impl.gemm_nn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
    return;
  }
  // Split whichever output dimension gives enough chunks; sub-blocks of C are
  // disjoint so the per-element contract is unchanged.
  constexpr i64 col_block = 16;
  if (n / col_block >= 2 * threads || n >= m) {
    parallel_for((n + col_block - 1) / col_block, 1, [&](i64 lo, i64 hi) {
      const i64 j0 = lo * col_block;
      const i64 j1 = std::min(n, hi * col_block);
      if (j0 < j1) {
        impl.gemm_nn(m, j1 - j0, k, a, lda, b + j0, ldb, c + j0, ldc,
                     accumulate);
      }
    });
  } else {
    parallel_for(m, 8, [&](i64 i0, i64 i1) {
      impl.gemm_nn(i1 - i0, n, k, a + i0 * lda, lda, b, ldb, c + i0 * ldc, ldc,
                   accumulate);
    });
  }
}

}  // namespace

void transpose(const double* src, i64 m, i64 n, i64 ld_src, double* dst,
               i64 ld_dst) {
  for (i64 i = 0; i < m; ++i) {
    for (i64 j = 0; j < n; ++j) dst[j * ld_dst + i] = src[i * ld_src + j];
  }
}

void gemm(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, const double* a,
          i64 lda, const double* b, i64 ldb, double* c, i64 ldc,
          bool accumulate) {
  if (m <= 0 || n <= 0) return;
  if (!trans_a && !trans_b) {
    gemm_nn_threaded(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
    return;
  }
  if (trans_a && !trans_b) {
    // C = A^T B with physical A of shape k x m: transpose A, then NN.
    thread_local std::vector<double> at;
    if (i64(at.size()) < m * k) at.resize(m * k);
    transpose(a, k, m, lda, at.data(), k);
    gemm_nn_threaded(m, n, k, at.data(), k, b, ldb, c, ldc, accumulate);
    return;
  }
  if (!trans_a && trans_b) {
    // C = A B^T with physical B of shape n x k. Compute E = B A^T (NN over
    // ascending k) and emit C (+)= E^T; per-element chains match NN exactly.
    thread_local std::vector<double> at2, e;
    if (i64(at2.size()) < m * k) at2.resize(m * k);
    if (i64(e.size()) < m * n) e.resize(m * n);
    transpose(a, m, k, lda, at2.data(), m);
    gemm_nn_threaded(n, m, k, b, ldb, at2.data(), m, e.data(), m, false);
    if (accumulate) {
      for (i64 i = 0; i < m; ++i) {
        double* ci = c + i * ldc;
        for (i64 j = 0; j < n; ++j) ci[j] += e[j * m + i];
      }
    } else {
      transpose(e.data(), n, m, m, c, ldc);
    }
    return;
  }
  raise(Err::config_error, "gemm: trans_a && trans_b is not supported");
}

// ------------------------------------------------------------ elementwise
void add(const double* a, const double* b, double* out, i64 n) {
  active().add(a, b, out, n);
}
void sub(const double* a, const double* b, double* out, i64 n) {
  active().sub(a, b, out, n);
}
void scale(const double* a, double alpha, double* out, i64 n) {
  active().scale(a, alpha, out, n);
}
void axpy(double alpha, const double* x, double* y, i64 n) {
  active().axpy(alpha, x, y, n);
}
void colsum(const double* a, i64 rows, i64 cols, i64 lda, double* out,
            bool accumulate) {
  active().colsum(a, rows, cols, lda, out, accumulate);
}
void adam_update(double* p, double* m, double* v, const double* g, i64 n,
                 double lr, double b1, double b2, double eps, double bc1,
                 double bc2) {
  active().adam_update(p, m, v, g, n, lr, b1, b2, eps, bc1, bc2);
}

}  // namespace mpl::kernels
