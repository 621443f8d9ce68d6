#include "fluidfm/util/thread_pool.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace fluidfm {

int thread_count() {
  static const int n = [] {
    if (const char* env = std::getenv("FLUIDFM_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1 && v <= 64) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return static_cast<int>(hc == 0 ? 1 : (hc > 16 ? 16 : hc));
  }();
  return n;
}

namespace {

class Pool {
 public:
  explicit Pool(int workers) {
    for (int i = 0; i < workers; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::unique_lock lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void run(int64_t n, const std::function<void(int64_t)>& fn) {
    std::unique_lock lk(run_mu_);  // one parallel_for at a time
    {
      std::unique_lock g(mu_);
      job_fn_ = &fn;
      job_n_ = n;
      next_.store(0, std::memory_order_relaxed);
      remaining_ = n;
    }
    cv_.notify_all();
    // the caller participates too
    work();
    std::unique_lock g(mu_);
    done_cv_.wait(g, [this] { return remaining_ == 0; });
    job_fn_ = nullptr;
  }

 private:
  void work() {
    const std::function<void(int64_t)>* fn;
    int64_t n;
    {
      std::unique_lock g(mu_);
      fn = job_fn_;
      n = job_n_;
    }
    if (!fn) return;
    while (true) {
      const int64_t i = next_.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) break;
      (*fn)(i);
      std::unique_lock g(mu_);
      if (--remaining_ == 0) done_cv_.notify_all();
    }
  }

  void worker_loop() {
    while (true) {
      {
        std::unique_lock g(mu_);
        cv_.wait(g, [this] { return stop_ || (job_fn_ && next_.load() < job_n_); });
        if (stop_) return;
      }
      work();
    }
  }

  std::mutex run_mu_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::vector<std::thread> threads_;
  const std::function<void(int64_t)>* job_fn_ = nullptr;
  int64_t job_n_ = 0;
  int64_t remaining_ = 0;
  std::atomic<int64_t> next_{0};
  bool stop_ = false;
};

}  // namespace

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  if (n <= 0) return;
  const int workers = thread_count() - 1;
  if (workers < 1 || n == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  static Pool pool(thread_count() - 1);
  pool.run(n, fn);
}

}  // namespace fluidfm
