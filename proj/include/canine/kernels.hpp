#pragma once

#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace canine {

// Static worker pool for row-partitioned kernels. Each output row is computed
// by exactly one worker with the same serial inner loop, so results are
// bit-identical for any worker count (including zero).
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    int workers() const { return static_cast<int>(threads_.size()); }

    // Runs fn(begin, end) over a static partition of [0, n). fn is also called
    // on the calling thread for its own slice.
    void parallel_rows(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
        int parts = workers() + 1;
        if (parts <= 1 || n < 2) {
            fn(0, n);
            return;
        }
        if (n < parts) parts = static_cast<int>(n);
        {
            std::unique_lock<std::mutex> lk(mu_);
            job_ = &fn;
            job_n_ = n;
            job_parts_ = parts;
            next_part_ = 1;  // part 0 runs on the calling thread
            pending_ = parts - 1;
            ++job_id_;
        }
        cv_.notify_all();
        run_part(fn, 0, n, parts, 0);
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [&] { return pending_ == 0; });
        job_ = nullptr;
    }

private:
    ThreadPool() {
        int n = default_workers();
        for (int i = 0; i < n; ++i)
            threads_.emplace_back([this] { worker_loop(); });
    }

    ~ThreadPool() {
        {
            std::unique_lock<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    static int default_workers() {
        if (const char* env = std::getenv("CANINE_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v - 1;
            return 0;
        }
        unsigned hw = std::thread::hardware_concurrency();
        int extra = static_cast<int>(hw) - 1;
        if (extra < 0) extra = 0;
        if (extra > 7) extra = 7;
        return extra;
    }

    static void run_part(const std::function<void(int64_t, int64_t)>& fn, int64_t n_unused, int64_t n,
                         int parts, int part) {
        (void)n_unused;
        int64_t chunk = (n + parts - 1) / parts;
        int64_t b = chunk * part;
        int64_t e = b + chunk;
        if (e > n) e = n;
        if (b < e) fn(b, e);
    }

    void worker_loop() {
        uint64_t seen = 0;
        while (true) {
            const std::function<void(int64_t, int64_t)>* job = nullptr;
            int64_t n = 0;
            int parts = 0, part = 0;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [&] { return stop_ || (job_ && job_id_ != seen && next_part_ < job_parts_); });
                if (stop_) return;
                seen = job_id_;
                job = job_;
                n = job_n_;
                parts = job_parts_;
                part = next_part_++;
            }
            run_part(*job, 0, n, parts, part);
            {
                std::unique_lock<std::mutex> lk(mu_);
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    const std::function<void(int64_t, int64_t)>* job_ = nullptr;
    int64_t job_n_ = 0;
    int job_parts_ = 0;
    int next_part_ = 0;
    int pending_ = 0;
    uint64_t job_id_ = 0;
    bool stop_ = false;
};

namespace kern {

constexpr int64_t kParallelFlopThreshold = 262144;

// C += A(n x k) * B(k x m)
inline void matmul_acc(const double* A, const double* B, double* C, int64_t n, int64_t k, int64_t m) {
    auto body = [=](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const double* __restrict__ a = A + i * k;
            double* __restrict__ c = C + i * m;
            for (int64_t kk = 0; kk < k; ++kk) {
                const double av = a[kk];
                const double* __restrict__ b = B + kk * m;
                for (int64_t j = 0; j < m; ++j) c[j] += av * b[j];
            }
        }
    };
    if (n * k * m >= kParallelFlopThreshold)
        ThreadPool::instance().parallel_rows(n, body);
    else
        body(0, n);
}

// C += A(n x k) * B(m x k)^T  -- dot-product form
inline void matmul_bt_acc(const double* A, const double* B, double* C, int64_t n, int64_t k, int64_t m) {
    auto body = [=](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const double* __restrict__ a = A + i * k;
            double* __restrict__ c = C + i * m;
            for (int64_t j = 0; j < m; ++j) {
                const double* __restrict__ b = B + j * k;
                double acc = 0.0;
                for (int64_t kk = 0; kk < k; ++kk) acc += a[kk] * b[kk];
                c[j] += acc;
            }
        }
    };
    if (n * k * m >= kParallelFlopThreshold)
        ThreadPool::instance().parallel_rows(n, body);
    else
        body(0, n);
}

// C += A(k x n)^T * B(k x m)
inline void matmul_at_acc(const double* A, const double* B, double* C, int64_t n, int64_t k, int64_t m) {
    auto body = [=](int64_t i0, int64_t i1) {
        for (int64_t kk = 0; kk < k; ++kk) {
            const double* __restrict__ a = A + kk * n;
            const double* __restrict__ b = B + kk * m;
            for (int64_t i = i0; i < i1; ++i) {
                const double av = a[i];
                double* __restrict__ c = C + i * m;
                for (int64_t j = 0; j < m; ++j) c[j] += av * b[j];
            }
        }
    };
    if (n * k * m >= kParallelFlopThreshold)
        ThreadPool::instance().parallel_rows(n, body);
    else
        body(0, n);
}

}  // namespace kern
}  // namespace canine
