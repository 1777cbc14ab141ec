#include "fsw/parallel.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace fsw {

namespace {

thread_local bool inside_worker = false;

class WorkerPool {
public:
    explicit WorkerPool(int workers) {
        for (int i = 0; i < workers; ++i) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    ~WorkerPool() {
        {
            std::unique_lock lock(mu_);
            quit_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(int64_t n, int chunks, const std::function<void(int64_t, int64_t)>& fn) {
        std::unique_lock lock(mu_);
        job_ = &fn;
        job_n_ = n;
        job_chunks_ = chunks;
        next_chunk_ = 0;
        pending_ = chunks;
        ++generation_;
        cv_.notify_all();
        done_cv_.wait(lock, [this] { return pending_ == 0; });
        job_ = nullptr;
    }

private:
    void worker_loop() {
        uint64_t seen = 0;
        while (true) {
            int chunk;
            const std::function<void(int64_t, int64_t)>* fn;
            int64_t n;
            int chunks;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [&] { return quit_ || (generation_ != seen && next_chunk_ < job_chunks_); });
                if (quit_) return;
                fn = job_;
                n = job_n_;
                chunks = job_chunks_;
                chunk = next_chunk_++;
                if (next_chunk_ >= chunks) seen = generation_;
            }
            run_chunk(*fn, n, chunk, chunks);
            {
                std::unique_lock lock(mu_);
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    static void run_chunk(const std::function<void(int64_t, int64_t)>& fn, int64_t n, int chunk, int chunks) {
        const int64_t lo = n * chunk / chunks;
        const int64_t hi = n * (chunk + 1) / chunks;
        inside_worker = true;
        if (lo < hi) fn(lo, hi);
        inside_worker = false;
    }

    friend void fsw::parallel_for(int64_t, const std::function<void(int64_t, int64_t)>&);

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    const std::function<void(int64_t, int64_t)>* job_ = nullptr;
    int64_t job_n_ = 0;
    int job_chunks_ = 0;
    int next_chunk_ = 0;
    int pending_ = 0;
    uint64_t generation_ = 0;
    bool quit_ = false;
};

int detect_workers() {
    if (const char* env = std::getenv("FREQSHIELD_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return std::min(v, 64);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return std::clamp<int>(static_cast<int>(hw), 1, 8);
}

WorkerPool& pool() {
    static WorkerPool p(detect_workers());
    return p;
}

}  // namespace

int worker_count() {
    static int n = detect_workers();
    return n;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    const int workers = worker_count();
    if (workers <= 1 || n < 2 || inside_worker) {
        fn(0, n);
        return;
    }
    const int chunks = static_cast<int>(std::min<int64_t>(workers, n));
    pool().run(n, chunks, fn);
}

}  // namespace fsw
