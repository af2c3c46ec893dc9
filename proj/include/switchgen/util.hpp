#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace switchgen {

// Runs fn(i) for i in [0, count) on up to `limit` worker threads and hands
// results to emit(i, result) strictly in index order. fn must not touch
// shared mutable state; exceptions from fn propagate after all workers stop.
template <typename Result>
void parallel_ordered(size_t count, int limit, const std::function<Result(size_t)>& fn,
                      const std::function<void(size_t, Result&&)>& emit) {
    if (count == 0) return;
    if (limit < 1) limit = 1;
    size_t workers = std::min<size_t>(limit, count);

    if (workers == 1) {
        for (size_t i = 0; i < count; ++i) emit(i, fn(i));
        return;
    }

    std::mutex mu;
    std::condition_variable cv;
    std::map<size_t, Result> ready;
    std::atomic<size_t> next_item{0};
    std::exception_ptr failure;

    auto work = [&] {
        while (true) {
            size_t i = next_item.fetch_add(1);
            if (i >= count) return;
            try {
                Result r = fn(i);
                {
                    std::lock_guard lock(mu);
                    ready.emplace(i, std::move(r));
                }
                cv.notify_all();
            } catch (...) {
                {
                    std::lock_guard lock(mu);
                    if (!failure) failure = std::current_exception();
                    next_item.store(count);  // drain remaining work
                }
                cv.notify_all();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(work);

    size_t emitted = 0;
    {
        std::unique_lock lock(mu);
        while (emitted < count) {
            cv.wait(lock, [&] { return failure || ready.count(emitted) > 0; });
            if (failure) break;
            Result r = std::move(ready.at(emitted));
            ready.erase(emitted);
            lock.unlock();
            emit(emitted, std::move(r));
            ++emitted;
            lock.lock();
        }
    }

    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
// Nonempty lines of a file (dataset files are one JSON record per line).
std::vector<std::string> read_lines(const std::string& path);

}  // namespace switchgen
