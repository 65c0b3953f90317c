#pragma once
// tissue/clock.hpp: run time for the scheduler. Realtime and accelerated
// modes map wall time onto a virtual run timeline; deterministic-tick mode
// never consults the wall clock, so a run becomes a pure function of
// (config, seed, event log).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <thread>

namespace tissue {

class RunClock {
  public:
    enum class Mode { Realtime, Accelerated, Deterministic };

    static RunClock realtime() { return RunClock(Mode::Realtime, 1.0); }

    static RunClock accelerated(double factor) { return RunClock(Mode::Accelerated, factor); }

    static RunClock deterministic(std::uint64_t tick_interval_us) {
        RunClock c(Mode::Deterministic, 0.0);
        c.tick_interval_us_ = tick_interval_us;
        return c;
    }

    Mode mode() const { return mode_; }
    double factor() const { return factor_; }

    void start() { start_ = std::chrono::steady_clock::now(); }

    // Virtual microseconds since start(). In deterministic mode this is the
    // time of the tick currently being executed.
    std::uint64_t now_us() const {
        if (mode_ == Mode::Deterministic) return det_now_us_.load(std::memory_order_relaxed);
        auto wall = std::chrono::duration_cast<std::chrono::microseconds>(
                        std::chrono::steady_clock::now() - start_)
                        .count();
        return static_cast<std::uint64_t>(static_cast<double>(wall) * factor_);
    }

    void advance_to_tick(std::uint64_t tick_index) {
        det_now_us_.store(tick_index * tick_interval_us_, std::memory_order_relaxed);
    }

    // Sleeps (in short slices, so a stop request is honoured promptly) until
    // the virtual clock reaches target_us. No-op in deterministic mode.
    void wait_until(std::uint64_t target_us, const std::atomic<bool>& cancel) const {
        if (mode_ == Mode::Deterministic) return;
        while (!cancel.load(std::memory_order_relaxed)) {
            std::uint64_t now = now_us();
            if (now >= target_us) return;
            std::uint64_t wall_left = static_cast<std::uint64_t>(
                static_cast<double>(target_us - now) / factor_);
            std::this_thread::sleep_for(
                std::chrono::microseconds(std::min<std::uint64_t>(wall_left + 1, 20000)));
        }
    }

  private:
    RunClock(Mode m, double f) : mode_(m), factor_(f) {}

    Mode mode_;
    double factor_;
    std::uint64_t tick_interval_us_ = 0;
    std::chrono::steady_clock::time_point start_{};
    std::atomic<std::uint64_t> det_now_us_{0};

  public:
    RunClock(const RunClock& o)
        : mode_(o.mode_), factor_(o.factor_), tick_interval_us_(o.tick_interval_us_),
          start_(o.start_), det_now_us_(o.det_now_us_.load()) {}
    RunClock& operator=(const RunClock& o) {
        mode_ = o.mode_;
        factor_ = o.factor_;
        tick_interval_us_ = o.tick_interval_us_;
        start_ = o.start_;
        det_now_us_.store(o.det_now_us_.load());
        return *this;
    }
};

}  // namespace tissue
