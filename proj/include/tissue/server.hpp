#pragma once
// tissue/server.hpp: the live side of the framework. ClientHub accepts
// protocol connections and turns antigen/signal lines into queued events;
// TissueServer owns the compartment and runs the tick loop on a RunClock,
// draining the queue between ticks and broadcasting responses to response
// clients. Exactly one thread (the scheduler) touches the compartment.

#include <atomic>
#include <cstdint>
#include <iostream>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include "tissue/clock.hpp"
#include "tissue/engine.hpp"
#include "tissue/net.hpp"
#include "tissue/wire.hpp"

namespace tissue {

struct HubStats {
    std::size_t total_connections = 0;
    std::size_t active = 0;
    std::size_t active_ingest = 0;  // open antigen/signal connections
    std::size_t ingest_ever = 0;    // antigen/signal connections ever accepted
    std::size_t protocol_errors = 0;
    std::uint64_t last_ingest_disconnect_us = 0;
};

// Accepts connections and runs one thread per client. Ingest lines become
// InputEvents stamped with their arrival time; response clients are fed
// every response the scheduler publishes. A connection accumulating three
// consecutive protocol errors is dropped, so a misbehaving peer can cost
// bounded work and nothing else.
class ClientHub {
  public:
    static constexpr int max_consecutive_errors = 3;

    ClientHub(std::unique_ptr<Listener> listener, EventQueue& queue, RunClock& clock,
              std::size_t max_cytokines)
        : listener_(std::move(listener)), queue_(queue), clock_(clock),
          max_cytokines_(max_cytokines) {}

    ~ClientHub() { stop(); }

    void start() { accept_thread_ = std::thread([this] { accept_loop(); }); }

    void stop() {
        bool was = stopping_.exchange(true);
        if (!was) {
            listener_->close();
            std::lock_guard<std::mutex> lock(mu_);
            for (Stream* s : open_streams_) s->shutdown_both();
        }
        if (accept_thread_.joinable()) accept_thread_.join();
        std::vector<std::thread> threads;
        {
            std::lock_guard<std::mutex> lock(mu_);
            threads.swap(conn_threads_);
        }
        for (auto& t : threads)
            if (t.joinable()) t.join();
    }

    void publish_response(const ResponseRecord& r) {
        std::string line = encode(WireMessage::response_msg(r.antigen, r.t_us)) + "\n";
        std::lock_guard<std::mutex> lock(mu_);
        for (auto it = subscribers_.begin(); it != subscribers_.end();) {
            if ((*it)->write_all(line)) ++it;
            else it = subscribers_.erase(it);
        }
    }

    HubStats stats() const {
        std::lock_guard<std::mutex> lock(mu_);
        return stats_;
    }

    std::string endpoint() const { return listener_->endpoint(); }

  private:
    void accept_loop() {
        while (!stopping_.load(std::memory_order_relaxed)) {
            auto stream = listener_->accept(stopping_);
            if (!stream) break;
            std::lock_guard<std::mutex> lock(mu_);
            if (stopping_.load(std::memory_order_relaxed)) break;
            ++stats_.total_connections;
            ++stats_.active;
            Stream* raw = stream.get();
            open_streams_.push_back(raw);
            conn_threads_.emplace_back(
                [this, s = std::move(stream)]() mutable { serve(std::move(s)); });
        }
    }

    void serve(std::unique_ptr<Stream> stream) {
        LineReader reader(*stream);
        std::optional<ClientKind> kind;
        bool counted_ingest = false;
        int consecutive_errors = 0;

        auto flag_error = [&](const std::string& line) {
            ++consecutive_errors;
            std::lock_guard<std::mutex> lock(mu_);
            ++stats_.protocol_errors;
            std::cerr << "tissue: protocol error from client: '" << line << "'\n";
        };

        while (consecutive_errors < max_consecutive_errors) {
            auto line = reader.next(stopping_);
            if (!line) break;
            auto msg = decode(*line);
            if (!msg) {
                flag_error(*line);
                continue;
            }
            using Kind = WireMessage::Kind;
            if (!kind) {
                // Nothing is acceptable before a versioned HELLO.
                if (msg->kind != Kind::hello || msg->version != 1) {
                    flag_error(*line);
                    continue;
                }
                kind = msg->client;
                if (*kind != ClientKind::response) {
                    counted_ingest = true;
                    std::lock_guard<std::mutex> lock(mu_);
                    ++stats_.ingest_ever;
                    ++stats_.active_ingest;
                } else {
                    std::lock_guard<std::mutex> lock(mu_);
                    subscribers_.push_back(stream.get());
                }
                consecutive_errors = 0;
                continue;
            }
            if (msg->kind == Kind::bye) break;
            if (msg->kind == Kind::antigen && *kind == ClientKind::antigen) {
                queue_.push(InputEvent::antigen_event(clock_.now_us(), msg->antigen));
                consecutive_errors = 0;
            } else if (msg->kind == Kind::signal && *kind == ClientKind::signal) {
                // Unknown signal slots are a client-side mistake: rejected
                // here, counted against the connection like any bad line.
                if (msg->signal_id >= max_cytokines_) {
                    flag_error(*line);
                    continue;
                }
                queue_.push(InputEvent::signal_event(clock_.now_us(), msg->signal_id, msg->level));
                consecutive_errors = 0;
            } else {
                // Decodable but wrong for this connection's declared kind.
                flag_error(*line);
            }
        }

        std::lock_guard<std::mutex> lock(mu_);
        subscribers_.remove(stream.get());
        open_streams_.remove(stream.get());
        --stats_.active;
        if (counted_ingest) {
            --stats_.active_ingest;
            stats_.last_ingest_disconnect_us = clock_.now_us();
        }
    }

    std::unique_ptr<Listener> listener_;
    EventQueue& queue_;
    RunClock& clock_;
    std::size_t max_cytokines_;

    std::atomic<bool> stopping_{false};
    std::thread accept_thread_;
    mutable std::mutex mu_;
    std::vector<std::thread> conn_threads_;
    std::list<Stream*> open_streams_;
    std::list<Stream*> subscribers_;
    HubStats stats_;
};

struct ServerOptions {
    std::uint64_t seed = 1;
    std::optional<std::uint64_t> grace_period_us;  // virtual, overrides config
    EngineHooks hooks;
};

// A full running server: hub plus scheduler loop. Start it, let clients
// drive it, then take the transcript with finish(). The server stops by
// itself once every ingest client has disconnected and the grace period has
// passed without a new one arriving.
class TissueServer {
  public:
    TissueServer(ExperimentConfig cfg, CellAlgorithm alg, RunClock clock,
                 std::unique_ptr<Listener> listener, ServerOptions opt = {})
        : cfg_(std::move(cfg)), alg_(std::move(alg)), clock_(clock), opt_(std::move(opt)),
          hub_(std::move(listener), queue_, clock_, cfg_.tissue.max_cytokines) {
        cfg_.validate();
    }

    ~TissueServer() {
        request_stop();
        if (scheduler_.joinable()) scheduler_.join();
        queue_.close();  // unblocks any connection thread stuck on a full queue
        hub_.stop();
    }

    void start() {
        hub_.start();
        scheduler_ = std::thread([this] { run_loop(); });
    }

    void request_stop() { stop_.store(true); }

    std::string endpoint() const { return hub_.endpoint(); }
    HubStats stats() const { return hub_.stats(); }

    // Blocks until the scheduler finishes (auto-stop or request_stop), then
    // tears the hub down and returns everything the run produced.
    Transcript finish() {
        if (scheduler_.joinable()) scheduler_.join();
        queue_.close();
        hub_.stop();
        transcript_.protocol_errors = hub_.stats().protocol_errors;
        transcript_.manifest = engine_detail::build_manifest(
            alg_, cfg_, opt_.seed, fnv1a64(serialize_events(applied_)), transcript_);
        return std::move(transcript_);
    }

  private:
    void run_loop() {
        TissueCompartment tc(cfg_.tissue);
        RngStream rng(opt_.seed);
        populate(tc, alg_, rng);

        auto probes = engine_detail::init_probes(alg_);
        CallbackSink sink([this](const ResponseRecord& r) {
            transcript_.responses.push_back(r);
            hub_.publish_response(r);
        });

        const std::uint64_t rate = cfg_.tissue.cell_update_rate_us;
        const std::uint64_t grace = opt_.grace_period_us.value_or(cfg_.grace_period_us);
        clock_.start();

        for (std::uint64_t k = 1; !stop_.load(std::memory_order_relaxed); ++k) {
            if (clock_.mode() == RunClock::Mode::Deterministic) clock_.advance_to_tick(k);
            else clock_.wait_until(k * rate, stop_);
            if (stop_.load(std::memory_order_relaxed)) break;
            const std::uint64_t now = clock_.now_us();

            std::size_t antigen_events = 0, signal_events = 0;
            for (const InputEvent& e : queue_.drain()) {
                applied_.push_back(e);
                if (e.kind == InputEvent::Kind::antigen) {
                    ingest_antigen(tc, e.antigen, rng);
                    ++antigen_events;
                } else if (set_signal(tc, e.signal_id, e.level)) {
                    ++signal_events;
                } else {
                    ++transcript_.rejected_signals;
                }
            }

            TickReport rep = tick_once(tc, alg_, rng, k, now, &sink);
            rep.antigen_events = antigen_events;
            rep.signal_events = signal_events;
            transcript_.ticks.push_back(rep);
            engine_detail::sample_probes(probes, tc, now);
            if (opt_.hooks.post_tick) opt_.hooks.post_tick(tc, rep);

            HubStats st = hub_.stats();
            if (st.ingest_ever > 0 && st.active_ingest == 0 &&
                now >= st.last_ingest_disconnect_us + grace)
                break;
        }

        for (auto& st : probes) transcript_.probes.push_back({st.probe->name, std::move(st.csv)});
    }

    ExperimentConfig cfg_;
    CellAlgorithm alg_;
    RunClock clock_;
    ServerOptions opt_;
    EventQueue queue_;
    ClientHub hub_;
    std::thread scheduler_;
    std::atomic<bool> stop_{false};
    Transcript transcript_;
    std::vector<InputEvent> applied_;
};

}  // namespace tissue
