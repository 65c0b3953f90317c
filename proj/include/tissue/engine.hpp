#pragma once
// tissue/engine.hpp: the scheduler that drives a tissue compartment. A tick
// runs in three phases over one random permutation of the population:
// receptors read, callbacks act (responses buffered), producers commit.
// Because cytokine producers commit after every callback has run, a signal
// written at tick t is first visible to receptors at tick t+1.
//
// Two drivers sit on top of tick_once: run_replay_deterministic here, which
// replays a timestamped event log on a virtual clock and is a pure function
// of (config, seed, log), and TissueServer in server.hpp, which runs the
// same tick loop against live client connections.

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tissue/cell_kit.hpp"
#include "tissue/config.hpp"
#include "tissue/core.hpp"
#include "tissue/rng.hpp"

namespace tissue {

// One timestamped input to a run, from a client connection or a replay log.
struct InputEvent {
    enum class Kind { antigen, signal };

    Kind kind = Kind::antigen;
    std::uint64_t t_us = 0;
    AntigenValue antigen = 0;
    std::uint32_t signal_id = 0;
    double level = 0.0;

    bool operator==(const InputEvent&) const = default;

    static InputEvent antigen_event(std::uint64_t t_us, AntigenValue value) {
        InputEvent e;
        e.kind = Kind::antigen;
        e.t_us = t_us;
        e.antigen = value;
        return e;
    }
    static InputEvent signal_event(std::uint64_t t_us, std::uint32_t id, double level) {
        InputEvent e;
        e.kind = Kind::signal;
        e.t_us = t_us;
        e.signal_id = id;
        e.level = level;
        return e;
    }
};

// Canonical one-line text form, shared by the replay log format and the
// input hash in run manifests.
inline std::string serialize_event(const InputEvent& e) {
    if (e.kind == InputEvent::Kind::antigen)
        return std::to_string(e.t_us) + " ANTIGEN " + std::to_string(e.antigen);
    return std::to_string(e.t_us) + " SIGNAL " + std::to_string(e.signal_id) + " " +
           format_double(e.level);
}

inline std::string serialize_events(const std::vector<InputEvent>& events) {
    std::string out;
    for (const auto& e : events) {
        out += serialize_event(e);
        out += '\n';
    }
    return out;
}

// Canonical ordering: by timestamp, antigen before signal on ties.
inline bool event_before(const InputEvent& a, const InputEvent& b) {
    if (a.t_us != b.t_us) return a.t_us < b.t_us;
    return a.kind == InputEvent::Kind::antigen && b.kind == InputEvent::Kind::signal;
}

// Bounded multi-producer queue between connection threads and the scheduler.
// push blocks while full, so a fast client backs up on the socket rather
// than growing server memory.
class EventQueue {
  public:
    explicit EventQueue(std::size_t capacity = 65536) : capacity_(capacity) {}

    // False once the queue is closed; the event is dropped in that case.
    bool push(const InputEvent& e) {
        std::unique_lock<std::mutex> lock(mu_);
        not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
        if (closed_) return false;
        items_.push_back(e);
        return true;
    }

    std::vector<InputEvent> drain() {
        std::vector<InputEvent> out;
        {
            std::lock_guard<std::mutex> lock(mu_);
            out.swap(items_);
        }
        not_full_.notify_all();
        return out;
    }

    void close() {
        std::lock_guard<std::mutex> lock(mu_);
        closed_ = true;
        not_full_.notify_all();
    }

  private:
    std::size_t capacity_;
    std::mutex mu_;
    std::condition_variable not_full_;
    std::vector<InputEvent> items_;
    bool closed_ = false;
};

// Entry of one antigen value into the tissue: antigen_multiplier copies are
// written, each to an independently drawn random slot of the fixed store,
// overwriting whatever those slots held.
inline std::size_t ingest_antigen(TissueCompartment& tc, AntigenValue value, RngStream& rng) {
    if (tc.params.max_antigen == 0) return 0;
    for (std::size_t i = 0; i < tc.params.antigen_multiplier; ++i)
        tc.antigen_store[rng.index(tc.antigen_store.size())] = value;
    return tc.params.antigen_multiplier;
}

// False when the signal slot does not exist; callers decide how loudly to
// reject (the server counts it against the sending connection).
inline bool set_signal(TissueCompartment& tc, std::uint32_t id, double level) {
    if (id >= tc.signals.size()) return false;
    tc.signals[id] = level;
    return true;
}

// Per-tick summary, enough to plot activity rates without replaying.
struct TickReport {
    std::uint64_t tick = 0;
    std::uint64_t t_us = 0;
    std::size_t antigen_events = 0;  // inputs applied just before this tick
    std::size_t signal_events = 0;
    std::size_t transfers = 0;      // antigen moved tissue -> cell stores
    std::size_t presentations = 0;  // displays begun by antigen producers
    std::size_t matches = 0;        // VR receptor matches
    std::size_t responses = 0;      // response records emitted
};

struct CycleContext;
using CellCycleFn = std::function<void(Cell&, CycleContext&)>;

// Everything a cell-cycle callback may touch. Responses written here are
// buffered and only reach the sink once the whole tick has committed.
struct CycleContext {
    TissueCompartment& tissue;
    RngStream& rng;
    const Matcher& matcher;
    std::vector<ResponseRecord>& responses;
    std::uint64_t now_us;
    std::size_t cell_index;  // of the cell being cycled
    TickReport& report;
};

// A complete algorithm definition: which cells exist, how they initialise,
// and what each type does per tick.
struct CellAlgorithm {
    std::string name;
    std::vector<CellTypeParams> cell_types;
    std::function<void(Cell&, RngStream&)> init_cell;
    std::map<CellTypeId, CellCycleFn> callbacks;
    Matcher matcher = exact_matcher();
    std::vector<Probe> probes;
};

class ResponseSink {
  public:
    virtual ~ResponseSink() = default;
    virtual void on_response(const ResponseRecord& r) = 0;
};

class VectorSink : public ResponseSink {
  public:
    std::vector<ResponseRecord> records;
    void on_response(const ResponseRecord& r) override { records.push_back(r); }
};

class CallbackSink : public ResponseSink {
  public:
    explicit CallbackSink(std::function<void(const ResponseRecord&)> fn) : fn_(std::move(fn)) {}
    void on_response(const ResponseRecord& r) override { fn_(r); }

  private:
    std::function<void(const ResponseRecord&)> fn_;
};

// Creates and initialises the population, types in declaration order. With
// the standard two-type setup, type 1 occupies the low indices.
inline void populate(TissueCompartment& tc, const CellAlgorithm& alg, RngStream& rng) {
    for (const auto& params : alg.cell_types) {
        for (std::size_t i = 0; i < params.num_cells; ++i) {
            Cell c = Cell::from_params(params);
            if (alg.init_cell) alg.init_cell(c, rng);
            tc.add_cell(std::move(c));
        }
    }
}

// One scheduler tick over a fresh random permutation of the population.
// Receptor phase, then callback phase, then commit phase (cytokine
// producers in permutation order, last writer wins; buffered responses
// flushed). A callback that throws aborts the tick before anything commits.
inline TickReport tick_once(TissueCompartment& tc, const CellAlgorithm& alg, RngStream& rng,
                            std::uint64_t tick, std::uint64_t now_us, ResponseSink* sink) {
    TickReport report;
    report.tick = tick;
    report.t_us = now_us;
    std::vector<std::size_t> order = rng.permutation(tc.cells.size());

    for (std::size_t i : order) {
        Cell& cell = tc.cells[i];
        report.transfers += antigen_receptor_step(cell, tc, rng);
        cytokine_receptor_step(cell, tc);
        cell_receptor_step(cell, tc, rng);
    }

    std::vector<ResponseRecord> buffered;
    for (std::size_t i : order) {
        Cell& cell = tc.cells[i];
        auto it = alg.callbacks.find(cell.type_id());
        if (it == alg.callbacks.end() || !it->second) continue;
        CycleContext ctx{tc, rng, alg.matcher, buffered, now_us, i, report};
        it->second(cell, ctx);
    }

    for (std::size_t i : order) cytokine_producer_step(tc.cells[i], tc);
    report.responses = buffered.size();
    if (sink)
        for (const auto& r : buffered) sink->on_response(r);
    return report;
}

struct ProbeLog {
    std::string name;
    std::string csv;
};

// Everything a run leaves behind. In deterministic mode this is a pure
// function of (config, seed, event log); the manifest records the hashes
// that pin that down.
struct Transcript {
    std::vector<ResponseRecord> responses;
    std::vector<TickReport> ticks;
    std::vector<ProbeLog> probes;
    std::string manifest;
    std::size_t rejected_signals = 0;
    std::size_t protocol_errors = 0;

    std::string response_csv() const {
        std::string out = "t_us,antigen,cell_type\n";
        for (const auto& r : responses) {
            out += std::to_string(r.t_us);
            out += ',';
            out += std::to_string(r.antigen);
            out += ',';
            out += std::to_string(r.cell_type);
            out += '\n';
        }
        return out;
    }

    const ProbeLog* probe(const std::string& name) const {
        for (const auto& p : probes)
            if (p.name == name) return &p;
        return nullptr;
    }
};

struct EngineHooks {
    // Runs after each committed tick; used by tests for per-tick checks.
    std::function<void(const TissueCompartment&, const TickReport&)> post_tick;
};

struct RunOptions {
    std::uint64_t seed = 1;
    // Overrides the config grace period when set (handy for short tests).
    std::optional<std::uint64_t> grace_period_us;
    EngineHooks hooks;
};

namespace engine_detail {

struct ProbeState {
    const Probe* probe;
    std::string csv;
    std::uint64_t next_due;
};

inline std::vector<ProbeState> init_probes(const CellAlgorithm& alg) {
    std::vector<ProbeState> states;
    states.reserve(alg.probes.size());
    for (const auto& p : alg.probes) {
        ProbeState st{&p, "t_us", p.rate_us};
        for (const auto& c : p.columns) {
            st.csv += ',';
            st.csv += c;
        }
        st.csv += '\n';
        states.push_back(std::move(st));
    }
    return states;
}

// Samples every probe that has come due, at most once per call; next_due
// then skips past now so a slow tick never causes a catch-up burst.
inline void sample_probes(std::vector<ProbeState>& states, const TissueCompartment& tc,
                          std::uint64_t now_us) {
    for (auto& st : states) {
        if (now_us < st.next_due) continue;
        ProbeWriter w(st.csv, now_us);
        st.probe->sampler(tc, w);
        while (st.next_due <= now_us) st.next_due += st.probe->rate_us;
    }
}

inline std::string build_manifest(const CellAlgorithm& alg, const ExperimentConfig& cfg,
                                  std::uint64_t seed, std::uint64_t input_hash,
                                  const Transcript& t) {
    std::string m;
    m += "algorithm=" + alg.name + "\n";
    m += "config_hash=" + hex64(fnv1a64(serialize_config(cfg))) + "\n";
    m += "seed=" + std::to_string(seed) + "\n";
    m += "input_log_hash=" + hex64(input_hash) + "\n";
    m += "ticks=" + std::to_string(t.ticks.size()) + "\n";
    m += "responses=" + std::to_string(t.responses.size()) + "\n";
    m += "rejected_signals=" + std::to_string(t.rejected_signals) + "\n";
    std::string names;
    for (const auto& p : t.probes) {
        if (!names.empty()) names += ',';
        names += p.name;
    }
    m += "probes=" + names + "\n";
    return m;
}

}  // namespace engine_detail

// Replays a timestamped event log on a virtual tick grid. Tick k happens at
// virtual time k*cell_update_rate and consumes every event with a strictly
// earlier timestamp. After the last event's tick the run continues for the
// grace period, giving antigen still inside cells time to surface.
inline Transcript run_replay_deterministic(const ExperimentConfig& cfg, const CellAlgorithm& alg,
                                           std::vector<InputEvent> log,
                                           const RunOptions& opt = {}) {
    cfg.validate();
    std::stable_sort(log.begin(), log.end(), event_before);

    TissueCompartment tc(cfg.tissue);
    RngStream rng(opt.seed);
    populate(tc, alg, rng);

    Transcript out;
    VectorSink sink;
    auto probes = engine_detail::init_probes(alg);

    const std::uint64_t rate = cfg.tissue.cell_update_rate_us;
    const std::uint64_t grace = opt.grace_period_us.value_or(cfg.grace_period_us);
    const std::uint64_t grace_ticks = (grace + rate - 1) / rate;
    std::uint64_t num_ticks = grace_ticks;
    if (!log.empty()) num_ticks += log.back().t_us / rate + 1;

    std::size_t next_event = 0;
    for (std::uint64_t k = 1; k <= num_ticks; ++k) {
        const std::uint64_t now = k * rate;
        std::size_t antigen_events = 0, signal_events = 0;
        while (next_event < log.size() && log[next_event].t_us < now) {
            const InputEvent& e = log[next_event++];
            if (e.kind == InputEvent::Kind::antigen) {
                ingest_antigen(tc, e.antigen, rng);
                ++antigen_events;
            } else if (set_signal(tc, e.signal_id, e.level)) {
                ++signal_events;
            } else {
                ++out.rejected_signals;
            }
        }
        TickReport rep = tick_once(tc, alg, rng, k, now, &sink);
        rep.antigen_events = antigen_events;
        rep.signal_events = signal_events;
        out.ticks.push_back(rep);
        engine_detail::sample_probes(probes, tc, now);
        if (opt.hooks.post_tick) opt.hooks.post_tick(tc, rep);
    }

    out.responses = std::move(sink.records);
    for (auto& st : probes) out.probes.push_back({st.probe->name, std::move(st.csv)});
    out.manifest = engine_detail::build_manifest(alg, cfg, opt.seed,
                                                 fnv1a64(serialize_events(log)), out);
    return out;
}

}  // namespace tissue
