#pragma once
// tissue/core.hpp: domain types shared by every other part of the library.
// A tissue compartment holds antigen, signals and cells; cells carry
// receptor and producer repertoires. No behaviour here beyond construction
// and invariant checking; the per-tick mechanics live in cell_kit.hpp and
// the scheduler in engine.hpp.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tissue {

// Opaque discrete token flowing tissue -> cell store -> producer -> destruction.
// In the syscall-monitoring setting this is the syscall number.
using AntigenValue = std::uint32_t;

using CellTypeId = std::uint32_t;

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// One signal slot in a compartment. Levels are unbounded non-negative reals;
// units are problem dependent (CPU fraction in the syscall experiments).
struct SignalLevel {
    std::uint32_t id = 0;
    double level = 0.0;
};

struct TissueParams {
    std::size_t max_antigen = 1000;         // antigen store capacity
    std::size_t max_cytokines = 0;          // number of signal slots
    std::size_t max_cells = 100;
    std::uint64_t cell_update_rate_us = 100000;  // scheduler period
    std::size_t antigen_multiplier = 10;    // copies made of each incoming antigen
    std::uint64_t probe_rate_us = 1000000;  // default probe sampling period

    void validate() const {
        if (cell_update_rate_us == 0) throw ConfigError("cell_update_rate must be > 0");
        if (probe_rate_us == 0) throw ConfigError("probe_rate must be > 0");
        if (antigen_multiplier == 0) throw ConfigError("antigen_multiplier must be >= 1");
    }
};

// Static description of one cell type: population size plus the fixed
// capacities of every repertoire a cell of this type owns.
struct CellTypeParams {
    CellTypeId type_id = 0;
    std::size_t num_cells = 0;
    std::size_t num_antigen = 0;      // internal antigen store capacity
    std::size_t num_cytokines = 0;    // internal cytokine count
    std::size_t num_antigen_receptors = 0;
    std::size_t num_antigen_producers = 0;
    std::size_t num_cytokine_receptors = 0;
    std::size_t num_cell_receptors = 0;
    std::size_t num_vr_receptors = 0;
    std::size_t num_response_producers = 0;
    std::size_t num_cytokine_producers = 0;
    std::uint32_t antigen_producer_action_time = 0;  // display cycles per presentation
    std::uint64_t cell_lifespan = 0;  // cycles before an unmatched cell re-randomises; 0 disables
};

// Receptors. Repertoire sizes are fixed for the lifetime of a cell.

struct CytokineReceptor {
    std::uint32_t signal_id = 0;  // watched compartment signal
    double level = 0.0;           // value copied in at the last tick
};

struct CellReceptor {
    CellTypeId target_type = 0;
    std::optional<std::size_t> bound_index;  // index into the compartment cell store, this tick only
};

struct VrReceptor {
    AntigenValue lock = 0;
    bool active = false;  // true only while the owning cell is bound
};

// Producers.

struct AntigenProducer {
    std::optional<AntigenValue> displayed;
    std::uint32_t cycles_left = 0;   // >0 implies displayed; display is overwrite-immune while >0
    std::uint32_t action_time = 1;   // cycles a fresh display lasts
};

struct CytokineProducer {
    std::uint32_t signal_id = 0;
    double level = 0.0;  // written to the compartment when the tick commits
};

struct ResponseProducer {
    std::uint32_t sink_tag = 0;
};

struct Cell {
    CellTypeParams params;
    std::vector<std::optional<AntigenValue>> antigen_store;  // size num_antigen
    std::vector<std::int64_t> internal_cytokines;            // size num_cytokines
    std::vector<CytokineReceptor> cytokine_receptors;
    std::vector<CellReceptor> cell_receptors;
    std::vector<VrReceptor> vr_receptors;
    std::vector<AntigenProducer> antigen_producers;
    std::vector<CytokineProducer> cytokine_producers;
    std::vector<ResponseProducer> response_producers;
    std::uint64_t age = 0;  // cycles since creation or since the last lock reset

    CellTypeId type_id() const { return params.type_id; }

    bool bound() const {
        for (const auto& r : cell_receptors)
            if (r.bound_index) return true;
        return false;
    }

    std::size_t stored_antigen_count() const {
        std::size_t n = 0;
        for (const auto& slot : antigen_store)
            if (slot) ++n;
        return n;
    }

    // Builds an empty cell with every repertoire sized per the type params.
    // Cytokine receptors/producers default to watching/writing signal i for
    // repertoire index i; cell receptor targets default to 0 and are set by
    // the algorithm's cell initialiser.
    static Cell from_params(const CellTypeParams& p) {
        if (p.num_antigen_producers > 0 && p.antigen_producer_action_time == 0)
            throw ConfigError("antigen_producer_action_time must be >= 1 when a cell has antigen producers");
        Cell c;
        c.params = p;
        c.antigen_store.resize(p.num_antigen);
        c.internal_cytokines.assign(p.num_cytokines, 0);
        c.cytokine_receptors.resize(p.num_cytokine_receptors);
        for (std::size_t i = 0; i < c.cytokine_receptors.size(); ++i)
            c.cytokine_receptors[i].signal_id = static_cast<std::uint32_t>(i);
        c.cell_receptors.resize(p.num_cell_receptors);
        c.vr_receptors.resize(p.num_vr_receptors);
        c.antigen_producers.resize(p.num_antigen_producers);
        for (auto& ap : c.antigen_producers) ap.action_time = p.antigen_producer_action_time;
        c.cytokine_producers.resize(p.num_cytokine_producers);
        for (std::size_t i = 0; i < c.cytokine_producers.size(); ++i)
            c.cytokine_producers[i].signal_id = static_cast<std::uint32_t>(i);
        c.response_producers.resize(p.num_response_producers);
        return c;
    }
};

// The environment in which cells, signals and antigen interact. Antigen
// lives in a fixed array of optional slots: incoming antigen overwrites
// random slots, so addressing must stay stable (no compaction).
struct TissueCompartment {
    TissueParams params;
    std::vector<std::optional<AntigenValue>> antigen_store;
    std::vector<double> signals;
    std::vector<Cell> cells;

    explicit TissueCompartment(const TissueParams& p) : params(p) {
        params.validate();
        antigen_store.resize(params.max_antigen);
        signals.assign(params.max_cytokines, 0.0);
        cells.reserve(params.max_cells);
    }

    std::size_t antigen_count() const {
        std::size_t n = 0;
        for (const auto& slot : antigen_store)
            if (slot) ++n;
        return n;
    }

    // Rejects cells that would overflow the population or that reference
    // signal slots the compartment does not have. Receptor wiring errors are
    // configuration errors at creation time, not at step time.
    std::size_t add_cell(Cell c) {
        if (cells.size() >= params.max_cells)
            throw ConfigError("cell population exceeds max_cells");
        for (const auto& r : c.cytokine_receptors)
            if (r.signal_id >= params.max_cytokines)
                throw ConfigError("cytokine receptor watches signal " + std::to_string(r.signal_id) +
                                  " but max_cytokines is " + std::to_string(params.max_cytokines));
        for (const auto& p : c.cytokine_producers)
            if (p.signal_id >= params.max_cytokines)
                throw ConfigError("cytokine producer writes signal " + std::to_string(p.signal_id) +
                                  " but max_cytokines is " + std::to_string(params.max_cytokines));
        cells.push_back(std::move(c));
        return cells.size() - 1;
    }
};

// One response emitted by a response producer. The antigen field carries the
// lock value of the VR receptor that triggered it.
struct ResponseRecord {
    std::uint64_t t_us = 0;  // microseconds since run start
    AntigenValue antigen = 0;
    CellTypeId cell_type = 0;

    bool operator==(const ResponseRecord&) const = default;
};

// Appends CSV rows for one probe sample; every row is stamped with the
// sample time as its first column.
class ProbeWriter {
  public:
    ProbeWriter(std::string& out, std::uint64_t t_us) : out_(out), t_us_(t_us) {}

    void row(const std::vector<std::string>& cols) {
        out_ += std::to_string(t_us_);
        for (const auto& c : cols) {
            out_ += ',';
            out_ += c;
        }
        out_ += '\n';
    }

  private:
    std::string& out_;
    std::uint64_t t_us_;
};

// Periodic read-only sampler. The sampler must not mutate the compartment
// and is given no RNG, so attaching probes never perturbs a run.
struct Probe {
    std::string name;
    std::vector<std::string> columns;  // after the leading t_us column
    std::uint64_t rate_us = 1000000;
    std::function<void(const TissueCompartment&, ProbeWriter&)> sampler;
};

// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return ec == std::errc() ? std::string(buf, end) : std::string("0");
}

// 64-bit FNV-1a, used for config/log hashes in run manifests.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : data) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

// Structural invariant check, callable in tests after every tick. Returns a
// list of violations; empty means clean.
inline std::vector<std::string> validate_compartment(const TissueCompartment& tc) {
    std::vector<std::string> bad;
    auto fail = [&](const std::string& msg) { bad.push_back(msg); };

    if (tc.antigen_store.size() != tc.params.max_antigen)
        fail("antigen store size != max_antigen");
    if (tc.signals.size() != tc.params.max_cytokines)
        fail("signal array size != max_cytokines");
    if (tc.cells.size() > tc.params.max_cells)
        fail("cell count exceeds max_cells");
    for (double s : tc.signals)
        if (!(s >= 0.0)) fail("signal level negative or NaN");

    for (std::size_t i = 0; i < tc.cells.size(); ++i) {
        const Cell& c = tc.cells[i];
        const std::string tag = "cell " + std::to_string(i) + ": ";
        if (c.antigen_store.size() != c.params.num_antigen) fail(tag + "antigen store size mismatch");
        if (c.internal_cytokines.size() != c.params.num_cytokines) fail(tag + "internal cytokine count mismatch");
        if (c.cytokine_receptors.size() != c.params.num_cytokine_receptors) fail(tag + "cytokine receptor count mismatch");
        if (c.cell_receptors.size() != c.params.num_cell_receptors) fail(tag + "cell receptor count mismatch");
        if (c.vr_receptors.size() != c.params.num_vr_receptors) fail(tag + "vr receptor count mismatch");
        if (c.antigen_producers.size() != c.params.num_antigen_producers) fail(tag + "antigen producer count mismatch");
        if (c.cytokine_producers.size() != c.params.num_cytokine_producers) fail(tag + "cytokine producer count mismatch");
        if (c.response_producers.size() != c.params.num_response_producers) fail(tag + "response producer count mismatch");

        for (const auto& r : c.cytokine_receptors)
            if (r.signal_id >= tc.params.max_cytokines) fail(tag + "cytokine receptor id out of range");
        for (const auto& p : c.cytokine_producers)
            if (p.signal_id >= tc.params.max_cytokines) fail(tag + "cytokine producer id out of range");
        for (const auto& r : c.cell_receptors) {
            if (!r.bound_index) continue;
            if (*r.bound_index >= tc.cells.size())
                fail(tag + "bound index out of range");
            else if (tc.cells[*r.bound_index].type_id() != r.target_type)
                fail(tag + "bound cell type does not match receptor target");
        }
        for (const auto& p : c.antigen_producers) {
            if (p.cycles_left > 0 && !p.displayed) fail(tag + "producer counting down with empty display");
            if (p.action_time == 0 && !c.antigen_producers.empty()) fail(tag + "producer action_time is 0");
        }
        if (!c.bound()) {
            for (const auto& vr : c.vr_receptors)
                if (vr.active) fail(tag + "vr receptor active while cell unbound");
        }
    }
    return bad;
}

}  // namespace tissue
