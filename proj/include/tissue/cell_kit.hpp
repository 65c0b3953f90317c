#pragma once
// tissue/cell_kit.hpp: the per-tick behaviour of receptors and producers.
// Each step is a free function over one cell so algorithms can compose the
// pieces they need inside their cell-cycle callbacks. All randomness comes
// from the run's RngStream, in a fixed draw order, which keeps whole runs
// reproducible from the seed.

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "tissue/core.hpp"
#include "tissue/rng.hpp"

namespace tissue {

// Decides whether a VR receptor lock matches a displayed antigen. Algorithms
// may swap in approximate rules; the default is exact equality.
using Matcher = std::function<bool(AntigenValue lock, AntigenValue key)>;

inline Matcher exact_matcher() {
    return [](AntigenValue lock, AntigenValue key) { return lock == key; };
}

// Each antigen receptor probes one uniformly random tissue slot. A hit moves
// the antigen out of the tissue into a uniformly random slot of the cell's
// own store, overwriting whatever was there. Returns how many antigen moved.
inline std::size_t antigen_receptor_step(Cell& cell, TissueCompartment& tc, RngStream& rng) {
    if (cell.params.num_antigen == 0 || tc.params.max_antigen == 0) return 0;
    std::size_t transfers = 0;
    for (std::size_t r = 0; r < cell.params.num_antigen_receptors; ++r) {
        std::size_t slot = rng.index(tc.antigen_store.size());
        if (!tc.antigen_store[slot]) continue;
        AntigenValue value = *tc.antigen_store[slot];
        tc.antigen_store[slot].reset();
        std::size_t dest = rng.index(cell.antigen_store.size());
        cell.antigen_store[dest] = value;
        ++transfers;
    }
    return transfers;
}

// Cytokine receptors copy the tissue signal levels they are indexed to.
inline void cytokine_receptor_step(Cell& cell, const TissueCompartment& tc) {
    for (auto& rec : cell.cytokine_receptors) {
        rec.level = rec.signal_id < tc.signals.size() ? tc.signals[rec.signal_id] : 0.0;
    }
}

// Each cell receptor rebinds every tick: it draws an index over the full
// cell capacity and binds only when that index holds a live cell of the
// receptor's target type. Sparse populations therefore bind probabilistically,
// which is what spreads type 2 attention across the type 1 population.
// A cell that ends the step with no bound receptor has its VR receptors
// deactivated, since they can only read antigen through a binding.
inline void cell_receptor_step(Cell& cell, const TissueCompartment& tc, RngStream& rng) {
    for (auto& rec : cell.cell_receptors) {
        rec.bound_index.reset();
        if (tc.params.max_cells == 0) continue;
        std::size_t idx = rng.index(tc.params.max_cells);
        if (idx < tc.cells.size() && tc.cells[idx].type_id() == rec.target_type)
            rec.bound_index = idx;
    }
    if (!cell.bound()) {
        for (auto& vr : cell.vr_receptors) vr.active = false;
    }
}

// Antigen producers count down a display cycle each tick. When a display
// expires (or the producer is empty), the producer pulls a uniformly random
// antigen out of the cell's occupied store slots and displays it for
// action_time ticks. The pulled slot is cleared: display destroys the
// stored copy. Returns how many new displays began this tick.
inline std::size_t antigen_producer_step(Cell& cell, RngStream& rng) {
    std::size_t presentations = 0;
    for (auto& prod : cell.antigen_producers) {
        if (prod.cycles_left > 0) {
            --prod.cycles_left;
            if (prod.cycles_left == 0) prod.displayed.reset();
        }
        if (prod.displayed) continue;
        std::vector<std::size_t> occupied;
        occupied.reserve(cell.antigen_store.size());
        for (std::size_t i = 0; i < cell.antigen_store.size(); ++i)
            if (cell.antigen_store[i]) occupied.push_back(i);
        if (occupied.empty()) continue;
        std::size_t pick = occupied[rng.index(occupied.size())];
        prod.displayed = *cell.antigen_store[pick];
        cell.antigen_store[pick].reset();
        prod.cycles_left = prod.action_time;
        ++presentations;
    }
    return presentations;
}

// One VR receptor match against one displayed antigen on a bound cell.
struct VrMatch {
    std::size_t vr_index;
    AntigenValue antigen;       // the matched lock value
    std::size_t producer_index; // producer on the bound cell that displayed it
    std::size_t bound_cell;     // tissue index of the bound cell
};

// VR receptors read antigen through the cell receptors' bindings. Every VR
// receptor on a bound cell is active; each is checked against every display
// of every bound target, so a cell bound twice to the same target reads it
// twice. Matches carry the lock value, which is what response producers emit.
inline std::vector<VrMatch> vr_receptor_step(Cell& cell, const TissueCompartment& tc,
                                             const Matcher& match) {
    std::vector<VrMatch> matches;
    bool bound = cell.bound();
    for (auto& vr : cell.vr_receptors) vr.active = bound;
    if (!bound) return matches;
    for (const auto& rec : cell.cell_receptors) {
        if (!rec.bound_index) continue;
        const Cell& target = tc.cells[*rec.bound_index];
        for (std::size_t v = 0; v < cell.vr_receptors.size(); ++v) {
            for (std::size_t p = 0; p < target.antigen_producers.size(); ++p) {
                const auto& display = target.antigen_producers[p].displayed;
                if (!display) continue;
                if (match(cell.vr_receptors[v].lock, *display))
                    matches.push_back({v, cell.vr_receptors[v].lock, p, *rec.bound_index});
            }
        }
    }
    return matches;
}

// Response producers convert VR matches into externally visible responses,
// one record per match. Cells with no response producer emit nothing.
inline void response_producer_step(const Cell& cell, const std::vector<VrMatch>& matches,
                                   std::uint64_t now_us, std::vector<ResponseRecord>& out) {
    if (cell.response_producers.empty()) return;
    for (const auto& m : matches) out.push_back({now_us, m.antigen, cell.type_id()});
}

// Cytokine producers write their level into the tissue signal array. Later
// writers in the same tick win, matching an asynchronous shared medium.
inline void cytokine_producer_step(const Cell& cell, TissueCompartment& tc) {
    for (const auto& prod : cell.cytokine_producers) {
        if (prod.signal_id < tc.signals.size()) tc.signals[prod.signal_id] = prod.level;
    }
}

}  // namespace tissue
