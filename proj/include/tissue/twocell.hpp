#pragma once
// tissue/twocell.hpp: the bundled two-type cell algorithm. Type 1 cells
// ingest antigen from the tissue and present it on their producers; type 2
// cells bind type 1 cells, compare VR receptor locks against what is
// displayed, and respond on exact matches. Unmatched type 2 cells redraw
// their locks every cell_lifespan ticks; a single match freezes a cell's
// locks for the rest of the run. With signal_enabled, a cytokine receptor
// on each type 1 cell drives its presentation rate from signal 0.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "tissue/cell_kit.hpp"
#include "tissue/config.hpp"
#include "tissue/engine.hpp"

namespace tissue {

// Presentation interval control for a signal-coupled type 1 cell: no change
// in the watched level keeps the action time, a drop halves it (floored at 1
// so presentation never stops entirely), a rise resets it to the slow start.
constexpr std::uint32_t signal_action_time_start = 100;

inline std::uint32_t update_action_time(std::uint32_t current, double previous, double now) {
    if (now < previous) return std::max<std::uint32_t>(1, current / 2);
    if (now > previous) return signal_action_time_start;
    return current;
}

namespace twocell_detail {

struct Type1Control {
    std::uint32_t action_time = signal_action_time_start;
    double last_level = 0.0;
    bool has_last = false;
};

struct State {
    bool signal_enabled = false;
    std::uint32_t vr_lock_universe = 341;
    std::unordered_map<std::size_t, Type1Control> control;  // by cell index
    std::uint64_t action_time_sum = 0;   // one sample per type 1 cell per tick
    std::uint64_t action_time_samples = 0;
};

}  // namespace twocell_detail

// Observation handle for experiments that need run-level aggregates the
// transcript does not carry.
struct TwocellHandles {
    std::shared_ptr<twocell_detail::State> state;

    // Mean producer action time over all type 1 cell cycles of the run.
    double mean_action_time() const {
        if (!state || state->action_time_samples == 0) return 0.0;
        return static_cast<double>(state->action_time_sum) /
               static_cast<double>(state->action_time_samples);
    }
};

inline CellAlgorithm make_twocell(const ExperimentConfig& cfg, TwocellHandles* handles = nullptr) {
    cfg.validate();

    CellTypeParams t1 = cfg.type1;
    t1.type_id = 1;
    t1.num_cytokine_receptors = cfg.signal_enabled ? 1 : 0;
    if (cfg.signal_enabled) t1.antigen_producer_action_time = signal_action_time_start;

    CellTypeParams t2 = cfg.type2;
    t2.type_id = 2;
    if (t2.num_cytokines == 0) t2.num_cytokines = 1;  // the match counter

    auto state = std::make_shared<twocell_detail::State>();
    state->signal_enabled = cfg.signal_enabled;
    state->vr_lock_universe = cfg.vr_lock_universe;
    if (handles) handles->state = state;

    CellAlgorithm alg;
    alg.name = "twocell";
    alg.cell_types = {t1, t2};
    alg.matcher = exact_matcher();

    std::uint32_t universe = cfg.vr_lock_universe;
    alg.init_cell = [universe](Cell& cell, RngStream& rng) {
        if (cell.type_id() != 2) return;
        for (auto& rec : cell.cell_receptors) rec.target_type = 1;
        for (auto& vr : cell.vr_receptors) vr.lock = rng.lock_value(universe);
    };

    alg.callbacks[1] = [state](Cell& cell, CycleContext& ctx) {
        if (state->signal_enabled) {
            auto& ctl = state->control[ctx.cell_index];
            double level = cell.cytokine_receptors.empty() ? 0.0 : cell.cytokine_receptors[0].level;
            if (ctl.has_last)
                ctl.action_time = update_action_time(ctl.action_time, ctl.last_level, level);
            ctl.last_level = level;
            ctl.has_last = true;
            // New presentations pick this up; in-flight displays keep their
            // countdown.
            for (auto& prod : cell.antigen_producers) prod.action_time = ctl.action_time;
        }
        if (!cell.antigen_producers.empty()) {
            state->action_time_sum += cell.antigen_producers[0].action_time;
            ++state->action_time_samples;
        }
        ctx.report.presentations += antigen_producer_step(cell, ctx.rng);
    };

    alg.callbacks[2] = [state](Cell& cell, CycleContext& ctx) {
        auto matches = vr_receptor_step(cell, ctx.tissue, ctx.matcher);
        ctx.report.matches += matches.size();
        if (!matches.empty()) {
            response_producer_step(cell, matches, ctx.now_us, ctx.responses);
            cell.internal_cytokines[0] += static_cast<std::int64_t>(matches.size());
            cell.age = 0;
        }
        cell.age += 1;
        if (cell.params.cell_lifespan > 0 && cell.internal_cytokines[0] == 0 &&
            cell.age >= cell.params.cell_lifespan) {
            for (auto& vr : cell.vr_receptors) vr.lock = ctx.rng.lock_value(state->vr_lock_universe);
            cell.age = 0;
        }
    };

    Probe repertoire;
    repertoire.name = "repertoire";
    repertoire.columns = {"cell"};
    for (std::size_t i = 0; i < t2.num_vr_receptors; ++i)
        repertoire.columns.push_back("lock" + std::to_string(i));
    repertoire.rate_us = cfg.tissue.probe_rate_us;
    repertoire.sampler = [](const TissueCompartment& tc, ProbeWriter& w) {
        for (std::size_t i = 0; i < tc.cells.size(); ++i) {
            const Cell& c = tc.cells[i];
            if (c.type_id() != 2) continue;
            std::vector<std::string> cols{std::to_string(i)};
            for (const auto& vr : c.vr_receptors) cols.push_back(std::to_string(vr.lock));
            w.row(cols);
        }
    };

    Probe tissue_probe;
    tissue_probe.name = "tissue";
    tissue_probe.columns = {"antigen_count"};
    for (std::size_t i = 0; i < cfg.tissue.max_cytokines; ++i)
        tissue_probe.columns.push_back("signal" + std::to_string(i));
    tissue_probe.rate_us = cfg.tissue.probe_rate_us;
    tissue_probe.sampler = [](const TissueCompartment& tc, ProbeWriter& w) {
        std::vector<std::string> cols{std::to_string(tc.antigen_count())};
        for (double s : tc.signals) cols.push_back(format_double(s));
        w.row(cols);
    };

    alg.probes = {repertoire, tissue_probe};
    return alg;
}

}  // namespace tissue
