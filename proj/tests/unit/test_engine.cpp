// Scheduler behaviour: event queueing, antigen ingest, the three-phase tick,
// deterministic replay, probes, and the conservation of antigen tokens.
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "support/stats.hpp"
#include "tissue/config.hpp"
#include "tissue/engine.hpp"

using namespace tissue;

namespace {

// A minimal one-type algorithm: cells take up antigen through their
// receptors (receptor phase does that for free) and present it through
// their producers in the callback.
CellAlgorithm presenting_algorithm(std::size_t cells, std::uint32_t action_time = 3) {
    CellAlgorithm alg;
    alg.name = "presenting";
    CellTypeParams p;
    p.type_id = 1;
    p.num_cells = cells;
    p.num_antigen = 20;
    p.num_antigen_receptors = 5;
    p.num_antigen_producers = 2;
    p.antigen_producer_action_time = action_time;
    alg.cell_types.push_back(p);
    alg.callbacks[1] = [](Cell& cell, CycleContext& ctx) {
        ctx.report.presentations += antigen_producer_step(cell, ctx.rng);
    };
    return alg;
}

std::size_t tokens_everywhere(const TissueCompartment& tc) {
    std::size_t n = tc.antigen_count();
    for (const auto& cell : tc.cells) {
        n += cell.stored_antigen_count();
        for (const auto& prod : cell.antigen_producers)
            if (prod.displayed) ++n;
    }
    return n;
}

}  // namespace

TEST_CASE("event queue is fifo and unblocks on close") {
    EventQueue q;
    CHECK(q.push(InputEvent::antigen_event(1, 10)));
    CHECK(q.push(InputEvent::signal_event(2, 0, 0.5)));
    auto drained = q.drain();
    REQUIRE(drained.size() == 2);
    CHECK(drained[0] == InputEvent::antigen_event(1, 10));
    CHECK(drained[1] == InputEvent::signal_event(2, 0, 0.5));
    CHECK(q.drain().empty());

    CHECK(q.push(InputEvent::antigen_event(3, 11)));
    q.close();
    CHECK_FALSE(q.push(InputEvent::antigen_event(4, 12)));
    auto leftovers = q.drain();  // what went in before close still comes out
    REQUIRE(leftovers.size() == 1);
    CHECK(leftovers[0].antigen == 11);
}

TEST_CASE("events serialize to replay-log lines") {
    CHECK(serialize_event(InputEvent::antigen_event(0, 6)) == "0 ANTIGEN 6");
    CHECK(serialize_event(InputEvent::signal_event(1500000, 0, 0.25)) == "1500000 SIGNAL 0 0.25");
    std::vector<InputEvent> events = {InputEvent::antigen_event(0, 6),
                                      InputEvent::signal_event(10, 1, 0.5)};
    CHECK(serialize_events(events) == "0 ANTIGEN 6\n10 SIGNAL 1 0.5\n");
}

TEST_CASE("event ordering is by time with antigen first on ties") {
    auto a = InputEvent::antigen_event(100, 6);
    auto s = InputEvent::signal_event(100, 0, 0.5);
    auto later = InputEvent::antigen_event(101, 6);
    CHECK(event_before(a, s));
    CHECK_FALSE(event_before(s, a));
    CHECK(event_before(a, later));
    CHECK(event_before(s, later));
    CHECK_FALSE(event_before(a, a));
}

TEST_CASE("ingest scatters multiplier copies across the store") {
    TissueParams p;
    p.max_antigen = 1000;
    p.antigen_multiplier = 10;
    RngStream rng(53);

    const std::size_t trials = 2000;
    double occupied_sum = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        TissueCompartment tc(p);
        ingest_antigen(tc, 6, rng);
        std::size_t occ = tc.antigen_count();
        CHECK(occ >= 1);
        CHECK(occ <= 10);
        for (const auto& slot : tc.antigen_store)
            if (slot) CHECK(*slot == 6);
        occupied_sum += static_cast<double>(occ);
    }
    // Slots are drawn independently, so collisions shave the expected count
    // to M(1-(1-1/M)^m) = 9.955 of 10.
    double expected = 1000.0 * (1.0 - std::pow(0.999, 10.0));
    CHECK(occupied_sum / static_cast<double>(trials) == doctest::Approx(expected).epsilon(0.01));
}

TEST_CASE("ingest overwrites rather than grows") {
    TissueParams p;
    p.max_antigen = 4;
    p.antigen_multiplier = 10;
    TissueCompartment tc(p);
    RngStream rng(3);
    ingest_antigen(tc, 1, rng);
    ingest_antigen(tc, 2, rng);
    CHECK(tc.antigen_store.size() == 4);
    CHECK(tc.antigen_count() <= 4);
}

TEST_CASE("set_signal respects the configured signal count") {
    TissueParams p;
    p.max_cytokines = 2;
    TissueCompartment tc(p);
    CHECK(set_signal(tc, 0, 0.5));
    CHECK(set_signal(tc, 1, 0.7));
    CHECK_FALSE(set_signal(tc, 2, 0.1));
    CHECK(tc.signals[0] == 0.5);
    CHECK(tc.signals[1] == 0.7);
}

TEST_CASE("a tick over an empty population does nothing") {
    TissueCompartment tc(TissueParams{});
    CellAlgorithm alg;
    alg.name = "empty";
    RngStream rng(1);
    TickReport r = tick_once(tc, alg, rng, 1, 100000, nullptr);
    CHECK(r.tick == 1);
    CHECK(r.t_us == 100000);
    CHECK(r.transfers == 0);
    CHECK(r.responses == 0);
}

TEST_CASE("cytokine writes become visible one tick later") {
    ExperimentConfig cfg;  // only used for the compartment params
    TissueParams tp;
    tp.max_cytokines = 1;
    tp.max_cells = 2;
    TissueCompartment tc(tp);

    CellAlgorithm alg;
    alg.name = "relay";
    CellTypeParams writer;
    writer.type_id = 1;
    writer.num_cells = 1;
    writer.num_cytokine_producers = 1;
    CellTypeParams reader;
    reader.type_id = 2;
    reader.num_cells = 1;
    reader.num_cytokine_receptors = 1;
    alg.cell_types = {writer, reader};

    std::vector<double> seen;
    alg.callbacks[1] = [](Cell& cell, CycleContext&) {
        cell.cytokine_producers[0].level = 0.7;
    };
    alg.callbacks[2] = [&seen](Cell& cell, CycleContext&) {
        seen.push_back(cell.cytokine_receptors[0].level);
    };

    RngStream rng(9);
    populate(tc, alg, rng);
    tick_once(tc, alg, rng, 1, 100000, nullptr);
    tick_once(tc, alg, rng, 2, 200000, nullptr);
    REQUIRE(seen.size() == 2);
    CHECK(seen[0] == 0.0);  // the write from tick 1 commits after callbacks
    CHECK(seen[1] == 0.7);
    CHECK(tc.signals[0] == 0.7);
}

TEST_CASE("responses buffered in a tick reach the sink after commit") {
    TissueParams tp;
    tp.max_cells = 1;
    TissueCompartment tc(tp);
    CellAlgorithm alg;
    alg.name = "emitter";
    CellTypeParams p;
    p.type_id = 1;
    p.num_cells = 1;
    alg.cell_types = {p};
    alg.callbacks[1] = [](Cell&, CycleContext& ctx) {
        ctx.responses.push_back({ctx.now_us, 42, 1});
    };
    RngStream rng(2);
    populate(tc, alg, rng);
    VectorSink sink;
    TickReport r = tick_once(tc, alg, rng, 1, 100000, &sink);
    CHECK(r.responses == 1);
    REQUIRE(sink.records.size() == 1);
    CHECK(sink.records[0].antigen == 42);
    CHECK(sink.records[0].t_us == 100000);
}

TEST_CASE("deterministic replay is a pure function of config, seed and log") {
    ExperimentConfig cfg;
    cfg.grace_period_us = 1000000;
    CellAlgorithm alg = presenting_algorithm(10);
    std::vector<InputEvent> log;
    for (int i = 0; i < 20; ++i)
        log.push_back(InputEvent::antigen_event(static_cast<std::uint64_t>(i) * 50000,
                                                static_cast<AntigenValue>(i % 4)));

    RunOptions opt;
    opt.seed = 12;
    Transcript a = run_replay_deterministic(cfg, alg, log, opt);
    Transcript b = run_replay_deterministic(cfg, alg, log, opt);
    CHECK(a.response_csv() == b.response_csv());
    CHECK(a.manifest == b.manifest);
    CHECK(a.ticks.size() == b.ticks.size());

    opt.seed = 13;
    Transcript c = run_replay_deterministic(cfg, alg, log, opt);
    CHECK(c.manifest != a.manifest);  // seed is part of the manifest
}

TEST_CASE("replay tick count covers the log plus the grace period") {
    ExperimentConfig cfg;
    cfg.grace_period_us = 500000;  // 5 ticks at the default 100 ms rate
    CellAlgorithm alg = presenting_algorithm(2);

    RunOptions opt;
    std::vector<std::size_t> applied;
    opt.hooks.post_tick = [&applied](const TissueCompartment&, const TickReport& r) {
        applied.push_back(r.antigen_events);
    };

    std::vector<InputEvent> log = {InputEvent::antigen_event(0, 5),
                                   InputEvent::antigen_event(250000, 6)};
    Transcript t = run_replay_deterministic(cfg, alg, log, opt);
    // Last event at 250 ms lands in tick 3; 5 grace ticks follow.
    REQUIRE(t.ticks.size() == 8);
    CHECK(applied == std::vector<std::size_t>{1, 0, 1, 0, 0, 0, 0, 0});
    CHECK(t.ticks.back().t_us == 800000);

    // An empty log still runs the grace ticks.
    Transcript empty = run_replay_deterministic(cfg, alg, {}, RunOptions{});
    CHECK(empty.ticks.size() == 5);
}

TEST_CASE("out-of-range signals are counted and skipped") {
    ExperimentConfig cfg;  // max_cytokines stays 0
    cfg.grace_period_us = 200000;
    CellAlgorithm alg = presenting_algorithm(1);
    std::vector<InputEvent> log = {InputEvent::antigen_event(0, 5),
                                   InputEvent::signal_event(0, 0, 0.5),
                                   InputEvent::signal_event(50000, 3, 0.5)};
    Transcript t = run_replay_deterministic(cfg, alg, log, {});
    CHECK(t.rejected_signals == 2);
}

TEST_CASE("manifest pins the run down") {
    ExperimentConfig cfg;
    cfg.grace_period_us = 100000;
    CellAlgorithm alg = presenting_algorithm(1);
    RunOptions opt;
    opt.seed = 77;
    std::vector<InputEvent> log = {InputEvent::antigen_event(0, 9)};
    Transcript t = run_replay_deterministic(cfg, alg, log, opt);
    CHECK(t.manifest.find("algorithm=presenting\n") != std::string::npos);
    CHECK(t.manifest.find("seed=77\n") != std::string::npos);
    CHECK(t.manifest.find("config_hash=" + hex64(fnv1a64(serialize_config(cfg)))) !=
          std::string::npos);
    CHECK(t.manifest.find("input_log_hash=" + hex64(fnv1a64(serialize_events(log)))) !=
          std::string::npos);
    CHECK(t.manifest.find("ticks=") != std::string::npos);
    CHECK(t.manifest.find("responses=") != std::string::npos);
}

TEST_CASE("response csv starts with the header") {
    Transcript t;
    CHECK(t.response_csv() == "t_us,antigen,cell_type\n");
    t.responses.push_back({1000, 6, 2});
    CHECK(t.response_csv() == "t_us,antigen,cell_type\n1000,6,2\n");
}

TEST_CASE("probes observe without perturbing the run") {
    ExperimentConfig cfg;
    cfg.grace_period_us = 2000000;
    std::vector<InputEvent> log;
    for (int i = 0; i < 30; ++i)
        log.push_back(InputEvent::antigen_event(static_cast<std::uint64_t>(i) * 40000,
                                                static_cast<AntigenValue>(i % 3)));

    CellAlgorithm bare = presenting_algorithm(8);
    CellAlgorithm probed = presenting_algorithm(8);
    probed.probes.push_back(Probe{
        "occupancy",
        {"antigen_count"},
        1000000,
        [](const TissueCompartment& tc, ProbeWriter& w) {
            w.row({std::to_string(tc.antigen_count())});
        },
    });

    RunOptions opt;
    opt.seed = 4;
    Transcript a = run_replay_deterministic(cfg, bare, log, opt);
    Transcript b = run_replay_deterministic(cfg, probed, log, opt);
    CHECK(a.response_csv() == b.response_csv());

    const ProbeLog* probe = b.probe("occupancy");
    REQUIRE(probe != nullptr);
    std::istringstream rows(probe->csv);
    std::string header;
    std::getline(rows, header);
    CHECK(header == "t_us,antigen_count");
    std::size_t data_rows = 0;
    std::string row;
    while (std::getline(rows, row)) ++data_rows;
    // 3.2 s of run sampled once a second from t=1s.
    CHECK(data_rows == 3);
    CHECK(b.probe("missing") == nullptr);
}

TEST_CASE("antigen tokens are conserved outside ingest and expiry") {
    ExperimentConfig cfg;
    cfg.grace_period_us = 3000000;
    CellAlgorithm alg = presenting_algorithm(10);

    std::vector<InputEvent> log;
    for (int i = 0; i < 40; ++i)
        log.push_back(InputEvent::antigen_event(static_cast<std::uint64_t>(i) * 30000,
                                                static_cast<AntigenValue>(i % 5)));

    std::size_t prev_total = 0;
    bool first = true;
    RunOptions opt;
    opt.hooks.post_tick = [&](const TissueCompartment& tc, const TickReport& r) {
        std::size_t total = tokens_everywhere(tc);
        if (!first) {
            // Ingest adds at most multiplier copies per event; everything
            // else can only destroy tokens (overwrite, display expiry).
            CHECK(total <= prev_total + r.antigen_events * tc.params.antigen_multiplier);
        }
        // Every token in the system carries a value that was actually sent.
        for (const auto& slot : tc.antigen_store)
            if (slot) CHECK(*slot < 5);
        for (const auto& cell : tc.cells) {
            for (const auto& slot : cell.antigen_store)
                if (slot) CHECK(*slot < 5);
            for (const auto& prod : cell.antigen_producers)
                if (prod.displayed) CHECK(*prod.displayed < 5);
        }
        CHECK(validate_compartment(tc).empty());
        prev_total = total;
        first = false;
    };
    run_replay_deterministic(cfg, alg, log, opt);
    CHECK_FALSE(first);  // the hook ran
}
