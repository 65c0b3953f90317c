// Receptor and producer step behaviour, checked against small brute-force
// oracles and closed-form probabilities.
#include <cmath>
#include <vector>

#include "doctest.h"
#include "support/stats.hpp"
#include "tissue/cell_kit.hpp"
#include "tissue/rng.hpp"

using namespace tissue;

namespace {

TissueCompartment small_tissue(std::size_t max_antigen, std::size_t max_cells = 100,
                               std::size_t max_cytokines = 0) {
    TissueParams p;
    p.max_antigen = max_antigen;
    p.max_cells = max_cells;
    p.max_cytokines = max_cytokines;
    return TissueCompartment(p);
}

Cell make_cell(CellTypeParams p) { return Cell::from_params(p); }

std::size_t total_tokens(const TissueCompartment& tc, const Cell& cell) {
    std::size_t n = tc.antigen_count() + cell.stored_antigen_count();
    for (const auto& prod : cell.antigen_producers)
        if (prod.displayed) ++n;
    return n;
}

}  // namespace

TEST_CASE("antigen receptors move tokens instead of copying them") {
    auto tc = small_tissue(8);
    tc.antigen_store[3] = 42;
    CellTypeParams p;
    p.num_antigen = 4;
    p.num_antigen_receptors = 50;  // enough draws to hit slot 3 for sure
    Cell cell = make_cell(p);

    RngStream rng(5);
    std::size_t before = total_tokens(tc, cell);
    std::size_t transfers = antigen_receptor_step(cell, tc, rng);
    CHECK(transfers == 1);
    CHECK(tc.antigen_count() == 0);
    CHECK(cell.stored_antigen_count() == 1);
    bool found = false;
    for (const auto& slot : cell.antigen_store)
        if (slot && *slot == 42) found = true;
    CHECK(found);
    CHECK(total_tokens(tc, cell) == before);
}

TEST_CASE("a storeless cell cannot take up antigen") {
    auto tc = small_tissue(4);
    tc.antigen_store[0] = 7;
    CellTypeParams p;
    p.num_antigen = 0;
    p.num_antigen_receptors = 10;
    Cell cell = make_cell(p);
    RngStream rng(1);
    CHECK(antigen_receptor_step(cell, tc, rng) == 0);
    CHECK(tc.antigen_count() == 1);
}

TEST_CASE("uptake into a full store overwrites an existing copy") {
    auto tc = small_tissue(2);
    tc.antigen_store[0] = 1;
    CellTypeParams p;
    p.num_antigen = 1;
    p.num_antigen_receptors = 64;
    Cell cell = make_cell(p);
    cell.antigen_store[0] = 99;  // already full
    RngStream rng(3);
    antigen_receptor_step(cell, tc, rng);
    CHECK(cell.stored_antigen_count() == 1);
    CHECK(*cell.antigen_store[0] == 1);  // overwritten, old copy destroyed
}

TEST_CASE("uptake rate matches the slot-sampling model") {
    // One receptor sampling one of max_antigen slots, k of them full, hits
    // with probability k / max_antigen.
    const std::size_t max_antigen = 100, occupied = 25, trials = 40000;
    RngStream rng(17);
    std::size_t hits = 0;
    CellTypeParams p;
    p.num_antigen = 1;
    p.num_antigen_receptors = 1;
    for (std::size_t t = 0; t < trials; ++t) {
        auto tc = small_tissue(max_antigen);
        for (std::size_t i = 0; i < occupied; ++i) tc.antigen_store[i] = 5;
        Cell cell = make_cell(p);
        hits += antigen_receptor_step(cell, tc, rng);
    }
    double obs = static_cast<double>(hits) / static_cast<double>(trials);
    CHECK(teststats::within_3sigma(obs, 0.25, trials));
}

TEST_CASE("multi-receptor uptake matches the depletion formula") {
    // R receptors drawing in sequence deplete what they hit, so the expected
    // take per step is k * (1 - (1 - 1/M)^R).
    const std::size_t M = 1000, k = 100, R = 10, trials = 20000;
    RngStream rng(29);
    CellTypeParams p;
    p.num_antigen = 200;
    p.num_antigen_receptors = R;
    double total = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        auto tc = small_tissue(M);
        for (std::size_t i = 0; i < k; ++i) tc.antigen_store[i] = 5;
        Cell cell = make_cell(p);
        total += static_cast<double>(antigen_receptor_step(cell, tc, rng));
    }
    double mean = total / static_cast<double>(trials);
    double expected = static_cast<double>(k) *
                      (1.0 - std::pow(1.0 - 1.0 / static_cast<double>(M), static_cast<double>(R)));
    // Per-trial take is a sum of R near-independent Bernoullis; sd < 1.
    CHECK(std::abs(mean - expected) <= 3.0 / std::sqrt(static_cast<double>(trials)));
}

TEST_CASE("cytokine receptors snapshot the signal array") {
    auto tc = small_tissue(4, 100, 2);
    tc.signals[0] = 0.25;
    tc.signals[1] = 0.75;
    CellTypeParams p;
    p.num_cytokine_receptors = 2;
    Cell cell = make_cell(p);
    cytokine_receptor_step(cell, tc);
    CHECK(cell.cytokine_receptors[0].level == 0.25);
    CHECK(cell.cytokine_receptors[1].level == 0.75);
}

TEST_CASE("cell receptors bind live matching cells at the expected rate") {
    // A receptor samples one of max_cells slots; only a live cell of the
    // target type binds, so P(bind) = live_targets / max_cells.
    auto tc = small_tissue(4, 100);
    CellTypeParams target;
    target.type_id = 1;
    for (int i = 0; i < 50; ++i) tc.add_cell(make_cell(target));

    CellTypeParams watcher;
    watcher.type_id = 2;
    watcher.num_cell_receptors = 1;
    Cell cell = make_cell(watcher);
    cell.cell_receptors[0].target_type = 1;

    RngStream rng(41);
    const std::size_t trials = 20000;
    std::size_t binds = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        cell_receptor_step(cell, tc, rng);
        if (cell.bound()) ++binds;
    }
    double obs = static_cast<double>(binds) / static_cast<double>(trials);
    CHECK(teststats::within_3sigma(obs, 0.5, trials));

    // A type nobody has never binds.
    cell.cell_receptors[0].target_type = 9;
    for (int t = 0; t < 1000; ++t) {
        cell_receptor_step(cell, tc, rng);
        CHECK_FALSE(cell.bound());
    }
}

TEST_CASE("losing every binding deactivates the vr repertoire") {
    auto tc = small_tissue(4, 10);  // empty population, nothing to bind
    CellTypeParams p;
    p.num_cell_receptors = 1;
    p.num_vr_receptors = 3;
    Cell cell = make_cell(p);
    cell.cell_receptors[0].target_type = 1;
    for (auto& vr : cell.vr_receptors) vr.active = true;
    RngStream rng(7);
    cell_receptor_step(cell, tc, rng);
    CHECK_FALSE(cell.bound());
    for (const auto& vr : cell.vr_receptors) CHECK_FALSE(vr.active);
}

TEST_CASE("producers display a token for exactly action_time steps") {
    CellTypeParams p;
    p.num_antigen = 4;
    p.num_antigen_producers = 1;
    p.antigen_producer_action_time = 3;
    Cell cell = make_cell(p);
    cell.antigen_store[0] = 11;
    cell.antigen_store[1] = 22;
    RngStream rng(13);

    // Step 1 pulls a token out of the store and displays it.
    CHECK(antigen_producer_step(cell, rng) == 1);
    REQUIRE(cell.antigen_producers[0].displayed.has_value());
    AntigenValue first = *cell.antigen_producers[0].displayed;
    CHECK(cell.stored_antigen_count() == 1);

    // It stays up for action_time steps, then the next step swaps it.
    CHECK(antigen_producer_step(cell, rng) == 0);
    CHECK(antigen_producer_step(cell, rng) == 0);
    CHECK(*cell.antigen_producers[0].displayed == first);
    CHECK(antigen_producer_step(cell, rng) == 1);
    REQUIRE(cell.antigen_producers[0].displayed.has_value());
    CHECK(*cell.antigen_producers[0].displayed != first);
    CHECK(cell.stored_antigen_count() == 0);

    // The expired display was destroyed, not returned to the store: after the
    // second display ends there is nothing left anywhere.
    antigen_producer_step(cell, rng);
    antigen_producer_step(cell, rng);
    CHECK(antigen_producer_step(cell, rng) == 0);
    CHECK_FALSE(cell.antigen_producers[0].displayed.has_value());
    CHECK(cell.stored_antigen_count() == 0);
}

TEST_CASE("an empty store leaves producers dark") {
    CellTypeParams p;
    p.num_antigen = 4;
    p.num_antigen_producers = 2;
    p.antigen_producer_action_time = 1;
    Cell cell = make_cell(p);
    RngStream rng(3);
    for (int i = 0; i < 5; ++i) CHECK(antigen_producer_step(cell, rng) == 0);
    for (const auto& prod : cell.antigen_producers) CHECK_FALSE(prod.displayed.has_value());
}

TEST_CASE("vr receptors match displays on bound cells only") {
    auto tc = small_tissue(4, 10);
    CellTypeParams presenter;
    presenter.type_id = 1;
    presenter.num_antigen = 4;
    presenter.num_antigen_producers = 2;
    presenter.antigen_producer_action_time = 5;
    std::size_t target_idx = tc.add_cell(make_cell(presenter));
    tc.cells[target_idx].antigen_producers[0].displayed = 10;
    tc.cells[target_idx].antigen_producers[0].cycles_left = 5;
    tc.cells[target_idx].antigen_producers[1].displayed = 30;
    tc.cells[target_idx].antigen_producers[1].cycles_left = 5;

    CellTypeParams reader;
    reader.type_id = 2;
    reader.num_cell_receptors = 2;
    reader.num_vr_receptors = 3;
    Cell cell = make_cell(reader);
    cell.vr_receptors[0].lock = 10;
    cell.vr_receptors[1].lock = 20;
    cell.vr_receptors[2].lock = 30;

    Matcher match = exact_matcher();

    // Unbound: no matches, repertoire inactive.
    auto none = vr_receptor_step(cell, tc, match);
    CHECK(none.empty());
    for (const auto& vr : cell.vr_receptors) CHECK_FALSE(vr.active);

    // One binding: each display is read once per matching receptor.
    cell.cell_receptors[0].bound_index = target_idx;
    auto matches = vr_receptor_step(cell, tc, match);
    REQUIRE(matches.size() == 2);
    CHECK(matches[0].vr_index == 0);
    CHECK(matches[0].antigen == 10);
    CHECK(matches[0].producer_index == 0);
    CHECK(matches[0].bound_cell == target_idx);
    CHECK(matches[1].vr_index == 2);
    CHECK(matches[1].antigen == 30);
    for (const auto& vr : cell.vr_receptors) CHECK(vr.active);

    // Bound twice to the same target: the displays are read twice.
    cell.cell_receptors[1].bound_index = target_idx;
    CHECK(vr_receptor_step(cell, tc, match).size() == 4);
}

TEST_CASE("response producers emit one record per match") {
    CellTypeParams p;
    p.type_id = 2;
    p.num_response_producers = 1;
    Cell cell = make_cell(p);
    std::vector<VrMatch> matches = {{0, 6, 0, 3}, {1, 6, 1, 3}};
    std::vector<ResponseRecord> out;
    response_producer_step(cell, matches, 1234, out);
    REQUIRE(out.size() == 2);
    CHECK(out[0].t_us == 1234);
    CHECK(out[0].antigen == 6);
    CHECK(out[0].cell_type == 2);

    // No producer, no output.
    CellTypeParams mute;
    mute.type_id = 2;
    Cell silent = make_cell(mute);
    out.clear();
    response_producer_step(silent, matches, 1234, out);
    CHECK(out.empty());
}

TEST_CASE("cytokine producers write their level into the tissue") {
    auto tc = small_tissue(4, 10, 2);
    CellTypeParams p;
    p.num_cytokine_producers = 2;
    Cell cell = make_cell(p);
    cell.cytokine_producers[0].level = 0.5;
    cell.cytokine_producers[1].level = 0.9;
    cytokine_producer_step(cell, tc);
    CHECK(tc.signals[0] == 0.5);
    CHECK(tc.signals[1] == 0.9);
}
