#pragma once
// tissue/config.hpp: flat key=value experiment configuration. Keys follow
// the standard parameter names (type-suffixed where a parameter is per cell
// type, e.g. num_vr_receptors_2). Unknown keys are rejected. Serialisation
// is canonical, so value -> text -> value -> text is a fixed point.

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "tissue/core.hpp"

namespace tissue {

// One experiment's full configuration: tissue parameters plus the two cell
// type definitions of the bundled two-type algorithm, with defaults matching
// its standard parameter set.
struct ExperimentConfig {
    TissueParams tissue;
    CellTypeParams type1;
    CellTypeParams type2;
    bool signal_enabled = false;      // couples producer action time to signal 0
    std::uint32_t vr_lock_universe = 341;  // VR locks are drawn from [0, universe)
    std::string listen = "127.0.0.1:7777";
    std::uint64_t grace_period_us = 60000000;  // run continues this long after replay ends

    ExperimentConfig() {
        type1.type_id = 1;
        type1.num_cells = 50;
        type1.num_antigen = 100;
        type1.num_antigen_receptors = 10;
        type1.num_antigen_producers = 10;
        type1.antigen_producer_action_time = 10;

        type2.type_id = 2;
        type2.num_cells = 50;
        type2.cell_lifespan = 100;
        type2.num_cell_receptors = 2;
        type2.num_vr_receptors = 20;
        type2.num_response_producers = 1;
        type2.num_cytokines = 1;  // the match counter
    }

    void validate() const {
        tissue.validate();
        if (vr_lock_universe == 0) throw ConfigError("vr_lock_universe must be >= 1");
        if (signal_enabled && tissue.max_cytokines == 0)
            throw ConfigError("signal_enabled requires max_cytokines >= 1");
        if (type1.num_cells + type2.num_cells > tissue.max_cells)
            throw ConfigError("num_cells_1 + num_cells_2 exceeds max_cells");
    }
};

namespace detail {

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + value + "'");
    try {
        return std::stoull(value);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' value out of range: '" + value + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw ConfigError("config key '" + key + "' expects true or false, got '" + value + "'");
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& in) {
    ExperimentConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: '" + line + "'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));

        auto u = [&] { return detail::parse_u64(key, value); };
        if (key == "max_antigen") cfg.tissue.max_antigen = u();
        else if (key == "max_cytokines") cfg.tissue.max_cytokines = u();
        else if (key == "max_cells") cfg.tissue.max_cells = u();
        else if (key == "cell_update_rate") cfg.tissue.cell_update_rate_us = u();
        else if (key == "antigen_multiplier") cfg.tissue.antigen_multiplier = u();
        else if (key == "probe_rate") cfg.tissue.probe_rate_us = u();
        else if (key == "num_cells_1") cfg.type1.num_cells = u();
        else if (key == "num_antigen_1") cfg.type1.num_antigen = u();
        else if (key == "num_antigen_receptors_1") cfg.type1.num_antigen_receptors = u();
        else if (key == "num_antigen_producers_1") cfg.type1.num_antigen_producers = u();
        else if (key == "antigen_producer_action_time") cfg.type1.antigen_producer_action_time = static_cast<std::uint32_t>(u());
        else if (key == "num_cells_2") cfg.type2.num_cells = u();
        else if (key == "cell_lifespan_2") cfg.type2.cell_lifespan = u();
        else if (key == "num_cell_receptors_2") cfg.type2.num_cell_receptors = u();
        else if (key == "num_vr_receptors_2") cfg.type2.num_vr_receptors = u();
        else if (key == "num_response_producers_2") cfg.type2.num_response_producers = u();
        else if (key == "signal_enabled") cfg.signal_enabled = detail::parse_bool(key, value);
        else if (key == "vr_lock_universe") cfg.vr_lock_universe = static_cast<std::uint32_t>(u());
        else if (key == "listen") cfg.listen = value;
        else if (key == "grace_period_us") cfg.grace_period_us = u();
        else throw ConfigError("unknown config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig parse_config(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "max_antigen=" << cfg.tissue.max_antigen << '\n'
        << "max_cytokines=" << cfg.tissue.max_cytokines << '\n'
        << "max_cells=" << cfg.tissue.max_cells << '\n'
        << "cell_update_rate=" << cfg.tissue.cell_update_rate_us << '\n'
        << "antigen_multiplier=" << cfg.tissue.antigen_multiplier << '\n'
        << "num_cells_1=" << cfg.type1.num_cells << '\n'
        << "num_antigen_1=" << cfg.type1.num_antigen << '\n'
        << "num_antigen_receptors_1=" << cfg.type1.num_antigen_receptors << '\n'
        << "num_antigen_producers_1=" << cfg.type1.num_antigen_producers << '\n'
        << "antigen_producer_action_time=" << cfg.type1.antigen_producer_action_time << '\n'
        << "num_cells_2=" << cfg.type2.num_cells << '\n'
        << "cell_lifespan_2=" << cfg.type2.cell_lifespan << '\n'
        << "num_cell_receptors_2=" << cfg.type2.num_cell_receptors << '\n'
        << "num_vr_receptors_2=" << cfg.type2.num_vr_receptors << '\n'
        << "num_response_producers_2=" << cfg.type2.num_response_producers << '\n'
        << "probe_rate=" << cfg.tissue.probe_rate_us << '\n'
        << "signal_enabled=" << (cfg.signal_enabled ? "true" : "false") << '\n'
        << "vr_lock_universe=" << cfg.vr_lock_universe << '\n'
        << "listen=" << cfg.listen << '\n'
        << "grace_period_us=" << cfg.grace_period_us << '\n';
    return out.str();
}

}  // namespace tissue
