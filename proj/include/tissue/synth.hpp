#pragma once
// tissue/synth.hpp: labeled synthetic datasets. A spec names a normal
// syscall repertoire with per-session mean counts, an optional attack
// window with its own repertoire, and a CPU sampling setup whose level
// tracks event density. Generation is a pure function of (spec, seed):
// arrival counts are Poisson, arrival times uniform, and every draw happens
// in a fixed documented order.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tissue/engine.hpp"
#include "tissue/replay.hpp"
#include "tissue/rng.hpp"

namespace tissue {

struct AttackSpec {
    std::uint64_t start_us = 0;
    std::uint64_t end_us = 0;
    std::map<std::uint32_t, double> rates;  // syscall -> mean occurrences in the window
};

struct SynthSpec {
    std::uint64_t duration_us = 60000000;
    std::uint64_t cpu_period_us = 0;  // 0 disables the CPU series
    double cpu_baseline = 0.05;
    double cpu_noise = 0.02;
    double cpu_gain = 0.002;  // level added per event in the trailing period
    DatasetGroup group = DatasetGroup::normal;
    std::map<std::uint32_t, double> normal_rates;  // syscall -> mean occurrences per session
    std::optional<AttackSpec> attack;

    void validate() const {
        for (const auto& [num, mean] : normal_rates)
            if (mean < 0.0)
                throw ConfigError("negative rate for syscall " + std::to_string(num));
        if (cpu_baseline < 0.0 || cpu_noise < 0.0 || cpu_gain < 0.0)
            throw ConfigError("cpu parameters must be non-negative");
        if (attack) {
            for (const auto& [num, mean] : attack->rates)
                if (mean < 0.0)
                    throw ConfigError("negative attack rate for syscall " + std::to_string(num));
            if (attack->start_us >= attack->end_us)
                throw ConfigError("attack window must have start < end");
            if (attack->end_us > duration_us)
                throw ConfigError("attack window extends past duration");
        }
    }
};

struct SynthResult {
    std::vector<InputEvent> events;
    DatasetLabels labels;
};

// Draw order: normal repertoire in ascending syscall order (count, then
// times), attack repertoire likewise, then one noise draw per CPU sample in
// time order. Event times are uniform over the session (or the attack
// window); CPU level at sample time s reflects events in (s-period, s].
inline SynthResult generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    SynthResult result;
    result.labels.group = spec.group;
    if (spec.duration_us == 0) return result;

    RngStream rng(seed);
    struct Flagged {
        InputEvent event;
        bool attack;
    };
    std::vector<Flagged> items;

    for (const auto& [num, mean] : spec.normal_rates) {
        std::uint64_t count = rng.poisson(mean);
        for (std::uint64_t i = 0; i < count; ++i) {
            std::uint64_t t = rng.index(spec.duration_us);
            items.push_back({InputEvent::antigen_event(t, num), false});
        }
    }
    if (spec.attack) {
        const std::uint64_t window = spec.attack->end_us - spec.attack->start_us;
        for (const auto& [num, mean] : spec.attack->rates) {
            std::uint64_t count = rng.poisson(mean);
            for (std::uint64_t i = 0; i < count; ++i) {
                std::uint64_t t = spec.attack->start_us + rng.index(window);
                items.push_back({InputEvent::antigen_event(t, num), true});
            }
        }
    }
    std::stable_sort(items.begin(), items.end(),
                     [](const Flagged& a, const Flagged& b) { return a.event.t_us < b.event.t_us; });

    if (spec.cpu_period_us > 0) {
        std::vector<Flagged> samples;
        std::size_t lo = 0, hi = 0;
        for (std::uint64_t s = spec.cpu_period_us; s <= spec.duration_us;
             s += spec.cpu_period_us) {
            while (hi < items.size() && items[hi].event.t_us <= s) ++hi;
            while (lo < hi && items[lo].event.t_us + spec.cpu_period_us <= s) ++lo;
            double level = spec.cpu_baseline + spec.cpu_gain * static_cast<double>(hi - lo) +
                           spec.cpu_noise * rng.real(-1.0, 1.0);
            level = std::clamp(level, 0.0, 1.0);
            samples.push_back({InputEvent::signal_event(s, 0, level), false});
        }
        items.insert(items.end(), samples.begin(), samples.end());
    }

    std::stable_sort(items.begin(), items.end(),
                     [](const Flagged& a, const Flagged& b) { return event_before(a.event, b.event); });
    result.events.reserve(items.size());
    result.labels.attack.reserve(items.size());
    for (auto& it : items) {
        result.events.push_back(it.event);
        result.labels.attack.push_back(it.attack);
    }
    return result;
}

// Spec file: key=value lines plus repertoire lines
//   normal <syscall> <mean>
//   attack <syscall> <mean>
//   attack_window <start_us> <end_us>
inline SynthSpec parse_synth_spec(std::istream& in) {
    SynthSpec spec;
    std::string line;
    std::size_t lineno = 0;
    auto need_attack = [&]() -> AttackSpec& {
        if (!spec.attack) spec.attack.emplace();
        return *spec.attack;
    };
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream row(line);
        std::string head;
        if (!(row >> head)) continue;
        auto bad = [&](const std::string& why) {
            return ConfigError("synth spec line " + std::to_string(lineno) + ": " + why);
        };
        if (head == "normal" || head == "attack") {
            long long num = -1;
            double mean = -1.0;
            if (!(row >> num >> mean) || num < 0)
                throw bad("expected '" + head + " <syscall> <mean>'");
            auto& rates = head == "normal" ? spec.normal_rates : need_attack().rates;
            rates[static_cast<std::uint32_t>(num)] = mean;
        } else if (head == "attack_window") {
            long long start = -1, end = -1;
            if (!(row >> start >> end) || start < 0 || end < 0)
                throw bad("expected 'attack_window <start_us> <end_us>'");
            need_attack().start_us = static_cast<std::uint64_t>(start);
            need_attack().end_us = static_cast<std::uint64_t>(end);
        } else {
            auto eq = head.find('=');
            if (eq == std::string::npos) throw bad("unknown directive '" + head + "'");
            std::string key = head.substr(0, eq);
            std::string value = head.substr(eq + 1);
            try {
                if (key == "duration_us") spec.duration_us = std::stoull(value);
                else if (key == "cpu_period_us") spec.cpu_period_us = std::stoull(value);
                else if (key == "cpu_baseline") spec.cpu_baseline = std::stod(value);
                else if (key == "cpu_noise") spec.cpu_noise = std::stod(value);
                else if (key == "cpu_gain") spec.cpu_gain = std::stod(value);
                else if (key == "group") {
                    auto g = dataset_group_from(value);
                    if (!g) throw bad("unknown group '" + value + "'");
                    spec.group = *g;
                } else {
                    throw bad("unknown key '" + key + "'");
                }
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception&) {
                throw bad("bad value '" + value + "' for key '" + key + "'");
            }
        }
    }
    spec.validate();
    return spec;
}

}  // namespace tissue
