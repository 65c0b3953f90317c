#pragma once
// tissue/policy.hpp: syscall policies and their evaluation. A policy is a
// permit set with an implicit deny default. The naive baseline permits
// everything seen in training data; a generated policy permits what the
// algorithm responded to. Aggregation over repeated runs yields the union
// policy plus per-syscall response statistics, and evaluation scores a
// policy against a labeled dataset with integer-truncated percentages.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tissue/core.hpp"
#include "tissue/engine.hpp"
#include "tissue/replay.hpp"
#include "tissue/syscalls.hpp"

namespace tissue {

struct Policy {
    std::set<AntigenValue> permitted;
    std::string provenance;  // "naive" or "generated(...)"

    bool permits(AntigenValue value) const { return permitted.count(value) > 0; }
};

// Permits exactly the syscalls occurring anywhere in the training datasets.
inline Policy naive_policy(const std::vector<std::vector<InputEvent>>& datasets) {
    Policy p;
    p.provenance = "naive";
    for (const auto& events : datasets)
        for (const auto& e : events)
            if (e.kind == InputEvent::Kind::antigen) p.permitted.insert(e.antigen);
    return p;
}

// Permits exactly the syscalls a run responded to.
inline Policy policy_from_responses(const std::vector<ResponseRecord>& responses,
                                    const std::string& provenance = "generated(run)") {
    Policy p;
    p.provenance = provenance;
    for (const auto& r : responses) p.permitted.insert(r.antigen);
    return p;
}

// Per-syscall aggregation row: how often the syscall occurs in the dataset
// and how the response counts distribute over the runs. cv is the
// coefficient of variation (sd/mean x 100, integer-truncated), defined only
// for syscalls with a nonzero mean.
struct SyscallStat {
    AntigenValue syscall = 0;
    std::uint64_t freq = 0;
    double mean = 0.0;
    double sd = 0.0;
    std::optional<long long> cv;
};

inline std::optional<long long> coefficient_of_variation(double mean, double sd) {
    if (mean <= 0.0) return std::nullopt;
    return static_cast<long long>(sd / mean * 100.0);
}

struct AggregateResult {
    Policy policy;  // union over runs
    std::vector<SyscallStat> stats;
};

// Union policy over runs plus the per-syscall stats table. The syscall set
// is the dataset's own: statistics describe how the runs responded to what
// was actually played in. Rows sort by dataset frequency, then mean, then
// name, so low-frequency syscalls group together for CV comparisons.
inline AggregateResult aggregate_policies(const std::vector<std::vector<ResponseRecord>>& runs,
                                          const std::vector<InputEvent>& dataset,
                                          const SyscallTable& names = SyscallTable::builtin()) {
    AggregateResult result;
    result.policy.provenance = "generated(" + std::to_string(runs.size()) + " runs)";

    std::map<AntigenValue, std::uint64_t> freq;
    for (const auto& e : dataset)
        if (e.kind == InputEvent::Kind::antigen) ++freq[e.antigen];

    std::map<AntigenValue, std::vector<std::uint64_t>> counts;
    for (const auto& [num, f] : freq) counts[num].assign(runs.size(), 0);
    for (std::size_t r = 0; r < runs.size(); ++r)
        for (const auto& resp : runs[r]) {
            result.policy.permitted.insert(resp.antigen);
            auto it = counts.find(resp.antigen);
            if (it != counts.end()) ++it->second[r];
        }

    for (const auto& [num, per_run] : counts) {
        SyscallStat stat;
        stat.syscall = num;
        stat.freq = freq[num];
        const double n = static_cast<double>(per_run.size());
        if (n > 0) {
            double sum = 0.0;
            for (auto c : per_run) sum += static_cast<double>(c);
            stat.mean = sum / n;
            if (per_run.size() > 1) {
                double ss = 0.0;
                for (auto c : per_run) {
                    double d = static_cast<double>(c) - stat.mean;
                    ss += d * d;
                }
                stat.sd = std::sqrt(ss / (n - 1.0));  // sample standard deviation
            }
        }
        stat.cv = coefficient_of_variation(stat.mean, stat.sd);
        result.stats.push_back(stat);
    }

    std::sort(result.stats.begin(), result.stats.end(),
              [&names](const SyscallStat& a, const SyscallStat& b) {
                  if (a.freq != b.freq) return a.freq < b.freq;
                  if (a.mean != b.mean) return a.mean < b.mean;
                  return names.display(a.syscall) < names.display(b.syscall);
              });
    return result;
}

inline std::string stats_csv(const std::vector<SyscallStat>& stats,
                             const SyscallTable& names = SyscallTable::builtin()) {
    std::ostringstream out;
    out << "syscall,freq,mean,sd,cv\n";
    out.setf(std::ios::fixed);
    out.precision(2);
    for (const auto& s : stats) {
        out << names.display(s.syscall) << ',' << s.freq << ',' << s.mean << ',' << s.sd << ',';
        if (s.cv) out << *s.cv;
        out << '\n';
    }
    return out.str();
}

// Scores for one (policy, labeled dataset) pair. Percentages are integer
// truncated, so permit + deny lands on 99 or 100.
struct EvalRow {
    std::size_t total_events = 0;  // ANTIGEN events only
    std::size_t attack_events = 0;
    std::size_t permitted_events = 0;
    long long attack_pct = 0;
    long long normal_pct = 0;
    long long permit_pct = 0;
    long long deny_pct = 0;
};

inline EvalRow evaluate_policy(const Policy& policy, const std::vector<InputEvent>& events,
                               const DatasetLabels& labels) {
    EvalRow row;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const InputEvent& e = events[i];
        if (e.kind != InputEvent::Kind::antigen) continue;
        ++row.total_events;
        if (i < labels.attack.size() && labels.attack[i]) ++row.attack_events;
        if (policy.permits(e.antigen)) ++row.permitted_events;
    }
    auto pct = [&](std::size_t count) -> long long {
        if (row.total_events == 0) return 0;
        return static_cast<long long>(count * 100 / row.total_events);
    };
    row.attack_pct = pct(row.attack_events);
    row.normal_pct = pct(row.total_events - row.attack_events);
    row.permit_pct = pct(row.permitted_events);
    row.deny_pct = pct(row.total_events - row.permitted_events);
    return row;
}

// Policy file: `permit <uint>` lines closed by `default deny`.
inline void write_policy(std::ostream& out, const Policy& policy) {
    out << "# provenance: " << policy.provenance << "\n";
    for (AntigenValue v : policy.permitted) out << "permit " << v << "\n";
    out << "default deny\n";
}

inline Policy read_policy(std::istream& in) {
    Policy policy;
    policy.provenance = "file";
    std::string line;
    std::size_t lineno = 0;
    bool closed = false;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream row(line);
        std::string head;
        if (!(row >> head)) continue;
        if (closed)
            throw std::runtime_error("policy line " + std::to_string(lineno) +
                                     ": content after 'default deny'");
        if (head == "permit") {
            long long value = -1;
            if (!(row >> value) || value < 0)
                throw std::runtime_error("policy line " + std::to_string(lineno) +
                                         ": expected 'permit <uint>'");
            policy.permitted.insert(static_cast<AntigenValue>(value));
        } else if (head == "default") {
            std::string action;
            if (!(row >> action) || action != "deny")
                throw std::runtime_error("policy line " + std::to_string(lineno) +
                                         ": only 'default deny' is supported");
            closed = true;
        } else {
            throw std::runtime_error("policy line " + std::to_string(lineno) +
                                     ": unknown directive '" + head + "'");
        }
    }
    if (!closed) throw std::runtime_error("policy file missing 'default deny' terminator");
    return policy;
}

}  // namespace tissue
