#pragma once
// tissue/replay.hpp: dataset plumbing. Parses strace-style syscall traces
// and CPU usage logs, merges them into the timestamped replay format, reads
// and writes that format (plus the label sidecar carrying per-event attack
// flags), and plays a log into a live server over the wire protocol at a
// configurable rate.

#include <chrono>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tissue/engine.hpp"
#include "tissue/net.hpp"
#include "tissue/syscalls.hpp"
#include "tissue/wire.hpp"

namespace tissue {

enum class DatasetGroup { normal, success, failure };

inline const char* dataset_group_name(DatasetGroup g) {
    switch (g) {
        case DatasetGroup::normal: return "normal";
        case DatasetGroup::success: return "success";
        case DatasetGroup::failure: return "failure";
    }
    return "normal";
}

inline std::optional<DatasetGroup> dataset_group_from(const std::string& name) {
    if (name == "normal") return DatasetGroup::normal;
    if (name == "success") return DatasetGroup::success;
    if (name == "failure") return DatasetGroup::failure;
    return std::nullopt;
}

// Sidecar labels for a replay log: the scenario group plus one attack flag
// per log event. Training data may omit the flags entirely.
struct DatasetLabels {
    DatasetGroup group = DatasetGroup::normal;
    std::vector<bool> attack;
};

namespace replay_detail {

// `<seconds>.<frac>` epoch timestamp to integer microseconds.
inline std::optional<std::uint64_t> parse_epoch_us(const std::string& token) {
    auto dot = token.find('.');
    std::string secs = dot == std::string::npos ? token : token.substr(0, dot);
    std::string frac = dot == std::string::npos ? "" : token.substr(dot + 1);
    if (secs.empty() || secs.find_first_not_of("0123456789") != std::string::npos)
        return std::nullopt;
    if (frac.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
    frac.resize(6, '0');  // pad or truncate to microseconds
    try {
        return std::stoull(secs) * 1000000ull + std::stoull(frac.empty() ? "0" : frac);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

struct RawEvents {
    std::vector<std::pair<std::uint64_t, std::uint32_t>> syscalls;  // epoch µs, number
    std::vector<std::pair<std::uint64_t, double>> cpu;              // epoch µs, level
};

// Raw strace parse keeping epoch timestamps; shared by the public parser
// (which rebases to this stream's own start) and parse_session (which
// rebases syscalls and CPU samples to a common start).
inline std::vector<std::pair<std::uint64_t, std::uint32_t>> parse_strace_raw(
    std::istream& in, const SyscallTable& table, std::ostream* warnings) {
    std::vector<std::pair<std::uint64_t, std::uint32_t>> out;
    std::string line;
    std::size_t lineno = 0, considered = 0, skipped = 0;
    auto warn = [&](const std::string& why) {
        ++skipped;
        if (warnings) *warnings << "parse_strace: line " << lineno << " skipped: " << why << "\n";
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream row(line);
        std::string ts_token, rest;
        if (!(row >> ts_token)) continue;  // blank line
        ++considered;
        auto t = parse_epoch_us(ts_token);
        if (!t) {
            warn("unparseable timestamp '" + ts_token + "'");
            continue;
        }
        if (!(row >> rest)) {
            warn("no syscall after timestamp");
            continue;
        }
        auto paren = rest.find('(');
        std::string name = paren == std::string::npos ? "" : rest.substr(0, paren);
        if (name.empty()) {
            warn("cannot extract a syscall name from '" + rest + "'");
            continue;
        }
        auto number = table.number(name);
        if (!number) {
            warn("unknown syscall '" + name + "'");
            continue;
        }
        out.emplace_back(*t, *number);
    }
    if (considered > 0 && skipped * 10 > considered)
        throw std::runtime_error("parse_strace: " + std::to_string(skipped) + " of " +
                                 std::to_string(considered) + " lines skipped (over 10%)");
    return out;
}

inline std::vector<std::pair<std::uint64_t, double>> parse_cpu_raw(std::istream& in) {
    std::vector<std::pair<std::uint64_t, double>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream row(line);
        std::string ts_token;
        double level = 0.0;
        if (!(row >> ts_token)) continue;
        auto t = parse_epoch_us(ts_token);
        if (!t || !(row >> level) || level < 0.0)
            throw std::runtime_error("parse_cpu_log: bad line " + std::to_string(lineno) + ": '" +
                                     line + "'");
        out.emplace_back(*t, level);
    }
    return out;
}

template <typename Pair>
inline void rebase(std::vector<Pair>& events, std::uint64_t base) {
    for (auto& e : events) e.first -= base;
}

template <typename Pair>
inline std::uint64_t min_time(const std::vector<Pair>& events) {
    std::uint64_t m = ~0ull;
    for (const auto& e : events) m = std::min(m, e.first);
    return m;
}

}  // namespace replay_detail

// Timestamped syscall events, rebased so the earliest sits at 0.
inline std::vector<std::pair<std::uint64_t, std::uint32_t>> parse_strace(
    std::istream& in, const SyscallTable& table = SyscallTable::builtin(),
    std::ostream* warnings = nullptr) {
    auto events = replay_detail::parse_strace_raw(in, table, warnings);
    if (!events.empty()) replay_detail::rebase(events, replay_detail::min_time(events));
    return events;
}

// Lines `<epoch_seconds.frac> <level>`; rebased like parse_strace.
inline std::vector<std::pair<std::uint64_t, double>> parse_cpu_log(std::istream& in) {
    auto samples = replay_detail::parse_cpu_raw(in);
    if (!samples.empty()) replay_detail::rebase(samples, replay_detail::min_time(samples));
    return samples;
}

// Interleaves already-sorted syscall and CPU series into one replay log.
// CPU samples become SIGNAL 0 events; timestamp ties put ANTIGEN first.
inline std::vector<InputEvent> merge_logs(
    const std::vector<std::pair<std::uint64_t, std::uint32_t>>& syscalls,
    const std::vector<std::pair<std::uint64_t, double>>& cpu) {
    std::vector<InputEvent> out;
    out.reserve(syscalls.size() + cpu.size());
    for (const auto& [t, num] : syscalls) out.push_back(InputEvent::antigen_event(t, num));
    for (const auto& [t, level] : cpu) out.push_back(InputEvent::signal_event(t, 0, level));
    std::stable_sort(out.begin(), out.end(), event_before);
    return out;
}

// Parses a syscall trace and CPU log recorded over the same session,
// rebasing both to the session's first observation so their relative
// timing survives, then merges them.
inline std::vector<InputEvent> parse_session(std::istream& strace_in, std::istream& cpu_in,
                                             const SyscallTable& table = SyscallTable::builtin(),
                                             std::ostream* warnings = nullptr) {
    auto syscalls = replay_detail::parse_strace_raw(strace_in, table, warnings);
    auto cpu = replay_detail::parse_cpu_raw(cpu_in);
    std::uint64_t base =
        std::min(replay_detail::min_time(syscalls), replay_detail::min_time(cpu));
    if (base != ~0ull) {
        replay_detail::rebase(syscalls, base);
        replay_detail::rebase(cpu, base);
    }
    return merge_logs(syscalls, cpu);
}

// The replay file format: one serialize_event line per event, `#` comments
// for metadata.
inline void write_replay_log(std::ostream& out, const std::vector<InputEvent>& events,
                             const std::vector<std::string>& comments = {}) {
    for (const auto& c : comments) out << "# " << c << "\n";
    for (const auto& e : events) out << serialize_event(e) << "\n";
}

inline std::vector<InputEvent> read_replay_log(std::istream& in) {
    std::vector<InputEvent> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream row(line);
        std::uint64_t t_us = 0;
        std::string kind;
        if (!(row >> t_us)) {
            std::string any;
            std::istringstream probe(line);
            if (probe >> any)
                throw std::runtime_error("replay log line " + std::to_string(lineno) +
                                         ": expected '<t_us> ANTIGEN|SIGNAL ...'");
            continue;  // blank or comment-only line
        }
        if (!(row >> kind)) throw std::runtime_error("replay log line " + std::to_string(lineno) +
                                                     ": missing event kind");
        if (kind == "ANTIGEN") {
            long long value = -1;
            if (!(row >> value) || value < 0)
                throw std::runtime_error("replay log line " + std::to_string(lineno) +
                                         ": bad ANTIGEN value");
            out.push_back(InputEvent::antigen_event(t_us, static_cast<AntigenValue>(value)));
        } else if (kind == "SIGNAL") {
            long long id = -1;
            double level = 0.0;
            if (!(row >> id >> level) || id < 0 || level < 0.0)
                throw std::runtime_error("replay log line " + std::to_string(lineno) +
                                         ": bad SIGNAL fields");
            out.push_back(InputEvent::signal_event(t_us, static_cast<std::uint32_t>(id), level));
        } else {
            throw std::runtime_error("replay log line " + std::to_string(lineno) +
                                     ": unknown event kind '" + kind + "'");
        }
    }
    return out;
}

// Label sidecar: a group line followed by one 0/1 attack flag per event.
inline void write_labels(std::ostream& out, const DatasetLabels& labels) {
    out << "group=" << dataset_group_name(labels.group) << "\n";
    for (bool flag : labels.attack) out << (flag ? '1' : '0') << "\n";
}

inline DatasetLabels read_labels(std::istream& in) {
    DatasetLabels labels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string token;
        std::istringstream row(line);
        if (!(row >> token)) continue;
        if (token.rfind("group=", 0) == 0) {
            auto g = dataset_group_from(token.substr(6));
            if (!g) throw std::runtime_error("labels line " + std::to_string(lineno) +
                                             ": unknown group '" + token.substr(6) + "'");
            labels.group = *g;
        } else if (token == "0" || token == "1") {
            labels.attack.push_back(token == "1");
        } else {
            throw std::runtime_error("labels line " + std::to_string(lineno) +
                                     ": expected group= or a 0/1 flag");
        }
    }
    return labels;
}

struct ReplayResult {
    std::size_t sent = 0;
    std::size_t unsent = 0;

    bool ok() const { return unsent == 0; }
};

// Plays a log into a server: event i goes out at wall time t_us(i) divided
// by rate_factor after the start. ANTIGEN events use the antigen stream,
// SIGNAL events the signal stream; both get a HELLO up front and a BYE at
// the end. A failed write aborts and the remaining events count as unsent.
inline ReplayResult replay(const std::vector<InputEvent>& log, double rate_factor,
                           Stream* antigen_conn, Stream* signal_conn) {
    if (rate_factor <= 0.0) throw ConfigError("replay rate_factor must be > 0");
    ReplayResult result;
    if (antigen_conn &&
        !antigen_conn->write_all(encode(WireMessage::hello(ClientKind::antigen)) + "\n")) {
        result.unsent = log.size();
        return result;
    }
    if (signal_conn &&
        !signal_conn->write_all(encode(WireMessage::hello(ClientKind::signal)) + "\n")) {
        result.unsent = log.size();
        return result;
    }

    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < log.size(); ++i) {
        const InputEvent& e = log[i];
        auto due = start + std::chrono::microseconds(
                               static_cast<std::uint64_t>(static_cast<double>(e.t_us) / rate_factor));
        std::this_thread::sleep_until(due);
        Stream* conn = e.kind == InputEvent::Kind::antigen ? antigen_conn : signal_conn;
        std::string line =
            e.kind == InputEvent::Kind::antigen
                ? encode(WireMessage::antigen_msg(e.antigen))
                : encode(WireMessage::signal_msg(e.signal_id, e.level));
        if (!conn || !conn->write_all(line + "\n")) {
            result.unsent = log.size() - i;
            return result;
        }
        ++result.sent;
    }

    std::string bye = encode(WireMessage::bye()) + "\n";
    if (antigen_conn) antigen_conn->write_all(bye);
    if (signal_conn) signal_conn->write_all(bye);
    return result;
}

}  // namespace tissue
