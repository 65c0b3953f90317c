#pragma once
// tissue/syscalls.hpp: syscall name <-> number mapping for the strace
// parser and for human-readable policy output. The numbering is bundled
// (and mirrored in data/syscall_numbers.txt) rather than taken from the
// build host, so a trace parsed today maps to the same antigen values as
// the datasets it ships with. Extend or replace it via a table file.

#include <cstdint>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>

#include "tissue/core.hpp"

namespace tissue {

class SyscallTable {
  public:
    void add(const std::string& name, std::uint32_t number) {
        by_name_[name] = number;
        by_number_.emplace(number, name);  // first name for a number wins
    }

    std::optional<std::uint32_t> number(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<std::string> name(std::uint32_t number) const {
        auto it = by_number_.find(number);
        if (it == by_number_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t size() const { return by_name_.size(); }

    const std::unordered_map<std::string, std::uint32_t>& entries() const { return by_name_; }

    // "close(6)" when the number is known, plain "6" otherwise.
    std::string display(std::uint32_t number) const {
        auto n = name(number);
        return n ? *n + "(" + std::to_string(number) + ")" : std::to_string(number);
    }

    // Lines `<name> <number>`, `#` comments allowed.
    static SyscallTable from_stream(std::istream& in) {
        SyscallTable t;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::istringstream row(line);
            std::string name;
            if (!(row >> name)) continue;
            long long number = -1;
            if (!(row >> number) || number < 0)
                throw ConfigError("syscall table line " + std::to_string(lineno) +
                                  ": expected '<name> <number>'");
            t.add(name, static_cast<std::uint32_t>(number));
        }
        return t;
    }

    static const SyscallTable& builtin() {
        static const SyscallTable t = make_builtin();
        return t;
    }

  private:
    static SyscallTable make_builtin() {
        SyscallTable t;
        const std::pair<const char*, std::uint32_t> entries[] = {
            {"_exit", 1},        {"fork", 2},        {"read", 3},
            {"write", 4},        {"open", 5},        {"close", 6},
            {"execve", 11},      {"chdir", 12},      {"time", 13},
            {"lseek", 19},       {"getpid", 20},     {"brk", 45},
            {"ioctl", 54},       {"fcntl", 55},      {"setsid", 66},
            {"gettimeofday", 78}, {"old_mmap", 90},  {"munmap", 91},
            {"stat", 106},       {"fstat", 108},     {"fsync", 118},
            {"uname", 122},      {"mprotect", 125},  {"personality", 136},
            {"getdents", 141},   {"select", 142},    {"poll", 168},
            {"rt_sigaction", 174}, {"getrlimit", 191}, {"fstat64", 197},
            {"socket", 301},     {"bind", 302},      {"connect", 303},
            {"listen", 304},     {"getsockname", 306}, {"send", 309},
            {"sendto", 311},     {"recvfrom", 312},
        };
        for (const auto& [name, number] : entries) t.add(name, number);
        return t;
    }

    std::unordered_map<std::string, std::uint32_t> by_name_;
    std::unordered_map<std::uint32_t, std::string> by_number_;
};

}  // namespace tissue
