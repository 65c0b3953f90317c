#pragma once
// tissue/wire.hpp: the newline-delimited ASCII protocol spoken between the
// tissue server and its clients. One message per line:
//
//   HELLO <antigen|signal|response> <version>
//   ANTIGEN <value>
//   SIGNAL <id> <level>
//   RESPONSE <value> <t_us>
//   BYE
//
// Encoding and decoding are strict and lossless: decode rejects anything it
// would not itself have produced (apart from numeric formatting of levels,
// where any finite non-negative decimal is accepted).

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tissue {

enum class ClientKind { antigen, signal, response };

struct WireMessage {
    enum class Kind { hello, antigen, signal, response, bye };

    Kind kind = Kind::bye;
    ClientKind client = ClientKind::antigen;  // hello
    std::uint32_t version = 0;                // hello
    std::uint32_t antigen = 0;                // antigen, response
    std::uint32_t signal_id = 0;              // signal
    double level = 0.0;                       // signal
    std::uint64_t t_us = 0;                   // response

    bool operator==(const WireMessage&) const = default;

    static WireMessage hello(ClientKind c, std::uint32_t version = 1) {
        WireMessage m;
        m.kind = Kind::hello;
        m.client = c;
        m.version = version;
        return m;
    }
    static WireMessage antigen_msg(std::uint32_t value) {
        WireMessage m;
        m.kind = Kind::antigen;
        m.antigen = value;
        return m;
    }
    static WireMessage signal_msg(std::uint32_t id, double level) {
        WireMessage m;
        m.kind = Kind::signal;
        m.signal_id = id;
        m.level = level;
        return m;
    }
    static WireMessage response_msg(std::uint32_t value, std::uint64_t t_us) {
        WireMessage m;
        m.kind = Kind::response;
        m.antigen = value;
        m.t_us = t_us;
        return m;
    }
    static WireMessage bye() { return {}; }
};

namespace wire_detail {

inline const char* client_kind_name(ClientKind c) {
    switch (c) {
        case ClientKind::antigen: return "antigen";
        case ClientKind::signal: return "signal";
        case ClientKind::response: return "response";
    }
    return "antigen";
}

inline std::string format_level(double level) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), level);
    return ec == std::errc() ? std::string(buf, end) : std::string("0");
}

// Splits on single spaces. Leading, trailing, or doubled spaces yield empty
// tokens, which the per-field parsers then reject.
inline std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t sp = line.find(' ', start);
        if (sp == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, sp - start));
        start = sp + 1;
    }
}

template <typename UInt>
inline bool parse_uint(std::string_view tok, UInt& out) {
    if (tok.empty() || tok[0] == '+' || tok[0] == '-') return false;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return ec == std::errc() && ptr == tok.data() + tok.size();
}

inline bool parse_level(std::string_view tok, double& out) {
    if (tok.empty() || tok[0] == '+' || tok[0] == '-') return false;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) return false;
    return std::isfinite(out) && out >= 0.0;
}

}  // namespace wire_detail

// Message text without the trailing newline; transports append it.
inline std::string encode(const WireMessage& m) {
    using Kind = WireMessage::Kind;
    switch (m.kind) {
        case Kind::hello:
            return "HELLO " + std::string(wire_detail::client_kind_name(m.client)) + " " +
                   std::to_string(m.version);
        case Kind::antigen:
            return "ANTIGEN " + std::to_string(m.antigen);
        case Kind::signal:
            return "SIGNAL " + std::to_string(m.signal_id) + " " +
                   wire_detail::format_level(m.level);
        case Kind::response:
            return "RESPONSE " + std::to_string(m.antigen) + " " + std::to_string(m.t_us);
        case Kind::bye:
            return "BYE";
    }
    return "BYE";
}

// Returns nothing for any line that is not a well-formed message. Trailing
// carriage returns are tolerated (the protocol is plain \n, but peers that
// send \r\n should not be punished for it).
inline std::optional<WireMessage> decode(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) return std::nullopt;
    auto tok = wire_detail::split(line);
    using Kind = WireMessage::Kind;
    WireMessage m;
    if (tok[0] == "HELLO" && tok.size() == 3) {
        m.kind = Kind::hello;
        if (tok[1] == "antigen") m.client = ClientKind::antigen;
        else if (tok[1] == "signal") m.client = ClientKind::signal;
        else if (tok[1] == "response") m.client = ClientKind::response;
        else return std::nullopt;
        if (!wire_detail::parse_uint(tok[2], m.version)) return std::nullopt;
        return m;
    }
    if (tok[0] == "ANTIGEN" && tok.size() == 2) {
        m.kind = Kind::antigen;
        if (!wire_detail::parse_uint(tok[1], m.antigen)) return std::nullopt;
        return m;
    }
    if (tok[0] == "SIGNAL" && tok.size() == 3) {
        m.kind = Kind::signal;
        if (!wire_detail::parse_uint(tok[1], m.signal_id)) return std::nullopt;
        if (!wire_detail::parse_level(tok[2], m.level)) return std::nullopt;
        return m;
    }
    if (tok[0] == "RESPONSE" && tok.size() == 3) {
        m.kind = Kind::response;
        if (!wire_detail::parse_uint(tok[1], m.antigen)) return std::nullopt;
        if (!wire_detail::parse_uint(tok[2], m.t_us)) return std::nullopt;
        return m;
    }
    if (tok[0] == "BYE" && tok.size() == 1) {
        m.kind = Kind::bye;
        return m;
    }
    return std::nullopt;
}

}  // namespace tissue
