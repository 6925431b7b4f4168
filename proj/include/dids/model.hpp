#pragma once

// Core vocabulary shared by every stage: packets, alerts, predicate facts,
// attack types and the unification machinery behind prerequisite matching.

#include <algorithm>
#include <charconv>
#include <compare>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dids/error.hpp"

namespace dids {

using Bytes = std::vector<std::uint8_t>;
using PacketId = std::uint64_t;
using AlertId = std::uint64_t;

// ---------------------------------------------------------------------------
// Bytes and addresses

inline std::string to_hex(std::span<const std::uint8_t> bytes)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (const auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

/// Lowercase, even-length hex only.
inline std::optional<Bytes> from_hex(std::string_view hex)
{
    if (hex.size() % 2 != 0) {
        return std::nullopt;
    }
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        return -1;
    };
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        const int hi = nibble(hex[i]);
        const int lo = nibble(hex[i + 1]);
        if (hi < 0 || lo < 0) {
            return std::nullopt;
        }
        out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
    }
    return out;
}

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

struct Ipv4 {
    std::uint32_t value = 0;

    static std::optional<Ipv4> parse(std::string_view text)
    {
        std::uint32_t v = 0;
        const char* p = text.data();
        const char* end = text.data() + text.size();
        for (int octet = 0; octet < 4; ++octet) {
            if (octet > 0) {
                if (p == end || *p != '.') return std::nullopt;
                ++p;
            }
            unsigned part = 0;
            auto [next, ec] = std::from_chars(p, end, part);
            if (ec != std::errc{} || next == p || next - p > 3 || part > 255) {
                return std::nullopt;
            }
            v = (v << 8) | part;
            p = next;
        }
        if (p != end) return std::nullopt;
        return Ipv4{v};
    }

    std::string to_string() const
    {
        return std::to_string(value >> 24) + '.' + std::to_string((value >> 16) & 0xff) + '.' +
               std::to_string((value >> 8) & 0xff) + '.' + std::to_string(value & 0xff);
    }

    auto operator<=>(const Ipv4&) const = default;
};

enum class Proto { tcp, udp };

inline std::string_view to_string(Proto p) { return p == Proto::tcp ? "tcp" : "udp"; }

inline std::optional<Proto> parse_proto(std::string_view s)
{
    if (s == "tcp") return Proto::tcp;
    if (s == "udp") return Proto::udp;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Packets

enum class PacketField { src, dst, sport, dport, proto };

inline std::optional<PacketField> parse_packet_field(std::string_view s)
{
    if (s == "src") return PacketField::src;
    if (s == "dst") return PacketField::dst;
    if (s == "sport") return PacketField::sport;
    if (s == "dport") return PacketField::dport;
    if (s == "proto") return PacketField::proto;
    return std::nullopt;
}

inline std::string_view to_string(PacketField f)
{
    switch (f) {
    case PacketField::src: return "src";
    case PacketField::dst: return "dst";
    case PacketField::sport: return "sport";
    case PacketField::dport: return "dport";
    case PacketField::proto: return "proto";
    }
    return "?";
}

struct Packet {
    PacketId id = 0;
    double ts = 0.0;
    Ipv4 src;
    Ipv4 dst;
    std::uint16_t sport = 0;
    std::uint16_t dport = 0;
    Proto proto = Proto::tcp;
    Bytes payload;
};

inline constexpr std::size_t max_payload_size = 65535;

/// Canonical literal text of one header field.
inline std::string field_literal(const Packet& p, PacketField f)
{
    switch (f) {
    case PacketField::src: return p.src.to_string();
    case PacketField::dst: return p.dst.to_string();
    case PacketField::sport: return std::to_string(p.sport);
    case PacketField::dport: return std::to_string(p.dport);
    case PacketField::proto: return std::string(to_string(p.proto));
    }
    return {};
}

// ---------------------------------------------------------------------------
// Terms and facts

/// Addresses are normalised and integers printed in decimal so that literal
/// comparison is plain string equality.
inline std::string canonical_literal(std::string_view text)
{
    if (auto ip = Ipv4::parse(text)) {
        return ip->to_string();
    }
    std::string_view digits = text;
    bool negative = false;
    if (!digits.empty() && (digits.front() == '-' || digits.front() == '+')) {
        negative = digits.front() == '-';
        digits.remove_prefix(1);
    }
    if (!digits.empty() && std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        const auto first = digits.find_first_not_of('0');
        if (first == std::string_view::npos) {
            return "0";
        }
        return (negative ? "-" : "") + std::string(digits.substr(first));
    }
    return std::string(text);
}

struct Term {
    enum class Kind { variable, literal };
    Kind kind = Kind::literal;
    std::string text; // variable name without '?', or canonical literal

    static Term variable(std::string name) { return {Kind::variable, std::move(name)}; }
    static Term literal(std::string_view value) { return {Kind::literal, canonical_literal(value)}; }

    bool is_variable() const { return kind == Kind::variable; }

    std::string to_string() const { return is_variable() ? "?" + text : text; }

    auto operator<=>(const Term&) const = default;
};

struct Fact {
    std::string predicate;
    std::vector<Term> args;

    bool ground() const
    {
        return std::none_of(args.begin(), args.end(), [](const Term& t) { return t.is_variable(); });
    }

    std::string to_string() const
    {
        std::string out = predicate + "(";
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (i > 0) out += ',';
            out += args[i].to_string();
        }
        return out + ")";
    }

    auto operator<=>(const Fact&) const = default;
};

using FactSet = std::set<Fact>;

namespace detail {

inline bool is_ident_char(char c, bool first)
{
    const bool alpha = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
    return first ? alpha : alpha || (c >= '0' && c <= '9');
}

inline bool is_identifier(std::string_view s)
{
    if (s.empty() || !is_ident_char(s.front(), true)) return false;
    return std::all_of(s.begin() + 1, s.end(), [](char c) { return is_ident_char(c, false); });
}

} // namespace detail

/// Parses `predicate(arg1,arg2,...)`. Arguments are `?name` variables or
/// literals; whitespace is not allowed inside the fact.
inline Fact parse_fact(std::string_view text)
{
    auto fail = [&](const std::string& why) {
        return ParseError("bad fact '" + std::string(text) + "': " + why);
    };
    const auto open = text.find('(');
    if (open == std::string_view::npos || text.empty() || text.back() != ')') {
        throw fail("expected predicate(args)");
    }
    Fact fact;
    fact.predicate = std::string(text.substr(0, open));
    if (!detail::is_identifier(fact.predicate)) {
        throw fail("predicate must be an identifier");
    }
    std::string_view body = text.substr(open + 1, text.size() - open - 2);
    if (body.empty()) {
        return fact;
    }
    std::size_t start = 0;
    while (true) {
        const auto comma = body.find(',', start);
        const std::string_view arg = body.substr(start, comma == std::string_view::npos ? body.npos : comma - start);
        if (arg.empty()) {
            throw fail("empty argument");
        }
        if (arg.find_first_of(" \t\r\n()?") != std::string_view::npos && arg.front() != '?') {
            throw fail("invalid literal '" + std::string(arg) + "'");
        }
        if (arg.front() == '?') {
            if (!detail::is_identifier(arg.substr(1))) {
                throw fail("invalid variable '" + std::string(arg) + "'");
            }
            fact.args.push_back(Term::variable(std::string(arg.substr(1))));
        } else {
            fact.args.push_back(Term::literal(arg));
        }
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return fact;
}

// ---------------------------------------------------------------------------
// Bindings and unification

/// Substitution variable -> canonical literal. std::map ordering makes
/// comparison of two bindings over the same variables lexicographic by value.
using Binding = std::map<std::string, std::string>;

/// True when no variable is bound to different values in a and b.
inline bool consistent(const Binding& a, const Binding& b)
{
    for (const auto& [var, value] : a) {
        const auto it = b.find(var);
        if (it != b.end() && it->second != value) return false;
    }
    return true;
}

/// Union of two consistent bindings.
inline Binding merged(Binding a, const Binding& b)
{
    a.insert(b.begin(), b.end());
    return a;
}

inline std::set<std::string> variables_of(std::span<const Fact> facts)
{
    std::set<std::string> vars;
    for (const auto& f : facts) {
        for (const auto& t : f.args) {
            if (t.is_variable()) vars.insert(t.text);
        }
    }
    return vars;
}

inline Fact instantiate(const Fact& fact, const Binding& b)
{
    Fact out = fact;
    for (auto& t : out.args) {
        if (!t.is_variable()) continue;
        if (const auto it = b.find(t.text); it != b.end()) {
            t = Term{Term::Kind::literal, it->second};
        }
    }
    return out;
}

/// Replaces bound variables by their literals; unbound variables stay.
inline std::vector<Fact> instantiate(std::span<const Fact> facts, const Binding& b)
{
    std::vector<Fact> out;
    out.reserve(facts.size());
    for (const auto& f : facts) {
        out.push_back(instantiate(f, b));
    }
    return out;
}

/// Extends `seed` so that `pattern` instantiates to `ground`, or returns
/// nullopt. Same predicate with different arity is a malformed graph, not a
/// mismatch.
inline std::optional<Binding> unify_fact(const Fact& pattern, const Fact& ground, const Binding& seed = {})
{
    if (!ground.ground()) {
        throw PreconditionError("unify_fact: '" + ground.to_string() + "' is not ground");
    }
    if (pattern.predicate != ground.predicate) {
        return std::nullopt;
    }
    if (pattern.args.size() != ground.args.size()) {
        throw MalformedGraph("predicate '" + pattern.predicate + "' used with arity " +
                             std::to_string(pattern.args.size()) + " and " + std::to_string(ground.args.size()));
    }
    Binding out = seed;
    for (std::size_t i = 0; i < pattern.args.size(); ++i) {
        const Term& p = pattern.args[i];
        const std::string& value = ground.args[i].text;
        if (!p.is_variable()) {
            if (p.text != value) return std::nullopt;
            continue;
        }
        const auto [it, inserted] = out.emplace(p.text, value);
        if (!inserted && it->second != value) {
            return std::nullopt;
        }
    }
    return out;
}

namespace detail {

inline void satisfy_from(std::span<const Fact> pre, std::size_t index, const FactSet& pool, const Binding& current,
                         std::set<Binding>& results)
{
    if (index == pre.size()) {
        results.insert(current);
        return;
    }
    for (const auto& g : pool) {
        if (auto next = unify_fact(pre[index], g, current)) {
            satisfy_from(pre, index + 1, pool, *next, results);
        }
    }
}

} // namespace detail

/// Every binding (extending `seed`) under which each prerequisite unifies
/// with some pool fact, sorted lexicographically by bound values.
inline std::vector<Binding> satisfy(std::span<const Fact> pre, const FactSet& pool, const Binding& seed = {})
{
    std::set<Binding> results;
    detail::satisfy_from(pre, 0, pool, seed, results);
    return {results.begin(), results.end()};
}

// ---------------------------------------------------------------------------
// Attack types and the attack graph

struct AttackType {
    std::string name;
    std::vector<Fact> pre;
    std::vector<Fact> post;
    /// Capture template over packet fields; a Term::literal "any" is a wildcard.
    std::map<PacketField, Term> filter;
    double ttl = 0.0;
    std::set<std::string> free_vars;
};

inline bool is_wildcard(const Term& t) { return !t.is_variable() && t.text == "any"; }

class AttackGraph {
public:
    AttackGraph() = default;

    AttackGraph(std::vector<AttackType> attacks, std::vector<Fact> axioms)
        : axioms_(std::move(axioms))
    {
        for (auto& a : attacks) {
            std::string name = a.name;
            if (!attacks_.emplace(name, std::move(a)).second) {
                throw MalformedGraph("duplicate attack name '" + name + "'");
            }
        }
        validate();
    }

    const AttackType* find(std::string_view name) const
    {
        const auto it = attacks_.find(std::string(name));
        return it == attacks_.end() ? nullptr : &it->second;
    }

    const AttackType& at(std::string_view name) const
    {
        if (const auto* a = find(name)) return *a;
        throw ParseError("unknown attack '" + std::string(name) + "'");
    }

    /// Attacks in name order.
    const std::map<std::string, AttackType>& attacks() const { return attacks_; }

    /// Fact templates over packet header fields (e.g. reachable(?dst)); each
    /// observed packet grounds them into built-in facts.
    const std::vector<Fact>& axioms() const { return axioms_; }

    FactSet axiom_facts(const Packet& p) const
    {
        FactSet out;
        for (const auto& ax : axioms_) {
            Binding b;
            for (const auto& var : variables_of(std::span(&ax, 1))) {
                b[var] = field_literal(p, *parse_packet_field(var));
            }
            out.insert(instantiate(ax, b));
        }
        return out;
    }

private:
    void validate() const
    {
        std::map<std::string, std::size_t> arity;
        auto check_arity = [&](const Fact& f) {
            const auto [it, inserted] = arity.emplace(f.predicate, f.args.size());
            if (!inserted && it->second != f.args.size()) {
                throw MalformedGraph("predicate '" + f.predicate + "' used with arity " +
                                     std::to_string(it->second) + " and " + std::to_string(f.args.size()));
            }
        };
        for (const auto& [name, a] : attacks_) {
            if (!(a.ttl > 0.0)) {
                throw MalformedGraph("attack '" + name + "': ttl must be positive");
            }
            for (const auto& f : a.pre) check_arity(f);
            for (const auto& f : a.post) check_arity(f);
            auto allowed = variables_of(a.pre);
            allowed.insert(a.free_vars.begin(), a.free_vars.end());
            auto require = [&](const std::string& var, std::string_view where) {
                if (!allowed.contains(var)) {
                    throw MalformedGraph("attack '" + name + "': variable ?" + var + " in " + std::string(where) +
                                         " is neither in pre nor declared free");
                }
            };
            for (const auto& var : variables_of(a.post)) require(var, "post");
            for (const auto& [field, term] : a.filter) {
                if (term.is_variable()) require(term.text, "filter");
            }
        }
        for (const auto& ax : axioms_) {
            check_arity(ax);
            for (const auto& var : variables_of(std::span(&ax, 1))) {
                if (!parse_packet_field(var)) {
                    throw MalformedGraph("axiom '" + ax.to_string() + "': ?" + var + " is not a packet field");
                }
            }
        }
    }

    std::map<std::string, AttackType> attacks_;
    std::vector<Fact> axioms_;
};

inline AttackGraph parse_graph(const nlohmann::json& doc, const std::string& where = "graph")
{
    auto fail = [&](const std::string& why) { return ParseError(where + ": " + why); };
    try {
        if (!doc.is_object() || !doc.contains("attacks") || !doc.at("attacks").is_array()) {
            throw fail("expected an object with an \"attacks\" array");
        }
        std::vector<AttackType> attacks;
        std::size_t index = 0;
        for (const auto& rec : doc.at("attacks")) {
            ++index;
            const std::string loc = "attack " + std::to_string(index);
            AttackType a;
            a.name = rec.at("name").get<std::string>();
            if (!detail::is_identifier(a.name)) {
                throw fail(loc + ": name must be an identifier");
            }
            for (const auto& f : rec.at("pre")) a.pre.push_back(parse_fact(f.get<std::string>()));
            for (const auto& f : rec.at("post")) a.post.push_back(parse_fact(f.get<std::string>()));
            a.ttl = rec.at("ttl").get<double>();
            if (rec.contains("filter")) {
                for (const auto& [key, value] : rec.at("filter").items()) {
                    const auto field = parse_packet_field(key);
                    if (!field) throw fail(loc + ": unknown filter field '" + key + "'");
                    if (value.is_number_integer()) {
                        a.filter[*field] = Term::literal(std::to_string(value.get<long long>()));
                    } else {
                        const auto s = value.get<std::string>();
                        if (!s.empty() && s.front() == '?') {
                            a.filter[*field] = Term::variable(s.substr(1));
                        } else {
                            a.filter[*field] = Term::literal(s);
                        }
                    }
                }
            }
            if (rec.contains("free")) {
                for (const auto& v : rec.at("free")) {
                    auto s = v.get<std::string>();
                    if (!s.empty() && s.front() == '?') s.erase(0, 1);
                    a.free_vars.insert(s);
                }
            }
            attacks.push_back(std::move(a));
        }
        std::vector<Fact> axioms;
        if (doc.contains("axioms")) {
            for (const auto& f : doc.at("axioms")) axioms.push_back(parse_fact(f.get<std::string>()));
        }
        return AttackGraph(std::move(attacks), std::move(axioms));
    } catch (const nlohmann::json::exception& e) {
        throw fail(e.what());
    } catch (const MalformedGraph& e) {
        throw MalformedGraph(where + ": " + e.what());
    } catch (const ParseError& e) {
        if (std::string_view(e.what()).starts_with(where)) throw;
        throw ParseError(where + ": " + e.what());
    }
}

inline nlohmann::json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ParseError(path + ": cannot open");
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
}

inline AttackGraph load_graph(const std::string& path) { return parse_graph(read_json_file(path), path); }

// ---------------------------------------------------------------------------
// Alerts

enum class AlertSource { base, hypothesis, ais };

struct Alert {
    AlertId id = 0;
    double ts = 0.0;
    std::string attack;
    Binding bindings;
    AlertSource source = AlertSource::base;
    std::optional<PacketId> packet_ref;
    std::optional<int> sig_id;

    bool operator==(const Alert&) const = default;
};

} // namespace dids
