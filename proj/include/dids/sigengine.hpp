#pragma once

// Base signature engine: exact, ordered, non-overlapping content matching
// over packet payloads plus header constraints.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dids/error.hpp"
#include "dids/model.hpp"

namespace dids {

struct Signature {
    int id = 0;
    std::string attack;
    Proto proto = Proto::tcp;
    std::optional<std::uint16_t> dport; // nullopt: any
    std::vector<Bytes> contents;
    std::map<std::string, PacketField> bind;
};

inline constexpr std::size_t max_content_size = 1024;

/// Parses one content token: "ascii:<text>" or "hex:<lowercase hex>".
inline std::optional<Bytes> parse_content_token(std::string_view token)
{
    if (token.starts_with("ascii:")) {
        return to_bytes(token.substr(6));
    }
    if (token.starts_with("hex:")) {
        return from_hex(token.substr(4));
    }
    return std::nullopt;
}

inline std::vector<Signature> parse_signatures(const nlohmann::json& doc, const AttackGraph& graph,
                                               const std::string& where = "signatures")
{
    if (!doc.is_array()) {
        throw ParseError(where + ": expected a JSON array of signature records");
    }
    std::vector<Signature> sigs;
    std::set<int> seen;
    std::size_t index = 0;
    for (const auto& rec : doc) {
        ++index;
        const std::string loc = where + ": record " + std::to_string(index);
        auto fail = [&](const std::string& why) { return ParseError(loc + ": " + why); };
        try {
            Signature s;
            s.id = rec.at("id").get<int>();
            s.attack = rec.at("attack").get<std::string>();
            const AttackType* attack = graph.find(s.attack);
            if (attack == nullptr) {
                throw fail("unknown attack '" + s.attack + "'");
            }
            const auto proto = parse_proto(rec.at("proto").get<std::string>());
            if (!proto) throw fail("proto must be tcp or udp");
            s.proto = *proto;
            const auto& dport = rec.at("dport");
            if (dport.is_string()) {
                if (dport.get<std::string>() != "any") throw fail("dport must be an integer or \"any\"");
            } else {
                const auto port = dport.get<int>();
                if (port < 0 || port > 65535) throw fail("dport out of range");
                s.dport = static_cast<std::uint16_t>(port);
            }
            for (const auto& tok : rec.at("content")) {
                auto bytes = parse_content_token(tok.get<std::string>());
                if (!bytes) throw fail("bad content token '" + tok.get<std::string>() + "'");
                if (bytes->empty() || bytes->size() > max_content_size) {
                    throw fail("content tokens must be 1-1024 bytes");
                }
                s.contents.push_back(std::move(*bytes));
            }
            if (s.contents.empty()) throw fail("content must be non-empty");
            if (rec.contains("bind")) {
                for (const auto& [var, field] : rec.at("bind").items()) {
                    const auto f = parse_packet_field(field.get<std::string>());
                    if (!f || *f == PacketField::proto) {
                        throw fail("bind field must be one of src, dst, sport, dport");
                    }
                    s.bind[var.starts_with('?') ? var.substr(1) : var] = *f;
                }
            }
            auto needed = variables_of(attack->pre);
            for (const auto& v : variables_of(attack->post)) needed.insert(v);
            for (const auto& v : needed) {
                if (!s.bind.contains(v)) throw fail("bind does not assign ?" + v + " required by " + s.attack);
            }
            if (!seen.insert(s.id).second) {
                throw fail("duplicate signature id " + std::to_string(s.id));
            }
            sigs.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw fail(e.what());
        }
    }
    return sigs;
}

inline std::vector<Signature> load_signatures(const std::string& path, const AttackGraph& graph)
{
    return parse_signatures(read_json_file(path), graph, path);
}

/// True when every token occurs in `payload`, in order, without overlap.
/// Greedy leftmost placement is exact for this rule: placing a token as early
/// as possible never removes room for the tokens after it.
inline bool contents_match(std::span<const Bytes> contents, std::span<const std::uint8_t> payload)
{
    auto cursor = payload.begin();
    for (const auto& token : contents) {
        const auto hit = std::search(cursor, payload.end(), token.begin(), token.end());
        if (hit == payload.end()) return false;
        cursor = hit + static_cast<std::ptrdiff_t>(token.size());
    }
    return true;
}

/// The returned alert carries id 0; scan_stream numbers alerts.
inline std::optional<Alert> match_packet(const Signature& sig, const Packet& p)
{
    if (sig.proto != p.proto) return std::nullopt;
    if (sig.dport && *sig.dport != p.dport) return std::nullopt;
    if (!contents_match(sig.contents, p.payload)) return std::nullopt;
    Alert a;
    a.ts = p.ts;
    a.attack = sig.attack;
    a.source = AlertSource::base;
    a.packet_ref = p.id;
    a.sig_id = sig.id;
    for (const auto& [var, field] : sig.bind) {
        a.bindings[var] = field_literal(p, field);
    }
    return a;
}

/// Alerts ordered by (packet id, signature id), numbered from `first_id`.
inline std::vector<Alert> scan_stream(std::span<const Signature> sigs, std::span<const Packet> packets,
                                      AlertId first_id = 1)
{
    std::vector<const Signature*> ordered;
    ordered.reserve(sigs.size());
    for (const auto& s : sigs) ordered.push_back(&s);
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

    std::vector<Alert> out;
    for (const auto& p : packets) {
        for (const auto* s : ordered) {
            if (auto a = match_packet(*s, p)) {
                a->id = first_id++;
                out.push_back(std::move(*a));
            }
        }
    }
    return out;
}

} // namespace dids
