#pragma once

// Line-oriented JSON formats: packets.jsonl, truth.jsonl, alerts.jsonl and
// the graph export.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dids/correlator.hpp"
#include "dids/error.hpp"
#include "dids/model.hpp"
#include "dids/simgen.hpp"

namespace dids {

using ordered_json = nlohmann::ordered_json;

/// Calls `fn(json, line_number)` for every non-blank line; JSON and
/// record errors are reported as "path:line: message".
inline void for_each_jsonl(std::istream& in, const std::string& where,
                           const std::function<void(const nlohmann::json&, std::size_t)>& fn)
{
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string loc = where + ":" + std::to_string(number);
        try {
            fn(nlohmann::json::parse(line), number);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(loc + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(loc + ": " + e.what());
        }
    }
}

inline std::ifstream open_input(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open");
    return in;
}

inline std::ofstream open_output(const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(path + ": cannot open for writing");
    return out;
}

/// JSON numbers cannot carry infinities.
inline ordered_json time_value(double ts)
{
    return std::isfinite(ts) ? ordered_json(ts) : ordered_json(nullptr);
}

// ---------------------------------------------------------------------------
// packets.jsonl

inline ordered_json to_json(const Packet& p)
{
    ordered_json j;
    j["id"] = p.id;
    j["ts"] = p.ts;
    j["src"] = p.src.to_string();
    j["dst"] = p.dst.to_string();
    j["sport"] = p.sport;
    j["dport"] = p.dport;
    j["proto"] = to_string(p.proto);
    j["payload"] = to_hex(p.payload);
    return j;
}

inline Packet packet_from_json(const nlohmann::json& j)
{
    Packet p;
    p.id = j.at("id").get<PacketId>();
    p.ts = j.at("ts").get<double>();
    auto address = [&](const char* key) {
        const auto ip = Ipv4::parse(j.at(key).get<std::string>());
        if (!ip) throw ParseError(std::string(key) + " is not an IPv4 address");
        return *ip;
    };
    p.src = address("src");
    p.dst = address("dst");
    auto port = [&](const char* key) {
        const auto v = j.at(key).get<long long>();
        if (v < 0 || v > 65535) throw ParseError(std::string(key) + " out of range");
        return static_cast<std::uint16_t>(v);
    };
    p.sport = port("sport");
    p.dport = port("dport");
    const auto proto = parse_proto(j.at("proto").get<std::string>());
    if (!proto) throw ParseError("proto must be tcp or udp");
    p.proto = *proto;
    auto payload = from_hex(j.at("payload").get<std::string>());
    if (!payload) throw ParseError("payload must be lowercase hex of even length");
    if (payload->size() > max_payload_size) throw ParseError("payload longer than 65535 bytes");
    p.payload = std::move(*payload);
    return p;
}

/// Packets in id order. Ids must be unique and timestamps non-decreasing.
inline std::vector<Packet> read_packets(std::istream& in, const std::string& where = "packets")
{
    std::vector<Packet> out;
    for_each_jsonl(in, where, [&](const nlohmann::json& j, std::size_t) { out.push_back(packet_from_json(j)); });
    std::stable_sort(out.begin(), out.end(), [](const Packet& a, const Packet& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i].id == out[i - 1].id) {
            throw ParseError(where + ": duplicate packet id " + std::to_string(out[i].id));
        }
        if (out[i].ts < out[i - 1].ts) {
            throw ParseError(where + ": timestamp decreases at packet id " + std::to_string(out[i].id));
        }
    }
    return out;
}

inline std::vector<Packet> read_packets(const std::string& path)
{
    auto in = open_input(path);
    return read_packets(in, path);
}

inline void write_packets(std::ostream& out, std::span<const Packet> packets)
{
    for (const auto& p : packets) out << to_json(p).dump() << '\n';
}

// ---------------------------------------------------------------------------
// truth.jsonl

inline ordered_json to_json(const TruthRecord& t)
{
    ordered_json j;
    j["packet_id"] = t.packet_id;
    j["label"] = to_string(t.label);
    if (t.attack) j["attack"] = *t.attack;
    return j;
}

inline std::vector<TruthRecord> read_truth(std::istream& in, const std::string& where = "truth")
{
    std::vector<TruthRecord> out;
    for_each_jsonl(in, where, [&](const nlohmann::json& j, std::size_t) {
        TruthRecord t;
        t.packet_id = j.at("packet_id").get<PacketId>();
        const auto label = parse_truth_label(j.at("label").get<std::string>());
        if (!label) throw ParseError("label must be benign, attack or variant");
        t.label = *label;
        if (j.contains("attack") && !j.at("attack").is_null()) t.attack = j.at("attack").get<std::string>();
        out.push_back(std::move(t));
    });
    return out;
}

inline std::vector<TruthRecord> read_truth(const std::string& path)
{
    auto in = open_input(path);
    return read_truth(in, path);
}

inline void write_truth(std::ostream& out, std::span<const TruthRecord> truth)
{
    for (const auto& t : truth) out << to_json(t).dump() << '\n';
}

// ---------------------------------------------------------------------------
// alerts.jsonl

enum class LogKind { base, ais };

/// One line of the unified alert log. Detector fields are set for ais
/// records only; sig_id for base records only.
struct LogRecord {
    AlertId id = 0;
    double ts = 0.0;
    LogKind kind = LogKind::base;
    std::string attack;
    std::optional<int> sig_id;
    PacketId packet_ref = 0;
    std::optional<VertexId> scenario;
    VertexId vertex = 0;
    std::optional<std::uint64_t> detector;
    std::optional<int> origin_sig;
    std::optional<std::size_t> match_len;

    bool operator==(const LogRecord&) const = default;
};

/// Total order of the log: timestamp, then base before ais, then id.
inline bool log_order(const LogRecord& a, const LogRecord& b)
{
    if (a.ts != b.ts) return a.ts < b.ts;
    if (a.kind != b.kind) return a.kind == LogKind::base;
    return a.id < b.id;
}

inline ordered_json to_json(const LogRecord& r)
{
    ordered_json j;
    j["id"] = r.id;
    j["ts"] = r.ts;
    j["kind"] = r.kind == LogKind::base ? "base" : "ais";
    j["attack"] = r.attack;
    if (r.sig_id) j["sig_id"] = *r.sig_id;
    j["packet_ref"] = r.packet_ref;
    if (r.scenario) j["scenario"] = *r.scenario;
    j["vertex"] = r.vertex;
    if (r.detector) j["detector"] = *r.detector;
    if (r.origin_sig) j["origin_sig"] = *r.origin_sig;
    if (r.match_len) j["match_len"] = *r.match_len;
    return j;
}

inline std::vector<LogRecord> read_alerts(std::istream& in, const std::string& where = "alerts")
{
    std::vector<LogRecord> out;
    for_each_jsonl(in, where, [&](const nlohmann::json& j, std::size_t) {
        LogRecord r;
        r.id = j.at("id").get<AlertId>();
        r.ts = j.at("ts").get<double>();
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "base") {
            r.kind = LogKind::base;
        } else if (kind == "ais") {
            r.kind = LogKind::ais;
        } else {
            throw ParseError("kind must be base or ais");
        }
        r.attack = j.at("attack").get<std::string>();
        if (j.contains("sig_id")) r.sig_id = j.at("sig_id").get<int>();
        r.packet_ref = j.at("packet_ref").get<PacketId>();
        if (j.contains("scenario")) r.scenario = j.at("scenario").get<VertexId>();
        r.vertex = j.at("vertex").get<VertexId>();
        if (j.contains("detector")) r.detector = j.at("detector").get<std::uint64_t>();
        if (j.contains("origin_sig")) r.origin_sig = j.at("origin_sig").get<int>();
        if (j.contains("match_len")) r.match_len = j.at("match_len").get<std::size_t>();
        if (r.kind == LogKind::ais && (!r.detector || !r.origin_sig || !r.match_len)) {
            throw ParseError("ais records need detector, origin_sig and match_len");
        }
        out.push_back(std::move(r));
    });
    return out;
}

inline std::vector<LogRecord> read_alerts(const std::string& path)
{
    auto in = open_input(path);
    return read_alerts(in, path);
}

inline void write_alerts(std::ostream& out, std::span<const LogRecord> log)
{
    for (const auto& r : log) out << to_json(r).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Graph export: one object per vertex, edge and signal event.

inline std::vector<ordered_json> export_graph(const CorrelationGraph& g, std::span<const SignalEvent> signals)
{
    std::vector<ordered_json> out;
    const auto scenarios = g.scenarios();
    std::map<VertexId, VertexId> scenario_of;
    for (const auto& [sid, members] : scenarios) {
        for (const auto m : members) scenario_of[m] = sid;
    }
    for (const auto& [id, v] : g.vertices()) {
        ordered_json j;
        j["type"] = "vertex";
        j["id"] = id;
        j["kind"] = to_string(v.kind);
        j["attack"] = v.attack;
        j["bindings"] = ordered_json::object();
        for (const auto& [var, value] : v.bindings) j["bindings"][var] = value;
        j["scenario"] = scenario_of.at(id);
        j["created_ts"] = time_value(v.created_ts);
        j["resolved_ts"] = v.resolved_ts ? time_value(*v.resolved_ts) : ordered_json(nullptr);
        j["deadline"] = v.deadline ? time_value(*v.deadline) : ordered_json(nullptr);
        j["alert_refs"] = v.alert_refs;
        out.push_back(std::move(j));
    }
    for (const auto& [key, e] : g.edges()) {
        ordered_json j;
        j["type"] = "edge";
        j["from"] = e.from;
        j["to"] = e.to;
        j["witness"] = ordered_json::array();
        for (const auto& f : e.witness) j["witness"].push_back(f.to_string());
        out.push_back(std::move(j));
    }
    for (const auto& s : signals) {
        ordered_json j;
        j["type"] = "signal";
        j["kind"] = to_string(s.kind);
        j["vertex"] = s.vertex;
        j["ts"] = time_value(s.ts);
        out.push_back(std::move(j));
    }
    return out;
}

inline void write_jsonl(std::ostream& out, std::span<const ordered_json> lines)
{
    for (const auto& l : lines) out << l.dump() << '\n';
}

inline std::vector<nlohmann::json> read_jsonl(const std::string& path)
{
    auto in = open_input(path);
    std::vector<nlohmann::json> out;
    for_each_jsonl(in, path, [&](const nlohmann::json& j, std::size_t) { out.push_back(j); });
    return out;
}

} // namespace dids
