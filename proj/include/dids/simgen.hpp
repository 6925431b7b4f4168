#pragma once

// Labelled synthetic traffic: benign background, exact attack packets and
// mutated variants the base engine cannot see.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dids/error.hpp"
#include "dids/model.hpp"
#include "dids/rng.hpp"
#include "dids/sigengine.hpp"

namespace dids {

enum class TruthLabel { benign, attack, variant };

inline std::string_view to_string(TruthLabel l)
{
    switch (l) {
    case TruthLabel::benign: return "benign";
    case TruthLabel::attack: return "attack";
    case TruthLabel::variant: return "variant";
    }
    return "?";
}

inline std::optional<TruthLabel> parse_truth_label(std::string_view s)
{
    if (s == "benign") return TruthLabel::benign;
    if (s == "attack") return TruthLabel::attack;
    if (s == "variant") return TruthLabel::variant;
    return std::nullopt;
}

struct TruthRecord {
    PacketId packet_id = 0;
    TruthLabel label = TruthLabel::benign;
    std::optional<std::string> attack;
};

struct ProfileStep {
    std::string attack;
    double delay = 0.0;
    bool variant = false;
    std::size_t mutations = 0;
};

enum class BenignMode {
    disjoint, // alphabet shares no byte with any signature content
    hard,     // full byte alphabet, for stress reporting
};

struct ScenarioProfile {
    Ipv4 target = *Ipv4::parse("10.0.0.5");
    Ipv4 attacker = *Ipv4::parse("10.0.0.9");
    double benign_rate = 0.0;
    double duration = 0.0;
    std::vector<ProfileStep> steps;
    BenignMode benign_mode = BenignMode::disjoint;
};

inline ScenarioProfile parse_profile(const nlohmann::json& doc, const AttackGraph& graph,
                                     const std::string& where = "profile")
{
    auto fail = [&](const std::string& why) { return ParseError(where + ": " + why); };
    try {
        ScenarioProfile p;
        auto address = [&](const char* key, Ipv4& out) {
            if (!doc.contains(key)) return;
            const auto ip = Ipv4::parse(doc.at(key).get<std::string>());
            if (!ip) throw fail(std::string(key) + " is not an IPv4 address");
            out = *ip;
        };
        address("target", p.target);
        address("attacker", p.attacker);
        p.benign_rate = doc.value("benign_rate", 0.0);
        p.duration = doc.value("duration", 0.0);
        if (p.benign_rate < 0.0 || p.duration < 0.0) throw fail("benign_rate and duration must be >= 0");
        if (doc.contains("benign_mode")) {
            const auto mode = doc.at("benign_mode").get<std::string>();
            if (mode == "disjoint") {
                p.benign_mode = BenignMode::disjoint;
            } else if (mode == "hard") {
                p.benign_mode = BenignMode::hard;
            } else {
                throw fail("benign_mode must be \"disjoint\" or \"hard\"");
            }
        }
        std::size_t index = 0;
        for (const auto& s : doc.value("steps", nlohmann::json::array())) {
            ++index;
            ProfileStep step;
            step.attack = s.at("attack").get<std::string>();
            if (graph.find(step.attack) == nullptr) {
                throw fail("step " + std::to_string(index) + ": unknown attack '" + step.attack + "'");
            }
            step.delay = s.value("delay", 0.0);
            if (step.delay < 0.0) throw fail("step " + std::to_string(index) + ": delay must be >= 0");
            step.variant = s.value("variant", false);
            step.mutations = s.value("m", std::size_t{0});
            if (step.variant && step.mutations < 1) {
                throw fail("step " + std::to_string(index) + ": variant steps need m >= 1");
            }
            p.steps.push_back(std::move(step));
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw fail(e.what());
    }
}

inline ScenarioProfile load_profile(const std::string& path, const AttackGraph& graph)
{
    return parse_profile(read_json_file(path), graph, path);
}

/// Byte alphabet for benign payloads. Disjoint mode uses 0x80-0xBF when all
/// contents are 7-bit, otherwise every byte absent from the contents.
inline Bytes benign_alphabet(std::span<const Signature> sigs, BenignMode mode)
{
    Bytes out;
    if (mode == BenignMode::hard) {
        for (int b = 0; b < 256; ++b) out.push_back(static_cast<std::uint8_t>(b));
        return out;
    }
    std::array<bool, 256> used{};
    for (const auto& s : sigs) {
        for (const auto& tok : s.contents) {
            for (const auto b : tok) used[b] = true;
        }
    }
    const bool seven_bit = std::none_of(used.begin() + 128, used.end(), [](bool u) { return u; });
    for (int b = 0; b < 256; ++b) {
        if (seven_bit ? (b >= 0x80 && b <= 0xbf) : !used[static_cast<std::size_t>(b)]) {
            out.push_back(static_cast<std::uint8_t>(b));
        }
    }
    if (out.empty()) {
        throw Error("benign_alphabet: signature contents use every byte value; no disjoint alphabet exists");
    }
    return out;
}

/// Substitutes exactly m distinct positions drawn from `positions` with a
/// different byte.
inline Bytes mutate_positions(std::span<const std::uint8_t> payload, std::span<const std::size_t> positions,
                              std::size_t m, Rng& rng)
{
    if (m > positions.size()) {
        throw PreconditionError("mutate: " + std::to_string(m) + " mutations requested but only " +
                                std::to_string(positions.size()) + " positions available");
    }
    std::vector<std::size_t> pool(positions.begin(), positions.end());
    Bytes out(payload.begin(), payload.end());
    for (std::size_t i = 0; i < m; ++i) {
        std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
        auto& b = out[pool[i]];
        b = static_cast<std::uint8_t>((b + 1 + rng.below(255)) % 256);
    }
    return out;
}

inline Bytes mutate_payload(std::span<const std::uint8_t> payload, std::size_t m, Rng& rng)
{
    std::vector<std::size_t> all(payload.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return mutate_positions(payload, all, m, rng);
}

inline Bytes mutate_payload(std::span<const std::uint8_t> payload, std::size_t m, std::uint64_t seed)
{
    Rng rng(seed, "mutate");
    return mutate_payload(payload, m, rng);
}

struct AttackPayload {
    Bytes payload;
    std::vector<std::size_t> token_positions; // offsets covered by content tokens
};

/// Content tokens in order with filler from `alphabet` before, between and
/// after them.
inline AttackPayload build_attack_payload(const Signature& sig, std::span<const std::uint8_t> alphabet, Rng& rng)
{
    AttackPayload out;
    auto filler = [&](std::size_t lo, std::size_t hi) {
        const auto n = rng.between(lo, hi);
        for (std::size_t i = 0; i < n; ++i) out.payload.push_back(alphabet[rng.below(alphabet.size())]);
    };
    filler(4, 16);
    for (std::size_t t = 0; t < sig.contents.size(); ++t) {
        if (t > 0) filler(1, 8);
        for (const auto b : sig.contents[t]) {
            out.token_positions.push_back(out.payload.size());
            out.payload.push_back(b);
        }
    }
    filler(4, 16);
    return out;
}

struct GeneratedStream {
    std::vector<Packet> packets;
    std::vector<TruthRecord> truth;
};

inline const Signature& signature_for(std::span<const Signature> sigs, const std::string& attack)
{
    const Signature* best = nullptr;
    for (const auto& s : sigs) {
        if (s.attack == attack && (best == nullptr || s.id < best->id)) best = &s;
    }
    if (best == nullptr) throw Error("gen_stream: attack '" + attack + "' has no signature");
    return *best;
}

inline GeneratedStream gen_stream(const AttackGraph& graph, std::span<const Signature> sigs,
                                  const ScenarioProfile& profile, std::uint64_t seed)
{
    Rng rng(seed, "simgen");
    const Bytes alphabet = benign_alphabet(sigs, profile.benign_mode);

    struct Event {
        double ts;
        int order; // benign before steps at equal timestamps
        std::size_t index;
    };
    std::vector<Event> events;
    if (profile.benign_rate > 0.0) {
        double t = 0.0;
        std::size_t n = 0;
        while (true) {
            t += rng.exponential(profile.benign_rate);
            if (!(t < profile.duration)) break;
            events.push_back({std::round(t * 1e6) / 1e6, 0, n++});
        }
    }
    double t = 0.0;
    for (std::size_t i = 0; i < profile.steps.size(); ++i) {
        if (graph.find(profile.steps[i].attack) == nullptr) {
            throw Error("gen_stream: unknown attack '" + profile.steps[i].attack + "'");
        }
        t += profile.steps[i].delay;
        events.push_back({std::round(t * 1e6) / 1e6, 1, i});
    }
    std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
        return a.ts < b.ts || (a.ts == b.ts && a.order < b.order);
    });

    static constexpr std::uint16_t benign_ports[] = {21, 22, 25, 53, 80, 443, 8080};
    GeneratedStream out;
    PacketId next_id = 1;
    for (const auto& ev : events) {
        Packet p;
        p.id = next_id++;
        p.ts = ev.ts;
        p.sport = static_cast<std::uint16_t>(rng.between(1024, 65535));
        TruthRecord truth{p.id, TruthLabel::benign, std::nullopt};
        if (ev.order == 0) {
            p.src = Ipv4{(10u << 24) | (1u << 8) | static_cast<std::uint32_t>(rng.between(1, 50))};
            p.dst = rng.bernoulli(0.5) ? profile.target
                                       : Ipv4{(10u << 24) | static_cast<std::uint32_t>(rng.between(10, 29))};
            p.dport = benign_ports[rng.below(std::size(benign_ports))];
            p.proto = p.dport == 53 ? Proto::udp : Proto::tcp;
            const auto len = rng.between(16, 256);
            for (std::size_t i = 0; i < len; ++i) p.payload.push_back(alphabet[rng.below(alphabet.size())]);
        } else {
            const ProfileStep& step = profile.steps[ev.index];
            const Signature& sig = signature_for(sigs, step.attack);
            const AttackType& type = graph.at(step.attack);
            const auto pre_vars = variables_of(type.pre);
            const bool from_target = std::any_of(sig.bind.begin(), sig.bind.end(), [&](const auto& kv) {
                return kv.second == PacketField::src && pre_vars.contains(kv.first);
            });
            p.src = from_target ? profile.target : profile.attacker;
            p.dst = from_target ? profile.attacker : profile.target;
            p.proto = sig.proto;
            p.dport = sig.dport ? *sig.dport : static_cast<std::uint16_t>(rng.between(1024, 65535));
            auto built = build_attack_payload(sig, alphabet, rng);
            if (step.variant) {
                if (step.mutations > built.token_positions.size()) {
                    throw Error("gen_stream: step '" + step.attack + "' asks for " + std::to_string(step.mutations) +
                                " mutations but its content is only " +
                                std::to_string(built.token_positions.size()) + " bytes");
                }
                p.payload = mutate_positions(built.payload, built.token_positions, step.mutations, rng);
                truth = {p.id, TruthLabel::variant, step.attack};
            } else {
                p.payload = std::move(built.payload);
                truth = {p.id, TruthLabel::attack, step.attack};
            }
        }
        out.packets.push_back(std::move(p));
        out.truth.push_back(std::move(truth));
    }
    return out;
}

} // namespace dids
