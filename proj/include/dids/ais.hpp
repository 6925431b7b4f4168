#pragma once

// Immune layer. Dendritic cells sit on prediction vertices, sample packets
// matching the prediction's capture template and integrate pamp/danger/safe
// signals. A migrated cell presents its antigens in a lymph node holding a
// repertoire of T-cell detectors cut from signature content; binding is an
// r-contiguous byte match (shared run of at least r bytes).

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dids/correlator.hpp"
#include "dids/error.hpp"
#include "dids/model.hpp"
#include "dids/rng.hpp"
#include "dids/sigengine.hpp"

namespace dids {

struct SignalWeights {
    double pamp = 1.0;
    double danger = 0.6;
    double safe = 1.0;
};

struct ImmuneParams {
    std::size_t antigen_capacity = 64;   // A
    std::size_t detector_length = 12;    // L
    std::size_t repertoire_size = 256;   // R
    double mutation_rate = 0.05;         // mu
    std::size_t match_threshold = 8;     // r
    double maturation_threshold = 1.0;   // theta_mat
    SignalWeights weights;
    double max_age = 300.0;              // T_max, seconds
    std::size_t self_cache_size = 1024;  // S
    std::size_t retry_budget = 1000;     // attempts per detector

    void validate() const
    {
        auto fail = [](const std::string& why) { return ConfigError(why); };
        if (antigen_capacity < 1) throw fail("antigen_capacity must be >= 1");
        if (detector_length < 4) throw fail("detector_length must be >= 4");
        if (repertoire_size < 1) throw fail("repertoire_size must be >= 1");
        if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) throw fail("mutation_rate must be in [0,1]");
        if (match_threshold < 1) throw fail("match_threshold must be >= 1");
        if (match_threshold > detector_length) throw fail("match_threshold must not exceed detector_length");
        if (!(maturation_threshold > 0.0)) throw fail("maturation_threshold must be positive");
        if (!(weights.pamp >= 0.0 && weights.danger >= 0.0 && weights.safe >= 0.0)) {
            throw fail("signal weights must be non-negative");
        }
        if (!(max_age > 0.0)) throw fail("max_age must be positive");
        if (self_cache_size < 1) throw fail("self_cache_size must be >= 1");
        if (retry_budget < 1) throw fail("retry_budget must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// Partial matching

/// Length of the longest byte run occurring contiguously in both inputs.
inline std::size_t rcontig_match(std::span<const std::uint8_t> detector, std::span<const std::uint8_t> payload)
{
    if (detector.empty() || payload.empty()) return 0;
    // run[j] = length of the common suffix of detector[..i] and payload[..j]
    std::vector<std::size_t> run(payload.size() + 1, 0);
    std::size_t best = 0;
    for (std::size_t i = 0; i < detector.size(); ++i) {
        for (std::size_t j = payload.size(); j > 0; --j) {
            if (detector[i] == payload[j - 1]) {
                run[j] = run[j - 1] + 1;
                best = std::max(best, run[j]);
            } else {
                run[j] = 0;
            }
        }
    }
    return best;
}

namespace detail {

inline std::string_view window(std::span<const std::uint8_t> bytes, std::size_t pos, std::size_t len)
{
    return {reinterpret_cast<const char*>(bytes.data() + pos), len};
}

} // namespace detail

// ---------------------------------------------------------------------------
// Dendritic cells

using DcId = std::uint64_t;
using DetectorId = std::uint64_t;

enum class DcState { immature, migrated };
enum class DcContext { mature, semi_mature };

/// Ground capture template; unset fields are wildcards.
struct CaptureFilter {
    std::optional<Ipv4> src;
    std::optional<Ipv4> dst;
    std::optional<std::uint16_t> sport;
    std::optional<std::uint16_t> dport;
    std::optional<Proto> proto;

    bool matches(const Packet& p) const
    {
        return (!src || *src == p.src) && (!dst || *dst == p.dst) && (!sport || *sport == p.sport) &&
               (!dport || *dport == p.dport) && (!proto || *proto == p.proto);
    }
};

struct Antigen {
    PacketId packet = 0;
    double ts = 0.0;
    Bytes payload;
};

struct DendriticCell {
    DcId id = 0;
    VertexId vertex = 0;
    std::string attack;
    CaptureFilter filter;
    std::vector<Antigen> antigens;
    std::size_t seen = 0; // matching packets offered so far (reservoir count)
    double c_pamp = 0.0;
    double c_danger = 0.0;
    double c_safe = 0.0;
    DcState state = DcState::immature;
    std::optional<DcContext> context;
    double born_ts = 0.0;

    void migrate(DcContext ctx)
    {
        if (state == DcState::migrated) throw PreconditionError("dendritic cell already migrated");
        state = DcState::migrated;
        context = ctx;
    }
};

/// Cell bound to a prediction vertex. Filter fields bound to variables the
/// prediction leaves unbound, or set to "any", become wildcards.
inline DendriticCell spawn_dc(const Vertex& v, const AttackType& type, DcId id, double now)
{
    if (v.kind != VertexKind::prediction) {
        throw PreconditionError("spawn_dc: vertex " + std::to_string(v.id) + " is " +
                                std::string(to_string(v.kind)) + ", not a prediction");
    }
    DendriticCell dc;
    dc.id = id;
    dc.vertex = v.id;
    dc.attack = v.attack;
    dc.born_ts = now;
    for (const auto& [field, term] : type.filter) {
        std::optional<std::string> value;
        if (term.is_variable()) {
            if (const auto it = v.bindings.find(term.text); it != v.bindings.end()) value = it->second;
        } else if (!is_wildcard(term)) {
            value = term.text;
        }
        if (!value) continue;
        auto bad = [&] {
            return ParseError("spawn_dc: filter value '" + *value + "' is invalid for field " +
                              std::string(to_string(field)));
        };
        switch (field) {
        case PacketField::src:
        case PacketField::dst: {
            const auto ip = Ipv4::parse(*value);
            if (!ip) throw bad();
            (field == PacketField::src ? dc.filter.src : dc.filter.dst) = *ip;
            break;
        }
        case PacketField::sport:
        case PacketField::dport: {
            unsigned port = 0;
            const auto [p, ec] = std::from_chars(value->data(), value->data() + value->size(), port);
            if (ec != std::errc{} || p != value->data() + value->size() || port > 65535) throw bad();
            (field == PacketField::sport ? dc.filter.sport : dc.filter.dport) = static_cast<std::uint16_t>(port);
            break;
        }
        case PacketField::proto: {
            const auto proto = parse_proto(*value);
            if (!proto) throw bad();
            dc.filter.proto = *proto;
            break;
        }
        }
    }
    return dc;
}

enum class CaptureOutcome { captured, ignored };

/// Reservoir sampling (Algorithm R) over every matching packet with a
/// non-empty payload, so each one seen is held with probability A/seen.
inline CaptureOutcome capture(DendriticCell& dc, const Packet& p, std::size_t capacity, Rng& rng)
{
    if (dc.state != DcState::immature) {
        throw PreconditionError("capture: dendritic cell " + std::to_string(dc.id) + " has migrated");
    }
    if (p.payload.empty() || !dc.filter.matches(p)) return CaptureOutcome::ignored;
    ++dc.seen;
    if (dc.antigens.size() < capacity) {
        dc.antigens.push_back({p.id, p.ts, p.payload});
        return CaptureOutcome::captured;
    }
    const auto slot = rng.below(dc.seen);
    if (slot >= capacity) return CaptureOutcome::ignored;
    dc.antigens[slot] = {p.id, p.ts, p.payload};
    return CaptureOutcome::captured;
}

inline void signal(DendriticCell& dc, const SignalEvent& ev, const SignalWeights& w)
{
    if (dc.state != DcState::immature) {
        throw PreconditionError("signal: dendritic cell " + std::to_string(dc.id) + " has migrated");
    }
    if (ev.vertex != dc.vertex) {
        throw PreconditionError("signal: event for vertex " + std::to_string(ev.vertex) + " sent to cell of vertex " +
                                std::to_string(dc.vertex));
    }
    switch (ev.kind) {
    case SignalKind::pamp: dc.c_pamp += w.pamp; break;
    case SignalKind::danger: dc.c_danger += w.danger; break;
    case SignalKind::safe: dc.c_safe += w.safe; break;
    }
}

/// nullopt means stay. `vertex_live` is false once the cell's vertex is no
/// longer a prediction (upgraded, converted or deleted).
inline std::optional<DcContext> check_maturation(const DendriticCell& dc, double now, bool vertex_live,
                                                 const ImmuneParams& params)
{
    if (dc.state != DcState::immature) {
        throw PreconditionError("check_maturation: dendritic cell " + std::to_string(dc.id) + " has migrated");
    }
    const double total = dc.c_pamp + dc.c_danger + dc.c_safe;
    if (total >= params.maturation_threshold || now - dc.born_ts >= params.max_age || !vertex_live) {
        return dc.c_pamp + dc.c_danger > dc.c_safe ? DcContext::mature : DcContext::semi_mature;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Lymph node

struct TCellDetector {
    DetectorId id = 0;
    Bytes bytes;
    int origin_sig = 0;
    std::string origin_attack;

    bool operator==(const TCellDetector&) const = default;
};

struct AisAlert {
    double ts = 0.0;
    PacketId packet_ref = 0;
    VertexId vertex = 0;
    std::string attack;
    DetectorId detector = 0;
    int origin_sig = 0;
    std::size_t match_len = 0;

    bool operator==(const AisAlert&) const = default;
};

struct Presentation {
    std::vector<AisAlert> alerts;          // mature context
    std::vector<DetectorId> tolerized;     // semi-mature context
};

class LymphNode {
public:
    /// Builds a repertoire of `params.repertoire_size` detectors from the
    /// signature contents. Deterministic in `seed`.
    static LymphNode generate(std::span<const Signature> sigs, const ImmuneParams& params, std::uint64_t seed)
    {
        return LymphNode(sigs, params, seed);
    }

    const ImmuneParams& params() const { return params_; }
    const std::vector<TCellDetector>& repertoire() const { return repertoire_; }
    const std::deque<Bytes>& self_cache() const { return self_cache_; }
    Rng& reservoir_rng() { return reservoir_rng_; }

    Presentation present(const DendriticCell& dc)
    {
        if (dc.state != DcState::migrated || !dc.context) {
            throw PreconditionError("present: dendritic cell " + std::to_string(dc.id) + " has not migrated");
        }
        Presentation out;
        if (*dc.context == DcContext::mature) {
            out.alerts = bind(dc);
        } else {
            out.tolerized = tolerize(dc.antigens);
        }
        return out;
    }

    /// Best-binding detector for a payload: maximal run >= r, lowest id on
    /// ties.
    std::optional<std::pair<const TCellDetector*, std::size_t>> best_match(std::span<const std::uint8_t> payload) const
    {
        const std::size_t r = params_.match_threshold;
        if (payload.size() < r) return std::nullopt;
        std::unordered_set<std::size_t> candidates;
        for (std::size_t i = 0; i + r <= payload.size(); ++i) {
            const auto it = gram_index_.find(std::string(detail::window(payload, i, r)));
            if (it == gram_index_.end()) continue;
            candidates.insert(it->second.begin(), it->second.end());
        }
        const TCellDetector* best = nullptr;
        std::size_t best_len = 0;
        for (const std::size_t slot : candidates) {
            const auto& d = repertoire_[slot];
            const std::size_t len = rcontig_match(d.bytes, payload);
            if (len < r) continue;
            if (len > best_len || (len == best_len && d.id < best->id)) {
                best = &d;
                best_len = len;
            }
        }
        if (best == nullptr) return std::nullopt;
        return std::pair{best, best_len};
    }

private:
    struct Gene {
        int sig = 0;
        std::string attack;
        std::vector<Bytes> tokens; // tokens of at least 4 bytes
    };

    LymphNode(std::span<const Signature> sigs, const ImmuneParams& params, std::uint64_t seed)
        : params_(params)
        , repertoire_rng_(seed, "repertoire")
        , reservoir_rng_(seed, "reservoir")
    {
        params_.validate();
        for (const auto& s : sigs) {
            Gene g{s.id, s.attack, {}};
            for (const auto& tok : s.contents) {
                if (tok.size() >= 4) g.tokens.push_back(tok);
            }
            if (!g.tokens.empty()) library_.push_back(std::move(g));
        }
        if (library_.empty()) {
            throw Error("generate_repertoire: no signature has a content token of at least 4 bytes");
        }
        refill({});
    }

    TCellDetector draw()
    {
        const Gene& g = library_[repertoire_rng_.below(library_.size())];
        const Bytes& tok = g.tokens[repertoire_rng_.below(g.tokens.size())];
        const std::size_t len = std::min(params_.detector_length, tok.size());
        const std::size_t start = repertoire_rng_.below(tok.size() - len + 1);
        TCellDetector d;
        d.bytes.assign(tok.begin() + static_cast<std::ptrdiff_t>(start),
                       tok.begin() + static_cast<std::ptrdiff_t>(start + len));
        for (auto& b : d.bytes) {
            if (repertoire_rng_.bernoulli(params_.mutation_rate)) b = repertoire_rng_.byte();
        }
        d.origin_sig = g.sig;
        d.origin_attack = g.attack;
        return d;
    }

    bool self_reactive(const Bytes& d, std::span<const Antigen> extra) const
    {
        const std::size_t r = params_.match_threshold;
        for (std::size_t i = 0; i + r <= d.size(); ++i) {
            if (self_grams_.contains(std::string(detail::window(d, i, r)))) return true;
        }
        return std::any_of(extra.begin(), extra.end(),
                           [&](const Antigen& a) { return rcontig_match(d, a.payload) >= r; });
    }

    /// Tops the repertoire up to R with detectors that do not match the self
    /// cache (nor `extra`) at threshold r.
    void refill(std::span<const Antigen> extra)
    {
        while (repertoire_.size() < params_.repertoire_size) {
            std::size_t attempts = 0;
            TCellDetector d = draw();
            while (self_reactive(d.bytes, extra)) {
                if (++attempts >= params_.retry_budget) {
                    throw Error("generate_repertoire: retry budget exhausted; self cache too restrictive");
                }
                d = draw();
            }
            d.id = next_detector_++;
            repertoire_.push_back(std::move(d));
        }
        rebuild_index();
    }

    void rebuild_index()
    {
        gram_index_.clear();
        const std::size_t r = params_.match_threshold;
        for (std::size_t slot = 0; slot < repertoire_.size(); ++slot) {
            const auto& bytes = repertoire_[slot].bytes;
            for (std::size_t i = 0; i + r <= bytes.size(); ++i) {
                gram_index_[std::string(detail::window(bytes, i, r))].push_back(slot);
            }
        }
    }

    void remember_self(const Bytes& payload)
    {
        self_cache_.push_back(payload);
        adjust_grams(payload, +1);
        while (self_cache_.size() > params_.self_cache_size) {
            adjust_grams(self_cache_.front(), -1);
            self_cache_.pop_front();
        }
    }

    void adjust_grams(const Bytes& payload, int delta)
    {
        const std::size_t r = params_.match_threshold;
        for (std::size_t i = 0; i + r <= payload.size(); ++i) {
            const std::string key(detail::window(payload, i, r));
            auto& count = self_grams_[key];
            count += delta;
            if (count == 0) self_grams_.erase(key);
        }
    }

    std::vector<AisAlert> bind(const DendriticCell& dc) const
    {
        std::vector<const Antigen*> order;
        for (const auto& a : dc.antigens) order.push_back(&a);
        std::sort(order.begin(), order.end(), [](const auto* x, const auto* y) { return x->packet < y->packet; });
        std::vector<AisAlert> out;
        for (const auto* a : order) {
            const auto hit = best_match(a->payload);
            if (!hit) continue;
            out.push_back({a->ts, a->packet, dc.vertex, dc.attack, hit->first->id, hit->first->origin_sig, hit->second});
        }
        return out;
    }

    std::vector<DetectorId> tolerize(std::span<const Antigen> antigens)
    {
        const std::size_t r = params_.match_threshold;
        std::vector<DetectorId> removed;
        std::vector<TCellDetector> kept;
        for (auto& d : repertoire_) {
            const bool reactive = std::any_of(antigens.begin(), antigens.end(),
                                              [&](const Antigen& a) { return rcontig_match(d.bytes, a.payload) >= r; });
            if (reactive) {
                removed.push_back(d.id);
            } else {
                kept.push_back(std::move(d));
            }
        }
        repertoire_ = std::move(kept);
        for (const auto& a : antigens) remember_self(a.payload);
        refill(antigens);
        return removed;
    }

    ImmuneParams params_;
    Rng repertoire_rng_;
    Rng reservoir_rng_;
    std::vector<Gene> library_;
    std::vector<TCellDetector> repertoire_;
    std::deque<Bytes> self_cache_;
    std::unordered_map<std::string, int> self_grams_;
    std::unordered_map<std::string, std::vector<std::size_t>> gram_index_;
    DetectorId next_detector_ = 1;
};

/// Free-function spelling of LymphNode::generate.
inline LymphNode generate_repertoire(std::span<const Signature> sigs, const ImmuneParams& params, std::uint64_t seed)
{
    return LymphNode::generate(sigs, params, seed);
}

} // namespace dids
