#pragma once

// End-to-end event loop: signature scan, correlation, signal routing,
// antigen capture, expiry and maturation, in that order for every packet.

#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dids/ais.hpp"
#include "dids/correlator.hpp"
#include "dids/error.hpp"
#include "dids/io.hpp"
#include "dids/model.hpp"
#include "dids/sigengine.hpp"
#include "dids/simgen.hpp"

namespace dids {

inline constexpr std::uint64_t default_seed = 20060101;

struct Config {
    ImmuneParams immune;
    std::uint64_t seed = default_seed;
};

/// Reads the JSON config object. Unknown keys and type errors are parse
/// errors; out-of-range values are ConfigError.
inline Config parse_config(const nlohmann::json& doc, const std::string& where = "config")
{
    auto fail = [&](const std::string& why) { return ParseError(where + ": " + why); };
    if (!doc.is_object()) throw fail("expected a JSON object");
    Config c;
    auto& im = c.immune;
    auto count = [&](const nlohmann::json& v, const std::string& key) -> std::size_t {
        if (!v.is_number_integer()) throw fail(key + " must be an integer");
        const auto n = v.get<long long>();
        if (n < 0) throw ConfigError(where + ": " + key + " must be non-negative");
        return static_cast<std::size_t>(n);
    };
    auto real = [&](const nlohmann::json& v, const std::string& key) -> double {
        if (!v.is_number()) throw fail(key + " must be a number");
        return v.get<double>();
    };
    for (const auto& [key, v] : doc.items()) {
        if (key == "antigen_capacity") {
            im.antigen_capacity = count(v, key);
        } else if (key == "detector_length") {
            im.detector_length = count(v, key);
        } else if (key == "repertoire_size") {
            im.repertoire_size = count(v, key);
        } else if (key == "mutation_rate") {
            im.mutation_rate = real(v, key);
        } else if (key == "match_threshold") {
            im.match_threshold = count(v, key);
        } else if (key == "maturation_threshold") {
            im.maturation_threshold = real(v, key);
        } else if (key == "max_age") {
            im.max_age = real(v, key);
        } else if (key == "self_cache_size") {
            im.self_cache_size = count(v, key);
        } else if (key == "retry_budget") {
            im.retry_budget = count(v, key);
        } else if (key == "seed") {
            if (!v.is_number_unsigned()) throw fail("seed must be a non-negative integer");
            c.seed = v.get<std::uint64_t>();
        } else if (key == "weights") {
            if (!v.is_object()) throw fail("weights must be an object");
            for (const auto& [wkey, w] : v.items()) {
                if (wkey == "pamp") {
                    im.weights.pamp = real(w, "weights.pamp");
                } else if (wkey == "danger") {
                    im.weights.danger = real(w, "weights.danger");
                } else if (wkey == "safe") {
                    im.weights.safe = real(w, "weights.safe");
                } else {
                    throw fail("unknown key weights." + wkey);
                }
            }
        } else {
            throw fail("unknown key '" + key + "'");
        }
    }
    try {
        im.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return c;
}

inline Config load_config(const std::string& path) { return parse_config(read_json_file(path), path); }

/// One routed signal and the cell that received it, if any. Signals for
/// vertices without a live cell are recorded with no recipient.
struct SignalDelivery {
    SignalEvent event;
    std::optional<DcId> cell;
};

class Pipeline {
public:
    Pipeline(std::shared_ptr<const AttackGraph> attacks, std::vector<Signature> sigs, const Config& config)
        : config_(config)
        , sigs_(std::move(sigs))
        , graph_(attacks)
        , node_(LymphNode::generate(sigs_, config.immune, config.seed))
    {
        config_.immune.validate();
    }

    void process(const Packet& p)
    {
        if (finished_) throw PreconditionError("process: pipeline already finished");
        if (last_packet_ && (p.id <= last_packet_->first || p.ts < last_packet_->second)) {
            throw PreconditionError("process: packets must arrive in id order with non-decreasing timestamps");
        }
        last_packet_ = {p.id, p.ts};

        graph_.observe(p);
        auto alerts = scan_stream(sigs_, std::span(&p, 1), next_alert_id_);
        next_alert_id_ += alerts.size();

        std::vector<SignalEvent> signals;
        std::set<DcId> newborn;
        for (const auto& a : alerts) {
            auto res = graph_.correlate(a);
            LogRecord rec;
            rec.id = a.id;
            rec.ts = a.ts;
            rec.kind = LogKind::base;
            rec.attack = a.attack;
            rec.sig_id = a.sig_id;
            rec.packet_ref = p.id;
            rec.vertex = res.vertex;
            log_.push_back(std::move(rec));
            signals.insert(signals.end(), res.signals.begin(), res.signals.end());
            for (const VertexId pid : res.predictions) newborn.insert(spawn(pid, p.ts));
        }
        route(signals);

        // Cells born from this packet's own alerts do not sample it.
        for (auto& [id, dc] : cells_) {
            if (dc.state == DcState::immature && !newborn.contains(id)) {
                capture(dc, p, config_.immune.antigen_capacity, node_.reservoir_rng());
            }
        }

        route(graph_.expire(p.ts));
        mature(p.ts);
    }

    /// End of stream: every prediction expires and every cell is flushed.
    void finish()
    {
        if (finished_) return;
        constexpr double end = std::numeric_limits<double>::infinity();
        route(graph_.expire(end));
        mature(end);
        finished_ = true;
    }

    void run(std::span<const Packet> packets)
    {
        for (const auto& p : packets) process(p);
        finish();
    }

    /// Unified alert log in (ts, kind, id) order with scenario ids resolved
    /// against the current graph.
    std::vector<LogRecord> log() const
    {
        std::map<VertexId, VertexId> scenario_of;
        for (const auto& [sid, members] : graph_.scenarios()) {
            for (const auto m : members) scenario_of[m] = sid;
        }
        std::vector<LogRecord> out = log_;
        for (auto& r : out) {
            if (const auto it = scenario_of.find(r.vertex); it != scenario_of.end()) r.scenario = it->second;
        }
        std::stable_sort(out.begin(), out.end(), log_order);
        return out;
    }

    std::vector<ordered_json> graph_export() const
    {
        std::vector<SignalEvent> events;
        for (const auto& d : trace_) events.push_back(d.event);
        return export_graph(graph_, events);
    }

    const CorrelationGraph& graph() const { return graph_; }
    const LymphNode& lymph_node() const { return node_; }
    const std::map<DcId, DendriticCell>& cells() const { return cells_; }
    const std::vector<SignalDelivery>& signal_trace() const { return trace_; }
    /// Every prediction vertex ever created, in creation order.
    const std::vector<VertexId>& predictions() const { return predictions_; }
    std::size_t tolerized_count() const { return tolerized_; }

private:
    DcId spawn(VertexId vertex, double now)
    {
        const Vertex* v = graph_.find(vertex);
        const DcId id = next_cell_++;
        cells_.emplace(id, spawn_dc(*v, graph_.attacks().at(v->attack), id, now));
        cell_of_.emplace(vertex, id);
        predictions_.push_back(vertex);
        return id;
    }

    void route(const std::vector<SignalEvent>& signals)
    {
        for (const auto& ev : signals) {
            SignalDelivery d{ev, std::nullopt};
            if (const auto it = cell_of_.find(ev.vertex); it != cell_of_.end()) {
                auto& dc = cells_.at(it->second);
                if (dc.state == DcState::immature) {
                    signal(dc, ev, config_.immune.weights);
                    d.cell = dc.id;
                }
            }
            trace_.push_back(d);
        }
    }

    void mature(double now)
    {
        for (auto& [id, dc] : cells_) {
            if (dc.state != DcState::immature) continue;
            const Vertex* v = graph_.find(dc.vertex);
            const bool live = v != nullptr && v->kind == VertexKind::prediction;
            const auto ctx = check_maturation(dc, now, live, config_.immune);
            if (!ctx) continue;
            dc.migrate(*ctx);
            auto result = node_.present(dc);
            tolerized_ += result.tolerized.size();
            for (const auto& a : result.alerts) {
                LogRecord rec;
                rec.id = next_alert_id_++;
                rec.ts = a.ts;
                rec.kind = LogKind::ais;
                rec.attack = a.attack;
                rec.packet_ref = a.packet_ref;
                rec.vertex = a.vertex;
                rec.detector = a.detector;
                rec.origin_sig = a.origin_sig;
                rec.match_len = a.match_len;
                log_.push_back(std::move(rec));
            }
        }
    }

    Config config_;
    std::vector<Signature> sigs_;
    CorrelationGraph graph_;
    LymphNode node_;
    std::map<DcId, DendriticCell> cells_;
    std::map<VertexId, DcId> cell_of_;
    std::vector<SignalDelivery> trace_;
    std::vector<VertexId> predictions_;
    std::vector<LogRecord> log_;
    std::optional<std::pair<PacketId, double>> last_packet_;
    AlertId next_alert_id_ = 1;
    DcId next_cell_ = 1;
    std::size_t tolerized_ = 0;
    bool finished_ = false;
};

// ---------------------------------------------------------------------------
// Metrics

struct MetricsReport {
    double base_detection_rate = 0.0;
    double variant_recall = 0.0;
    double benign_fp_rate = 0.0;
    std::size_t scenario_count = 0;
    std::size_t hypothesis_count = 0;
    std::size_t prediction_confirm_count = 0;
    std::size_t prediction_expire_count = 0;
};

inline ordered_json to_json(const MetricsReport& m)
{
    ordered_json j;
    j["base_detection_rate"] = m.base_detection_rate;
    j["variant_recall"] = m.variant_recall;
    j["benign_fp_rate"] = m.benign_fp_rate;
    j["scenario_count"] = m.scenario_count;
    j["hypothesis_count"] = m.hypothesis_count;
    j["prediction_confirm_count"] = m.prediction_confirm_count;
    j["prediction_expire_count"] = m.prediction_expire_count;
    return j;
}

/// Graph-side counts, taken from a graph export.
struct GraphSummary {
    std::size_t scenario_count = 0;
    std::size_t hypothesis_count = 0;
    std::size_t prediction_confirm_count = 0;
    std::size_t prediction_expire_count = 0;
};

inline GraphSummary summarize_graph(std::span<const nlohmann::json> lines)
{
    GraphSummary s;
    std::set<VertexId> scenarios;
    for (const auto& l : lines) {
        const auto type = l.at("type").get<std::string>();
        if (type == "vertex") {
            scenarios.insert(l.at("scenario").get<VertexId>());
            if (l.at("kind").get<std::string>() == "hypothesised") ++s.hypothesis_count;
        } else if (type == "signal") {
            const auto kind = l.at("kind").get<std::string>();
            if (kind == "pamp") ++s.prediction_confirm_count;
            if (kind == "safe") ++s.prediction_expire_count;
        }
    }
    s.scenario_count = scenarios.size();
    return s;
}

/// Rates with an empty denominator are reported as 0.
inline MetricsReport report(std::span<const LogRecord> log, std::span<const TruthRecord> truth,
                            const std::optional<GraphSummary>& graph = std::nullopt)
{
    std::map<PacketId, TruthLabel> label_of;
    for (const auto& t : truth) label_of[t.packet_id] = t.label;

    std::set<PacketId> base_hit;
    std::set<PacketId> ais_hit;
    std::set<VertexId> scenarios;
    for (const auto& r : log) {
        if (!label_of.contains(r.packet_ref)) {
            throw ParseError("report: alert " + std::to_string(r.id) + " refers to unknown packet " +
                             std::to_string(r.packet_ref));
        }
        (r.kind == LogKind::base ? base_hit : ais_hit).insert(r.packet_ref);
        if (r.kind == LogKind::base && r.scenario) scenarios.insert(*r.scenario);
    }

    std::size_t attacks = 0, attacks_hit = 0, variants = 0, variants_hit = 0, benign = 0, benign_hit = 0;
    for (const auto& [id, label] : label_of) {
        switch (label) {
        case TruthLabel::attack:
            ++attacks;
            attacks_hit += base_hit.contains(id);
            break;
        case TruthLabel::variant:
            ++variants;
            variants_hit += ais_hit.contains(id);
            break;
        case TruthLabel::benign:
            ++benign;
            benign_hit += ais_hit.contains(id);
            break;
        }
    }
    auto rate = [](std::size_t num, std::size_t den) { return den == 0 ? 0.0 : static_cast<double>(num) / den; };

    MetricsReport m;
    m.base_detection_rate = rate(attacks_hit, attacks);
    m.variant_recall = rate(variants_hit, variants);
    m.benign_fp_rate = rate(benign_hit, benign);
    if (graph) {
        m.scenario_count = graph->scenario_count;
        m.hypothesis_count = graph->hypothesis_count;
        m.prediction_confirm_count = graph->prediction_confirm_count;
        m.prediction_expire_count = graph->prediction_expire_count;
    } else {
        m.scenario_count = scenarios.size();
    }
    return m;
}

} // namespace dids
