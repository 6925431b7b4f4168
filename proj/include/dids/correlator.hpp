#pragma once

// Attack-graph alert correlation. The graph holds three kinds of vertex:
// exploits (observed alerts), predictions (attacks whose prerequisites the
// scenario already satisfies) and hypothesised attacks (inserted to explain
// an alert whose prerequisites nothing supports). Transitions of prediction
// vertices are reported as signal events for the immune layer.

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dids/error.hpp"
#include "dids/model.hpp"

namespace dids {

using VertexId = std::uint64_t;

enum class VertexKind { exploit, prediction, hypothesised };

inline std::string_view to_string(VertexKind k)
{
    switch (k) {
    case VertexKind::exploit: return "exploit";
    case VertexKind::prediction: return "prediction";
    case VertexKind::hypothesised: return "hypothesised";
    }
    return "?";
}

struct Vertex {
    VertexId id = 0;
    VertexKind kind = VertexKind::exploit;
    std::string attack;
    Binding bindings;
    double created_ts = 0.0;
    std::optional<double> resolved_ts;
    std::vector<AlertId> alert_refs;
    std::optional<double> deadline;
    /// The vertex began life as a prediction whose lifetime has not yet been
    /// closed by a pamp or safe signal.
    bool pending = false;

    bool operator==(const Vertex&) const = default;
};

struct Edge {
    VertexId from = 0;
    VertexId to = 0;
    FactSet witness;

    bool operator==(const Edge&) const = default;
};

enum class SignalKind { pamp, danger, safe };

inline std::string_view to_string(SignalKind k)
{
    switch (k) {
    case SignalKind::pamp: return "pamp";
    case SignalKind::danger: return "danger";
    case SignalKind::safe: return "safe";
    }
    return "?";
}

struct SignalEvent {
    SignalKind kind = SignalKind::pamp;
    VertexId vertex = 0;
    double ts = 0.0;

    bool operator==(const SignalEvent&) const = default;
};

struct HypothesisResult {
    std::vector<VertexId> vertices;
    std::vector<SignalEvent> signals;
};

struct CorrelationResult {
    VertexId vertex = 0;
    std::vector<SignalEvent> signals;
    std::vector<VertexId> predictions;
    std::vector<VertexId> hypotheses;
};

class CorrelationGraph {
public:
    explicit CorrelationGraph(std::shared_ptr<const AttackGraph> attacks)
        : attacks_(std::move(attacks))
    {
    }

    const AttackGraph& attacks() const { return *attacks_; }

    /// Grounds the attack graph's axiom templates against a packet header.
    void observe(const Packet& p)
    {
        const auto facts = attacks_->axiom_facts(p);
        axioms_.insert(facts.begin(), facts.end());
    }

    void add_axiom(const Fact& f)
    {
        if (!f.ground()) throw PreconditionError("axiom '" + f.to_string() + "' is not ground");
        axioms_.insert(f);
    }

    const FactSet& axioms() const { return axioms_; }

    CorrelationResult correlate(const Alert& a)
    {
        const AttackType* type = attacks_->find(a.attack);
        if (type == nullptr) {
            throw Error("correlate: unknown attack '" + a.attack + "'");
        }
        if (a.ts < clock_) {
            throw PreconditionError("correlate: clock regression (" + std::to_string(a.ts) + " < " +
                                    std::to_string(clock_) + ")");
        }
        clock_ = a.ts;
        CorrelationResult result;

        // (1) Upgrade a live prediction, or create a new exploit vertex.
        if (const auto hit = find_live(VertexKind::prediction, a.attack, a.bindings, a.ts)) {
            Vertex& v = vertices_.at(*hit);
            v.kind = VertexKind::exploit;
            v.bindings = merged(a.bindings, v.bindings);
            v.alert_refs = {a.id};
            v.created_ts = a.ts;
            v.resolved_ts = a.ts;
            v.deadline.reset();
            v.pending = false;
            refresh_contribution(v);
            result.signals.push_back({SignalKind::pamp, v.id, a.ts});
            result.vertex = v.id;
        } else {
            // A hypothesis that grew out of a prediction is confirmed but kept;
            // the alert gets its own exploit vertex.
            if (const auto h = find_live(VertexKind::hypothesised, a.attack, a.bindings, a.ts)) {
                Vertex& hv = vertices_.at(*h);
                hv.pending = false;
                hv.resolved_ts = a.ts;
                result.signals.push_back({SignalKind::pamp, hv.id, a.ts});
            }
            Vertex v;
            v.id = next_id_++;
            v.kind = VertexKind::exploit;
            v.attack = a.attack;
            v.bindings = a.bindings;
            v.created_ts = a.ts;
            v.resolved_ts = a.ts;
            v.alert_refs = {a.id};
            result.vertex = insert(std::move(v));
        }
        const VertexId av = result.vertex;

        // (2) prepare-for edges from every vertex whose consequences meet a
        // prerequisite of this alert.
        const auto pre = instantiate(type->pre, a.bindings);
        for (const auto& [id, v] : vertices_) {
            if (id == av || !contributes(v)) continue;
            FactSet witness;
            for (const auto& c : instantiate(attacks_->at(v.attack).post, v.bindings)) {
                for (const auto& p : pre) {
                    if (p.ground() && unify_fact(c, p)) witness.insert(p);
                }
            }
            if (!witness.empty()) add_edge(id, av, witness);
        }

        // (3) unsupported prerequisites -> hypothesise one missing step
        if (!prerequisites_satisfied(a, av)) {
            auto hyp = hypothesize_unchecked(a, av);
            result.hypotheses = std::move(hyp.vertices);
            result.signals.insert(result.signals.end(), hyp.signals.begin(), hyp.signals.end());
        }

        // (4)
        result.predictions = predict(scenario_of(av));
        return result;
    }

    /// Creates prediction vertices for every attack whose prerequisites the
    /// scenario's fact pool satisfies (at least one prerequisite must come
    /// from the scenario itself, not only from axioms).
    std::vector<VertexId> predict(VertexId scenario)
    {
        if (!vertices_.contains(scenario)) {
            throw PreconditionError("predict: no scenario containing vertex " + std::to_string(scenario));
        }
        auto members = component_of(scenario, std::nullopt);
        const FactSet pool = pool_of(members);
        FactSet full = pool;
        full.insert(axioms_.begin(), axioms_.end());

        std::vector<VertexId> created;
        for (const auto& [name, type] : attacks_->attacks()) {
            for (const auto& b : satisfy(type.pre, full)) {
                const auto pre = instantiate(type.pre, b);
                if (!touches(pre, pool)) continue;
                const bool exists = std::any_of(members.begin(), members.end(), [&](VertexId m) {
                    const Vertex& mv = vertices_.at(m);
                    return mv.attack == name && consistent(mv.bindings, b);
                });
                if (exists) continue;

                Vertex v;
                v.id = next_id_++;
                v.kind = VertexKind::prediction;
                v.attack = name;
                v.bindings = b;
                v.created_ts = clock_;
                v.deadline = clock_ + type.ttl;
                v.pending = true;
                const VertexId pid = insert(std::move(v));
                link_supporters(members, pre, pid);
                members.push_back(pid);
                created.push_back(pid);
            }
        }
        return created;
    }

    /// Hypothesises a single missing attack between `a` (already correlated
    /// as vertex `alert_vertex`) and an existing scenario.
    HypothesisResult hypothesize(const Alert& a, VertexId alert_vertex)
    {
        if (!vertices_.contains(alert_vertex)) {
            throw PreconditionError("hypothesize: unknown vertex " + std::to_string(alert_vertex));
        }
        if (prerequisites_satisfied(a, alert_vertex)) {
            throw PreconditionError("hypothesize: prerequisites of alert " + std::to_string(a.id) +
                                    " are already satisfied");
        }
        return hypothesize_unchecked(a, alert_vertex);
    }

    /// Removes predictions whose deadline has passed (strictly) and closes
    /// the lifetime of hypotheses that grew out of such predictions. One safe
    /// event per vertex, in vertex id order.
    std::vector<SignalEvent> expire(double now)
    {
        if (now < clock_) {
            throw PreconditionError("expire: clock regression");
        }
        std::vector<SignalEvent> signals;
        std::vector<VertexId> doomed;
        for (auto& [id, v] : vertices_) {
            if (!v.deadline || !(*v.deadline < now)) continue;
            if (v.kind == VertexKind::prediction) {
                doomed.push_back(id);
                signals.push_back({SignalKind::safe, id, now});
            } else if (v.kind == VertexKind::hypothesised && v.pending) {
                v.pending = false;
                v.resolved_ts = now;
                signals.push_back({SignalKind::safe, id, now});
            }
        }
        for (const VertexId id : doomed) erase(id);
        clock_ = now;
        return signals;
    }

    const std::map<VertexId, Vertex>& vertices() const { return vertices_; }

    const Vertex* find(VertexId id) const
    {
        const auto it = vertices_.find(id);
        return it == vertices_.end() ? nullptr : &it->second;
    }

    const std::map<std::pair<VertexId, VertexId>, Edge>& edges() const { return edges_; }

    double clock() const { return clock_; }

    /// Scenario identifier: the smallest vertex id of the weakly-connected
    /// component containing `v`.
    VertexId scenario_of(VertexId v) const
    {
        const auto members = component_of(v, std::nullopt);
        return *std::min_element(members.begin(), members.end());
    }

    /// All scenarios, keyed by scenario id, members in id order.
    std::map<VertexId, std::vector<VertexId>> scenarios() const { return components(std::nullopt); }

    /// Incrementally maintained pool of the scenario containing `scenario`.
    FactSet fact_pool(VertexId scenario) const { return pool_of(component_of(scenario, std::nullopt)); }

    /// The same pool rebuilt from vertex bindings alone.
    FactSet recompute_fact_pool(VertexId scenario) const
    {
        FactSet out;
        for (const VertexId m : component_of(scenario, std::nullopt)) {
            const auto f = derive_contribution(vertices_.at(m));
            out.insert(f.begin(), f.end());
        }
        return out;
    }

private:
    static bool contributes(const Vertex& v)
    {
        return v.kind == VertexKind::exploit || v.kind == VertexKind::hypothesised;
    }

    FactSet derive_contribution(const Vertex& v) const
    {
        FactSet out;
        if (!contributes(v)) return out;
        for (auto& f : instantiate(attacks_->at(v.attack).post, v.bindings)) {
            if (f.ground()) out.insert(std::move(f));
        }
        return out;
    }

    void refresh_contribution(const Vertex& v) { contributions_[v.id] = derive_contribution(v); }

    VertexId insert(Vertex v)
    {
        const VertexId id = v.id;
        auto [it, inserted] = vertices_.emplace(id, std::move(v));
        neighbours_[id];
        refresh_contribution(it->second);
        return id;
    }

    void erase(VertexId id)
    {
        for (const VertexId n : neighbours_[id]) {
            neighbours_[n].erase(id);
            edges_.erase({id, n});
            edges_.erase({n, id});
        }
        neighbours_.erase(id);
        contributions_.erase(id);
        vertices_.erase(id);
    }

    void add_edge(VertexId from, VertexId to, const FactSet& witness)
    {
        auto& e = edges_[{from, to}];
        e.from = from;
        e.to = to;
        e.witness.insert(witness.begin(), witness.end());
        neighbours_[from].insert(to);
        neighbours_[to].insert(from);
    }

    std::optional<VertexId> find_live(VertexKind kind, const std::string& attack, const Binding& b, double ts) const
    {
        for (const auto& [id, v] : vertices_) {
            if (v.kind != kind || v.attack != attack || !v.deadline || ts > *v.deadline) continue;
            if (kind == VertexKind::hypothesised && !v.pending) continue;
            if (consistent(v.bindings, b)) return id;
        }
        return std::nullopt;
    }

    static bool touches(const std::vector<Fact>& facts, const FactSet& pool)
    {
        return std::any_of(facts.begin(), facts.end(), [&](const Fact& f) { return pool.contains(f); });
    }

    FactSet pool_of(const std::vector<VertexId>& members) const
    {
        FactSet out;
        for (const VertexId m : members) {
            const auto& c = contributions_.at(m);
            out.insert(c.begin(), c.end());
        }
        return out;
    }

    /// Pool of every contributing vertex except `excluded`, plus axioms.
    FactSet global_pool(VertexId excluded) const
    {
        FactSet out = axioms_;
        for (const auto& [id, facts] : contributions_) {
            if (id != excluded) out.insert(facts.begin(), facts.end());
        }
        return out;
    }

    bool prerequisites_satisfied(const Alert& a, VertexId av) const
    {
        return !satisfy(attacks_->at(a.attack).pre, global_pool(av), a.bindings).empty();
    }

    void link_supporters(const std::vector<VertexId>& members, const std::vector<Fact>& pre, VertexId target)
    {
        for (const VertexId m : members) {
            if (m == target) continue;
            FactSet witness;
            for (const auto& f : pre) {
                if (contributions_.at(m).contains(f)) witness.insert(f);
            }
            if (!witness.empty()) add_edge(m, target, witness);
        }
    }

    HypothesisResult hypothesize_unchecked(const Alert& a, VertexId av)
    {
        const AttackType& type = attacks_->at(a.attack);
        const FactSet pool = global_pool(av);
        std::vector<Fact> missing;
        for (auto& f : instantiate(type.pre, a.bindings)) {
            if (f.ground() && !pool.contains(f)) missing.push_back(std::move(f));
        }

        const auto comps = components(av);
        std::map<std::pair<std::string, Binding>, std::set<VertexId>> candidates;
        for (const auto& [name, candidate] : attacks_->attacks()) {
            for (const auto& f : missing) {
                for (const auto& q : candidate.post) {
                    const auto b = unify_fact(q, f);
                    if (!b) continue;
                    for (const auto& [sid, members] : comps) {
                        const FactSet spool = pool_of(members);
                        FactSet full = spool;
                        full.insert(axioms_.begin(), axioms_.end());
                        for (const auto& c : satisfy(candidate.pre, full, *b)) {
                            const auto pre = instantiate(candidate.pre, c);
                            if (!touches(pre, spool)) continue;
                            auto& supporters = candidates[{name, c}];
                            for (const VertexId m : members) {
                                if (touches(pre, contributions_.at(m))) supporters.insert(m);
                            }
                        }
                    }
                }
            }
        }

        HypothesisResult out;
        for (const auto& [key, supporters] : candidates) {
            const auto& [name, b] = key;
            const AttackType& candidate = attacks_->at(name);
            VertexId hid = 0;
            if (const auto p = find_live(VertexKind::prediction, name, b, a.ts)) {
                Vertex& pv = vertices_.at(*p);
                pv.kind = VertexKind::hypothesised;
                pv.bindings = merged(b, pv.bindings);
                pv.created_ts = a.ts;
                refresh_contribution(pv);
                out.signals.push_back({SignalKind::danger, pv.id, a.ts});
                hid = pv.id;
            } else {
                Vertex v;
                v.id = next_id_++;
                v.kind = VertexKind::hypothesised;
                v.attack = name;
                v.bindings = b;
                v.created_ts = a.ts;
                v.resolved_ts = a.ts;
                hid = insert(std::move(v));
            }
            const auto pre = instantiate(candidate.pre, b);
            link_supporters({supporters.begin(), supporters.end()}, pre, hid);
            FactSet witness;
            for (const auto& q : instantiate(candidate.post, b)) {
                for (const auto& f : missing) {
                    if (unify_fact(q, f)) witness.insert(f);
                }
            }
            add_edge(hid, av, witness);
            out.vertices.push_back(hid);
        }
        return out;
    }

    std::vector<VertexId> component_of(VertexId start, std::optional<VertexId> excluded) const
    {
        std::vector<VertexId> out;
        std::set<VertexId> seen{start};
        std::deque<VertexId> queue{start};
        while (!queue.empty()) {
            const VertexId v = queue.front();
            queue.pop_front();
            out.push_back(v);
            const auto it = neighbours_.find(v);
            if (it == neighbours_.end()) continue;
            for (const VertexId n : it->second) {
                if (n == excluded) continue;
                if (seen.insert(n).second) queue.push_back(n);
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    std::map<VertexId, std::vector<VertexId>> components(std::optional<VertexId> excluded) const
    {
        std::map<VertexId, std::vector<VertexId>> out;
        std::set<VertexId> seen;
        for (const auto& [id, v] : vertices_) {
            if (id == excluded || seen.contains(id)) continue;
            auto members = component_of(id, excluded);
            seen.insert(members.begin(), members.end());
            out.emplace(members.front(), std::move(members));
        }
        return out;
    }

    std::shared_ptr<const AttackGraph> attacks_;
    std::map<VertexId, Vertex> vertices_;
    std::map<std::pair<VertexId, VertexId>, Edge> edges_;
    std::map<VertexId, std::set<VertexId>> neighbours_;
    std::map<VertexId, FactSet> contributions_;
    FactSet axioms_;
    double clock_ = -std::numeric_limits<double>::infinity();
    VertexId next_id_ = 1;
};

} // namespace dids
