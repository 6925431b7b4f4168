// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <string>

#include "dids/pipeline.hpp"
#include "oracles.hpp"

using namespace dids;

namespace {

const std::string data_dir = DIDS_DATA_DIR;

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::shared_ptr<const AttackGraph> g1()
{
    static const auto g = std::make_shared<const AttackGraph>(load_graph(data_dir + "/g1/graph.json"));
    return g;
}

const std::vector<Signature>& g1_sigs()
{
    static const auto s = load_signatures(data_dir + "/g1/signatures.json", *g1());
    return s;
}

const Config& shipped_config()
{
    static const Config c = load_config(data_dir + "/g1/config.json");
    return c;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

GeneratedStream shipped_stream(const std::string& profile)
{
    return gen_stream(*g1(), g1_sigs(), load_profile(data_dir + "/g1/" + profile, *g1()), shipped_config().seed);
}

// 1 ------------------------------------------------------------------------
Verdict scenario_construction()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto s = shipped_stream("profile.json");
    Pipeline p(g1(), g1_sigs(), shipped_config());
    p.run(s.packets);
    const double elapsed = seconds_since(t0);

    const auto& g = p.graph();
    std::vector<VertexId> exploits;
    for (const auto& [id, v] : g.vertices()) {
        if (v.kind == VertexKind::exploit) exploits.push_back(id);
    }
    std::set<VertexId> scenarios;
    for (const auto id : exploits) scenarios.insert(g.scenario_of(id));
    std::size_t edges = 0;
    bool ordered = true;
    for (const auto& [key, e] : g.edges()) {
        const Vertex& from = *g.find(e.from);
        const Vertex& to = *g.find(e.to);
        if (from.kind != VertexKind::exploit || to.kind != VertexKind::exploit) continue;
        ++edges;
        ordered = ordered && from.created_ts < to.created_ts;
    }
    const bool pass = exploits.size() == 4 && scenarios.size() == 1 && edges == 3 && ordered && elapsed < 1.0;
    return {pass, fmt("%zu exploit vertices, %zu scenario(s), %zu prepare-for edges, ts-ordered=%s, %.3f s",
                      exploits.size(), scenarios.size(), edges, ordered ? "yes" : "no", elapsed)};
}

// 2 ------------------------------------------------------------------------
Verdict hypothesis_recovery()
{
    const auto s = shipped_stream("profile.json");
    std::vector<Signature> sigs;
    for (const auto& sig : g1_sigs()) {
        if (sig.attack != "ftp_overflow") sigs.push_back(sig);
    }
    Pipeline p(g1(), sigs, shipped_config());
    p.run(s.packets);
    const auto& g = p.graph();
    std::size_t hypothesised = 0;
    std::size_t exploits = 0;
    std::set<VertexId> scenarios;
    for (const auto& [id, v] : g.vertices()) {
        if (v.kind == VertexKind::hypothesised && v.attack == "ftp_overflow") ++hypothesised;
        if (v.kind == VertexKind::exploit) {
            ++exploits;
            scenarios.insert(g.scenario_of(id));
        }
    }
    const bool pass = hypothesised == 1 && exploits == 3 && scenarios.size() == 1;
    return {pass, fmt("%zu hypothesised ftp_overflow vertex, %zu exploit vertices in %zu scenario(s)", hypothesised,
                      exploits, scenarios.size())};
}

// 3 ------------------------------------------------------------------------
Verdict signal_discipline()
{
    static const char* attacks[] = {"recon_scan", "ftp_overflow", "install_agent", "launch_flood"};
    std::size_t predictions = 0;
    std::size_t violations = 0;
    std::size_t misrouted = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        Rng rng(seed, "acceptance-signals");
        ScenarioProfile profile;
        profile.benign_rate = 0.5;
        profile.duration = 400.0;
        const auto steps = rng.between(2, 8);
        for (std::size_t i = 0; i < steps; ++i) {
            ProfileStep step;
            step.attack = attacks[rng.below(4)];
            step.delay = static_cast<double>(rng.below(150));
            step.variant = step.attack == "ftp_overflow" && rng.bernoulli(0.3);
            step.mutations = step.variant ? 2 : 0;
            profile.steps.push_back(step);
        }
        const auto s = gen_stream(*g1(), g1_sigs(), profile, seed);
        Pipeline p(g1(), g1_sigs(), shipped_config());
        p.run(s.packets);

        std::map<VertexId, std::vector<SignalKind>> per_vertex;
        for (const auto& d : p.signal_trace()) {
            per_vertex[d.event.vertex].push_back(d.event.kind);
            if (d.cell && p.cells().at(*d.cell).vertex != d.event.vertex) ++misrouted;
        }
        for (const auto v : p.predictions()) {
            ++predictions;
            const auto& kinds = per_vertex[v];
            const auto count = [&](SignalKind k) { return std::count(kinds.begin(), kinds.end(), k); };
            const bool ok = count(SignalKind::pamp) + count(SignalKind::safe) == 1 &&
                            count(SignalKind::danger) <= 1 &&
                            (count(SignalKind::danger) == 0 || kinds.front() == SignalKind::danger);
            violations += ok ? 0 : 1;
        }
        per_vertex.clear();
    }
    const bool pass = predictions > 0 && violations == 0 && misrouted == 0;
    return {pass, fmt("100 seeds, %zu prediction vertices, %zu discipline violations, %zu misrouted signals",
                      predictions, violations, misrouted)};
}

// 4 ------------------------------------------------------------------------
Verdict correlation_oracle()
{
    static const char* attacks[] = {"recon_scan", "ftp_overflow", "install_agent", "launch_flood"};
    const std::string hosts[] = {"10.0.0.5", "10.0.0.6", "10.0.0.7"};
    std::size_t mismatched = 0;
    std::size_t total_edges = 0;
    for (std::uint64_t seed = 1; seed <= 500; ++seed) {
        Rng rng(seed, "acceptance-correlation");
        CorrelationGraph g(g1());
        for (const auto& h : hosts) g.add_axiom(parse_fact("reachable(" + h + ")"));
        std::vector<Alert> alerts;
        double ts = 0.0;
        const auto n = rng.between(1, 10);
        for (AlertId id = 1; id <= n; ++id) {
            ts += 1.0 + static_cast<double>(rng.below(80));
            g.expire(ts);
            Alert a;
            a.id = id;
            a.ts = ts;
            a.attack = attacks[rng.below(4)];
            a.bindings["h"] = hosts[rng.below(3)];
            if (a.attack == "launch_flood") a.bindings["v"] = hosts[rng.below(3)];
            g.correlate(a);
            alerts.push_back(a);
        }
        std::set<std::pair<AlertId, AlertId>> got;
        for (const auto& [key, e] : g.edges()) {
            const Vertex& from = *g.find(e.from);
            const Vertex& to = *g.find(e.to);
            if (from.kind == VertexKind::exploit && to.kind == VertexKind::exploit) {
                got.emplace(from.alert_refs.front(), to.alert_refs.front());
            }
        }
        total_edges += got.size();
        if (got != oracle::prepare_for_pairs(*g1(), alerts)) ++mismatched;
    }
    return {mismatched == 0, fmt("500 sequences, %zu edges compared, %zu mismatching sequences", total_edges, mismatched)};
}

// 5 ------------------------------------------------------------------------
Verdict matching_oracle()
{
    Rng rng(shipped_config().seed, "acceptance-matching");
    std::size_t mismatched = 0;
    std::size_t nonzero = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto alpha = rng.between(2, 256);
        Bytes d(rng.between(0, 64));
        Bytes p(rng.between(0, 64));
        for (auto& b : d) b = static_cast<std::uint8_t>(rng.below(alpha));
        for (auto& b : p) b = static_cast<std::uint8_t>(rng.below(alpha));
        const auto got = rcontig_match(d, p);
        nonzero += got > 0 ? 1 : 0;
        if (got != oracle::longest_common_run(d, p)) ++mismatched;
    }
    return {mismatched == 0, fmt("1000 pairs (%zu with a common run), %zu mismatches", nonzero, mismatched)};
}

// 6 ------------------------------------------------------------------------
Verdict variant_detection()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto& cfg = shipped_config();
    const Signature& sig = signature_for(g1_sigs(), "ftp_overflow");
    std::size_t long_token = 0;
    for (std::size_t t = 0; t < sig.contents.size(); ++t) {
        if (sig.contents[t].size() > sig.contents[long_token].size()) long_token = t;
    }
    const Bytes alphabet = benign_alphabet(g1_sigs(), BenignMode::disjoint);

    Rng rng(cfg.seed, "acceptance-variants");
    std::vector<Packet> variants;
    for (PacketId id = 1; id <= 100; ++id) {
        const auto built = build_attack_payload(sig, alphabet, rng);
        // offsets of the long token inside the payload
        std::size_t offset = 0;
        for (std::size_t t = 0; t < long_token; ++t) offset += sig.contents[t].size();
        std::vector<std::size_t> positions;
        for (std::size_t k = 0; k < sig.contents[long_token].size(); ++k) {
            positions.push_back(built.token_positions[offset + k]);
        }
        Packet p;
        p.id = id;
        p.ts = static_cast<double>(id);
        p.src = *Ipv4::parse("10.0.0.9");
        p.dst = *Ipv4::parse("10.0.0.5");
        p.sport = 40000;
        p.dport = 21;
        p.proto = Proto::tcp;
        p.payload = mutate_positions(built.payload, positions, 2, rng);
        variants.push_back(std::move(p));
    }
    const auto base_hits = scan_stream(g1_sigs(), variants).size();

    auto node = LymphNode::generate(g1_sigs(), cfg.immune, cfg.seed);
    Vertex v;
    v.id = 1;
    v.kind = VertexKind::prediction;
    v.attack = "ftp_overflow";
    v.bindings = {{"h", "10.0.0.5"}};
    v.deadline = 120.0;
    std::size_t tagged = 0;
    DcId next_dc = 1;
    for (const auto& p : variants) {
        auto dc = spawn_dc(v, g1()->at("ftp_overflow"), next_dc++, 0.0);
        capture(dc, p, cfg.immune.antigen_capacity, node.reservoir_rng());
        dc.migrate(DcContext::mature);
        tagged += node.present(dc).alerts.empty() ? 0 : 1;
    }

    ScenarioProfile benign_profile;
    benign_profile.benign_rate = 1000.0;
    benign_profile.duration = 12.0;
    auto benign = gen_stream(*g1(), g1_sigs(), benign_profile, cfg.seed).packets;
    const bool enough = benign.size() >= 10000;
    benign.resize(std::min<std::size_t>(benign.size(), 10000));
    std::size_t benign_tagged = 0;
    Vertex flood = v;
    flood.attack = "launch_flood";
    for (std::size_t i = 0; i < benign.size(); i += cfg.immune.antigen_capacity) {
        auto dc = spawn_dc(flood, g1()->at("launch_flood"), next_dc++, 0.0);
        for (std::size_t k = i; k < std::min(benign.size(), i + cfg.immune.antigen_capacity); ++k) {
            capture(dc, benign[k], cfg.immune.antigen_capacity, node.reservoir_rng());
        }
        dc.migrate(DcContext::mature);
        std::set<PacketId> hit;
        for (const auto& a : node.present(dc).alerts) hit.insert(a.packet_ref);
        benign_tagged += hit.size();
    }
    const double elapsed = seconds_since(t0);
    const bool pass = base_hits == 0 && tagged >= 80 && enough && benign_tagged <= 5 && elapsed < 30.0;
    return {pass, fmt("base engine %zu/100, immune layer %zu/100 variants; %zu/%zu benign tagged; %.2f s", base_hits,
                      tagged, benign_tagged, benign.size(), elapsed)};
}

// 7 ------------------------------------------------------------------------
Verdict tolerization()
{
    const auto& cfg = shipped_config();
    auto node = LymphNode::generate(g1_sigs(), cfg.immune, cfg.seed);
    const std::size_t r = cfg.immune.match_threshold;

    // Benign traffic that happens to carry signature fragments (FTP logins,
    // agent-like HTTP fetches).
    std::vector<Antigen> set;
    const char* texts[] = {"USER anonymous\r\nPASS guest@example.org\r\n", "GET /agent.bin.sig HTTP/1.1\r\n",
                           "NOTICE: SITE EXEC disabled by policy", "X-Bot-Key: 7f3a9c000 (revoked)",
                           "status FLOOD-START ignored; rate=max; capped"};
    PacketId id = 1;
    for (const auto* t : texts) set.push_back({id++, 1.0, to_bytes(t)});

    std::size_t reactive_before = 0;
    for (const auto& d : node.repertoire()) {
        for (const auto& a : set) {
            if (rcontig_match(d.bytes, a.payload) >= r) {
                ++reactive_before;
                break;
            }
        }
    }
    DendriticCell dc;
    dc.id = 1;
    dc.vertex = 1;
    dc.attack = "ftp_overflow";
    dc.antigens = set;
    dc.migrate(DcContext::semi_mature);
    const auto removed = node.present(dc).tolerized.size();

    std::size_t reactive_after = 0;
    for (const auto& d : node.repertoire()) {
        for (const auto& a : set) {
            if (rcontig_match(d.bytes, a.payload) >= r) ++reactive_after;
        }
    }
    DendriticCell again;
    again.id = 2;
    again.vertex = 2;
    again.attack = "ftp_overflow";
    again.antigens = set;
    again.migrate(DcContext::mature);
    const auto alerts = node.present(again).alerts.size();

    const bool pass = reactive_before > 0 && removed == reactive_before && reactive_after == 0 && alerts == 0 &&
                      node.repertoire().size() == cfg.immune.repertoire_size;
    return {pass, fmt("%zu self-reactive detectors deleted, repertoire %zu, %zu matches after refill, %zu ais alerts on replay",
                      removed, node.repertoire().size(), reactive_after, alerts)};
}

// 8 ------------------------------------------------------------------------
Verdict determinism()
{
    const auto s = shipped_stream("profile_variant.json");
    auto run = [&](std::uint64_t seed) {
        Config cfg = shipped_config();
        cfg.seed = seed;
        auto p = std::make_unique<Pipeline>(g1(), g1_sigs(), cfg);
        p->run(s.packets);
        return p;
    };
    auto dump = [](const Pipeline& p) {
        std::ostringstream out;
        const auto log = p.log();
        write_alerts(out, log);
        return out.str();
    };
    auto base_view = [](const Pipeline& p) {
        std::vector<std::tuple<double, std::string, std::optional<int>, PacketId, VertexId>> out;
        for (const auto& r : p.log()) {
            if (r.kind == LogKind::base) out.emplace_back(r.ts, r.attack, r.sig_id, r.packet_ref, r.vertex);
        }
        return out;
    };
    const auto a = run(shipped_config().seed);
    const auto b = run(shipped_config().seed);
    const auto c = run(shipped_config().seed + 1);
    const bool identical = dump(*a) == dump(*b);
    const bool repertoire_changed = a->lymph_node().repertoire() != c->lymph_node().repertoire();
    const bool base_same = base_view(*a) == base_view(*c);
    const bool graph_same = a->graph().vertices() == c->graph().vertices() && a->graph().edges() == c->graph().edges();
    const bool pass = identical && repertoire_changed && base_same && graph_same;
    return {pass, fmt("same seed byte-identical=%s; other seed: repertoire changed=%s, base alerts same=%s, graph same=%s",
                      identical ? "yes" : "no", repertoire_changed ? "yes" : "no", base_same ? "yes" : "no",
                      graph_same ? "yes" : "no")};
}

// 9 ------------------------------------------------------------------------
Verdict reservoir_uniformity()
{
    const std::size_t capacity = shipped_config().immune.antigen_capacity;
    constexpr int trials = 10000;
    Vertex v;
    v.id = 1;
    v.kind = VertexKind::prediction;
    v.attack = "install_agent";
    v.bindings = {{"h", "10.0.0.5"}};
    v.deadline = 120.0;
    Rng rng(shipped_config().seed, "reservoir");
    std::vector<int> held(capacity + 1, 0);
    Packet p;
    p.dst = *Ipv4::parse("10.0.0.5");
    p.dport = 4444;
    p.payload = to_bytes("x");
    for (int t = 0; t < trials; ++t) {
        auto dc = spawn_dc(v, g1()->at("install_agent"), 1, 0.0);
        for (PacketId id = 1; id <= capacity + 1; ++id) {
            p.id = id;
            capture(dc, p, capacity, rng);
        }
        for (const auto& a : dc.antigens) ++held[a.packet - 1];
    }
    const double expected = static_cast<double>(capacity) / static_cast<double>(capacity + 1);
    double worst = 0.0;
    for (const int h : held) worst = std::max(worst, std::abs(static_cast<double>(h) / trials - expected));
    return {worst <= 0.02, fmt("A=%zu, %d trials, expected %.4f, max deviation %.4f (tolerance 0.02)", capacity, trials,
                               expected, worst)};
}

} // namespace

int main()
{
    const std::pair<const char*, std::function<Verdict()>> criteria[] = {
        {"scenario construction", scenario_construction},
        {"hypothesis recovery", hypothesis_recovery},
        {"signal discipline", signal_discipline},
        {"correlation oracle equivalence", correlation_oracle},
        {"matching oracle equivalence", matching_oracle},
        {"novel-variant detection", variant_detection},
        {"tolerization", tolerization},
        {"determinism", determinism},
        {"reservoir capture uniformity", reservoir_uniformity},
    };
    int failed = 0;
    int n = 0;
    for (const auto& [name, check] : criteria) {
        ++n;
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %d %s: %s\n", v.pass ? "PASS" : "FAIL", n, name, v.detail.c_str());
        failed += v.pass ? 0 : 1;
    }
    std::printf("%d/%d criteria passed\n", n - failed, n);
    return failed == 0 ? 0 : 1;
}
