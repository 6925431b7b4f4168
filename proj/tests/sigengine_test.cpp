#include <gtest/gtest.h>

#include "dids/rng.hpp"
#include "dids/sigengine.hpp"
#include "oracles.hpp"

using namespace dids;
using nlohmann::json;

namespace {

const std::string data_dir = DIDS_DATA_DIR;

const AttackGraph& g1()
{
    static const AttackGraph g = load_graph(data_dir + "/g1/graph.json");
    return g;
}

Signature make_sig(int id, std::vector<std::string> tokens, std::optional<std::uint16_t> dport = 21)
{
    Signature s;
    s.id = id;
    s.attack = "ftp_overflow";
    s.proto = Proto::tcp;
    s.dport = dport;
    for (const auto& t : tokens) s.contents.push_back(to_bytes(t));
    s.bind = {{"h", PacketField::dst}};
    return s;
}

Packet make_packet(PacketId id, std::string_view payload, std::uint16_t dport = 21)
{
    Packet p;
    p.id = id;
    p.ts = static_cast<double>(id);
    p.src = *Ipv4::parse("10.0.0.9");
    p.dst = *Ipv4::parse("10.0.0.5");
    p.sport = 40000;
    p.dport = dport;
    p.proto = Proto::tcp;
    p.payload = to_bytes(payload);
    return p;
}

std::string message_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const ParseError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST(LoadSignatures, ShippedFileInOrder)
{
    const auto sigs = load_signatures(data_dir + "/g1/signatures.json", g1());
    ASSERT_EQ(sigs.size(), 4u);
    EXPECT_EQ(sigs[0].id, 1001);
    EXPECT_EQ(sigs[3].id, 1004);
    EXPECT_FALSE(sigs[3].dport);
    EXPECT_EQ(sigs[1].contents[1].size(), 31u);
}

TEST(LoadSignatures, ThreeRecordsInFileOrder)
{
    const auto doc = json::parse(R"j([
        {"id": 7, "attack": "install_agent", "proto": "tcp", "dport": 4444, "content": ["ascii:abc"], "bind": {"h": "dst"}},
        {"id": 3, "attack": "recon_scan", "proto": "tcp", "dport": 21, "content": ["hex:0a0b"], "bind": {"h": "dst"}},
        {"id": 5, "attack": "ftp_overflow", "proto": "tcp", "dport": "any", "content": ["ascii:x"], "bind": {"h": "dst"}}
    ])j");
    const auto sigs = parse_signatures(doc, g1());
    ASSERT_EQ(sigs.size(), 3u);
    EXPECT_EQ(sigs[0].id, 7);
    EXPECT_EQ(sigs[1].id, 3);
    EXPECT_EQ(sigs[1].contents[0], (Bytes{0x0a, 0x0b}));
    EXPECT_EQ(sigs[2].id, 5);
}

TEST(LoadSignatures, UnknownAttackNamesRecord)
{
    const auto doc = json::parse(R"j([
        {"id": 1, "attack": "recon_scan", "proto": "tcp", "dport": 21, "content": ["ascii:a"], "bind": {"h": "dst"}},
        {"id": 2, "attack": "teleport", "proto": "tcp", "dport": 21, "content": ["ascii:a"], "bind": {"h": "dst"}}
    ])j");
    const auto msg = message_of([&] { parse_signatures(doc, g1()); });
    EXPECT_NE(msg.find("record 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("teleport"), std::string::npos) << msg;
}

TEST(LoadSignatures, DuplicateId)
{
    const auto doc = json::parse(R"j([
        {"id": 1001, "attack": "recon_scan", "proto": "tcp", "dport": 21, "content": ["ascii:a"], "bind": {"h": "dst"}},
        {"id": 1001, "attack": "recon_scan", "proto": "tcp", "dport": 21, "content": ["ascii:b"], "bind": {"h": "dst"}}
    ])j");
    const auto msg = message_of([&] { parse_signatures(doc, g1()); });
    EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
}

TEST(LoadSignatures, RejectsBadRecords)
{
    auto bad = [&](const char* rec) {
        const auto doc = json::parse(std::string("[") + rec + "]");
        EXPECT_THROW(parse_signatures(doc, g1()), ParseError) << rec;
    };
    bad(R"j({"id": 1, "attack": "recon_scan", "proto": "tcp", "dport": 21, "content": [], "bind": {"h": "dst"}})j");
    bad(R"j({"id": 1, "attack": "recon_scan", "proto": "tcp", "dport": 21, "content": ["ascii:"], "bind": {"h": "dst"}})j");
    bad(R"j({"id": 1, "attack": "recon_scan", "proto": "icmp", "dport": 21, "content": ["ascii:a"], "bind": {"h": "dst"}})j");
    bad(R"j({"id": 1, "attack": "recon_scan", "proto": "tcp", "dport": 21, "content": ["ascii:a"], "bind": {}})j");
    bad(R"j({"id": 1, "attack": "recon_scan", "proto": "tcp", "dport": 21, "content": ["ascii:a"], "bind": {"h": "proto"}})j");
    bad(R"j({"id": 1, "attack": "recon_scan", "proto": "tcp", "dport": "all", "content": ["ascii:a"], "bind": {"h": "dst"}})j");
    bad(R"j({"id": 1, "attack": "recon_scan", "proto": "tcp", "dport": 21, "content": ["hex:ABC"], "bind": {"h": "dst"}})j");
    const std::string big(1025, 'a');
    const auto doc = json::array({{{"id", 1}, {"attack", "recon_scan"}, {"proto", "tcp"}, {"dport", 21},
                                   {"content", {"ascii:" + big}}, {"bind", {{"h", "dst"}}}}});
    EXPECT_THROW(parse_signatures(doc, g1()), ParseError);
}

TEST(MatchPacket, SingleToken)
{
    const auto a = match_packet(make_sig(9, {"SITE EXEC"}), make_packet(4, "xxSITE EXECyy"));
    ASSERT_TRUE(a);
    EXPECT_EQ(a->source, AlertSource::base);
    EXPECT_EQ(a->packet_ref, PacketId{4});
    EXPECT_EQ(a->sig_id, 9);
    EXPECT_EQ(a->attack, "ftp_overflow");
    EXPECT_EQ(a->bindings, (Binding{{"h", "10.0.0.5"}}));
}

TEST(MatchPacket, OrderEnforced)
{
    EXPECT_FALSE(match_packet(make_sig(1, {"USER", "PASS"}), make_packet(1, "PASS then USER")));
    EXPECT_TRUE(match_packet(make_sig(1, {"USER", "PASS"}), make_packet(1, "USER then PASS")));
}

TEST(MatchPacket, TokensMayNotOverlap)
{
    EXPECT_FALSE(match_packet(make_sig(1, {"abab", "ab"}), make_packet(1, "abab")));
    EXPECT_TRUE(match_packet(make_sig(1, {"abab", "ab"}), make_packet(1, "ababab")));
}

TEST(MatchPacket, PortAndProtocol)
{
    EXPECT_FALSE(match_packet(make_sig(1, {"SITE EXEC"}), make_packet(1, "SITE EXEC", 2121)));
    EXPECT_TRUE(match_packet(make_sig(1, {"SITE EXEC"}, std::nullopt), make_packet(1, "SITE EXEC", 2121)));
    auto udp = make_packet(1, "SITE EXEC");
    udp.proto = Proto::udp;
    EXPECT_FALSE(match_packet(make_sig(1, {"SITE EXEC"}), udp));
}

// Small alphabet so random payloads often contain the tokens.
TEST(MatchPacketProperty, AgreesWithPlacementOracle)
{
    Rng rng(3, "sigengine-property");
    int matched = 0;
    for (int trial = 0; trial < 3000; ++trial) {
        Signature sig = make_sig(1, {});
        const auto ntok = rng.between(1, 3);
        for (std::size_t t = 0; t < ntok; ++t) {
            Bytes tok(rng.between(1, 3));
            for (auto& b : tok) b = static_cast<std::uint8_t>('a' + rng.below(3));
            sig.contents.push_back(tok);
        }
        Packet p = make_packet(1, "");
        p.payload.resize(rng.between(0, 256) / (rng.bernoulli(0.5) ? 1 : 32));
        for (auto& b : p.payload) b = static_cast<std::uint8_t>('a' + rng.below(3));
        const bool expected = oracle::contents_placeable(sig.contents, p.payload);
        ASSERT_EQ(match_packet(sig, p).has_value(), expected) << "trial " << trial;
        matched += expected ? 1 : 0;
    }
    EXPECT_GT(matched, 100);
    EXPECT_LT(matched, 2900);
}

TEST(ScanStream, OnePacketTwoSignatures)
{
    const std::vector<Signature> sigs{make_sig(20, {"EXEC"}), make_sig(10, {"SITE"})};
    const std::vector<Packet> packets{make_packet(1, "SITE EXEC")};
    const auto alerts = scan_stream(sigs, packets);
    ASSERT_EQ(alerts.size(), 2u);
    EXPECT_EQ(alerts[0].sig_id, 10);
    EXPECT_EQ(alerts[1].sig_id, 20);
    EXPECT_EQ(alerts[0].id, AlertId{1});
    EXPECT_EQ(alerts[1].id, AlertId{2});
}

TEST(ScanStream, EmptyStream)
{
    const std::vector<Signature> sigs{make_sig(1, {"SITE"})};
    EXPECT_TRUE(scan_stream(sigs, std::span<const Packet>{}).empty());
}

TEST(ScanStream, DisjointBenignPayloadsRaiseNothing)
{
    const auto sigs = load_signatures(data_dir + "/g1/signatures.json", g1());
    Rng rng(5, "benign");
    std::vector<Packet> packets;
    for (PacketId i = 1; i <= 100; ++i) {
        Packet p = make_packet(i, "");
        p.dport = i % 2 ? 21 : 4444;
        p.proto = i % 3 ? Proto::tcp : Proto::udp;
        p.payload.resize(rng.between(16, 256));
        for (auto& b : p.payload) b = static_cast<std::uint8_t>(0x80 + rng.below(64));
        packets.push_back(p);
    }
    EXPECT_TRUE(scan_stream(sigs, packets).empty());
}

TEST(ScanStream, PureFunctionOfInputs)
{
    const auto sigs = load_signatures(data_dir + "/g1/signatures.json", g1());
    std::vector<Packet> packets{make_packet(1, "USER anonymous PASS probe@"),
                                make_packet(2, "SITE EXEC jAXP0A0AkAAQ2AB2BB0BBABXP8ABuJI"),
                                make_packet(3, "nothing")};
    const auto a = scan_stream(sigs, packets);
    EXPECT_EQ(a.size(), 2u);
    EXPECT_EQ(a, scan_stream(sigs, packets));
}
