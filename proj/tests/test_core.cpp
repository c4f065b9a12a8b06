#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <vector>

#include "chainsim/event_queue.hpp"
#include "chainsim/packet.hpp"
#include "chainsim/packet_queue.hpp"
#include "chainsim/rng.hpp"

using namespace chainsim;

////////////////////////////////////////////////////////////////////////////////
// Application id

TEST_CASE("app id splits into operator and local parts") {
    AppId a{42, 0x123456789abcull};
    uint64_t packed = a.pack();
    CHECK((packed >> 48) == 42);
    AppId b = AppId::unpack(packed);
    CHECK(b.operator_id == 42);
    CHECK(b.local_id == 0x123456789abcull);
    CHECK(a == b);
    CHECK(a.str() == "42:20015998343868");
}

TEST_CASE("local id is masked to 48 bits") {
    AppId a{1, ~0ull};
    CHECK(AppId::unpack(a.pack()).local_id == AppId::kLocalMask);
    AppId b{1, AppId::kLocalMask};
    CHECK(a == b);
}

////////////////////////////////////////////////////////////////////////////////
// Packet wire format

namespace {

Packet sample_packet() {
    Packet p;
    p.app = AppId{7, 99}.pack();
    p.kind = PacketKind::regular;
    p.flow = 3;
    p.seq = 123456789;
    p.payload_bytes = 1000;
    p.tlvs.push_back(make_timestamp_tlv(1.25));
    p.tlvs.push_back(make_priority_tlv(2));
    return p;
}

} // namespace

TEST_CASE("packet round trips through encode and decode") {
    Packet p = sample_packet();
    std::vector<uint8_t> wire = encode_packet(p);
    Packet q = decode_packet(wire);
    CHECK(q.app == p.app);
    CHECK(q.kind == p.kind);
    CHECK(q.flow == p.flow);
    CHECK(q.seq == p.seq);
    CHECK(q.payload_bytes == p.payload_bytes);
    REQUIRE(q.tlvs.size() == 2);
    CHECK(q.tlvs[0] == p.tlvs[0]);
    CHECK(q.tlvs[1] == p.tlvs[1]);
}

TEST_CASE("wire size counts fixed header, tlv headers and payload") {
    Packet p;
    CHECK(p.wire_size() == kFixedHeaderBytes);
    p.payload_bytes = 500;
    CHECK(p.wire_size() == kFixedHeaderBytes + 500);
    p.set_tlv(make_priority_tlv(1)); // 1 value byte
    CHECK(p.wire_size() == kFixedHeaderBytes + 500 + kTlvHeaderBytes + 1);
    p.set_tlv(make_timestamp_tlv(0.5)); // 8 value bytes
    CHECK(p.wire_size() == kFixedHeaderBytes + 500 + 2 * kTlvHeaderBytes + 9);
}

TEST_CASE("unregistered tlv kinds survive re-encoding byte for byte") {
    Packet p = sample_packet();
    p.tlvs.push_back(Tlv{999, {0xde, 0xad, 0xbe, 0xef, 0x00, 0x01}});
    std::vector<uint8_t> once = encode_packet(p);
    std::vector<uint8_t> twice = encode_packet(decode_packet(once));
    CHECK(once == twice);
}

TEST_CASE("decoder rejects malformed buffers") {
    std::vector<uint8_t> wire = encode_packet(sample_packet());

    SUBCASE("truncated fixed header") {
        std::vector<uint8_t> cut(wire.begin(), wire.begin() + kFixedHeaderBytes - 1);
        CHECK_THROWS_AS(decode_packet(cut), MalformedHeader);
    }
    SUBCASE("truncated tlv value") {
        std::vector<uint8_t> cut(wire.begin(), wire.end() - 1);
        CHECK_THROWS_AS(decode_packet(cut), MalformedHeader);
    }
    SUBCASE("trailing garbage") {
        wire.push_back(0x00);
        CHECK_THROWS_AS(decode_packet(wire), MalformedHeader);
    }
    SUBCASE("unknown packet kind") {
        wire[8] = 2; // kind byte follows the u64 app id
        CHECK_THROWS_AS(decode_packet(wire), MalformedHeader);
    }
    SUBCASE("empty buffer") {
        CHECK_THROWS_AS(decode_packet(std::vector<uint8_t>{}), MalformedHeader);
    }
}

TEST_CASE("typed tlv views round trip") {
    SUBCASE("requirement") {
        RequirementTlv r{2e6, 0.05, 0.01, 2, 0.1};
        RequirementTlv b = read_requirement_tlv(make_requirement_tlv(r));
        CHECK(b.min_tput == r.min_tput);
        CHECK(b.max_delay == r.max_delay);
        CHECK(b.max_loss == r.max_loss);
        CHECK(b.reliability == r.reliability);
        CHECK(b.deadline == r.deadline);
    }
    SUBCASE("telemetry") {
        TelemetryTlv t{17, 1.5, 0.003, 0.0001};
        TelemetryTlv b = read_telemetry_tlv(make_telemetry_tlv(t));
        CHECK(b.pop == 17);
        CHECK(b.timestamp == 1.5);
        CHECK(b.queuing == 0.003);
        CHECK(b.processing == 0.0001);
    }
    SUBCASE("replica") {
        ReplicaTlv r = read_replica_tlv(make_replica_tlv(ReplicaTlv{1, 2}));
        CHECK(r.index == 1);
        CHECK(r.count == 2);
    }
    SUBCASE("ack with gaps") {
        AckTlv a;
        a.flow = 9;
        a.cumulative = 100;
        a.gaps = {{100, 105}, {110, 111}};
        AckTlv b = read_ack_tlv(make_ack_tlv(a));
        CHECK(b.flow == 9);
        CHECK(b.cumulative == 100);
        REQUIRE(b.gaps.size() == 2);
        CHECK(b.gaps[0] == std::pair<uint64_t, uint64_t>{100, 105});
        CHECK(b.gaps[1] == std::pair<uint64_t, uint64_t>{110, 111});
    }
    SUBCASE("bundle") {
        std::vector<uint64_t> seqs{4, 5, 9};
        CHECK(read_bundle_tlv(make_bundle_tlv(seqs)) == seqs);
    }
    SUBCASE("interest") {
        InterestTlv in;
        in.fractions = {{1, 1.0}, {2, 0.4}};
        InterestTlv out = read_interest_tlv(make_interest_tlv(in));
        CHECK(out.fractions == in.fractions);
    }
    SUBCASE("escalate") {
        EscalateTlv e = read_escalate_tlv(make_escalate_tlv(EscalateTlv{5, 77}));
        CHECK(e.flow == 5);
        CHECK(e.seq == 77);
    }
    SUBCASE("skip shares the escalate layout") {
        Tlv t = make_skip_tlv(3, 42);
        CHECK(t.kind == TLV_SKIP);
        EscalateTlv e = read_escalate_tlv(t);
        CHECK(e.flow == 3);
        CHECK(e.seq == 42);
    }
    SUBCASE("u32 and f64") {
        CHECK(read_u32_tlv(make_u32_tlv(TLV_DEST, 123)) == 123);
        CHECK(read_f64_tlv(make_f64_tlv(TLV_RETX_TIMEOUT, 0.025)) == 0.025);
    }
}

TEST_CASE("set_tlv replaces in place and remove_tlv erases") {
    Packet p;
    p.set_tlv(make_priority_tlv(5));
    p.set_tlv(make_timestamp_tlv(1.0));
    p.set_tlv(make_priority_tlv(1)); // replaces, does not append
    REQUIRE(p.tlvs.size() == 2);
    CHECK(read_priority_tlv(*p.find_tlv(TLV_PRIORITY)) == 1);
    CHECK(p.tlvs[0].kind == TLV_PRIORITY); // position preserved
    p.remove_tlv(TLV_PRIORITY);
    CHECK(p.find_tlv(TLV_PRIORITY) == nullptr);
    CHECK(p.tlvs.size() == 1);
}

TEST_CASE("delay breakdown sums across components") {
    Packet p;
    p.delay(DelayComponent::propagation) = 0.010;
    p.delay(DelayComponent::transmission) = 0.002;
    p.delay(DelayComponent::queuing) = 0.001;
    CHECK(p.breakdown_total() == doctest::Approx(0.013).epsilon(1e-12));
}

////////////////////////////////////////////////////////////////////////////////
// Event queue

TEST_CASE("events run in time order with ties in schedule order") {
    EventQueue q;
    std::vector<int> order;
    q.schedule(2.0, [&] { order.push_back(3); });
    q.schedule(1.0, [&] { order.push_back(1); });
    q.schedule(1.0, [&] { order.push_back(2); }); // same time, scheduled later
    q.run_until(10.0);
    CHECK(order == std::vector<int>{1, 2, 3});
    CHECK(q.now() == 10.0);
    CHECK(q.executed() == 3);
    CHECK(q.empty());
}

TEST_CASE("run_until stops at the horizon") {
    EventQueue q;
    int ran = 0;
    q.schedule(1.0, [&] { ran++; });
    q.schedule(5.0, [&] { ran++; });
    q.run_until(2.0);
    CHECK(ran == 1);
    CHECK(q.now() == 2.0);
    CHECK(!q.empty());
    q.run_until(5.0);
    CHECK(ran == 2);
}

TEST_CASE("cancelled events never run") {
    EventQueue q;
    int ran = 0;
    EventHandle h = q.schedule(1.0, [&] { ran++; });
    q.schedule(2.0, [&] { ran++; });
    q.cancel(h);
    q.run_until(10.0);
    CHECK(ran == 1);
    CHECK(q.executed() == 1);
}

TEST_CASE("events may schedule further events") {
    EventQueue q;
    std::vector<double> times;
    q.schedule(1.0, [&] {
        times.push_back(q.now());
        q.schedule(q.now() + 1.5, [&] { times.push_back(q.now()); });
    });
    q.run_until(10.0);
    CHECK(times == std::vector<double>{1.0, 2.5});
}

TEST_CASE("scheduling into the past throws") {
    EventQueue q;
    q.schedule(3.0, [] {});
    q.run_until(3.0);
    CHECK_THROWS_AS(q.schedule(2.0, [] {}), PastEventError);
    CHECK_NOTHROW(q.schedule(3.0, [] {})); // now is allowed
}

////////////////////////////////////////////////////////////////////////////////
// Packet queue

namespace {

// Payload sized so wire_size lands exactly on `bytes`.
Packet sized_packet(size_t bytes, int priority = -1) {
    Packet p;
    size_t overhead = kFixedHeaderBytes;
    if (priority >= 0) overhead += kTlvHeaderBytes + 1;
    REQUIRE(bytes >= overhead);
    p.payload_bytes = uint32_t(bytes - overhead);
    if (priority >= 0) p.set_tlv(make_priority_tlv(uint8_t(priority)));
    return p;
}

} // namespace

TEST_CASE("fifo queue tail-drops when full") {
    PacketQueue q(QueueDiscipline::fifo, 250);
    CHECK(q.enqueue(sized_packet(100), 0.0));
    CHECK(q.enqueue(sized_packet(100), 0.1));
    CHECK(!q.enqueue(sized_packet(100), 0.2)); // 300 > 250
    CHECK(q.drops() == 1);
    CHECK(q.occupancy_bytes() == 200);
    CHECK(q.size() == 2);

    auto s = q.dequeue();
    REQUIRE(s);
    CHECK(s->enqueued_at == 0.0); // fifo order
    CHECK(q.occupancy_bytes() == 100);
    q.dequeue();
    CHECK(!q.dequeue());
    CHECK(q.empty());
}

TEST_CASE("fifo never evicts for a better class") {
    PacketQueue q(QueueDiscipline::fifo, 200);
    CHECK(q.enqueue(sized_packet(150, 7), 0.0));
    CHECK(!q.enqueue(sized_packet(150, 0), 0.1));
    CHECK(q.size() == 1);
}

TEST_CASE("a packet larger than the whole queue is refused") {
    PacketQueue q(QueueDiscipline::strict_priority, 100);
    CHECK(!q.enqueue(sized_packet(150, 0), 0.0));
    CHECK(q.drops() == 1);
    CHECK(q.empty());
}

TEST_CASE("strict priority evicts the worst class, newest first") {
    PacketQueue q(QueueDiscipline::strict_priority, 320);
    Packet a = sized_packet(100, 7);
    a.seq = 1;
    Packet b = sized_packet(100, 7);
    b.seq = 2;
    Packet c = sized_packet(100, 3);
    c.seq = 3;
    CHECK(q.enqueue(a, 0.0));
    CHECK(q.enqueue(b, 0.1));
    CHECK(q.enqueue(c, 0.2));
    CHECK(q.occupancy_bytes() == 300);

    // Highest class arrival: room made by shedding prio-7, newest victim first.
    std::vector<Packet> evicted;
    Packet d = sized_packet(100, 0);
    d.seq = 4;
    CHECK(q.enqueue(d, 0.3, &evicted));
    REQUIRE(evicted.size() == 1);
    CHECK(evicted[0].seq == 2);
    CHECK(q.drops() == 1);

    // Dequeue order is by class, fifo within a class.
    CHECK(q.dequeue()->packet.seq == 4);
    CHECK(q.dequeue()->packet.seq == 3);
    CHECK(q.dequeue()->packet.seq == 1);
}

TEST_CASE("strict priority refuses arrivals that do not outrank anyone") {
    PacketQueue q(QueueDiscipline::strict_priority, 200);
    CHECK(q.enqueue(sized_packet(150, 0), 0.0));
    CHECK(!q.enqueue(sized_packet(150, 3), 0.1)); // worse class cannot evict
    CHECK(!q.enqueue(sized_packet(150, 0), 0.2)); // equal class cannot evict
    CHECK(q.size() == 1);
    CHECK(q.drops() == 2);
}

TEST_CASE("missing priority tlv means worst class") {
    PacketQueue q(QueueDiscipline::strict_priority, 200);
    Packet plain = sized_packet(150);
    plain.seq = 1;
    CHECK(q.enqueue(plain, 0.0));
    std::vector<Packet> evicted;
    CHECK(q.enqueue(sized_packet(150, 6), 0.1, &evicted));
    REQUIRE(evicted.size() == 1);
    CHECK(evicted[0].seq == 1);
}

////////////////////////////////////////////////////////////////////////////////
// Deterministic rng

TEST_CASE("same seed and substream name reproduce the sequence") {
    RngStream a(42), b(42);
    auto& sa = a.substream("link.3");
    auto& sb = b.substream("link.3");
    for (int i = 0; i < 100; i++) CHECK(sa.next_u64() == sb.next_u64());
}

TEST_CASE("different names or seeds give different sequences") {
    RngStream r(42);
    CHECK(r.substream("link.1").next_u64() != r.substream("link.2").next_u64());
    RngStream other(43);
    CHECK(r.substream("x").next_u64() != other.substream("x").next_u64());
}

TEST_CASE("substreams advance independently") {
    RngStream a(7), b(7);
    // Burn only stream "x" on one side; "y" must be unaffected.
    a.substream("x").next_u64();
    a.substream("x").next_u64();
    CHECK(a.substream("y").next_u64() == b.substream("y").next_u64());
}

TEST_CASE("doubles land in the unit interval") {
    RngStream r(1);
    auto& s = r.substream("d");
    for (int i = 0; i < 1000; i++) {
        double v = s.next_double();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("bernoulli edge probabilities still consume one draw") {
    RngStream a(5), b(5);
    auto& sa = a.substream("x");
    auto& sb = b.substream("x");
    CHECK(!sa.bernoulli(0.0));
    sb.next_u64();
    CHECK(sa.next_u64() == sb.next_u64()); // both consumed exactly two

    CHECK(sa.bernoulli(1.0));
    sb.next_u64();
    CHECK(sa.next_u64() == sb.next_u64());
}

TEST_CASE("next_below stays under the bound") {
    RngStream r(9);
    auto& s = r.substream("m");
    for (int i = 0; i < 200; i++) CHECK(s.next_below(17) < 17);
    CHECK(s.next_below(0) == 0);
}
