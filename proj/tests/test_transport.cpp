#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "chainsim/transport.hpp"

using namespace chainsim;

////////////////////////////////////////////////////////////////////////////////
// Congestion window laws

TEST_CASE("slow start doubles the window every rtt") {
    LaneCca cca;
    cca.init(0.1, 0.001);
    // One ack per in-flight segment per round trip: cwnd after k rounds = 2^k.
    for (int k = 1; k <= 6; k++) {
        int in_flight = int(cca.cwnd);
        for (int i = 0; i < in_flight; i++) cca.on_new_ack();
        CHECK(cca.cwnd == double(1 << k)); // exact integer math
    }
}

TEST_CASE("congestion avoidance adds one segment per rtt") {
    LaneCca cca;
    cca.ssthresh = 8.0;
    cca.cwnd = 8.0;
    for (int round = 0; round < 4; round++) {
        double before = cca.cwnd;
        for (int i = 0; i < int(before); i++) cca.on_new_ack();
        CHECK(cca.cwnd == before + 1.0);
    }
    CHECK(cca.cwnd == 12.0);
}

TEST_CASE("triple duplicate halves the window") {
    LaneCca cca;
    cca.cwnd = 17.0;
    cca.ssthresh = 64.0;
    cca.on_triple_dup();
    CHECK(cca.cwnd == 8.0); // floor(17/2)
    CHECK(cca.ssthresh == 8.0);
    // Halving never goes below one segment.
    cca.cwnd = 1.0;
    cca.on_triple_dup();
    CHECK(cca.cwnd == 1.0);
}

TEST_CASE("timeout collapses to one segment and remembers half") {
    LaneCca cca;
    cca.cwnd = 10.0;
    cca.on_timeout();
    CHECK(cca.cwnd == 1.0);
    CHECK(cca.ssthresh == 5.0);
    // Recovery climbs in slow start until the remembered threshold.
    for (int i = 0; i < 4; i++) cca.on_new_ack();
    CHECK(cca.cwnd == 5.0);
    for (int i = 0; i < 5; i++) cca.on_new_ack(); // now in avoidance
    CHECK(cca.cwnd == 6.0);
}

TEST_CASE("rto estimator seeds from the static rtt and obeys the floor") {
    LaneCca cca;
    cca.init(0.020, 0.001);
    CHECK(cca.srtt == 0.020);
    CHECK(cca.rttvar == 0.010);
    CHECK(cca.rto == doctest::Approx(0.020 + 4 * 0.010));

    // Constant samples shrink rttvar toward zero; the floor catches the rto.
    LaneCca tiny;
    tiny.init(1e-5, 0.001);
    for (int i = 0; i < 200; i++) tiny.on_rtt_sample(1e-5);
    CHECK(tiny.rto == 0.001);
}

TEST_CASE("rtt samples follow the standard smoothing") {
    LaneCca cca;
    cca.init(0.1, 0.001);
    double srtt = 0.1, rttvar = 0.05;
    double sample = 0.14;
    rttvar += (std::abs(srtt - sample) - rttvar) / 4.0;
    srtt += (sample - srtt) / 8.0;
    cca.on_rtt_sample(sample);
    CHECK(cca.srtt == doctest::Approx(srtt).epsilon(1e-15));
    CHECK(cca.rttvar == doctest::Approx(rttvar).epsilon(1e-15));
    CHECK(cca.rto == doctest::Approx(std::max(srtt + 4 * rttvar, 0.001)).epsilon(1e-15));
}

////////////////////////////////////////////////////////////////////////////////
// Retransmission cache

namespace {

Packet cached(FlowId flow, SeqNo seq, uint32_t payload) {
    Packet p;
    p.flow = flow;
    p.seq = seq;
    p.payload_bytes = payload;
    return p;
}

} // namespace

TEST_CASE("cache stores, fetches and prunes by flow") {
    PacketCache c(10000);
    CHECK(c.put(1, 0, cached(1, 0, 100), 0.5, 3));
    CHECK(c.put(1, 1, cached(1, 1, 100), 0.6, 3));
    CHECK(c.put(2, 0, cached(2, 0, 100), 0.7, 3));
    CHECK(c.size() == 3);
    CHECK(c.used_bytes() == 3 * (kFixedHeaderBytes + 100));

    const PacketCache::Entry* e = c.get(1, 1);
    REQUIRE(e);
    CHECK(e->first_sent == 0.6);
    CHECK(e->pkt.seq == 1);
    CHECK(c.get(1, 99) == nullptr);

    c.prune_below(1, 1); // drops (1,0) only
    CHECK(c.size() == 2);
    CHECK(c.get(1, 0) == nullptr);
    CHECK(c.get(2, 0)); // other flow untouched
}

TEST_CASE("an over-budget packet is refused outright") {
    PacketCache c(100);
    CHECK(!c.put(1, 0, cached(1, 0, 200), 0.0, 0));
    CHECK(c.size() == 0);
    CHECK(c.evictions() == 0);
}

TEST_CASE("eviction sheds the worst class first, stalest within it") {
    size_t each = kFixedHeaderBytes + 100;
    PacketCache c(3 * each);
    c.put(1, 0, cached(1, 0, 100), 0.0, 7); // stale low class
    c.put(1, 1, cached(1, 1, 100), 0.1, 7); // fresher low class
    c.put(1, 2, cached(1, 2, 100), 0.2, 1);
    c.put(1, 3, cached(1, 3, 100), 0.3, 1); // needs room: (1,0) goes
    CHECK(c.evictions() == 1);
    CHECK(c.get(1, 0) == nullptr);
    CHECK(c.get(1, 1));

    c.put(1, 4, cached(1, 4, 100), 0.4, 1); // (1,1) is the last class-7 entry
    CHECK(c.get(1, 1) == nullptr);
    CHECK(c.evictions() == 2);

    // All class-1 now; the get() above refreshed nothing of seq 2, so the
    // stalest untouched entry goes next.
    c.get(1, 3);
    c.get(1, 4);
    c.put(1, 5, cached(1, 5, 100), 0.5, 1);
    CHECK(c.get(1, 2) == nullptr);
}

TEST_CASE("re-putting a seq replaces the bytes, not duplicates them") {
    PacketCache c(10000);
    c.put(1, 0, cached(1, 0, 100), 0.0, 3);
    uint64_t once = c.used_bytes();
    c.put(1, 0, cached(1, 0, 500), 0.1, 3);
    CHECK(c.size() == 1);
    CHECK(c.used_bytes() == once + 400);
    CHECK(c.get(1, 0)->first_sent == 0.1);
}

////////////////////////////////////////////////////////////////////////////////
// Weighted round robin

TEST_CASE("priority weight gives better classes more turns") {
    CHECK(priority_weight(0) == 8);
    CHECK(priority_weight(3) == 5);
    CHECK(priority_weight(7) == 1);
    CHECK(priority_weight(12) == 1); // clamped
}

TEST_CASE("wrr serves flows proportionally to weight") {
    WrrScheduler wrr;
    std::vector<FlowId> backlog{1, 2};
    auto weight = [](FlowId f) { return f == 1 ? 3 : 1; };
    std::map<FlowId, int> served;
    for (int i = 0; i < 400; i++) {
        auto pick = wrr.pick(backlog, weight);
        REQUIRE(pick);
        served[*pick]++;
    }
    CHECK(served[1] == 300);
    CHECK(served[2] == 100);
}

TEST_CASE("wrr skips flows without backlog and picks up where it left off") {
    WrrScheduler wrr;
    auto weight = [](FlowId) { return 2; };
    CHECK(*wrr.pick({1, 2}, weight) == 1);
    // Flow 1 drains; the round moves on immediately.
    CHECK(*wrr.pick({2}, weight) == 2);
    CHECK(*wrr.pick({2}, weight) == 2);
    CHECK(*wrr.pick({2}, weight) == 2);
    CHECK(!wrr.pick({}, weight));
}

TEST_CASE("weight changes take effect on the next round") {
    WrrScheduler wrr;
    std::vector<FlowId> backlog{1, 2};
    int w1 = 1;
    auto weight = [&](FlowId f) { return f == 1 ? w1 : 1; };
    std::map<FlowId, int> served;
    for (int i = 0; i < 100; i++) served[*wrr.pick(backlog, weight)]++;
    CHECK(served[1] == 50);
    w1 = 4; // mid-run priority bump
    served.clear();
    for (int i = 0; i < 100; i++) served[*wrr.pick(backlog, weight)]++;
    CHECK(served[1] == 80);
}

////////////////////////////////////////////////////////////////////////////////
// Receiver tracker

TEST_CASE("cumulative point advances over first arrivals") {
    RecvTracker tr;
    CHECK(tr.on_data(0));
    CHECK(tr.cum == 1);
    CHECK(tr.on_data(2)); // gap at 1
    CHECK(tr.cum == 1);
    CHECK(!tr.on_data(2)); // duplicate above cum
    CHECK(tr.on_data(1));
    CHECK(tr.cum == 3);
    CHECK(!tr.on_data(0)); // duplicate below cum
}

TEST_CASE("gaps lists the missing ranges") {
    RecvTracker tr;
    tr.on_data(0);
    tr.on_data(3);
    tr.on_data(4);
    tr.on_data(8);
    auto gaps = tr.gaps();
    REQUIRE(gaps.size() == 2);
    CHECK(gaps[0] == std::pair<uint64_t, uint64_t>{1, 3});
    CHECK(gaps[1] == std::pair<uint64_t, uint64_t>{5, 8});
}

TEST_CASE("skip_to abandons everything below the mark") {
    RecvTracker tr;
    tr.on_data(5); // cum stuck at 0 waiting for 0..4
    CHECK(tr.cum == 0);
    tr.skip_to(5);
    CHECK(tr.cum == 6); // 5 already held, so the drain runs past it
    CHECK(tr.gaps().empty());
}

TEST_CASE("skip_to never moves backwards") {
    RecvTracker tr;
    for (SeqNo s = 0; s < 4; s++) tr.on_data(s);
    tr.skip_to(2);
    CHECK(tr.cum == 4);
}

TEST_CASE("skip then late arrival counts as duplicate") {
    RecvTracker tr;
    tr.skip_to(10);
    CHECK(tr.cum == 10);
    CHECK(!tr.on_data(3)); // sender already abandoned it
    CHECK(tr.on_data(10));
    CHECK(tr.cum == 11);
}
