#include "chainsim/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace chainsim {

EndpointId Scenario::endpoint_id(const std::string& name) const {
    for (const ScenarioEndpoint& e : endpoints)
        if (e.name == name) return e.id;
    throw UnknownTargetError("no endpoint named " + name);
}

const ScenarioChain* Scenario::chain(const std::string& name) const {
    for (const ScenarioChain& c : chains)
        if (c.name == name) return &c;
    return nullptr;
}

const ScenarioFlow* Scenario::flow(FlowId id) const {
    for (const ScenarioFlow& f : flows)
        if (f.id == id) return &f;
    return nullptr;
}

PhysicalTopology Scenario::build_topology() const {
    PhysicalTopology topo;
    for (const ScenarioPop& p : pops) {
        Pop pop;
        pop.id = p.id;
        pop.capacity = p.capacity;
        pop.processing_model = p.processing;
        topo.add_pop(std::move(pop));
    }
    for (const ScenarioLink& l : links) {
        PhysicalLink link;
        link.id = l.id;
        link.a = l.a;
        link.b = l.b;
        link.bandwidth = l.bandwidth;
        link.propagation_delay = l.propagation;
        link.loss_probability = l.loss;
        topo.add_link(std::move(link));
    }
    for (const ScenarioEndpoint& e : endpoints) topo.add_endpoint(e.id, e.pop);
    return topo;
}

ChainSpec Scenario::chain_spec(const ScenarioChain& c) const {
    ChainSpec spec;
    spec.name = c.name;
    spec.app = c.app;
    for (const std::string& s : c.sources) spec.sources.push_back(endpoint_id(s));
    for (const std::string& d : c.destinations) spec.destinations.push_back(endpoint_id(d));
    spec.nfs = c.nfs;
    spec.vlinks = c.vlinks;
    spec.e2e_delay_bound = c.e2e_delay_bound;
    spec.demand = c.demand;
    spec.max_packet_bytes = c.max_packet;
    return spec;
}

FlowRequirement Scenario::flow_requirement(const ScenarioFlow& f) const {
    FlowRequirement r;
    r.flow_id = f.id;
    r.source = endpoint_id(f.src);
    for (const std::string& d : f.dsts) r.destinations.push_back(endpoint_id(d));
    r.min_throughput = f.min_tput;
    r.max_e2e_delay = f.max_delay;
    r.max_loss_ratio = f.max_loss;
    r.reliability = f.reliability;
    r.deadline = f.rel_deadline;
    r.priority = f.priority;
    return r;
}

////////////////////////////////////////////////////////////////////////////////
// Parsing

namespace {

struct Line {
    int no;
    std::vector<std::string> tokens;
};

std::vector<Line> tokenize(const std::string& text) {
    std::vector<Line> out;
    std::istringstream in(text);
    std::string raw;
    int no = 0;
    while (std::getline(in, raw)) {
        no++;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        std::istringstream ls(raw);
        Line l{no, {}};
        std::string tok;
        while (ls >> tok) l.tokens.push_back(tok);
        if (!l.tokens.empty()) out.push_back(std::move(l));
    }
    return out;
}

double parse_num(const std::string& v, int line, const std::string& field) {
    try {
        size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ParseError("expected a number, got '" + v + "'", line, field);
    }
}

uint64_t parse_uint(const std::string& v, int line, const std::string& field) {
    try {
        size_t used = 0;
        if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
        uint64_t u = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw ParseError("expected a non-negative integer, got '" + v + "'", line, field);
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

// key=value pairs after the positional tokens.
std::map<std::string, std::string> kv_pairs(const Line& l, size_t from) {
    std::map<std::string, std::string> out;
    for (size_t i = from; i < l.tokens.size(); i++) {
        const std::string& t = l.tokens[i];
        auto eq = t.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ParseError("expected key=value, got '" + t + "'", l.no, t);
        out[t.substr(0, eq)] = t.substr(eq + 1);
    }
    return out;
}

std::string take(std::map<std::string, std::string>& kv, const std::string& key, int line,
                 bool required = true, const std::string& fallback = "") {
    auto it = kv.find(key);
    if (it == kv.end()) {
        if (required) throw ParseError("missing required key '" + key + "'", line, key);
        return fallback;
    }
    std::string v = it->second;
    kv.erase(it);
    return v;
}

void reject_leftovers(const std::map<std::string, std::string>& kv, int line) {
    if (!kv.empty())
        throw ParseError("unknown key '" + kv.begin()->first + "'", line, kv.begin()->first);
}

} // namespace

Scenario parse_scenario(const std::string& text) {
    Scenario s;
    enum class Sec { global, topology, chain, traffic, faults, monitoring };
    Sec sec = Sec::global;
    ScenarioChain* cur_chain = nullptr;

    for (const Line& l : tokenize(text)) {
        const std::string& head = l.tokens[0];

        if (head.front() == '[') {
            std::string name;
            for (const std::string& t : l.tokens) name += (name.empty() ? "" : " ") + t;
            if (name.front() != '[' || name.back() != ']')
                throw ParseError("malformed section header", l.no, name);
            std::string inner = name.substr(1, name.size() - 2);
            if (inner == "topology") {
                sec = Sec::topology;
            } else if (inner == "traffic") {
                sec = Sec::traffic;
            } else if (inner == "faults") {
                sec = Sec::faults;
            } else if (inner == "monitoring") {
                sec = Sec::monitoring;
            } else if (inner.rfind("chain ", 0) == 0) {
                std::string cname = inner.substr(6);
                if (cname.empty()) throw ParseError("chain section needs a name", l.no, "chain");
                if (s.chain(cname))
                    throw ParseError("duplicate chain '" + cname + "'", l.no, "chain");
                ScenarioChain c;
                c.name = cname;
                c.line = l.no;
                s.chains.push_back(std::move(c));
                cur_chain = &s.chains.back();
                sec = Sec::chain;
            } else {
                throw ParseError("unknown section '" + inner + "'", l.no, inner);
            }
            continue;
        }

        switch (sec) {
        case Sec::global: {
            if (l.tokens.size() != 2)
                throw ParseError("global lines are 'key value'", l.no, head);
            const std::string& v = l.tokens[1];
            if (head == "seed") s.seed = parse_uint(v, l.no, head);
            else if (head == "duration") s.duration = parse_num(v, l.no, head);
            else if (head == "ctrl_rtt") s.ctrl_rtt = parse_num(v, l.no, head);
            else if (head == "instance_boot") s.instance_boot = parse_num(v, l.no, head);
            else if (head == "controller_tick") s.controller_tick = parse_num(v, l.no, head);
            else if (head == "report_window") s.report_window = parse_num(v, l.no, head);
            else if (head == "util_high") s.util_high = parse_num(v, l.no, head);
            else if (head == "util_low") s.util_low = parse_num(v, l.no, head);
            else if (head == "hysteresis") s.hysteresis = int(parse_uint(v, l.no, head));
            else throw ParseError("unknown global key", l.no, head);
            break;
        }

        case Sec::topology: {
            if (head == "pop") {
                if (l.tokens.size() < 2) throw ParseError("pop needs an id", l.no, "pop");
                ScenarioPop p;
                p.id = PopId(parse_uint(l.tokens[1], l.no, "pop id"));
                p.line = l.no;
                for (const ScenarioPop& other : s.pops)
                    if (other.id == p.id)
                        throw SchemaError("duplicate pop id " + std::to_string(p.id), l.no, "pop");
                auto kv = kv_pairs(l, 2);
                p.capacity.cpu = parse_num(take(kv, "cpu", l.no), l.no, "cpu");
                p.capacity.mem = parse_num(take(kv, "mem", l.no, false, "0"), l.no, "mem");
                p.capacity.disk = parse_num(take(kv, "disk", l.no, false, "0"), l.no, "disk");
                for (auto it = kv.begin(); it != kv.end();) {
                    if (it->first.rfind("proc.", 0) == 0) {
                        p.processing[it->first.substr(5)] = parse_num(it->second, l.no, it->first);
                        it = kv.erase(it);
                    } else {
                        ++it;
                    }
                }
                reject_leftovers(kv, l.no);
                s.pops.push_back(std::move(p));
            } else if (head == "link") {
                if (l.tokens.size() < 2) throw ParseError("link needs an id", l.no, "link");
                ScenarioLink k;
                k.id = LinkId(parse_uint(l.tokens[1], l.no, "link id"));
                k.line = l.no;
                for (const ScenarioLink& other : s.links)
                    if (other.id == k.id)
                        throw SchemaError("duplicate link id " + std::to_string(k.id), l.no, "link");
                auto kv = kv_pairs(l, 2);
                auto ends = split(take(kv, "pops", l.no), ',');
                if (ends.size() != 2)
                    throw ParseError("pops must be 'a,b'", l.no, "pops");
                k.a = PopId(parse_uint(ends[0], l.no, "pops"));
                k.b = PopId(parse_uint(ends[1], l.no, "pops"));
                k.bandwidth = parse_num(take(kv, "bw", l.no), l.no, "bw");
                k.propagation = parse_num(take(kv, "prop", l.no), l.no, "prop");
                k.loss = parse_num(take(kv, "loss", l.no, false, "0"), l.no, "loss");
                k.queue_bytes = parse_uint(take(kv, "qcap", l.no, false, "1048576"), l.no, "qcap");
                std::string qd = take(kv, "qdisc", l.no, false, "fifo");
                if (qd == "fifo") k.qdisc = QueueDiscipline::fifo;
                else if (qd == "priority") k.qdisc = QueueDiscipline::strict_priority;
                else throw ParseError("qdisc must be fifo or priority", l.no, "qdisc");
                reject_leftovers(kv, l.no);
                s.links.push_back(std::move(k));
            } else if (head == "endpoint") {
                if (l.tokens.size() < 2) throw ParseError("endpoint needs a name", l.no, "endpoint");
                ScenarioEndpoint e;
                e.name = l.tokens[1];
                e.line = l.no;
                for (const ScenarioEndpoint& other : s.endpoints)
                    if (other.name == e.name)
                        throw SchemaError("duplicate endpoint '" + e.name + "'", l.no, "endpoint");
                e.id = EndpointId(s.endpoints.size() + 1);
                auto kv = kv_pairs(l, 2);
                e.pop = PopId(parse_uint(take(kv, "pop", l.no), l.no, "pop"));
                reject_leftovers(kv, l.no);
                s.endpoints.push_back(std::move(e));
            } else {
                throw ParseError("unknown topology line", l.no, head);
            }
            break;
        }

        case Sec::chain: {
            ScenarioChain& c = *cur_chain;
            if (head == "app") {
                if (l.tokens.size() != 2) throw ParseError("app needs op:local", l.no, "app");
                auto parts = split(l.tokens[1], ':');
                if (parts.size() != 2) throw ParseError("app must be op:local", l.no, "app");
                c.app.operator_id = uint16_t(parse_uint(parts[0], l.no, "app"));
                c.app.local_id = parse_uint(parts[1], l.no, "app");
            } else if (head == "source" || head == "dest") {
                if (l.tokens.size() != 2)
                    throw ParseError(head + " needs an endpoint name", l.no, head);
                (head == "source" ? c.sources : c.destinations).push_back(l.tokens[1]);
            } else if (head == "nf") {
                if (l.tokens.size() < 2) throw ParseError("nf needs a name", l.no, "nf");
                NfSpec f;
                f.name = l.tokens[1];
                if (c.nfs.end() != std::find_if(c.nfs.begin(), c.nfs.end(),
                                                [&](const NfSpec& o) { return o.name == f.name; }))
                    throw SchemaError("duplicate nf '" + f.name + "'", l.no, "nf");
                auto kv = kv_pairs(l, 2);
                std::string kind = take(kv, "kind", l.no);
                auto k = nf_kind_from_name(kind);
                if (!k) throw ParseError("unknown nf kind '" + kind + "'", l.no, "kind");
                f.kind = *k;
                f.per_instance_capacity = parse_num(take(kv, "cap", l.no), l.no, "cap");
                f.per_instance_resources.cpu = parse_num(take(kv, "cpu", l.no, false, "1"), l.no, "cpu");
                f.per_instance_resources.mem =
                    parse_num(take(kv, "mem", l.no, false, "0"), l.no, "mem");
                f.per_instance_resources.disk =
                    parse_num(take(kv, "disk", l.no, false, "0"), l.no, "disk");
                f.per_packet_processing_delay =
                    parse_num(take(kv, "proc", l.no, false, "0"), l.no, "proc");
                // Anything else is a per-kind knob, kept verbatim.
                for (auto& [key, val] : kv) f.config[key] = parse_num(val, l.no, key);
                c.nfs.push_back(std::move(f));
            } else if (head == "vlink") {
                if (l.tokens.size() < 3) throw ParseError("vlink needs from and to", l.no, "vlink");
                ChainVlink v;
                v.from = l.tokens[1];
                v.to = l.tokens[2];
                auto kv = kv_pairs(l, 3);
                v.bandwidth = parse_num(take(kv, "bw", l.no), l.no, "bw");
                v.max_delay = parse_num(take(kv, "prop_max", l.no, false, "0"), l.no, "prop_max");
                reject_leftovers(kv, l.no);
                c.vlinks.push_back(std::move(v));
            } else if (head == "e2e_delay_bound") {
                if (l.tokens.size() != 2) throw ParseError("needs a value", l.no, head);
                c.e2e_delay_bound = parse_num(l.tokens[1], l.no, head);
            } else if (head == "demand") {
                if (l.tokens.size() != 2) throw ParseError("needs a value", l.no, head);
                c.demand = parse_num(l.tokens[1], l.no, head);
            } else if (head == "max_packet") {
                if (l.tokens.size() != 2) throw ParseError("needs a value", l.no, head);
                c.max_packet = uint32_t(parse_uint(l.tokens[1], l.no, head));
            } else if (head == "failover") {
                if (l.tokens.size() != 2) throw ParseError("needs a mode", l.no, head);
                if (l.tokens[1] == "none") c.failover = FailoverMode::none;
                else if (l.tokens[1] == "proactive") c.failover = FailoverMode::proactive;
                else if (l.tokens[1] == "reactive") c.failover = FailoverMode::reactive;
                else throw ParseError("failover must be none|proactive|reactive", l.no, head);
            } else if (head == "objective") {
                if (l.tokens.size() != 2) throw ParseError("needs a value", l.no, head);
                if (l.tokens[1] == "min_delay") c.objective = MapObjective::min_delay;
                else if (l.tokens[1] == "load_balance") c.objective = MapObjective::load_balance;
                else throw ParseError("objective must be min_delay|load_balance", l.no, head);
            } else {
                throw ParseError("unknown chain line", l.no, head);
            }
            break;
        }

        case Sec::traffic: {
            if (head == "flow") {
                if (l.tokens.size() < 2) throw ParseError("flow needs an id", l.no, "flow");
                ScenarioFlow f;
                f.id = FlowId(parse_uint(l.tokens[1], l.no, "flow id"));
                f.line = l.no;
                for (const ScenarioFlow& other : s.flows)
                    if (other.id == f.id)
                        throw SchemaError("duplicate flow id " + std::to_string(f.id), l.no, "flow");
                auto kv = kv_pairs(l, 2);
                f.chain = take(kv, "chain", l.no);
                f.src = take(kv, "src", l.no);
                for (const std::string& d : split(take(kv, "dst", l.no), ','))
                    f.dsts.push_back(d);
                std::string rate = take(kv, "rate", l.no);
                f.rate = rate == "greedy" ? 0.0 : parse_num(rate, l.no, "rate");
                f.size = uint32_t(parse_uint(take(kv, "size", l.no), l.no, "size"));
                f.start = parse_num(take(kv, "start", l.no, false, "0"), l.no, "start");
                f.stop = parse_num(take(kv, "stop", l.no, false, "0"), l.no, "stop");
                f.priority = int(parse_uint(take(kv, "priority", l.no, false, "7"), l.no, "priority"));
                std::string rel = take(kv, "reliability", l.no, false, "none");
                if (rel == "none") f.reliability = Reliability::none;
                else if (rel == "full") f.reliability = Reliability::full;
                else if (rel.rfind("partial:", 0) == 0) {
                    f.reliability = Reliability::partial;
                    f.rel_deadline = parse_num(rel.substr(8), l.no, "reliability");
                } else {
                    throw ParseError("reliability must be none|full|partial:<sec>", l.no,
                                     "reliability");
                }
                f.max_delay = parse_num(take(kv, "max_delay", l.no, false, "0"), l.no, "max_delay");
                f.min_tput = parse_num(take(kv, "min_tput", l.no, false, "0"), l.no, "min_tput");
                f.max_loss = parse_num(take(kv, "max_loss", l.no, false, "1"), l.no, "max_loss");
                std::string tm = take(kv, "transport", l.no, false, "inline");
                if (tm == "inline") f.transport = TransportMode::inline_ta;
                else if (tm == "e2e") f.transport = TransportMode::e2e;
                else throw ParseError("transport must be inline|e2e", l.no, "transport");
                reject_leftovers(kv, l.no);
                s.flows.push_back(std::move(f));
            } else if (head == "onchange") {
                if (l.tokens.size() < 3)
                    throw ParseError("onchange needs time and flow=", l.no, "onchange");
                ScenarioChange ch;
                ch.at = parse_num(l.tokens[1], l.no, "onchange time");
                ch.line = l.no;
                auto kv = kv_pairs(l, 2);
                ch.flow = FlowId(parse_uint(take(kv, "flow", l.no), l.no, "flow"));
                if (kv.empty())
                    throw ParseError("onchange needs at least one change", l.no, "onchange");
                ch.kv = kv;
                s.changes.push_back(std::move(ch));
            } else {
                throw ParseError("unknown traffic line", l.no, head);
            }
            break;
        }

        case Sec::faults: {
            if (head == "fail") {
                if (l.tokens.size() < 3)
                    throw ParseError("fail needs 'link|pop <id>'", l.no, "fail");
                ScenarioFault f;
                f.line = l.no;
                if (l.tokens[1] == "link") f.is_link = true;
                else if (l.tokens[1] == "pop") f.is_link = false;
                else throw ParseError("fail target must be link or pop", l.no, "fail");
                f.target = uint32_t(parse_uint(l.tokens[2], l.no, "fail target"));
                auto kv = kv_pairs(l, 3);
                f.at = parse_num(take(kv, "at", l.no), l.no, "at");
                f.duration = parse_num(take(kv, "duration", l.no), l.no, "duration");
                reject_leftovers(kv, l.no);
                s.faults.push_back(std::move(f));
            } else if (head == "lose") {
                ScenarioLoss x;
                x.line = l.no;
                auto kv = kv_pairs(l, 1);
                x.flow = FlowId(parse_uint(take(kv, "flow", l.no), l.no, "flow"));
                x.link = LinkId(parse_uint(take(kv, "link", l.no), l.no, "link"));
                std::string seq = take(kv, "seq", l.no, false, "");
                std::string every = take(kv, "every", l.no, false, "");
                if (!seq.empty() && !every.empty())
                    throw ParseError("seq and every are exclusive", l.no, "lose");
                if (seq == "last") x.last = true;
                else if (!seq.empty()) x.seq = parse_uint(seq, l.no, "seq");
                else if (!every.empty()) {
                    x.every = parse_uint(every, l.no, "every");
                    if (x.every == 0) throw ParseError("every must be positive", l.no, "every");
                    x.from = parse_uint(take(kv, "start", l.no, false, "0"), l.no, "start");
                    x.count = parse_uint(take(kv, "count", l.no, false, "0"), l.no, "count");
                } else {
                    throw ParseError("lose needs seq= or every=", l.no, "lose");
                }
                reject_leftovers(kv, l.no);
                s.losses.push_back(std::move(x));
            } else {
                throw ParseError("unknown faults line", l.no, head);
            }
            break;
        }

        case Sec::monitoring: {
            if (head != "sample") throw ParseError("unknown monitoring line", l.no, head);
            if (l.tokens.size() < 3)
                throw ParseError("sample needs 'link|pop <id>'", l.no, "sample");
            ScenarioMonitor m;
            m.line = l.no;
            if (l.tokens[1] == "link") m.is_link = true;
            else if (l.tokens[1] == "pop") m.is_link = false;
            else throw ParseError("sample target must be link or pop", l.no, "sample");
            m.target = uint32_t(parse_uint(l.tokens[2], l.no, "sample target"));
            auto kv = kv_pairs(l, 3);
            m.metric = take(kv, "metric", l.no, false, "utilization");
            m.period = parse_num(take(kv, "period", l.no), l.no, "period");
            if (m.period <= 0.0) throw ParseError("period must be positive", l.no, "period");
            reject_leftovers(kv, l.no);
            s.monitors.push_back(std::move(m));
        }
        }
    }

    ////////////////////////////////////////////////////////////////////////////
    // Cross-reference validation, with the declaring line in every message.

    auto pop_exists = [&](PopId id) {
        for (const ScenarioPop& p : s.pops)
            if (p.id == id) return true;
        return false;
    };
    auto link_exists = [&](LinkId id) {
        for (const ScenarioLink& l : s.links)
            if (l.id == id) return true;
        return false;
    };
    auto endpoint_exists = [&](const std::string& n) {
        for (const ScenarioEndpoint& e : s.endpoints)
            if (e.name == n) return true;
        return false;
    };

    if (s.duration <= 0.0) throw SchemaError("duration must be positive", 0, "duration");
    for (const ScenarioLink& l : s.links) {
        if (!pop_exists(l.a) || !pop_exists(l.b))
            throw SchemaError("link " + std::to_string(l.id) + " references unknown pop", l.line,
                              "pops");
        if (l.bandwidth <= 0.0) throw SchemaError("link bandwidth must be positive", l.line, "bw");
        if (l.loss < 0.0 || l.loss > 1.0)
            throw SchemaError("link loss must be in [0,1]", l.line, "loss");
    }
    for (const ScenarioEndpoint& e : s.endpoints)
        if (!pop_exists(e.pop))
            throw SchemaError("endpoint '" + e.name + "' references unknown pop", e.line, "pop");

    std::set<uint64_t> app_ids;
    for (const ScenarioChain& c : s.chains) {
        for (const std::string& src : c.sources)
            if (!endpoint_exists(src))
                throw SchemaError("chain '" + c.name + "' source '" + src + "' is unknown", c.line,
                                  "source");
        for (const std::string& dst : c.destinations)
            if (!endpoint_exists(dst))
                throw SchemaError("chain '" + c.name + "' dest '" + dst + "' is unknown", c.line,
                                  "dest");
        for (const ChainVlink& v : c.vlinks) {
            auto known = [&](const std::string& n) {
                for (const NfSpec& f : c.nfs)
                    if (f.name == n) return true;
                return false;
            };
            if (!known(v.from))
                throw SchemaError("vlink references unknown nf '" + v.from + "'", c.line, "vlink");
            if (!known(v.to))
                throw SchemaError("vlink references unknown nf '" + v.to + "'", c.line, "vlink");
        }
        if (!app_ids.insert(c.app.pack()).second)
            throw SchemaError("duplicate app id " + c.app.str(), c.line, "app");
        // Full structural check (assistant placement, DAG shape).
        try {
            s.chain_spec(c).check();
        } catch (const InvalidSpecError& e) {
            throw SchemaError(e.what(), c.line, "chain");
        }
    }
    for (const ScenarioFlow& f : s.flows) {
        const ScenarioChain* c = s.chain(f.chain);
        if (!c)
            throw SchemaError("flow " + std::to_string(f.id) + " references unknown chain '" +
                                  f.chain + "'",
                              f.line, "chain");
        if (!endpoint_exists(f.src))
            throw SchemaError("flow " + std::to_string(f.id) + " source is unknown", f.line, "src");
        for (const std::string& d : f.dsts)
            if (!endpoint_exists(d))
                throw SchemaError("flow " + std::to_string(f.id) + " dest '" + d + "' is unknown",
                                  f.line, "dst");
        if (f.rate < 0.0) throw SchemaError("rate must be >= 0", f.line, "rate");
        if (f.rate == 0.0 && f.transport != TransportMode::e2e)
            throw SchemaError("greedy rate requires transport=e2e", f.line, "rate");
        if (f.priority < 0 || f.priority > 7)
            throw SchemaError("priority must be 0..7", f.line, "priority");
        try {
            s.flow_requirement(f).check();
        } catch (const InvalidSpecError& e) {
            throw SchemaError(e.what(), f.line, "flow");
        }
    }
    for (const ScenarioChange& ch : s.changes)
        if (!s.flow(ch.flow))
            throw SchemaError("onchange references unknown flow " + std::to_string(ch.flow),
                              ch.line, "flow");
    for (const ScenarioFault& f : s.faults) {
        bool ok = f.is_link ? link_exists(f.target) : pop_exists(f.target);
        if (!ok)
            throw SchemaError("fault references unknown " + std::string(f.is_link ? "link" : "pop"),
                              f.line, "fail");
        if (f.at < 0.0) throw SchemaError("fault time must be >= 0", f.line, "at");
    }
    for (const ScenarioLoss& x : s.losses) {
        if (!s.flow(x.flow))
            throw SchemaError("lose references unknown flow " + std::to_string(x.flow), x.line,
                              "flow");
        if (!link_exists(x.link))
            throw SchemaError("lose references unknown link " + std::to_string(x.link), x.line,
                              "link");
    }
    for (const ScenarioMonitor& m : s.monitors) {
        bool ok = m.is_link ? link_exists(m.target) : pop_exists(m.target);
        if (!ok)
            throw SchemaError("sample references unknown " +
                                  std::string(m.is_link ? "link" : "pop"),
                              m.line, "sample");
    }
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file '" + path + "'", 0, "file");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

////////////////////////////////////////////////////////////////////////////////
// Emission

namespace {

// Shortest-round-trip double formatting so emit/parse is lossless.
std::string num(double v) {
    char buf[64];
    snprintf(buf, sizeof(buf), "%.17g", v);
    double back;
    sscanf(buf, "%lf", &back);
    if (back == v) {
        for (int prec = 1; prec <= 16; prec++) {
            char shorter[64];
            snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
            sscanf(shorter, "%lf", &back);
            if (back == v) return shorter;
        }
    }
    return buf;
}

} // namespace

std::string Scenario::emit() const {
    std::ostringstream o;
    o << "seed " << seed << "\n";
    o << "duration " << num(duration) << "\n";
    o << "ctrl_rtt " << num(ctrl_rtt) << "\n";
    o << "instance_boot " << num(instance_boot) << "\n";
    o << "controller_tick " << num(controller_tick) << "\n";
    if (report_window != 0.0) o << "report_window " << num(report_window) << "\n";
    o << "util_high " << num(util_high) << "\n";
    o << "util_low " << num(util_low) << "\n";
    o << "hysteresis " << hysteresis << "\n";

    o << "\n[topology]\n";
    for (const ScenarioPop& p : pops) {
        o << "pop " << p.id << " cpu=" << num(p.capacity.cpu) << " mem=" << num(p.capacity.mem)
          << " disk=" << num(p.capacity.disk);
        for (const auto& [k, v] : p.processing) o << " proc." << k << "=" << num(v);
        o << "\n";
    }
    for (const ScenarioLink& l : links) {
        o << "link " << l.id << " pops=" << l.a << "," << l.b << " bw=" << num(l.bandwidth)
          << " prop=" << num(l.propagation);
        if (l.loss != 0.0) o << " loss=" << num(l.loss);
        if (l.queue_bytes != (1u << 20)) o << " qcap=" << l.queue_bytes;
        if (l.qdisc != QueueDiscipline::fifo) o << " qdisc=priority";
        o << "\n";
    }
    for (const ScenarioEndpoint& e : endpoints)
        o << "endpoint " << e.name << " pop=" << e.pop << "\n";

    for (const ScenarioChain& c : chains) {
        o << "\n[chain " << c.name << "]\n";
        o << "app " << c.app.operator_id << ":" << (c.app.local_id & AppId::kLocalMask) << "\n";
        for (const std::string& src : c.sources) o << "source " << src << "\n";
        for (const std::string& dst : c.destinations) o << "dest " << dst << "\n";
        for (const NfSpec& f : c.nfs) {
            o << "nf " << f.name << " kind=" << nf_kind_name(f.kind)
              << " cap=" << num(f.per_instance_capacity)
              << " cpu=" << num(f.per_instance_resources.cpu)
              << " mem=" << num(f.per_instance_resources.mem)
              << " disk=" << num(f.per_instance_resources.disk)
              << " proc=" << num(f.per_packet_processing_delay);
            for (const auto& [k, v] : f.config) o << " " << k << "=" << num(v);
            o << "\n";
        }
        for (const ChainVlink& v : c.vlinks) {
            o << "vlink " << v.from << " " << v.to << " bw=" << num(v.bandwidth);
            if (v.max_delay != 0.0) o << " prop_max=" << num(v.max_delay);
            o << "\n";
        }
        o << "demand " << num(c.demand) << "\n";
        if (c.e2e_delay_bound != 0.0) o << "e2e_delay_bound " << num(c.e2e_delay_bound) << "\n";
        if (c.max_packet != 1500) o << "max_packet " << c.max_packet << "\n";
        if (c.failover != FailoverMode::none)
            o << "failover "
              << (c.failover == FailoverMode::proactive ? "proactive" : "reactive") << "\n";
        if (c.objective != MapObjective::min_delay) o << "objective load_balance\n";
    }

    if (!flows.empty() || !changes.empty()) {
        o << "\n[traffic]\n";
        for (const ScenarioFlow& f : flows) {
            o << "flow " << f.id << " chain=" << f.chain << " src=" << f.src << " dst=";
            for (size_t i = 0; i < f.dsts.size(); i++) o << (i ? "," : "") << f.dsts[i];
            o << (f.rate == 0.0 ? std::string(" rate=greedy") : " rate=" + num(f.rate));
            o << " size=" << f.size;
            if (f.start != 0.0) o << " start=" << num(f.start);
            if (f.stop != 0.0) o << " stop=" << num(f.stop);
            if (f.priority != 7) o << " priority=" << f.priority;
            if (f.reliability == Reliability::full) o << " reliability=full";
            else if (f.reliability == Reliability::partial)
                o << " reliability=partial:" << num(f.rel_deadline);
            if (f.max_delay != 0.0) o << " max_delay=" << num(f.max_delay);
            if (f.min_tput != 0.0) o << " min_tput=" << num(f.min_tput);
            if (f.max_loss != 1.0) o << " max_loss=" << num(f.max_loss);
            if (f.transport == TransportMode::e2e) o << " transport=e2e";
            o << "\n";
        }
        for (const ScenarioChange& ch : changes) {
            o << "onchange " << num(ch.at) << " flow=" << ch.flow;
            for (const auto& [k, v] : ch.kv) o << " " << k << "=" << v;
            o << "\n";
        }
    }

    if (!faults.empty() || !losses.empty()) {
        o << "\n[faults]\n";
        for (const ScenarioFault& f : faults)
            o << "fail " << (f.is_link ? "link " : "pop ") << f.target << " at=" << num(f.at)
              << " duration=" << num(f.duration) << "\n";
        for (const ScenarioLoss& x : losses) {
            o << "lose flow=" << x.flow << " link=" << x.link;
            if (x.last) o << " seq=last";
            else if (x.every == 0) o << " seq=" << x.seq;
            else {
                o << " every=" << x.every;
                if (x.from != 0) o << " start=" << x.from;
                if (x.count != 0) o << " count=" << x.count;
            }
            o << "\n";
        }
    }

    if (!monitors.empty()) {
        o << "\n[monitoring]\n";
        for (const ScenarioMonitor& m : monitors)
            o << "sample " << (m.is_link ? "link " : "pop ") << m.target << " metric=" << m.metric
              << " period=" << num(m.period) << "\n";
    }
    return o.str();
}

} // namespace chainsim
