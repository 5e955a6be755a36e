#include "dsdg/comms.hpp"

#include <algorithm>
#include <barrier>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "dsdg/errors.hpp"

namespace dsdg {

CommGraph CommGraph::make(std::size_t nodes, std::vector<CommEdge> edges) {
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (CommEdge& e : edges) {
        if (e.i > e.j) std::swap(e.i, e.j);
        if (e.i == e.j) throw ConfigError("self-loop at node " + std::to_string(e.i));
        if (e.i < 1 || e.j > nodes) throw ConfigError("edge node id out of range");
        if (e.weight < 1) throw ConfigError("edge weight must be at least 1");
        if (!seen.emplace(e.i, e.j).second) {
            throw ConfigError("duplicate edge (" + std::to_string(e.i) + "," + std::to_string(e.j) + ")");
        }
    }
    CommGraph g;
    g.nodes = nodes;
    g.edges = std::move(edges);
    return g;
}

std::vector<std::size_t> CommGraph::degrees() const {
    std::vector<std::size_t> d(nodes + 1, 0);
    for (const CommEdge& e : edges) {
        ++d[e.i];
        ++d[e.j];
    }
    return d;
}

std::size_t CommGraph::max_degree() const {
    const auto d = degrees();
    return d.empty() ? 0 : *std::max_element(d.begin(), d.end());
}

std::size_t CommSchedule::num_edges() const {
    std::size_t n = 0;
    for (const auto& r : rounds) n += r.size();
    return n;
}

CommSchedule greedy_schedule(const CommGraph& graph) {
    const auto degree = graph.degrees();
    std::vector<CommEdge> sorted = graph.edges;
    auto key_degree = [&](const CommEdge& e) { return std::max(degree[e.i], degree[e.j]); };
    std::sort(sorted.begin(), sorted.end(), [&](const CommEdge& a, const CommEdge& b) {
        if (key_degree(a) != key_degree(b)) return key_degree(a) > key_degree(b);
        if (a.weight != b.weight) return a.weight > b.weight;
        return std::tie(a.i, a.j) < std::tie(b.i, b.j);
    });

    CommSchedule schedule;
    std::vector<char> busy(graph.nodes + 1, 0);
    while (!sorted.empty()) {
        std::fill(busy.begin(), busy.end(), 0);
        std::vector<CommEdge> round, rest;
        for (const CommEdge& e : sorted) {
            if (!busy[e.i] && !busy[e.j]) {
                busy[e.i] = busy[e.j] = 1;
                round.push_back(e);
            } else {
                rest.push_back(e);
            }
        }
        schedule.rounds.push_back(std::move(round));
        sorted = std::move(rest);
    }
    return schedule;
}

std::string check_schedule(const CommGraph& graph, const CommSchedule& schedule) {
    std::multiset<std::pair<std::size_t, std::size_t>> scheduled;
    for (std::size_t r = 0; r < schedule.rounds.size(); ++r) {
        std::set<std::size_t> nodes;
        for (const CommEdge& e : schedule.rounds[r]) {
            if (!nodes.insert(e.i).second || !nodes.insert(e.j).second) {
                return "round " + std::to_string(r + 1) + " uses a node twice";
            }
            scheduled.emplace(std::min(e.i, e.j), std::max(e.i, e.j));
        }
    }
    std::multiset<std::pair<std::size_t, std::size_t>> expected;
    for (const CommEdge& e : graph.edges) expected.emplace(std::min(e.i, e.j), std::max(e.i, e.j));
    if (scheduled != expected) return "scheduled edges differ from graph edges";
    return {};
}

std::string format_schedule(const CommSchedule& schedule) {
    std::ostringstream out;
    for (std::size_t r = 0; r < schedule.rounds.size(); ++r) {
        out << r + 1 << ':';
        for (std::size_t k = 0; k < schedule.rounds[r].size(); ++k) {
            const CommEdge& e = schedule.rounds[r][k];
            out << (k ? ", " : " ") << '(' << e.i << ',' << e.j << ',' << e.weight << ')';
        }
        out << '\n';
    }
    return out.str();
}

CommSchedule parse_schedule(const std::string& text) {
    CommSchedule schedule;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto colon = line.find(':');
        const auto paren = line.find('(');
        std::string body = colon != std::string::npos && (paren == std::string::npos || colon < paren)
                               ? line.substr(colon + 1)
                               : line;
        std::vector<CommEdge> round;
        std::size_t pos = 0;
        while ((pos = body.find('(', pos)) != std::string::npos) {
            const auto close = body.find(')', pos);
            if (close == std::string::npos) throw ParseError("unterminated tuple", number);
            std::string tuple = body.substr(pos + 1, close - pos - 1);
            std::replace(tuple.begin(), tuple.end(), ',', ' ');
            std::istringstream ts(tuple);
            CommEdge e;
            if (!(ts >> e.i >> e.j >> e.weight)) throw ParseError("malformed tuple '(" + tuple + ")'", number);
            round.push_back(e);
            pos = close + 1;
        }
        if (round.empty()) throw ParseError("round without tuples", number);
        schedule.rounds.push_back(std::move(round));
    }
    return schedule;
}

CommGraph parse_graph(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0, nodes = 0;
    std::vector<CommEdge> edges;
    while (std::getline(in, line)) {
        ++number;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        CommEdge e;
        if (!(ls >> e.i)) continue;
        if (!(ls >> e.j >> e.weight)) throw ParseError("expected 'i j M'", number);
        nodes = std::max({nodes, e.i, e.j});
        edges.push_back(e);
    }
    return CommGraph::make(nodes, std::move(edges));
}

CommGraph read_graph_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open graph file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_graph(ss.str());
}

DofMap build_dofmap(const CellSet& cells, const BrokenSpace& space) {
    const std::size_t n = space.dofs_per_cell();
    DofMap map;
    map.reserve(cells.size() * n);
    for (std::size_t c : cells)
        for (std::size_t k = 0; k < n; ++k) map.push_back(space.block(c) + k);
    return map;
}

CellSet transfer_cells(const SubdomainLayout& layout, std::size_t from, std::size_t to) {
    const Subdomain& dst = layout.subdomains[to];
    return set_intersection(set_union(dst.overlapped, dst.prediction), layout.subdomains[from].owned);
}

CommGraph build_comm_graph(const SubdomainLayout& layout, const BrokenSpace& space) {
    std::vector<CommEdge> edges;
    for (const auto& [key, cells] : layout.overlaps) {
        const auto [i, j] = key;
        const std::size_t values =
            (transfer_cells(layout, i, j).size() + transfer_cells(layout, j, i).size()) * space.dofs_per_cell();
        if (values > 0) edges.push_back({i + 1, j + 1, values});
    }
    return CommGraph::make(layout.count(), std::move(edges));
}

void Mailbox::post(Message m) {
    {
        std::lock_guard lock(mutex_);
        queue_.push_back(std::move(m));
    }
    cv_.notify_all();
}

Message Mailbox::receive(std::size_t from, std::size_t round, Component tag, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    std::deque<Message>::iterator it;
    auto match = [&] {
        it = std::find_if(queue_.begin(), queue_.end(), [&](const Message& m) {
            return m.from == from && m.round == round && m.tag == tag;
        });
        return it != queue_.end();
    };
    if (!cv_.wait_for(lock, timeout, match)) {
        throw DeadlockError("no message from worker " + std::to_string(from) + " in round " +
                            std::to_string(round + 1) + " within " + std::to_string(timeout.count()) + " ms");
    }
    Message m = std::move(*it);
    queue_.erase(it);
    return m;
}

ExchangeEngine::ExchangeEngine(std::size_t workers, CommSchedule schedule, std::vector<TransferDescriptor> descriptors,
                               EngineOptions options)
    : workers_(workers), schedule_(std::move(schedule)), descriptors_(std::move(descriptors)), options_(options) {
    partner_.assign(schedule_.rounds.size(), std::vector<std::size_t>(workers_, npos));
    std::set<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t r = 0; r < schedule_.rounds.size(); ++r) {
        for (const CommEdge& e : schedule_.rounds[r]) {
            if (e.i < 1 || e.j < 1 || e.i > workers_ || e.j > workers_) {
                throw ProtocolError("schedule references subdomain outside 1.." + std::to_string(workers_));
            }
            const std::size_t a = e.i - 1, b = e.j - 1;
            if (partner_[r][a] != npos || partner_[r][b] != npos) {
                throw ProtocolError("round " + std::to_string(r + 1) + " is not a matching");
            }
            partner_[r][a] = b;
            partner_[r][b] = a;
            pairs.emplace(std::min(a, b), std::max(a, b));
        }
    }
    outgoing_.assign(workers_, {});
    for (std::size_t k = 0; k < descriptors_.size(); ++k) {
        const TransferDescriptor& d = descriptors_[k];
        const std::string name = "(" + std::to_string(d.from + 1) + "," + std::to_string(d.to + 1) + ")";
        if (d.from >= workers_ || d.to >= workers_ || d.from == d.to) throw ProtocolError("invalid pair " + name);
        if (!pairs.count({std::min(d.from, d.to), std::max(d.from, d.to)})) {
            throw ProtocolError("incomplete exchange: pair " + name + " is missing from the schedule");
        }
        for (const auto& [pos, slot] : d.unpack) {
            if (pos >= d.pack.size()) throw ProtocolError("payload length mismatch for pair " + name);
        }
        outgoing_[d.from].push_back(k);
    }
}

std::size_t ExchangeEngine::bytes_per_exchange() const {
    std::size_t bytes = 0;
    for (const TransferDescriptor& d : descriptors_) bytes += d.pack.size() * sizeof(double);
    return bytes;
}

Message ExchangeEngine::pack(const TransferDescriptor& d, std::size_t round, const WorkerBuffers& src) const {
    Message m;
    m.from = d.from;
    m.to = d.to;
    m.round = round;
    m.tag = d.tag;
    m.payload.resize(d.pack.size());
    for (std::size_t k = 0; k < d.pack.size(); ++k) m.payload[k] = src[d.pack[k].buffer][d.pack[k].index];
    return m;
}

void ExchangeEngine::unpack(const TransferDescriptor& d, const Message& m, WorkerBuffers& dst) const {
    if (m.payload.size() != d.pack.size()) {
        throw ProtocolError("payload length mismatch for pair (" + std::to_string(d.from + 1) + "," +
                            std::to_string(d.to + 1) + "): got " + std::to_string(m.payload.size()) + ", expected " +
                            std::to_string(d.pack.size()));
    }
    for (const auto& [pos, slot] : d.unpack) dst[slot.buffer][slot.index] = m.payload[pos];
}

void ExchangeEngine::run(std::vector<WorkerBuffers>& buffers) {
    if (buffers.size() != workers_) throw ProtocolError("buffer count does not match worker count");
    if (options_.threaded && workers_ > 1) {
        run_threaded(buffers);
    } else {
        run_serial(buffers);
    }
}

void ExchangeEngine::run_serial(std::vector<WorkerBuffers>& buffers) {
    std::vector<Mailbox> mailbox(workers_);
    for (std::size_t r = 0; r < schedule_.rounds.size(); ++r) {
        for (const CommEdge& e : schedule_.rounds[r]) {
            const std::size_t a = e.i - 1, b = e.j - 1;
            for (std::size_t w : {a, b})
                for (std::size_t k : outgoing_[w])
                    if (descriptors_[k].to == partner_[r][w]) mailbox[descriptors_[k].to].post(pack(descriptors_[k], r, buffers[w]));
            for (std::size_t w : {a, b}) {
                const std::size_t p = partner_[r][w];
                for (std::size_t k : outgoing_[p]) {
                    const TransferDescriptor& d = descriptors_[k];
                    if (d.to != w) continue;
                    Message m = mailbox[w].receive(p, r, d.tag, options_.watchdog);
                    unpack(d, m, buffers[w]);
                    log_.push_back({r, p, w, d.tag, m.payload.size()});
                }
            }
        }
    }
}

void ExchangeEngine::run_threaded(std::vector<WorkerBuffers>& buffers) {
    std::vector<Mailbox> mailbox(workers_);
    std::barrier sync(static_cast<std::ptrdiff_t>(workers_));
    std::vector<std::exception_ptr> errors(workers_);
    auto worker = [&](std::size_t w) {
        for (std::size_t r = 0; r < schedule_.rounds.size(); ++r) {
            const std::size_t p = partner_[r][w];
            if (p != npos && !errors[w]) {
                try {
                    for (std::size_t k : outgoing_[w])
                        if (descriptors_[k].to == p) mailbox[p].post(pack(descriptors_[k], r, buffers[w]));
                    for (std::size_t k : outgoing_[p]) {
                        const TransferDescriptor& d = descriptors_[k];
                        if (d.to != w) continue;
                        Message m = mailbox[w].receive(p, r, d.tag, options_.watchdog);
                        unpack(d, m, buffers[w]);
                        std::lock_guard lock(log_mutex_);
                        log_.push_back({r, p, w, d.tag, m.payload.size()});
                    }
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            }
            sync.arrive_and_wait();
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(workers_);
    for (std::size_t w = 0; w < workers_; ++w) threads.emplace_back(worker, w);
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace dsdg
