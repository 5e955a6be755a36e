/**
 * @file comms.hpp
 * @brief Subdomain communication: weighted communication graph, greedy round
 *        scheduling, dofmaps and a round-based point-to-point exchange engine
 *        built on in-process mailboxes.
 *
 * Graph nodes and schedule entries use subdomain ids 1..I; worker and buffer
 * indices inside the engine are 0-based (worker = id - 1).
 */
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "dsdg/dg_space.hpp"
#include "dsdg/layout.hpp"

namespace dsdg {

struct CommEdge {
    std::size_t i = 0;  ///< smaller endpoint
    std::size_t j = 0;
    std::size_t weight = 0;
    friend bool operator==(const CommEdge&, const CommEdge&) = default;
};

struct CommGraph {
    std::size_t nodes = 0;
    std::vector<CommEdge> edges;

    /// Validates ids in 1..nodes, no self-loops, no duplicates, weight ≥ 1.
    static CommGraph make(std::size_t nodes, std::vector<CommEdge> edges);
    std::vector<std::size_t> degrees() const;  ///< indexed by node id (entry 0 unused)
    std::size_t max_degree() const;
};

struct CommSchedule {
    std::vector<std::vector<CommEdge>> rounds;
    std::size_t num_edges() const;
};

/// Edges sorted by the larger endpoint degree (descending), then by weight
/// (descending), then lexicographically by (i, j). Round r takes every
/// remaining edge, in sorted order, whose endpoints are still free in r.
CommSchedule greedy_schedule(const CommGraph& graph);

/// Empty string if the rounds are matchings covering each edge exactly once.
std::string check_schedule(const CommGraph& graph, const CommSchedule& schedule);

/// One round per line: "1: (3,5,130), (2,4,90)".
std::string format_schedule(const CommSchedule& schedule);
/// Accepts the format above; the "r:" prefix and commas between tuples are optional.
CommSchedule parse_schedule(const std::string& text);
/// Edge list, one "i j M" per line, '#' starts a comment. Node count is the largest id.
CommGraph parse_graph(const std::string& text);
CommGraph read_graph_file(const std::string& path);

/// Local dof → global dof for a context's cells, enumerated block-wise in
/// ascending cell order.
using DofMap = std::vector<std::size_t>;
DofMap build_dofmap(const CellSet& cells, const BrokenSpace& space);

/// Cells owned by subdomain `from` whose values subdomain `to` needs in its
/// overlapped or prediction context: (Ω_to^ℓ ∪ P_to) ∩ Ω_from.
CellSet transfer_cells(const SubdomainLayout& layout, std::size_t from, std::size_t to);

/// Edges between subdomains with non-empty overlap and a non-empty transfer;
/// weight = scalar values of one component moved in both directions.
CommGraph build_comm_graph(const SubdomainLayout& layout, const BrokenSpace& space);

// ---------------------------------------------------------------------------
// exchange engine

enum class Component : std::uint8_t { U = 0, V = 1 };

struct Message {
    std::size_t from = 0;  ///< worker index
    std::size_t to = 0;
    std::size_t round = 0;
    Component tag = Component::U;
    std::vector<double> payload;
};

class Mailbox {
public:
    void post(Message m);
    /// Blocks until a message from `from` with matching round/tag arrives.
    /// Throws DeadlockError after `timeout`.
    Message receive(std::size_t from, std::size_t round, Component tag, std::chrono::milliseconds timeout);

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<Message> queue_;
};

/// Position inside one of a worker's buffers.
struct Slot {
    std::uint32_t buffer = 0;
    std::size_t index = 0;
};

/// One directed message of a pair: values read from `pack` slots of the
/// sender; payload entry k written to every slot listed for k in `unpack`.
struct TransferDescriptor {
    std::size_t from = 0;  ///< worker index
    std::size_t to = 0;
    Component tag = Component::U;
    std::vector<Slot> pack;
    std::vector<std::pair<std::size_t, Slot>> unpack;
};

struct DeliveryRecord {
    std::size_t round;
    std::size_t from;
    std::size_t to;
    Component tag;
    std::size_t values;
};

struct EngineOptions {
    bool threaded = false;  ///< one thread per worker with blocking mailboxes
    std::chrono::milliseconds watchdog{30000};
};

class ExchangeEngine {
public:
    /// Throws ProtocolError if a descriptor's pair is not in the schedule or
    /// its unpack list references payload entries beyond its pack list.
    ExchangeEngine(std::size_t workers, CommSchedule schedule, std::vector<TransferDescriptor> descriptors,
                   EngineOptions options = {});

    using WorkerBuffers = std::vector<std::span<double>>;
    /// Executes every round in order. `buffers[w]` are worker w's buffers.
    void run(std::vector<WorkerBuffers>& buffers);

    const CommSchedule& schedule() const { return schedule_; }
    const std::vector<DeliveryRecord>& log() const { return log_; }
    void clear_log() { log_.clear(); }
    /// Bytes moved by one run.
    std::size_t bytes_per_exchange() const;

private:
    Message pack(const TransferDescriptor& d, std::size_t round, const WorkerBuffers& src) const;
    void unpack(const TransferDescriptor& d, const Message& m, WorkerBuffers& dst) const;
    void run_serial(std::vector<WorkerBuffers>& buffers);
    void run_threaded(std::vector<WorkerBuffers>& buffers);

    std::size_t workers_;
    CommSchedule schedule_;
    std::vector<TransferDescriptor> descriptors_;
    EngineOptions options_;
    // per round, per worker: partner worker or npos
    std::vector<std::vector<std::size_t>> partner_;
    std::vector<std::vector<std::size_t>> outgoing_;  // worker → descriptor indices it sends
    std::vector<DeliveryRecord> log_;
    std::mutex log_mutex_;
};

}  // namespace dsdg
