#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace qufleet {

struct FleetWorker {
    std::string worker_id;
    std::uint32_t max_qubits = 0;
};

struct ManagerConfig {
    std::vector<FleetWorker> fleet;          // statically known workers, active from init
    std::int64_t heartbeat_period_ms = 5000; // P
    bool allow_exact_fit = false;            // candidate filter uses AR >= D instead of AR > D
};

// Per-worker qubit ledger. available() is derived, never stored, so
// AR == MR - OR holds at every observable instant.
struct WorkerRecord {
    std::string worker_id;
    std::uint32_t max_qubits = 0;                 // MR
    std::uint32_t occupied = 0;                   // OR == sum of active demands
    double cru = 0.0;                             // classical resource usage in [0, 1]
    std::int64_t cru_at = 0;                      // sample time
    std::int64_t last_heartbeat = 0;
    bool quarantined = false;                     // inconsistent report; no new work until a clean heartbeat
    std::map<std::string, std::uint32_t> active;  // circuit_id -> demand, the manager's view
    std::map<std::string, std::uint32_t> reported_only;  // worker-reported circuits we never assigned

    std::uint32_t available() const { return max_qubits - occupied; }
};

struct Assignment {
    std::string circuit_id;
    std::string worker_id;
};

enum class SubmitDisposition : std::uint8_t { Assigned, Queued, Cached, DuplicateInFlight };

struct SubmitOutcome {
    SubmitDisposition disposition = SubmitDisposition::Queued;
    std::string worker_id;      // Assigned
    double cached_fidelity = 0; // Cached
};

struct CompleteOutcome {
    bool accepted = false;           // false: unknown or already-completed circuit (dropped)
    std::string client_id;           // owner to notify when accepted
    std::vector<Assignment> unblocked;
};

struct FailureOutcome {
    bool accepted = false;
    std::string client_id;
    std::vector<Assignment> unblocked;
};

struct EvictionOutcome {
    std::vector<std::string> evicted;
    std::vector<Assignment> reassigned;
};

// The scheduling state machine: registry, heartbeat ledger, failure
// eviction, and qubit/CRU-aware placement. Time is always injected, so a
// scripted virtual clock replays byte-identically. Not thread-safe; callers
// serialize mutations (ManagerServer funnels everything through one mutex).
class ManagerCore {
public:
    ManagerCore(ManagerConfig config, std::int64_t now_ms);

    // Every mutation appends canonical lines to the event log. Registration
    // rescans the queue immediately; nullopt means the id is already active.
    std::optional<std::vector<Assignment>> register_worker(const std::string& worker_id,
                                                           std::uint32_t max_qubits, double cru,
                                                           std::int64_t now_ms);

    // OR is refolded from the report plus the manager's optimistic in-flight
    // set; a report whose demands cannot fit MR quarantines the worker until
    // the next consistent heartbeat. Unknown workers are ignored.
    std::vector<Assignment> on_heartbeat(const std::string& worker_id,
                                         const std::vector<std::pair<std::string, std::uint32_t>>& active,
                                         double cru, std::int64_t now_ms);

    // Workers silent for more than three heartbeat periods are evicted and
    // their in-flight circuits re-enqueued at the queue head in original
    // submission order.
    EvictionOutcome detect_failures(std::int64_t now_ms);

    // Immediate eviction when a worker's transport drops (same re-enqueue path).
    EvictionOutcome disconnect_worker(const std::string& worker_id, std::int64_t now_ms);

    SubmitOutcome submit(const std::string& circuit_id, std::uint32_t demand,
                         const std::string& client_id, std::string payload, std::int64_t now_ms,
                         std::optional<std::uint64_t> shots = std::nullopt,
                         std::optional<std::uint64_t> seed = std::nullopt);

    CompleteOutcome complete(const std::string& circuit_id, const std::string& worker_id,
                             double fidelity, std::int64_t now_ms);

    // Worker-side execution failure: the circuit leaves the ledger and the
    // owner is told; nothing is cached, so a retry reschedules it.
    FailureOutcome report_failure(const std::string& circuit_id, const std::string& worker_id,
                                  const std::string& error, std::int64_t now_ms);

    // Snapshots for servers, harnesses and tests.
    struct CircuitInfo {
        std::uint32_t demand = 0;
        std::string client_id;
        std::string payload;
        std::optional<std::uint64_t> shots;
        std::optional<std::uint64_t> seed;
        std::uint64_t submit_seq = 0;
        std::string assigned_to;  // empty while queued
    };
    const WorkerRecord* worker(const std::string& worker_id) const;
    std::vector<std::string> active_worker_ids() const;
    const CircuitInfo* circuit(const std::string& circuit_id) const;
    std::optional<double> cached_result(const std::string& circuit_id) const;
    std::size_t queue_depth() const { return queue_.size(); }
    std::int64_t heartbeat_period_ms() const { return config_.heartbeat_period_ms; }

    const std::vector<std::string>& event_log() const { return event_log_; }

    // Throws Error if any ledger invariant is violated; tests call this
    // after every transition.
    void audit() const;

private:
    struct Candidate;
    std::optional<std::string> pick_worker(std::uint32_t demand, std::int64_t now_ms) const;
    std::vector<Assignment> rescan_queue(std::int64_t now_ms);
    void place(const std::string& circuit_id, const std::string& worker_id, std::int64_t now_ms);
    void requeue_worker_circuits(WorkerRecord& rec, std::int64_t now_ms);
    void refold_occupied(WorkerRecord& rec);
    void log(std::int64_t now_ms, const std::string& text);

    ManagerConfig config_;
    std::map<std::string, WorkerRecord> workers_;
    std::map<std::string, CircuitInfo> circuits_;   // queued or in flight
    std::deque<std::string> queue_;                 // FIFO of circuit ids
    std::map<std::string, double> results_;         // completed circuit_id -> fidelity
    std::uint64_t next_seq_ = 0;
    std::vector<std::string> event_log_;
};

// Fleet config file: "worker = <id> <max_qubits>" lines plus optional
// "heartbeat_period = <seconds>" and "allow_exact_fit = 0|1".
ManagerConfig load_fleet_config(const std::string& path);

} // namespace qufleet
