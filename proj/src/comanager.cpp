#include "qufleet/comanager.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "qufleet/config.hpp"
#include "qufleet/errors.hpp"
#include "qufleet/textio.hpp"

namespace qufleet {

ManagerCore::ManagerCore(ManagerConfig config, std::int64_t now_ms) : config_(std::move(config)) {
    if (config_.heartbeat_period_ms < 1) throw ConfigError("heartbeat period must be positive");
    for (const auto& w : config_.fleet) {
        if (w.worker_id.empty()) throw ConfigError("fleet worker with empty id");
        if (w.max_qubits < 1) throw ConfigError("fleet worker '" + w.worker_id + "' has no qubits");
        if (workers_.count(w.worker_id))
            throw ConfigError("duplicate worker id '" + w.worker_id + "' in fleet config");
        WorkerRecord rec;
        rec.worker_id = w.worker_id;
        rec.max_qubits = w.max_qubits;
        rec.last_heartbeat = now_ms;
        rec.cru_at = now_ms;
        workers_.emplace(w.worker_id, std::move(rec));
        log(now_ms, "ev=register worker=" + w.worker_id + " mr=" + std::to_string(w.max_qubits) +
                        " or=0 ar=" + std::to_string(w.max_qubits) + " src=config");
    }
}

void ManagerCore::log(std::int64_t now_ms, const std::string& text) {
    event_log_.push_back("t=" + std::to_string(now_ms) + ' ' + text);
}

void ManagerCore::refold_occupied(WorkerRecord& rec) {
    std::uint64_t sum = 0;
    for (const auto& [id, demand] : rec.active) sum += demand;
    for (const auto& [id, demand] : rec.reported_only) sum += demand;
    rec.occupied = static_cast<std::uint32_t>(sum);
}

std::optional<std::vector<Assignment>> ManagerCore::register_worker(const std::string& worker_id,
                                                                    std::uint32_t max_qubits,
                                                                    double cru, std::int64_t now_ms) {
    if (worker_id.empty()) throw ArgumentError("worker id must be non-empty");
    if (max_qubits < 1) throw ArgumentError("worker must offer at least one qubit");
    if (workers_.count(worker_id)) {
        log(now_ms, "ev=register_conflict worker=" + worker_id);
        return std::nullopt;
    }
    WorkerRecord rec;
    rec.worker_id = worker_id;
    rec.max_qubits = max_qubits;
    rec.cru = cru;
    rec.cru_at = now_ms;
    rec.last_heartbeat = now_ms;
    workers_.emplace(worker_id, std::move(rec));
    log(now_ms, "ev=register worker=" + worker_id + " mr=" + std::to_string(max_qubits) +
                    " or=0 ar=" + std::to_string(max_qubits));
    return rescan_queue(now_ms);
}

std::vector<Assignment> ManagerCore::on_heartbeat(
    const std::string& worker_id, const std::vector<std::pair<std::string, std::uint32_t>>& active,
    double cru, std::int64_t now_ms) {
    const auto it = workers_.find(worker_id);
    if (it == workers_.end()) {
        // Possibly a zombie still reporting after eviction.
        log(now_ms, "ev=heartbeat_unknown worker=" + worker_id);
        return {};
    }
    WorkerRecord& rec = it->second;
    rec.cru = cru;
    rec.cru_at = now_ms;
    rec.last_heartbeat = now_ms;

    // Fold OR from zero over the report, keeping the optimistic in-flight set:
    // a circuit we assigned stays occupied until completion even if the report
    // raced past it. Reported circuits we never assigned (and that have not
    // completed) occupy capacity only while they keep being reported.
    std::map<std::string, std::uint32_t> reported_only;
    for (const auto& [cid, demand] : active) {
        if (rec.active.count(cid)) continue;
        if (results_.count(cid)) continue;  // completed while the report was in flight
        reported_only[cid] = demand;
    }
    std::uint64_t folded = 0;
    for (const auto& [cid, demand] : rec.active) folded += demand;
    for (const auto& [cid, demand] : reported_only) folded += demand;

    if (folded > rec.max_qubits) {
        rec.quarantined = true;
        rec.reported_only.clear();
        refold_occupied(rec);
        log(now_ms, "ev=quarantine worker=" + worker_id + " reported=" + std::to_string(folded) +
                        " mr=" + std::to_string(rec.max_qubits));
    } else {
        rec.quarantined = false;
        rec.reported_only = std::move(reported_only);
        refold_occupied(rec);
    }
    log(now_ms, "ev=heartbeat worker=" + worker_id + " or=" + std::to_string(rec.occupied) +
                    " ar=" + std::to_string(rec.available()) + " cru=" + format_double(rec.cru) +
                    " active=" + std::to_string(active.size()));
    return rescan_queue(now_ms);
}

void ManagerCore::requeue_worker_circuits(WorkerRecord& rec, std::int64_t now_ms) {
    std::vector<std::pair<std::uint64_t, std::string>> ordered;
    for (const auto& [cid, demand] : rec.active) {
        auto& info = circuits_.at(cid);
        info.assigned_to.clear();
        ordered.emplace_back(info.submit_seq, cid);
    }
    std::sort(ordered.begin(), ordered.end());
    // Head of the queue, original submission order preserved.
    for (auto it = ordered.rbegin(); it != ordered.rend(); ++it) queue_.push_front(it->second);
    log(now_ms, "ev=evict worker=" + rec.worker_id + " requeued=" + std::to_string(ordered.size()));
    rec.active.clear();
    rec.reported_only.clear();
}

EvictionOutcome ManagerCore::detect_failures(std::int64_t now_ms) {
    EvictionOutcome out;
    const std::int64_t limit = 3 * config_.heartbeat_period_ms;
    for (auto it = workers_.begin(); it != workers_.end();) {
        if (now_ms - it->second.last_heartbeat > limit) {
            requeue_worker_circuits(it->second, now_ms);
            out.evicted.push_back(it->first);
            it = workers_.erase(it);
        } else {
            ++it;
        }
    }
    if (!out.evicted.empty()) out.reassigned = rescan_queue(now_ms);
    return out;
}

EvictionOutcome ManagerCore::disconnect_worker(const std::string& worker_id, std::int64_t now_ms) {
    EvictionOutcome out;
    const auto it = workers_.find(worker_id);
    if (it == workers_.end()) return out;
    requeue_worker_circuits(it->second, now_ms);
    workers_.erase(it);
    out.evicted.push_back(worker_id);
    out.reassigned = rescan_queue(now_ms);
    return out;
}

struct ManagerCore::Candidate {
    bool stale;
    double cru;
    const std::string* worker_id;
};

std::optional<std::string> ManagerCore::pick_worker(std::uint32_t demand, std::int64_t now_ms) const {
    const std::int64_t stale_after = 2 * config_.heartbeat_period_ms;
    std::optional<Candidate> best;
    for (const auto& [id, rec] : workers_) {
        if (rec.quarantined) continue;
        const bool fits = config_.allow_exact_fit ? rec.available() >= demand : rec.available() > demand;
        if (!fits) continue;
        // Ascending CRU with id tie-break; workers with stale CRU samples sort
        // behind every fresh one.
        Candidate c{now_ms - rec.cru_at > stale_after, rec.cru, &id};
        const auto key = [](const Candidate& x) { return std::make_tuple(x.stale, x.cru, *x.worker_id); };
        if (!best || key(c) < key(*best)) best = c;
    }
    if (!best) return std::nullopt;
    return *best->worker_id;
}

void ManagerCore::place(const std::string& circuit_id, const std::string& worker_id,
                        std::int64_t now_ms) {
    auto& info = circuits_.at(circuit_id);
    auto& rec = workers_.at(worker_id);
    rec.active.emplace(circuit_id, info.demand);
    refold_occupied(rec);
    info.assigned_to = worker_id;
    log(now_ms, "ev=assign circuit=" + circuit_id + " worker=" + worker_id +
                    " demand=" + std::to_string(info.demand) + " or=" + std::to_string(rec.occupied) +
                    " ar=" + std::to_string(rec.available()));
}

std::vector<Assignment> ManagerCore::rescan_queue(std::int64_t now_ms) {
    std::vector<Assignment> out;
    std::deque<std::string> still_queued;
    for (const auto& cid : queue_) {
        const auto picked = pick_worker(circuits_.at(cid).demand, now_ms);
        if (picked) {
            place(cid, *picked, now_ms);
            out.push_back({cid, *picked});
        } else {
            still_queued.push_back(cid);
        }
    }
    queue_ = std::move(still_queued);
    return out;
}

SubmitOutcome ManagerCore::submit(const std::string& circuit_id, std::uint32_t demand,
                                  const std::string& client_id, std::string payload,
                                  std::int64_t now_ms, std::optional<std::uint64_t> shots,
                                  std::optional<std::uint64_t> seed) {
    if (demand < 1) throw ArgumentError("circuit demand must be at least one qubit");
    if (circuit_id.empty()) throw ArgumentError("circuit id must be non-empty");
    if (const auto hit = results_.find(circuit_id); hit != results_.end()) {
        log(now_ms, "ev=submit_cached circuit=" + circuit_id);
        return {SubmitDisposition::Cached, {}, hit->second};
    }
    if (circuits_.count(circuit_id)) {
        log(now_ms, "ev=submit_duplicate circuit=" + circuit_id);
        return {SubmitDisposition::DuplicateInFlight, {}, 0};
    }
    CircuitInfo info;
    info.demand = demand;
    info.client_id = client_id;
    info.payload = std::move(payload);
    info.shots = shots;
    info.seed = seed;
    info.submit_seq = next_seq_++;
    circuits_.emplace(circuit_id, std::move(info));

    if (const auto picked = pick_worker(demand, now_ms)) {
        place(circuit_id, *picked, now_ms);
        return {SubmitDisposition::Assigned, *picked, 0};
    }
    queue_.push_back(circuit_id);
    log(now_ms, "ev=queue circuit=" + circuit_id + " demand=" + std::to_string(demand) +
                    " depth=" + std::to_string(queue_.size()));
    return {SubmitDisposition::Queued, {}, 0};
}

CompleteOutcome ManagerCore::complete(const std::string& circuit_id, const std::string& worker_id,
                                      double fidelity, std::int64_t now_ms) {
    CompleteOutcome out;
    const auto it = circuits_.find(circuit_id);
    if (it == circuits_.end()) {
        // Unknown or already completed: idempotent drop, no ledger change.
        log(now_ms, "ev=complete_drop circuit=" + circuit_id + " worker=" + worker_id);
        return out;
    }
    CircuitInfo& info = it->second;
    out.accepted = true;
    out.client_id = info.client_id;
    results_.emplace(circuit_id, fidelity);

    if (!info.assigned_to.empty()) {
        auto& rec = workers_.at(info.assigned_to);
        rec.active.erase(circuit_id);
        refold_occupied(rec);
        log(now_ms, "ev=complete circuit=" + circuit_id + " worker=" + info.assigned_to +
                        " or=" + std::to_string(rec.occupied) + " ar=" + std::to_string(rec.available()));
    } else {
        // A zombie finished a circuit that was waiting for reassignment.
        queue_.erase(std::find(queue_.begin(), queue_.end(), circuit_id));
        log(now_ms, "ev=complete circuit=" + circuit_id + " worker=" + worker_id + " src=queue");
    }
    circuits_.erase(it);
    out.unblocked = rescan_queue(now_ms);
    return out;
}

FailureOutcome ManagerCore::report_failure(const std::string& circuit_id, const std::string& worker_id,
                                           const std::string& error, std::int64_t now_ms) {
    FailureOutcome out;
    const auto it = circuits_.find(circuit_id);
    if (it == circuits_.end() || it->second.assigned_to != worker_id) {
        log(now_ms, "ev=fail_drop circuit=" + circuit_id + " worker=" + worker_id);
        return out;
    }
    out.accepted = true;
    out.client_id = it->second.client_id;
    auto& rec = workers_.at(worker_id);
    rec.active.erase(circuit_id);
    refold_occupied(rec);
    log(now_ms, "ev=fail circuit=" + circuit_id + " worker=" + worker_id + " error=" + error);
    circuits_.erase(it);
    out.unblocked = rescan_queue(now_ms);
    return out;
}

const WorkerRecord* ManagerCore::worker(const std::string& worker_id) const {
    const auto it = workers_.find(worker_id);
    return it == workers_.end() ? nullptr : &it->second;
}

std::vector<std::string> ManagerCore::active_worker_ids() const {
    std::vector<std::string> out;
    out.reserve(workers_.size());
    for (const auto& [id, rec] : workers_) out.push_back(id);
    return out;
}

const ManagerCore::CircuitInfo* ManagerCore::circuit(const std::string& circuit_id) const {
    const auto it = circuits_.find(circuit_id);
    return it == circuits_.end() ? nullptr : &it->second;
}

std::optional<double> ManagerCore::cached_result(const std::string& circuit_id) const {
    const auto it = results_.find(circuit_id);
    if (it == results_.end()) return std::nullopt;
    return it->second;
}

void ManagerCore::audit() const {
    for (const auto& [id, rec] : workers_) {
        std::uint64_t sum = 0;
        for (const auto& [cid, demand] : rec.active) {
            sum += demand;
            const auto it = circuits_.find(cid);
            if (it == circuits_.end() || it->second.assigned_to != id)
                throw Error("audit: worker " + id + " holds circuit " + cid + " it does not own");
            if (it->second.demand != demand) throw Error("audit: demand mismatch for " + cid);
        }
        for (const auto& [cid, demand] : rec.reported_only) sum += demand;
        if (sum != rec.occupied) throw Error("audit: OR of " + id + " is not the sum of its demands");
        if (rec.occupied > rec.max_qubits) throw Error("audit: OR exceeds MR on " + id);
        if (rec.available() != rec.max_qubits - rec.occupied) throw Error("audit: AR != MR - OR on " + id);
    }
    std::set<std::string> queued(queue_.begin(), queue_.end());
    if (queued.size() != queue_.size()) throw Error("audit: duplicate circuit in the queue");
    for (const auto& cid : queue_) {
        const auto it = circuits_.find(cid);
        if (it == circuits_.end()) throw Error("audit: queued circuit " + cid + " has no record");
        if (!it->second.assigned_to.empty()) throw Error("audit: queued circuit " + cid + " is assigned");
        if (results_.count(cid)) throw Error("audit: queued circuit " + cid + " already completed");
    }
    for (const auto& [cid, info] : circuits_) {
        if (info.assigned_to.empty()) {
            if (!queued.count(cid)) throw Error("audit: unassigned circuit " + cid + " missing from queue");
        } else {
            const auto w = workers_.find(info.assigned_to);
            if (w == workers_.end() || !w->second.active.count(cid))
                throw Error("audit: circuit " + cid + " assigned to a worker that does not hold it");
        }
    }
}

ManagerConfig load_fleet_config(const std::string& path) {
    const KvView view = load_kv_view(path);
    ManagerConfig config;
    config.heartbeat_period_ms =
        static_cast<std::int64_t>(view.get_double("heartbeat_period", 5.0) * 1000.0);
    config.allow_exact_fit = view.get_bool("allow_exact_fit", false);
    for (const auto& spec : view.all("worker")) {
        const auto parts = split(spec, ' ');
        std::vector<std::string_view> fields;
        for (auto p : parts)
            if (!p.empty()) fields.push_back(p);
        if (fields.size() != 2) throw ConfigError(path + ": worker entry needs '<id> <max_qubits>'");
        config.fleet.push_back({std::string(fields[0]), parse_u32(fields[1])});
    }
    return config;
}

} // namespace qufleet
