// Test-only shadow reimplementation of the scheduling policy plus a
// randomized scenario driver. The shadow predicts every outcome (candidate
// filtering, min-CRU selection, quarantine, eviction, FIFO rescans) and the
// driver cross-checks the real ManagerCore against it after every event,
// audits the ledger, and verifies byte-identical replay.
#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "qufleet/comanager.hpp"

namespace scheduler_model {

struct ShadowWorker {
    std::uint32_t mr = 0;
    std::map<std::string, std::uint32_t> active;
    std::map<std::string, std::uint32_t> reported_only;
    double cru = 0;
    std::int64_t cru_at = 0;
    std::int64_t last_hb = 0;
    bool quarantined = false;

    std::uint64_t occupied() const {
        std::uint64_t sum = 0;
        for (auto& [id, d] : active) sum += d;
        for (auto& [id, d] : reported_only) sum += d;
        return sum;
    }
    std::int64_t available() const { return static_cast<std::int64_t>(mr) - static_cast<std::int64_t>(occupied()); }
};

struct ShadowCircuit {
    std::uint32_t demand = 0;
    std::uint64_t seq = 0;
    std::string assigned;
};

struct Shadow {
    std::int64_t period_ms = 5000;
    bool exact_fit = false;
    std::map<std::string, ShadowWorker> workers;
    std::map<std::string, ShadowCircuit> circuits;
    std::deque<std::string> queue;
    std::set<std::string> completed;
    std::uint64_t next_seq = 0;

    std::optional<std::string> pick(std::uint32_t demand, std::int64_t now) const {
        std::optional<std::tuple<bool, double, std::string>> best;
        for (const auto& [id, w] : workers) {
            if (w.quarantined) continue;
            const auto ar = w.available();
            const bool fits = exact_fit ? ar >= static_cast<std::int64_t>(demand)
                                        : ar > static_cast<std::int64_t>(demand);
            if (!fits) continue;
            std::tuple<bool, double, std::string> key{now - w.cru_at > 2 * period_ms, w.cru, id};
            if (!best || key < *best) best = key;
        }
        if (!best) return std::nullopt;
        return std::get<2>(*best);
    }

    std::vector<qufleet::Assignment> rescan(std::int64_t now) {
        std::vector<qufleet::Assignment> out;
        std::deque<std::string> rest;
        for (const auto& cid : queue) {
            if (auto w = pick(circuits.at(cid).demand, now)) {
                workers.at(*w).active[cid] = circuits.at(cid).demand;
                circuits.at(cid).assigned = *w;
                out.push_back({cid, *w});
            } else {
                rest.push_back(cid);
            }
        }
        queue = std::move(rest);
        return out;
    }

    std::vector<std::string> evict_due(std::int64_t now) {
        std::vector<std::string> dead;
        for (auto& [id, w] : workers)
            if (now - w.last_hb > 3 * period_ms) dead.push_back(id);
        for (const auto& id : dead) {
            std::vector<std::pair<std::uint64_t, std::string>> ordered;
            for (auto& [cid, d] : workers.at(id).active) {
                circuits.at(cid).assigned.clear();
                ordered.emplace_back(circuits.at(cid).seq, cid);
            }
            std::sort(ordered.begin(), ordered.end());
            for (auto it = ordered.rbegin(); it != ordered.rend(); ++it) queue.push_front(it->second);
            workers.erase(id);
        }
        return dead;
    }
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw std::runtime_error("scenario mismatch: " + what);
}

inline void compare_state(const Shadow& shadow, const qufleet::ManagerCore& core) {
    for (const auto& [id, w] : shadow.workers) {
        const auto* rec = core.worker(id);
        require(rec != nullptr, "worker " + id + " missing");
        require(rec->occupied == w.occupied(), "OR mismatch on " + id);
        require(rec->max_qubits == w.mr, "MR mismatch on " + id);
        require(rec->quarantined == w.quarantined, "quarantine mismatch on " + id);
    }
    require(core.active_worker_ids().size() == shadow.workers.size(), "worker count");
    require(core.queue_depth() == shadow.queue.size(), "queue depth");
    core.audit();
}

inline void compare_assignments(const std::vector<qufleet::Assignment>& got,
                                const std::vector<qufleet::Assignment>& want,
                                const std::string& where) {
    require(got.size() == want.size(), where + ": assignment count");
    for (std::size_t i = 0; i < got.size(); ++i) {
        require(got[i].circuit_id == want[i].circuit_id, where + ": assignment order");
        require(got[i].worker_id == want[i].worker_id,
                where + ": selection for " + got[i].circuit_id + " got " + got[i].worker_id +
                    " want " + want[i].worker_id);
    }
}

// One randomized scenario: returns the core's event log for replay checks.
inline std::vector<std::string> run_scenario(std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    auto pct = [&](int p) { return static_cast<int>(eng() % 100) < p; };

    qufleet::ManagerConfig config;
    config.heartbeat_period_ms = 1000 + static_cast<std::int64_t>(eng() % 5000);
    config.allow_exact_fit = pct(25);
    const std::size_t n_static = eng() % 3;
    for (std::size_t i = 0; i < n_static; ++i)
        config.fleet.push_back({"ws" + std::to_string(i), 4 + static_cast<std::uint32_t>(eng() % 20)});

    qufleet::ManagerCore core(config, 0);
    Shadow shadow;
    shadow.period_ms = config.heartbeat_period_ms;
    shadow.exact_fit = config.allow_exact_fit;
    for (const auto& w : config.fleet) {
        shadow.workers[w.worker_id] = {w.max_qubits, {}, {}, 0.0, 0, 0, false};
    }
    compare_state(shadow, core);

    std::int64_t now = 0;
    int next_worker = 0, next_circuit = 0;
    std::vector<std::string> known_workers;  // includes evicted ids (zombies)
    for (const auto& w : config.fleet) known_workers.push_back(w.worker_id);

    const int steps = 40 + static_cast<int>(eng() % 60);
    for (int step = 0; step < steps; ++step) {
        now += static_cast<std::int64_t>(eng() % (2 * static_cast<std::uint64_t>(shadow.period_ms)));
        const int roll = static_cast<int>(eng() % 100);

        if (roll < 15) {  // register (sometimes a conflicting id)
            std::string id;
            if (!known_workers.empty() && pct(20)) id = known_workers[eng() % known_workers.size()];
            else id = "w" + std::to_string(next_worker++);
            const std::uint32_t mr = 4 + static_cast<std::uint32_t>(eng() % 20);
            const double cru = static_cast<double>(eng() % 1000) / 1000.0;
            const auto got = core.register_worker(id, mr, cru, now);
            if (shadow.workers.count(id)) {
                require(!got.has_value(), "register of live id must conflict");
            } else {
                require(got.has_value(), "register must be accepted");
                shadow.workers[id] = {mr, {}, {}, cru, now, now, false};
                if (std::find(known_workers.begin(), known_workers.end(), id) == known_workers.end())
                    known_workers.push_back(id);
                compare_assignments(*got, shadow.rescan(now), "register");
            }
        } else if (roll < 40 && !known_workers.empty()) {  // heartbeat (true, raced, or inconsistent)
            const auto& id = known_workers[eng() % known_workers.size()];
            const double cru = static_cast<double>(eng() % 1000) / 1000.0;
            std::vector<std::pair<std::string, std::uint32_t>> report;
            const bool alive = shadow.workers.count(id) > 0;
            if (alive) {
                for (const auto& [cid, d] : shadow.workers.at(id).active) report.emplace_back(cid, d);
                if (!report.empty() && pct(20)) report.pop_back();  // raced past an assignment
                if (pct(15)) report.emplace_back("ghost" + std::to_string(eng() % 5), 1 + eng() % 6);
                if (pct(10) && !report.empty()) report.back().second += 40;  // inconsistent demand
            }
            const auto got = core.on_heartbeat(id, report, cru, now);
            if (!alive) {
                require(got.empty(), "zombie heartbeat must be ignored");
            } else {
                auto& w = shadow.workers.at(id);
                w.cru = cru;
                w.cru_at = now;
                w.last_hb = now;
                std::map<std::string, std::uint32_t> reported_only;
                for (const auto& [cid, d] : report) {
                    if (w.active.count(cid) || shadow.completed.count(cid)) continue;
                    reported_only[cid] = d;
                }
                std::uint64_t folded = 0;
                for (const auto& [cid, d] : w.active) folded += d;
                for (const auto& [cid, d] : reported_only) folded += d;
                if (folded > w.mr) {
                    w.quarantined = true;
                    w.reported_only.clear();
                } else {
                    w.quarantined = false;
                    w.reported_only = std::move(reported_only);
                }
                compare_assignments(got, shadow.rescan(now), "heartbeat");
            }
        } else if (roll < 70) {  // submit (fresh, duplicate, or completed)
            std::string cid = "c" + std::to_string(next_circuit);
            if (next_circuit > 0 && pct(15)) cid = "c" + std::to_string(eng() % next_circuit);
            else ++next_circuit;
            const std::uint32_t demand = 1 + static_cast<std::uint32_t>(eng() % 14);
            const auto got = core.submit(cid, demand, "client", "", now);
            if (shadow.completed.count(cid)) {
                require(got.disposition == qufleet::SubmitDisposition::Cached, "expected cached");
            } else if (shadow.circuits.count(cid)) {
                require(got.disposition == qufleet::SubmitDisposition::DuplicateInFlight,
                        "expected duplicate");
            } else {
                shadow.circuits[cid] = {demand, shadow.next_seq++, ""};
                if (auto w = shadow.pick(demand, now)) {
                    require(got.disposition == qufleet::SubmitDisposition::Assigned, "expected assigned");
                    require(got.worker_id == *w, "selection for " + cid);
                    shadow.workers.at(*w).active[cid] = demand;
                    shadow.circuits.at(cid).assigned = *w;
                } else {
                    require(got.disposition == qufleet::SubmitDisposition::Queued, "expected queued");
                    shadow.queue.push_back(cid);
                }
            }
        } else if (roll < 85) {  // complete an in-flight circuit (or a stale/unknown id)
            std::vector<std::pair<std::string, std::string>> inflight;
            for (const auto& [cid, c] : shadow.circuits)
                if (!c.assigned.empty()) inflight.emplace_back(cid, c.assigned);
            if (inflight.empty() || pct(10)) {
                const std::string cid = pct(50) && !shadow.completed.empty()
                                            ? *shadow.completed.begin()
                                            : "never-seen";
                const auto got = core.complete(cid, "wx", 0.75, now);
                require(!got.accepted, "stale completion must be dropped");
            } else {
                const auto& [cid, wid] = inflight[eng() % inflight.size()];
                const auto got = core.complete(cid, wid, 0.75, now);
                require(got.accepted, "completion must be accepted");
                shadow.workers.at(wid).active.erase(cid);
                shadow.circuits.erase(cid);
                shadow.completed.insert(cid);
                compare_assignments(got.unblocked, shadow.rescan(now), "complete");
            }
        } else if (roll < 92) {  // failure report
            std::vector<std::pair<std::string, std::string>> inflight;
            for (const auto& [cid, c] : shadow.circuits)
                if (!c.assigned.empty()) inflight.emplace_back(cid, c.assigned);
            if (!inflight.empty()) {
                const auto& [cid, wid] = inflight[eng() % inflight.size()];
                const auto got = core.report_failure(cid, wid, "boom", now);
                require(got.accepted, "failure must be accepted");
                shadow.workers.at(wid).active.erase(cid);
                shadow.circuits.erase(cid);
                compare_assignments(got.unblocked, shadow.rescan(now), "failure");
            }
        } else {  // failure detector sweep
            const auto got = core.detect_failures(now);
            const auto want = shadow.evict_due(now);
            require(got.evicted == want, "eviction set");
            compare_assignments(got.reassigned, shadow.rescan(now), "eviction rescan");
        }
        compare_state(shadow, core);
    }
    return core.event_log();
}

} // namespace scheduler_model
