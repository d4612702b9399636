#include "qufleet/worker.hpp"

#include <sys/resource.h>
#include <sys/syscall.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <thread>

#include "qufleet/circuit.hpp"
#include "qufleet/errors.hpp"
#include "qufleet/executor.hpp"
#include "qufleet/net.hpp"
#include "qufleet/protocol.hpp"

namespace qufleet {

namespace proto = protocol;

double scripted_cru(const std::vector<std::pair<std::int64_t, double>>& trace, std::int64_t t_ms) {
    if (trace.empty()) throw ConfigError("scripted CRU mode requires a trace");
    double value = trace.front().second;
    for (const auto& [at, v] : trace) {
        if (at > t_ms) break;
        value = v;
    }
    return value;
}

CruMeter::CruMeter(double half_life_ms) : half_life_ms_(half_life_ms > 0 ? half_life_ms : 1.0) {}

double CruMeter::sample(std::int64_t now_ms) {
    rusage usage{};
    if (getrusage(RUSAGE_SELF, &usage) != 0) return value_;  // keep the last known value
    const double cpu_ms = (usage.ru_utime.tv_sec + usage.ru_stime.tv_sec) * 1000.0 +
                          (usage.ru_utime.tv_usec + usage.ru_stime.tv_usec) / 1000.0;
    if (!primed_) {
        primed_ = true;
        last_ms_ = now_ms;
        last_cpu_ms_ = cpu_ms;
        return value_;
    }
    const double wall = static_cast<double>(now_ms - last_ms_);
    if (wall <= 0) return value_;
    double busy = (cpu_ms - last_cpu_ms_) / wall;
    busy = std::min(1.0, std::max(0.0, busy));
    const double lambda = std::exp2(-wall / half_life_ms_);
    value_ = lambda * value_ + (1.0 - lambda) * busy;
    last_ms_ = now_ms;
    last_cpu_ms_ = cpu_ms;
    return value_;
}

struct WorkerDaemon::Impl {
    explicit Impl(WorkerOptions o) : opts(std::move(o)), meter(5000.0) {}

    WorkerOptions opts;
    net::Socket sock;
    std::mutex write_mu;
    std::atomic<bool> stopping{false};
    std::int64_t period_ms = 5000;
    std::chrono::steady_clock::time_point t0;
    CruMeter meter;

    std::mutex state_mu;
    std::condition_variable work_cv;
    std::map<std::string, std::uint32_t> active;  // accepted and not yet answered
    std::uint64_t active_demand = 0;
    struct Task {
        LogicalCircuit circuit;
        std::optional<std::uint64_t> shots;
        std::uint64_t seed = 0;
    };
    std::deque<Task> work;
    std::vector<std::thread> threads;

    std::int64_t now_ms() const {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
            .count();
    }

    double cru_sample() {
        if (opts.cru_mode == CruMode::Scripted) return scripted_cru(opts.cru_trace, now_ms());
        return meter.sample(now_ms());
    }

    void send(const proto::Message& msg) {
        std::lock_guard<std::mutex> lock(write_mu);
        sock.send_all(proto::encode_frame(msg));
    }

    bool try_send(const proto::Message& msg) {
        try {
            send(msg);
            return true;
        } catch (const Error&) {
            return false;  // manager-side silence rules take over
        }
    }

    // Registration with exponential backoff until the manager acknowledges.
    void register_with_backoff() {
        std::int64_t delay = opts.backoff_base_ms;
        while (!stopping.load()) {
            try {
                sock = net::connect_tcp(opts.manager_host, opts.manager_port);
                send(proto::Message{1, proto::Register{opts.worker_id, opts.max_qubits, cru_sample(), {}}});
                proto::FrameReader reader;
                std::vector<char> buf(16 * 1024);
                while (true) {
                    const std::size_t n = sock.recv_some(buf.data(), buf.size());
                    if (n == 0) throw TransportError("connection closed during registration");
                    reader.feed({buf.data(), n});
                    if (auto payload = reader.next()) {
                        const auto msg = proto::decode_payload(*payload);
                        const auto* ack = std::get_if<proto::RegisterAck>(&msg.body);
                        if (!ack) throw TransportError("unexpected reply to registration");
                        if (!ack->ok)
                            throw ConfigError("manager rejected worker '" + opts.worker_id +
                                              "': " + ack->detail);
                        period_ms = opts.period_ms.value_or(ack->heartbeat_period_ms > 0
                                                                ? ack->heartbeat_period_ms
                                                                : period_ms);
                        return;
                    }
                }
            } catch (const ConfigError&) {
                throw;  // rejection is fatal
            } catch (const Error&) {
                sock.close();
                for (std::int64_t slept = 0; slept < delay && !stopping.load(); slept += 50)
                    std::this_thread::sleep_for(std::chrono::milliseconds(50));
                delay = std::min(delay * 2, opts.backoff_cap_ms);
            }
        }
        throw TransportError("worker stopped before registration completed");
    }

    void heartbeat_loop() {
        while (!stopping.load()) {
            for (std::int64_t slept = 0; slept < period_ms && !stopping.load(); slept += 20)
                std::this_thread::sleep_for(std::chrono::milliseconds(20));
            if (stopping.load()) return;
            proto::Heartbeat hb;
            hb.worker_id = opts.worker_id;
            hb.cru = cru_sample();
            {
                std::lock_guard<std::mutex> lock(state_mu);
                for (const auto& [cid, demand] : active) hb.active.push_back({cid, demand});
            }
            try_send(proto::Message{0, hb});  // a failed tick is logged by silence, not retried
        }
    }

    void executor_loop() {
        // Batch compute yields to the reader and heartbeat threads so
        // assignments keep flowing while every core is busy simulating.
        (void)::setpriority(PRIO_PROCESS, static_cast<id_t>(::syscall(SYS_gettid)), 3);
        while (true) {
            Task task;
            {
                std::unique_lock<std::mutex> lock(state_mu);
                work_cv.wait(lock, [this] { return stopping.load() || !work.empty(); });
                if (stopping.load()) return;
                task = std::move(work.front());
                work.pop_front();
            }
            proto::Result result;
            result.circuit_id = task.circuit.circuit_id;
            result.worker_id = opts.worker_id;
            try {
                if (opts.synthetic_delay_ms > 0)
                    std::this_thread::sleep_for(std::chrono::milliseconds(opts.synthetic_delay_ms));
                result.fidelity = run_circuit(task.circuit, task.shots, task.seed);
                result.ok = true;
            } catch (const Error& e) {
                result.ok = false;
                result.error = e.what();
            }
            {
                std::lock_guard<std::mutex> lock(state_mu);
                active.erase(result.circuit_id);
                active_demand -= task.circuit.qubit_demand;
            }
            try_send(proto::Message{0, result});
        }
    }

    void handle_assign(const proto::Assign& assign) {
        auto reject = [&](const std::string& error) {
            try_send(proto::Message{0, proto::Result{assign.circuit_id, opts.worker_id, false, 0, error}});
        };
        LogicalCircuit circuit;
        try {
            circuit = parse_circuit(assign.circuit);
        } catch (const Error& e) {
            reject(std::string("malformed circuit: ") + e.what());
            return;
        }
        if (circuit.circuit_id != assign.circuit_id || circuit.qubit_demand != assign.demand) {
            reject("assignment metadata disagrees with the circuit payload");
            return;
        }
        bool over_capacity = false;
        {
            std::lock_guard<std::mutex> lock(state_mu);
            // The manager's ledger should make this impossible; report it
            // loudly instead of oversubscribing the simulator.
            if (circuit.qubit_demand > opts.max_qubits ||
                active_demand + circuit.qubit_demand > opts.max_qubits) {
                over_capacity = true;
            } else {
                active.emplace(circuit.circuit_id, circuit.qubit_demand);
                active_demand += circuit.qubit_demand;
                work.push_back({std::move(circuit), assign.shots, assign.seed.value_or(0)});
            }
        }
        if (over_capacity) {
            reject("capacity violation: demand " + std::to_string(circuit.qubit_demand) +
                   " does not fit " + std::to_string(opts.max_qubits) + " qubits");
            return;
        }
        work_cv.notify_one();
    }

    void reader_loop() {
        proto::FrameReader reader;
        std::vector<char> buf(64 * 1024);
        try {
            while (!stopping.load()) {
                const std::size_t n = sock.recv_some(buf.data(), buf.size());
                if (n == 0) break;
                reader.feed({buf.data(), n});
                while (auto payload = reader.next()) {
                    const auto msg = proto::decode_payload(*payload);
                    if (const auto* assign = std::get_if<proto::Assign>(&msg.body)) handle_assign(*assign);
                }
            }
        } catch (const Error&) {
        }
        stopping.store(true);
        work_cv.notify_all();
    }
};

WorkerDaemon::WorkerDaemon(WorkerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
    if (impl_->opts.worker_id.empty()) throw ConfigError("worker id must be non-empty");
    if (impl_->opts.max_qubits < 1) throw ConfigError("worker needs at least one qubit");
    if (impl_->opts.parallelism < 1) throw ConfigError("parallelism must be positive");
    if (impl_->opts.cru_mode == CruMode::Scripted && impl_->opts.cru_trace.empty())
        throw ConfigError("scripted CRU mode requires a trace");
}

WorkerDaemon::~WorkerDaemon() { stop(); }

void WorkerDaemon::run() {
    auto& im = *impl_;
    im.t0 = std::chrono::steady_clock::now();
    im.cru_sample();  // prime the meter
    im.register_with_backoff();

    im.threads.emplace_back([&im] { im.heartbeat_loop(); });
    for (std::uint32_t i = 0; i < im.opts.parallelism; ++i)
        im.threads.emplace_back([&im] { im.executor_loop(); });
    im.reader_loop();  // returns when the transport drops or stop() is called

    for (auto& t : im.threads) t.join();
    im.threads.clear();
}

void WorkerDaemon::stop() {
    auto& im = *impl_;
    im.stopping.store(true);
    im.work_cv.notify_all();
    im.sock.shutdown();
}

std::int64_t WorkerDaemon::effective_period_ms() const { return impl_->period_ms; }

} // namespace qufleet
