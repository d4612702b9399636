#include "qufleet/manager_server.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "qufleet/errors.hpp"
#include "qufleet/net.hpp"
#include "qufleet/protocol.hpp"

namespace qufleet {

namespace proto = protocol;

namespace {

struct Conn {
    net::Socket sock;
    std::mutex write_mu;
    std::string worker_id;  // bound after REGISTER
    std::string client_id;  // bound after first SUBMIT
    std::atomic<bool> dead{false};
};

using ConnPtr = std::shared_ptr<Conn>;
using Outgoing = std::pair<ConnPtr, proto::Message>;

} // namespace

struct ManagerServer::Impl {
    explicit Impl(ManagerServerOptions o) : opts(std::move(o)) {}

    ManagerServerOptions opts;
    std::optional<net::Listener> listener;
    std::optional<ManagerCore> core;
    mutable std::mutex mu;  // core, maps, log cursor
    std::map<std::string, ConnPtr> worker_conns;
    std::map<std::string, ConnPtr> client_conns;
    std::vector<ConnPtr> all_conns;
    std::vector<std::thread> threads;
    std::atomic<bool> stopping{false};
    std::atomic<std::uint64_t> next_corr{1};
    std::chrono::steady_clock::time_point t0;
    std::atomic<std::int64_t> vnow{0};
    std::ofstream event_out;
    std::size_t flushed = 0;

    std::int64_t now_ms() const {
        if (opts.virtual_clock) return vnow.load();
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
            .count();
    }

    void observe_at(const std::optional<std::int64_t>& at) {
        if (!opts.virtual_clock || !at) return;
        std::int64_t cur = vnow.load();
        while (*at > cur && !vnow.compare_exchange_weak(cur, *at)) {
        }
    }

    void flush_log_locked() {
        if (!event_out.is_open()) return;
        const auto& log = core->event_log();
        for (; flushed < log.size(); ++flushed) event_out << log[flushed] << '\n';
        event_out.flush();
    }

    // Builds ASSIGN pushes for fresh placements. Workers without a live
    // connection keep the circuit on their ledger; heartbeat silence will
    // evict them and recycle it.
    void assignments_to_outgoing(const std::vector<Assignment>& assignments,
                                 std::vector<Outgoing>& out) {
        for (const auto& a : assignments) {
            const auto conn = worker_conns.find(a.worker_id);
            if (conn == worker_conns.end()) continue;
            const auto* info = core->circuit(a.circuit_id);
            if (!info) continue;
            proto::Assign body{a.circuit_id, info->demand, info->payload, info->shots, info->seed};
            out.push_back({conn->second, proto::Message{next_corr++, std::move(body)}});
        }
    }

    void job_result_to_owner(const std::string& client_id, proto::JobResult body,
                             std::vector<Outgoing>& out) {
        const auto conn = client_conns.find(client_id);
        if (conn == client_conns.end()) return;  // owner went away; result stays cached
        out.push_back({conn->second, proto::Message{next_corr++, std::move(body)}});
    }

    void deliver(std::vector<Outgoing> batch) {
        while (!batch.empty()) {
            std::vector<ConnPtr> failed_workers;
            for (auto& [conn, msg] : batch) {
                if (conn->dead.load()) continue;
                try {
                    std::lock_guard<std::mutex> wl(conn->write_mu);
                    conn->sock.send_all(proto::encode_frame(msg));
                } catch (const Error&) {
                    conn->dead.store(true);
                    failed_workers.push_back(conn);
                }
            }
            batch.clear();
            for (const auto& conn : failed_workers) {
                std::lock_guard<std::mutex> lock(mu);
                drop_conn_locked(conn, batch);
                flush_log_locked();
            }
        }
    }

    void drop_conn_locked(const ConnPtr& conn, std::vector<Outgoing>& out) {
        if (!conn->worker_id.empty()) {
            const auto it = worker_conns.find(conn->worker_id);
            if (it != worker_conns.end() && it->second == conn) {
                worker_conns.erase(it);
                const auto ev = core->disconnect_worker(conn->worker_id, now_ms());
                assignments_to_outgoing(ev.reassigned, out);
            }
        }
        if (!conn->client_id.empty()) {
            const auto it = client_conns.find(conn->client_id);
            if (it != client_conns.end() && it->second == conn) client_conns.erase(it);
        }
        conn->sock.shutdown();
    }

    void handle_message(const ConnPtr& conn, const proto::Message& msg) {
        std::vector<Outgoing> out;
        {
            std::lock_guard<std::mutex> lock(mu);
            if (const auto* m = std::get_if<proto::Register>(&msg.body)) {
                observe_at(m->at);
                const std::int64_t now = now_ms();
                const auto live = worker_conns.find(m->worker_id);
                if (live != worker_conns.end() && !live->second->dead.load()) {
                    out.push_back({conn, proto::Message{msg.correlation_id,
                                                        proto::RegisterAck{false, core->heartbeat_period_ms(),
                                                                           "worker id already active"}}});
                } else {
                    std::vector<Assignment> assigns;
                    if (core->worker(m->worker_id)) {
                        // A record without a live transport: recycle it first.
                        const auto ev = core->disconnect_worker(m->worker_id, now);
                        assigns.insert(assigns.end(), ev.reassigned.begin(), ev.reassigned.end());
                    }
                    const auto reg = core->register_worker(m->worker_id, m->max_qubits, m->cru, now);
                    if (!reg) {
                        out.push_back({conn, proto::Message{msg.correlation_id,
                                                            proto::RegisterAck{false, core->heartbeat_period_ms(),
                                                                               "registration rejected"}}});
                    } else {
                        conn->worker_id = m->worker_id;
                        worker_conns[m->worker_id] = conn;
                        out.push_back({conn, proto::Message{msg.correlation_id,
                                                            proto::RegisterAck{true, core->heartbeat_period_ms(),
                                                                               ""}}});
                        assigns.insert(assigns.end(), reg->begin(), reg->end());
                    }
                    assignments_to_outgoing(assigns, out);
                }
            } else if (const auto* m = std::get_if<proto::Heartbeat>(&msg.body)) {
                observe_at(m->at);
                std::vector<std::pair<std::string, std::uint32_t>> active;
                active.reserve(m->active.size());
                for (const auto& a : m->active) active.emplace_back(a.circuit_id, a.demand);
                assignments_to_outgoing(core->on_heartbeat(m->worker_id, active, m->cru, now_ms()), out);
            } else if (const auto* m = std::get_if<proto::Result>(&msg.body)) {
                if (m->ok) {
                    const auto done = core->complete(m->circuit_id, m->worker_id, m->fidelity, now_ms());
                    if (done.accepted)
                        job_result_to_owner(done.client_id,
                                            proto::JobResult{m->circuit_id, true, m->fidelity, ""}, out);
                    assignments_to_outgoing(done.unblocked, out);
                } else {
                    const auto fail = core->report_failure(m->circuit_id, m->worker_id, m->error, now_ms());
                    if (fail.accepted)
                        job_result_to_owner(fail.client_id,
                                            proto::JobResult{m->circuit_id, false, 0.0, m->error}, out);
                    assignments_to_outgoing(fail.unblocked, out);
                }
            } else if (const auto* m = std::get_if<proto::Submit>(&msg.body)) {
                observe_at(m->at);
                conn->client_id = m->client_id;
                client_conns[m->client_id] = conn;
                const auto r = core->submit(m->circuit_id, m->demand, m->client_id, m->circuit, now_ms(),
                                            m->shots, m->seed);
                proto::SubmitAck ack;
                ack.circuit_id = m->circuit_id;
                switch (r.disposition) {
                case SubmitDisposition::Assigned:
                    ack.status = proto::SubmitStatus::Assigned;
                    ack.worker_id = r.worker_id;
                    break;
                case SubmitDisposition::Queued: ack.status = proto::SubmitStatus::Queued; break;
                case SubmitDisposition::Cached: ack.status = proto::SubmitStatus::Cached; break;
                case SubmitDisposition::DuplicateInFlight:
                    ack.status = proto::SubmitStatus::Duplicate;
                    ack.detail = "circuit id already in flight";
                    break;
                }
                out.push_back({conn, proto::Message{msg.correlation_id, ack}});
                if (r.disposition == SubmitDisposition::Cached)
                    out.push_back({conn, proto::Message{next_corr++, proto::JobResult{m->circuit_id, true,
                                                                                      r.cached_fidelity, ""}}});
                if (r.disposition == SubmitDisposition::Assigned)
                    assignments_to_outgoing({{m->circuit_id, r.worker_id}}, out);
            } else {
                out.push_back({conn, proto::Message{msg.correlation_id,
                                                    proto::ErrorMsg{"unexpected_type",
                                                                    std::string(proto::type_name(msg.body))}}});
            }
            flush_log_locked();
        }
        deliver(std::move(out));
    }

    void reader_loop(ConnPtr conn) {
        proto::FrameReader reader;
        std::vector<char> buf(64 * 1024);
        try {
            while (!stopping.load()) {
                const std::size_t n = conn->sock.recv_some(buf.data(), buf.size());
                if (n == 0) break;
                reader.feed({buf.data(), n});
                while (auto payload = reader.next()) handle_message(conn, proto::decode_payload(*payload));
            }
        } catch (const Error&) {
            // Framing violation or transport failure: treat as a drop.
        }
        conn->dead.store(true);
        std::vector<Outgoing> out;
        {
            std::lock_guard<std::mutex> lock(mu);
            drop_conn_locked(conn, out);
            flush_log_locked();
        }
        deliver(std::move(out));
    }

    void accept_loop() {
        while (!stopping.load()) {
            auto sock = listener->accept();
            if (!sock) break;
            auto conn = std::make_shared<Conn>();
            conn->sock = std::move(*sock);
            std::lock_guard<std::mutex> lock(mu);
            if (stopping.load()) break;
            all_conns.push_back(conn);
            threads.emplace_back([this, conn] { reader_loop(conn); });
        }
    }

    void ticker_loop() {
        const auto period = std::chrono::milliseconds(
            std::max<std::int64_t>(50, std::min<std::int64_t>(500, opts.core.heartbeat_period_ms / 4)));
        while (!stopping.load()) {
            std::this_thread::sleep_for(period);
            std::vector<Outgoing> out;
            {
                std::lock_guard<std::mutex> lock(mu);
                const auto ev = core->detect_failures(now_ms());
                for (const auto& wid : ev.evicted) worker_conns.erase(wid);
                assignments_to_outgoing(ev.reassigned, out);
                flush_log_locked();
            }
            deliver(std::move(out));
        }
    }
};

ManagerServer::ManagerServer(ManagerServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

ManagerServer::~ManagerServer() { stop(); }

void ManagerServer::start() {
    auto& im = *impl_;
    im.listener.emplace(im.opts.host, im.opts.port);
    im.t0 = std::chrono::steady_clock::now();
    im.core.emplace(im.opts.core, 0);
    if (!im.opts.event_log_path.empty()) {
        im.event_out.open(im.opts.event_log_path, std::ios::trunc);
        if (!im.event_out) throw ConfigError("cannot write event log " + im.opts.event_log_path);
    }
    {
        std::lock_guard<std::mutex> lock(im.mu);
        im.flush_log_locked();
    }
    if (!im.opts.port_file.empty()) {
        const std::string tmp = im.opts.port_file + ".tmp";
        std::ofstream out(tmp, std::ios::trunc);
        out << im.listener->port() << '\n';
        out.close();
        if (std::rename(tmp.c_str(), im.opts.port_file.c_str()) != 0)
            throw ConfigError("cannot write port file " + im.opts.port_file);
    }
    im.threads.emplace_back([&im] { im.accept_loop(); });
    im.threads.emplace_back([&im] { im.ticker_loop(); });
}

void ManagerServer::stop() {
    auto& im = *impl_;
    if (im.stopping.exchange(true)) return;
    if (im.listener) im.listener->shutdown();
    std::vector<std::thread> to_join;
    {
        std::lock_guard<std::mutex> lock(im.mu);
        for (const auto& conn : im.all_conns) conn->sock.shutdown();
        to_join.swap(im.threads);
    }
    for (auto& t : to_join) t.join();
    // Readers spawned between the swap and the joins cannot exist: accept
    // loop checked `stopping` under the same mutex.
    std::lock_guard<std::mutex> lock(im.mu);
    if (im.core) im.flush_log_locked();
}

std::uint16_t ManagerServer::port() const { return impl_->listener ? impl_->listener->port() : 0; }

std::size_t ManagerServer::worker_count() const {
    std::lock_guard<std::mutex> lock(impl_->mu);
    return impl_->core ? impl_->core->active_worker_ids().size() : 0;
}

std::vector<std::string> ManagerServer::event_log_copy() const {
    std::lock_guard<std::mutex> lock(impl_->mu);
    return impl_->core ? impl_->core->event_log() : std::vector<std::string>{};
}

} // namespace qufleet
