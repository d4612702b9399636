#include "qufleet/client.hpp"

#include <map>
#include <vector>

#include "qufleet/circuit.hpp"
#include "qufleet/errors.hpp"
#include "qufleet/net.hpp"
#include "qufleet/protocol.hpp"
#include "qufleet/textio.hpp"

namespace qufleet {

namespace proto = protocol;

struct ManagerClient::Impl {
    net::Socket sock;
    proto::FrameReader reader;
    std::vector<char> buf = std::vector<char>(64 * 1024);
    std::uint64_t next_corr = 1;

    proto::Message read_message() {
        while (true) {
            if (auto payload = reader.next()) return proto::decode_payload(*payload);
            const std::size_t n = sock.recv_some(buf.data(), buf.size());
            if (n == 0) throw TransportError("manager closed the connection");
            reader.feed({buf.data(), n});
        }
    }
};

ManagerClient::ManagerClient(const std::string& host, std::uint16_t port) : impl_(std::make_unique<Impl>()) {
    impl_->sock = net::connect_tcp(host, port);
}

ManagerClient::~ManagerClient() = default;

ResultMap ManagerClient::dispatch(const CircuitBank& bank, const DispatchOptions& options) {
    if (options.window < 1) throw ArgumentError("dispatch window must be positive");

    struct Pending {
        const BankEntry* entry = nullptr;
        std::uint32_t attempts = 0;
        bool resolved = false;
    };
    std::map<std::string, Pending> pending;
    for (const auto& entry : bank.entries) {
        if (!pending.emplace(entry.circuit.circuit_id, Pending{&entry, 0, false}).second)
            throw ArgumentError("bank contains duplicate circuit id " + entry.circuit.circuit_id);
    }

    ResultMap results;
    std::size_t next_submit = 0;
    std::size_t unresolved_in_flight = 0;

    auto submit_entry = [&](const BankEntry& entry) {
        proto::Submit body;
        body.client_id = options.client_id;
        body.circuit_id = entry.circuit.circuit_id;
        body.demand = entry.circuit.qubit_demand;
        body.circuit = serialize_circuit(entry.circuit);
        body.shots = options.shots;
        if (options.shots) body.seed = seed_mix(options.seed_base, hash_str(entry.circuit.circuit_id));
        impl_->sock.send_all(proto::encode_frame(proto::Message{impl_->next_corr++, std::move(body)}));
    };

    while (results.size() < bank.entries.size()) {
        while (unresolved_in_flight < options.window && next_submit < bank.entries.size()) {
            submit_entry(bank.entries[next_submit]);
            ++next_submit;
            ++unresolved_in_flight;
        }

        const proto::Message msg = impl_->read_message();
        if (const auto* ack = std::get_if<proto::SubmitAck>(&msg.body)) {
            switch (ack->status) {
            case proto::SubmitStatus::Assigned:
            case proto::SubmitStatus::Queued:
            case proto::SubmitStatus::Cached:
                break;  // JOB_RESULT follows
            case proto::SubmitStatus::Duplicate:
            case proto::SubmitStatus::Rejected:
                throw JobError("manager refused circuit " + ack->circuit_id + " (" +
                               std::string(proto::submit_status_name(ack->status)) + "): " + ack->detail);
            }
        } else if (const auto* jr = std::get_if<proto::JobResult>(&msg.body)) {
            const auto it = pending.find(jr->circuit_id);
            if (it == pending.end() || it->second.resolved) continue;  // stray or late duplicate
            if (jr->ok) {
                it->second.resolved = true;
                results[jr->circuit_id] = jr->fidelity;
                --unresolved_in_flight;
            } else if (it->second.attempts < options.retries) {
                ++it->second.attempts;
                submit_entry(*it->second.entry);
            } else {
                throw JobError("circuit " + jr->circuit_id + " failed after " +
                               std::to_string(options.retries + 1) + " attempts: " + jr->error);
            }
        } else if (const auto* err = std::get_if<proto::ErrorMsg>(&msg.body)) {
            throw JobError("manager error " + err->code + ": " + err->detail);
        }
        // Other message types are not expected on a client connection; skip.
    }
    return results;
}

} // namespace qufleet
