#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qufleet/circuit.hpp"
#include "qufleet/comanager.hpp"
#include "qufleet/dataset.hpp"
#include "qufleet/errors.hpp"
#include "qufleet/executor.hpp"
#include "qufleet/segmentation.hpp"
#include "qufleet/statevector.hpp"
#include "qufleet/trainer.hpp"

namespace py = pybind11;
using namespace qufleet;

namespace {

std::vector<Complex> amplitudes_list(const StateVector& sv) {
    return {sv.amplitudes().begin(), sv.amplitudes().end()};
}

} // namespace

PYBIND11_MODULE(_qufleet, m) {
    m.doc() = "statevector simulation, circuit construction and fleet scheduling primitives";

    py::register_exception<Error>(m, "QufleetError");

    py::enum_<GateKind>(m, "GateKind")
        .value("H", GateKind::H)
        .value("RX", GateKind::RX)
        .value("RY", GateKind::RY)
        .value("RZ", GateKind::RZ)
        .value("RYY", GateKind::RYY)
        .value("RZZ", GateKind::RZZ)
        .value("CRY", GateKind::CRY)
        .value("CRZ", GateKind::CRZ)
        .value("CSWAP", GateKind::CSWAP);

    py::class_<Gate>(m, "Gate")
        .def(py::init([](GateKind kind, std::vector<std::uint32_t> targets, double angle) {
                 return Gate{kind, std::move(targets), angle};
             }),
             py::arg("kind"), py::arg("targets"), py::arg("angle") = 0.0)
        .def_readonly("kind", &Gate::kind)
        .def_readonly("targets", &Gate::targets)
        .def_readonly("angle", &Gate::angle)
        .def("__repr__", [](const Gate& g) {
            std::string r = "Gate(" + std::string(gate_name(g.kind));
            for (auto t : g.targets) r += " " + std::to_string(t);
            if (gate_has_angle(g.kind)) r += ", angle=" + std::to_string(g.angle);
            return r + ")";
        });
    m.def("h", &Gate::h);
    m.def("rx", &Gate::rx);
    m.def("ry", &Gate::ry);
    m.def("rz", &Gate::rz);
    m.def("ryy", &Gate::ryy);
    m.def("rzz", &Gate::rzz);
    m.def("cry", &Gate::cry);
    m.def("crz", &Gate::crz);
    m.def("cswap", &Gate::cswap);

    py::class_<StateVector>(m, "StateVector")
        .def(py::init<std::uint32_t, std::uint32_t>(), py::arg("n_qubits"),
             py::arg("max_qubits") = StateVector::kMaxQubits)
        .def_static("from_amplitudes",
                    [](std::uint32_t n, std::vector<Complex> amps) {
                        return StateVector::from_amplitudes(n, std::move(amps));
                    })
        .def_property_readonly("n_qubits", &StateVector::n_qubits)
        .def_property_readonly("dimension", &StateVector::dimension)
        .def("amplitudes", &amplitudes_list)
        .def("norm", &StateVector::norm)
        .def("prob_zero", &StateVector::prob_zero, py::arg("qubit"))
        .def("applied", [](const StateVector& sv, const Gate& g) { return sv.applied(g); })
        .def("applied", [](const StateVector& sv, const std::vector<Gate>& gs) {
            return sv.applied(std::span<const Gate>(gs));
        });

    m.def("new_state", &new_state, py::arg("n_qubits"));
    m.def("apply_gate", &apply_gate, py::arg("state"), py::arg("gate"));
    m.def("prob_zero", &prob_zero, py::arg("state"), py::arg("qubit"));
    m.def(
        "swap_test_fidelity",
        [](const StateVector& psi, const StateVector& phi, std::optional<std::uint64_t> shots,
           std::uint64_t seed) { return swap_test_fidelity(psi, phi, shots, seed); },
        py::arg("psi"), py::arg("phi"), py::arg("shots") = std::nullopt, py::arg("seed") = 0);

    py::class_<LayerSpec>(m, "LayerSpec")
        .def(py::init([](std::uint32_t n_layers, std::uint32_t qubit_count) {
                 LayerSpec s{n_layers, qubit_count};
                 s.validate();
                 return s;
             }),
             py::arg("n_layers"), py::arg("qubit_count"))
        .def_readonly("n_layers", &LayerSpec::n_layers)
        .def_readonly("qubit_count", &LayerSpec::qubit_count)
        .def_property_readonly("n_data_qubits", &LayerSpec::n_data_qubits)
        .def_property_readonly("n_model_qubits", &LayerSpec::n_model_qubits)
        .def("data_register", &LayerSpec::data_register)
        .def("model_register", &LayerSpec::model_register);

    m.def("param_count", &param_count, py::arg("spec"));

    py::class_<LogicalCircuit>(m, "LogicalCircuit")
        .def_readonly("circuit_id", &LogicalCircuit::circuit_id)
        .def_readonly("qubit_demand", &LogicalCircuit::qubit_demand)
        .def_readonly("gates", &LogicalCircuit::gates)
        .def_readonly("ancilla_index", &LogicalCircuit::ancilla_index)
        .def_property_readonly("param_count", &LogicalCircuit::param_count)
        .def("param_angle", &LogicalCircuit::param_angle, py::arg("param_index"))
        .def("__eq__", [](const LogicalCircuit& a, const LogicalCircuit& b) { return a == b; });

    m.def("encode_features",
          [](const std::vector<double>& angles, const std::vector<std::uint32_t>& targets) {
              return encode_features(angles, targets);
          },
          py::arg("angles"), py::arg("target_register"));
    m.def(
        "build_swap_circuit",
        [](const std::string& circuit_id, const std::vector<double>& data_angles,
           const std::vector<double>& params, const LayerSpec& spec) {
            auto data_reg = spec.data_register();
            return assemble_swap_circuit(circuit_id, encode_features(data_angles, data_reg),
                                         build_layers(spec, params), spec);
        },
        py::arg("circuit_id"), py::arg("data_angles"), py::arg("params"), py::arg("spec"),
        "Encoding, model layers and the swap-test scaffold in one logical circuit.");
    m.def("shift_parameter", &shift_parameter, py::arg("circuit"), py::arg("param_index"),
          py::arg("delta"));
    m.def("serialize_circuit",
          [](const LogicalCircuit& c) { return py::bytes(serialize_circuit(c)); });
    m.def("parse_circuit", [](const py::bytes& b) { return parse_circuit(std::string(b)); });
    m.def(
        "run_circuit",
        [](const LogicalCircuit& c, std::optional<std::uint64_t> shots, std::uint64_t seed) {
            return run_circuit(c, shots, seed);
        },
        py::arg("circuit"), py::arg("shots") = std::nullopt, py::arg("seed") = 0);

    py::class_<Patch>(m, "Patch")
        .def_readonly("source_id", &Patch::source_id)
        .def_readonly("row", &Patch::row)
        .def_readonly("col", &Patch::col)
        .def_readonly("pixels", &Patch::pixels);

    m.def(
        "segment",
        [](const std::vector<double>& pixels, std::uint32_t height, std::uint32_t width,
           std::uint32_t stride, std::uint32_t filter_width) {
            Image img{"py", height, width, pixels};
            return segment(img, stride, filter_width);
        },
        py::arg("pixels"), py::arg("height"), py::arg("width"), py::arg("stride"),
        py::arg("filter_width"));

    py::class_<DenseLayer>(m, "DenseLayer")
        .def(py::init([](std::uint32_t input_dim, std::uint32_t output_dim,
                         std::vector<double> weights, std::vector<double> bias) {
                 DenseLayer l{input_dim, output_dim, std::move(weights), std::move(bias)};
                 return l;
             }),
             py::arg("input_dim"), py::arg("output_dim"), py::arg("weights"), py::arg("bias"))
        .def_readonly("input_dim", &DenseLayer::input_dim)
        .def_readonly("output_dim", &DenseLayer::output_dim)
        .def_readonly("weights", &DenseLayer::weights)
        .def_readonly("bias", &DenseLayer::bias);

    m.def("make_dense", &make_dense, py::arg("input_dim"), py::arg("output_dim"), py::arg("seed"));
    m.def("dense_forward",
          [](const DenseLayer& l, const std::vector<double>& h) { return dense_forward(l, h); });
    m.def("dense_forward_linear", [](const DenseLayer& l, const std::vector<double>& h) {
        return dense_forward_linear(l, h);
    });

    m.def(
        "loss_and_predict",
        [](const std::vector<double>& fidelities, const std::vector<int>& class_labels,
           int true_label) {
            const auto r = loss_and_predict(fidelities, class_labels, true_label);
            return py::make_tuple(r.loss, r.predicted_label);
        },
        py::arg("class_fidelities"), py::arg("class_labels"), py::arg("true_label"));
    m.def("update_params",
          [](const std::vector<double>& params, const std::vector<double>& gradient, double alpha) {
              return update_params(params, gradient, alpha);
          });

    // Scheduling core under an injected clock, handy for quick experiments.
    py::class_<Assignment>(m, "Assignment")
        .def_readonly("circuit_id", &Assignment::circuit_id)
        .def_readonly("worker_id", &Assignment::worker_id);

    py::class_<ManagerCore>(m, "ManagerCore")
        .def(py::init([](std::int64_t heartbeat_period_ms, bool allow_exact_fit) {
                 return ManagerCore({{}, heartbeat_period_ms, allow_exact_fit}, 0);
             }),
             py::arg("heartbeat_period_ms") = 5000, py::arg("allow_exact_fit") = false)
        .def("register_worker", &ManagerCore::register_worker, py::arg("worker_id"),
             py::arg("max_qubits"), py::arg("cru"), py::arg("now_ms"))
        .def(
            "heartbeat",
            [](ManagerCore& core, const std::string& worker_id,
               const std::vector<std::pair<std::string, std::uint32_t>>& active, double cru,
               std::int64_t now_ms) { return core.on_heartbeat(worker_id, active, cru, now_ms); },
            py::arg("worker_id"), py::arg("active"), py::arg("cru"), py::arg("now_ms"))
        .def(
            "submit",
            [](ManagerCore& core, const std::string& circuit_id, std::uint32_t demand,
               const std::string& client_id, std::int64_t now_ms) {
                const auto r = core.submit(circuit_id, demand, client_id, "", now_ms);
                switch (r.disposition) {
                case SubmitDisposition::Assigned: return py::make_tuple("assigned", r.worker_id);
                case SubmitDisposition::Queued: return py::make_tuple("queued", "");
                case SubmitDisposition::Cached: return py::make_tuple("cached", r.cached_fidelity);
                default: return py::make_tuple("duplicate", "");
                }
            },
            py::arg("circuit_id"), py::arg("demand"), py::arg("client_id"), py::arg("now_ms"))
        .def(
            "complete",
            [](ManagerCore& core, const std::string& circuit_id, const std::string& worker_id,
               double fidelity, std::int64_t now_ms) {
                const auto r = core.complete(circuit_id, worker_id, fidelity, now_ms);
                return py::make_tuple(r.accepted, r.unblocked);
            },
            py::arg("circuit_id"), py::arg("worker_id"), py::arg("fidelity"), py::arg("now_ms"))
        .def(
            "detect_failures",
            [](ManagerCore& core, std::int64_t now_ms) {
                const auto r = core.detect_failures(now_ms);
                return py::make_tuple(r.evicted, r.reassigned);
            },
            py::arg("now_ms"))
        .def("queue_depth", &ManagerCore::queue_depth)
        .def("active_worker_ids", &ManagerCore::active_worker_ids)
        .def("event_log", &ManagerCore::event_log)
        .def("audit", &ManagerCore::audit);
}
