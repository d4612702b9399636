#include "qufleet/circuit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "qufleet/errors.hpp"
#include "qufleet/textio.hpp"

namespace qufleet {

std::vector<std::uint32_t> LayerSpec::data_register() const {
    std::vector<std::uint32_t> qs(n_data_qubits());
    for (std::uint32_t k = 0; k < qs.size(); ++k) qs[k] = data_qubit(k);
    return qs;
}

std::vector<std::uint32_t> LayerSpec::model_register() const {
    std::vector<std::uint32_t> qs(n_model_qubits());
    for (std::uint32_t k = 0; k < qs.size(); ++k) qs[k] = model_qubit(k);
    return qs;
}

void LayerSpec::validate() const {
    if (n_layers < 1 || n_layers > 3)
        throw ArgumentError("layer count must be 1, 2 or 3 (got " + std::to_string(n_layers) + ")");
    if (qubit_count < 3 || qubit_count % 2 == 0)
        throw ShapeError("qubit count must be odd and >= 3 (got " + std::to_string(qubit_count) + ")");
}

std::size_t param_count(const LayerSpec& spec) {
    spec.validate();
    const std::size_t m = spec.n_model_qubits();
    std::size_t count = 2 * m;
    if (spec.n_layers >= 2) count += 2 * (m - 1);
    if (spec.n_layers == 3) count += 2 * (m - 1);
    return count;
}

double LogicalCircuit::param_angle(std::size_t param_index) const {
    if (param_index >= param_bindings.size()) throw IndexError("parameter index out of range");
    return gates[param_bindings[param_index].gate_pos].angle;
}

void LogicalCircuit::validate() const {
    if (qubit_demand < 1) throw ShapeError("circuit demands no qubits");
    if (ancilla_index >= qubit_demand) throw IndexError("ancilla index outside the register");
    for (const auto& g : gates) validate_gate(g, qubit_demand);
    std::set<std::size_t> positions;
    for (const auto& b : param_bindings) {
        if (b.gate_pos >= gates.size()) throw IndexError("parameter binding past the gate list");
        if (!gate_has_angle(gates[b.gate_pos].kind))
            throw ArgumentError("parameter bound to an angle-free gate");
        if (!positions.insert(b.gate_pos).second)
            throw ArgumentError("two parameters bound to one gate position");
    }
}

std::vector<Gate> encode_features(std::span<const double> angles,
                                  std::span<const std::uint32_t> target_register) {
    if (angles.size() != 2 * target_register.size())
        throw ShapeError("need 2 angles per data qubit: got " + std::to_string(angles.size()) +
                         " for " + std::to_string(target_register.size()) + " qubits");
    for (double a : angles)
        if (!(a >= 0.0 && a <= std::numbers::pi))
            throw RangeError("encoding angle " + format_double(a) + " outside [0, pi]");
    std::vector<Gate> gates;
    gates.reserve(angles.size());
    for (std::size_t k = 0; k < target_register.size(); ++k) {
        gates.push_back(Gate::ry(target_register[k], angles[2 * k]));
        gates.push_back(Gate::rz(target_register[k], angles[2 * k + 1]));
    }
    return gates;
}

LayerBuild build_layers(const LayerSpec& spec, std::span<const double> params) {
    const std::size_t expected = param_count(spec);
    if (params.size() != expected)
        throw ShapeError("expected " + std::to_string(expected) + " parameters, got " +
                         std::to_string(params.size()));
    LayerBuild out;
    std::size_t next = 0;
    auto bind = [&out, &next, &params](Gate gate) {
        gate.angle = params[next++];
        out.bindings.push_back({out.gates.size()});
        out.gates.push_back(std::move(gate));
    };

    const std::uint32_t m = spec.n_model_qubits();
    for (std::uint32_t k = 0; k < m; ++k) {
        bind(Gate::ry(spec.model_qubit(k), 0));
        bind(Gate::rz(spec.model_qubit(k), 0));
    }
    if (spec.n_layers >= 2) {
        for (std::uint32_t k = 0; k + 1 < m; ++k) {
            bind(Gate::ryy(spec.model_qubit(k), spec.model_qubit(k + 1), 0));
            bind(Gate::rzz(spec.model_qubit(k), spec.model_qubit(k + 1), 0));
        }
    }
    if (spec.n_layers == 3) {
        for (std::uint32_t k = 0; k + 1 < m; ++k) {
            bind(Gate::cry(spec.model_qubit(k), spec.model_qubit(k + 1), 0));
            bind(Gate::crz(spec.model_qubit(k), spec.model_qubit(k + 1), 0));
        }
    }
    return out;
}

LogicalCircuit assemble_swap_circuit(std::string circuit_id, std::vector<Gate> encoding,
                                     LayerBuild layers, const LayerSpec& spec) {
    spec.validate();
    const auto data = spec.data_register();
    const auto model = spec.model_register();
    auto in_register = [](const std::vector<std::uint32_t>& reg, std::uint32_t q) {
        return std::find(reg.begin(), reg.end(), q) != reg.end();
    };
    for (const auto& g : encoding)
        for (auto q : g.targets)
            if (!in_register(data, q))
                throw LayoutError("encoding gate touches qubit " + std::to_string(q) +
                                  " outside the data register");
    for (const auto& g : layers.gates)
        for (auto q : g.targets)
            if (!in_register(model, q))
                throw LayoutError("layer gate touches qubit " + std::to_string(q) +
                                  " outside the model register");

    LogicalCircuit circuit;
    circuit.circuit_id = std::move(circuit_id);
    circuit.qubit_demand = spec.qubit_count;
    circuit.ancilla_index = spec.ancilla();
    circuit.gates = std::move(encoding);
    const std::size_t offset = circuit.gates.size();
    circuit.gates.insert(circuit.gates.end(), layers.gates.begin(), layers.gates.end());
    circuit.param_bindings.reserve(layers.bindings.size());
    for (const auto& b : layers.bindings) circuit.param_bindings.push_back({b.gate_pos + offset});

    circuit.gates.push_back(Gate::h(spec.ancilla()));
    for (std::uint32_t k = 0; k < spec.n_data_qubits(); ++k)
        circuit.gates.push_back(Gate::cswap(spec.ancilla(), spec.data_qubit(k), spec.model_qubit(k)));
    circuit.gates.push_back(Gate::h(spec.ancilla()));

    circuit.validate();
    return circuit;
}

LogicalCircuit shift_parameter(const LogicalCircuit& circuit, std::size_t param_index, double delta) {
    if (param_index >= circuit.param_bindings.size())
        throw IndexError("parameter " + std::to_string(param_index) + " out of range (circuit has " +
                         std::to_string(circuit.param_bindings.size()) + ")");
    LogicalCircuit shifted = circuit;
    shifted.gates[circuit.param_bindings[param_index].gate_pos].angle += delta;
    shifted.circuit_id += (delta >= 0 ? "+p" : "-p") + std::to_string(param_index);
    return shifted;
}

namespace {

void append_record(std::string& out, const std::string& text) {
    out += std::to_string(text.size());
    out += ':';
    out += text;
    out += '\n';
}

// Reads one "<len>:<text>\n" record starting at `pos`; advances pos.
std::string read_record(std::string_view bytes, std::size_t& pos) {
    const std::size_t start = pos;
    std::size_t len = 0;
    bool any = false;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
        len = len * 10 + static_cast<std::size_t>(bytes[pos] - '0');
        if (len > 1 << 24) throw DecodeError("record length too large", start);
        ++pos;
        any = true;
    }
    if (!any) throw DecodeError("expected record length", pos);
    if (pos >= bytes.size() || bytes[pos] != ':') throw DecodeError("expected ':' after length", pos);
    ++pos;
    if (bytes.size() - pos < len + 1) throw DecodeError("truncated record", bytes.size());
    std::string text(bytes.substr(pos, len));
    pos += len;
    if (bytes[pos] != '\n') throw DecodeError("record missing terminator", pos);
    ++pos;
    return text;
}

std::string_view record_value(const std::string& record, std::string_view key, std::size_t offset) {
    if (record.size() < key.size() + 1 || record.compare(0, key.size(), key) != 0 ||
        record[key.size()] != '=')
        throw DecodeError("expected '" + std::string(key) + "=' record, got '" + record + "'", offset);
    return std::string_view(record).substr(key.size() + 1);
}

} // namespace

std::string serialize_circuit(const LogicalCircuit& circuit) {
    circuit.validate();
    std::string out;
    out += static_cast<char>(kCircuitFormatVersion);
    append_record(out, "id=" + circuit.circuit_id);
    append_record(out, "qubits=" + std::to_string(circuit.qubit_demand));
    append_record(out, "ancilla=" + std::to_string(circuit.ancilla_index));
    append_record(out, "gates=" + std::to_string(circuit.gates.size()));
    for (const auto& g : circuit.gates) {
        std::string rec = "g=";
        rec += gate_name(g.kind);
        for (auto t : g.targets) rec += ' ' + std::to_string(t);
        if (gate_has_angle(g.kind)) rec += ' ' + format_double(g.angle);
        append_record(out, rec);
    }
    append_record(out, "params=" + std::to_string(circuit.param_bindings.size()));
    for (const auto& b : circuit.param_bindings) append_record(out, "p=" + std::to_string(b.gate_pos));
    return out;
}

LogicalCircuit parse_circuit(std::string_view bytes) {
    if (bytes.empty()) throw DecodeError("empty circuit payload", 0);
    if (static_cast<std::uint8_t>(bytes[0]) != kCircuitFormatVersion)
        throw DecodeError("unsupported circuit format version " +
                              std::to_string(static_cast<unsigned>(static_cast<std::uint8_t>(bytes[0]))),
                          0);
    std::size_t pos = 1;
    LogicalCircuit circuit;

    std::size_t at = pos;
    circuit.circuit_id = std::string(record_value(read_record(bytes, pos), "id", at));
    at = pos;
    circuit.qubit_demand = parse_u32(record_value(read_record(bytes, pos), "qubits", at));
    at = pos;
    circuit.ancilla_index = parse_u32(record_value(read_record(bytes, pos), "ancilla", at));
    at = pos;
    const std::uint64_t n_gates = parse_u64(record_value(read_record(bytes, pos), "gates", at));
    if (n_gates > 1 << 20) throw DecodeError("implausible gate count", at);
    circuit.gates.reserve(n_gates);
    for (std::uint64_t i = 0; i < n_gates; ++i) {
        at = pos;
        const std::string rec = read_record(bytes, pos);
        const auto fields = split(record_value(rec, "g", at), ' ');
        if (fields.empty()) throw DecodeError("empty gate record", at);
        const auto kind = gate_from_name(fields[0]);
        if (!kind) throw DecodeError("unknown gate kind '" + std::string(fields[0]) + "'", at);
        Gate gate{*kind, {}, 0.0};
        const std::size_t arity = static_cast<std::size_t>(gate_arity(*kind));
        const std::size_t expected_fields = 1 + arity + (gate_has_angle(*kind) ? 1 : 0);
        if (fields.size() != expected_fields) throw DecodeError("bad gate field count", at);
        for (std::size_t t = 0; t < arity; ++t) gate.targets.push_back(parse_u32(fields[1 + t]));
        if (gate_has_angle(*kind)) gate.angle = parse_double(fields[1 + arity]);
        circuit.gates.push_back(std::move(gate));
    }
    at = pos;
    const std::uint64_t n_params = parse_u64(record_value(read_record(bytes, pos), "params", at));
    if (n_params > 1 << 20) throw DecodeError("implausible parameter count", at);
    for (std::uint64_t i = 0; i < n_params; ++i) {
        at = pos;
        circuit.param_bindings.push_back({parse_u64(record_value(read_record(bytes, pos), "p", at))});
    }
    if (pos != bytes.size()) throw DecodeError("trailing bytes after circuit", pos);

    try {
        circuit.validate();
    } catch (const Error& e) {
        throw DecodeError(std::string("circuit fails validation: ") + e.what(), pos);
    }
    return circuit;
}

} // namespace qufleet
