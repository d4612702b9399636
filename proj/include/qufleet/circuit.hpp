#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qufleet/statevector.hpp"

namespace qufleet {

// Register layout of one fidelity circuit: ancilla at qubit 0, data register
// at 1..m, model register at m+1..2m, with qubit_count = 1 + 2m (odd).
struct LayerSpec {
    std::uint32_t n_layers = 1;    // 1..3
    std::uint32_t qubit_count = 5;

    std::uint32_t n_model_qubits() const { return (qubit_count - 1) / 2; }
    std::uint32_t n_data_qubits() const { return (qubit_count - 1) / 2; }
    std::uint32_t ancilla() const { return 0; }
    std::uint32_t data_qubit(std::uint32_t k) const { return 1 + k; }
    std::uint32_t model_qubit(std::uint32_t k) const { return 1 + n_data_qubits() + k; }
    std::vector<std::uint32_t> data_register() const;
    std::vector<std::uint32_t> model_register() const;

    void validate() const;  // ArgumentError on bad layer count, ShapeError on even/small qubit_count
};

// Trainable parameters per (layer spec): 2 per model qubit for layer 1, plus
// 2 per adjacent pair for each of layers 2 and 3.
std::size_t param_count(const LayerSpec& spec);

struct ParamBinding {
    std::size_t gate_pos = 0;  // position in LogicalCircuit::gates holding this parameter's angle
    bool operator==(const ParamBinding&) const = default;
};

// The schedulable unit: a gate list plus the resource demand it declares.
struct LogicalCircuit {
    std::string circuit_id;
    std::uint32_t qubit_demand = 0;
    std::vector<Gate> gates;
    std::vector<ParamBinding> param_bindings;  // vector index == parameter index
    std::uint32_t ancilla_index = 0;

    std::size_t param_count() const { return param_bindings.size(); }
    double param_angle(std::size_t param_index) const;

    // Checks the structural invariants: targets < qubit_demand, bindings in
    // range and on distinct parameterized gate positions.
    void validate() const;

    bool operator==(const LogicalCircuit&) const = default;
};

// Two features per data qubit: RY(angles[2k]) then RZ(angles[2k+1]) on
// target_register[k]. Angles must lie in [0, pi].
std::vector<Gate> encode_features(std::span<const double> angles,
                                  std::span<const std::uint32_t> target_register);

struct LayerBuild {
    std::vector<Gate> gates;
    std::vector<ParamBinding> bindings;  // positions relative to `gates`
};

// Model-register gates for the requested depth:
//   layer 1: RY, RZ on each model qubit
//   layer 2 (n_layers >= 2): RYY, RZZ on each adjacent model pair
//   layer 3 (n_layers == 3): CRY, CRZ on each adjacent model pair
// Every gate angle is bound to one trainable parameter, in construction order.
LayerBuild build_layers(const LayerSpec& spec, std::span<const double> params);

// encoding || layers || swap-test scaffold (H on ancilla, one CSWAP per
// data/model pair controlled on the ancilla, H on ancilla).
LogicalCircuit assemble_swap_circuit(std::string circuit_id, std::vector<Gate> encoding,
                                     LayerBuild layers, const LayerSpec& spec);

// Copy with the bound angle adjusted by delta and the id suffixed with the
// shift direction and parameter index; the original is untouched.
LogicalCircuit shift_parameter(const LogicalCircuit& circuit, std::size_t param_index, double delta);

// Canonical byte encoding: one format version byte (0x01) followed by
// length-prefixed UTF-8 records ("<len>:<text>\n") in a fixed key order.
// Identical circuits always serialize to identical bytes. See PROTOCOL.md.
std::string serialize_circuit(const LogicalCircuit& circuit);
LogicalCircuit parse_circuit(std::string_view bytes);  // DecodeError with offset on malformed input

constexpr std::uint8_t kCircuitFormatVersion = 0x01;

} // namespace qufleet
