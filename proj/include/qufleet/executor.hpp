#pragma once

#include <cstdint>
#include <optional>

#include "qufleet/circuit.hpp"

namespace qufleet {

// Load, execute, measure: fresh |0..0> register of the declared demand,
// gates applied in order (logical qubit k on physical qubit k), fidelity
// read as prob_zero(ancilla). With shots, the exact probability is replaced
// by a seeded Bernoulli frequency.
double run_circuit(const LogicalCircuit& circuit, std::optional<std::uint64_t> shots = std::nullopt,
                   std::uint64_t seed = 0);

} // namespace qufleet
