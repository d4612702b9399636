#include "qufleet/executor.hpp"

#include "qufleet/statevector.hpp"

namespace qufleet {

double run_circuit(const LogicalCircuit& circuit, std::optional<std::uint64_t> shots, std::uint64_t seed) {
    circuit.validate();
    StateVector state(circuit.qubit_demand);
    state = state.applied(circuit.gates);
    const double exact = state.prob_zero(circuit.ancilla_index);
    if (!shots) return exact;
    return sample_bernoulli_frequency(exact, *shots, seed);
}

} // namespace qufleet
