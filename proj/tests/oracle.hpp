// Test-only reference implementations, kept independent of the library's
// gate-application path: states are built by explicit matrix products on
// small dense vectors.
#pragma once

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "qufleet/statevector.hpp"

namespace oracle {

using C = std::complex<double>;
using Vec = std::vector<C>;
using Mat = std::vector<std::vector<C>>;

inline Mat identity(std::size_t dim) {
    Mat m(dim, std::vector<C>(dim, C(0)));
    for (std::size_t i = 0; i < dim; ++i) m[i][i] = C(1);
    return m;
}

inline Vec mat_vec(const Mat& m, const Vec& v) {
    Vec out(m.size(), C(0));
    for (std::size_t r = 0; r < m.size(); ++r)
        for (std::size_t c = 0; c < v.size(); ++c) out[r] += m[r][c] * v[c];
    return out;
}

// Full 2^n x 2^n matrix embedding a k-qubit gate on the given targets
// (qubit 0 = least-significant bit; matrix index = sum_i bit(target_i) << i).
inline Mat embed(std::size_t n_qubits, const Mat& gate, const std::vector<std::uint32_t>& targets) {
    const std::size_t dim = std::size_t{1} << n_qubits;
    const std::size_t k = targets.size();
    Mat full(dim, std::vector<C>(dim, C(0)));
    for (std::size_t col = 0; col < dim; ++col) {
        std::size_t gcol = 0;
        for (std::size_t i = 0; i < k; ++i) gcol |= ((col >> targets[i]) & 1u) << i;
        const std::size_t rest = [&] {
            std::size_t r = col;
            for (auto t : targets) r &= ~(std::size_t{1} << t);
            return r;
        }();
        for (std::size_t grow = 0; grow < (std::size_t{1} << k); ++grow) {
            std::size_t row = rest;
            for (std::size_t i = 0; i < k; ++i)
                if ((grow >> i) & 1u) row |= std::size_t{1} << targets[i];
            full[row][col] += gate[grow][gcol];
        }
    }
    return full;
}

inline Mat h2() {
    const double r = 1 / std::sqrt(2.0);
    return {{C(r), C(r)}, {C(r), C(-r)}};
}
inline Mat rx2(double t) {
    return {{C(std::cos(t / 2)), C(0, -std::sin(t / 2))}, {C(0, -std::sin(t / 2)), C(std::cos(t / 2))}};
}
inline Mat ry2(double t) {
    return {{C(std::cos(t / 2)), C(-std::sin(t / 2))}, {C(std::sin(t / 2)), C(std::cos(t / 2))}};
}
inline Mat rz2(double t) { return {{std::polar(1.0, -t / 2), C(0)}, {C(0), std::polar(1.0, t / 2)}}; }

// exp(-i t/2 Y(x)Y) built from its series: cos(t/2) I - i sin(t/2) Y(x)Y.
inline Mat ryy4(double t) {
    Mat m = identity(4);
    const C c(std::cos(t / 2)), is(0, std::sin(t / 2));
    for (auto& row : m)
        for (auto& v : row) v = C(0);
    m[0][0] = m[1][1] = m[2][2] = m[3][3] = c;
    m[0][3] = m[3][0] = is;
    m[1][2] = m[2][1] = -is;
    return m;
}
inline Mat rzz4(double t) {
    Mat m = identity(4);
    m[0][0] = m[3][3] = std::polar(1.0, -t / 2);
    m[1][1] = m[2][2] = std::polar(1.0, t / 2);
    return m;
}
// exp(-i t/2 (P0 (x) I + P1 (x) Y)): RY on target when control set, phase
// e^{-it/2} on the clear branch. Index = control_bit + 2*target_bit.
inline Mat cry4(double t) {
    Mat m = identity(4);
    const C em = std::polar(1.0, -t / 2);
    m[0][0] = m[2][2] = em;
    m[1][1] = C(std::cos(t / 2));
    m[1][3] = C(-std::sin(t / 2));
    m[3][1] = C(std::sin(t / 2));
    m[3][3] = C(std::cos(t / 2));
    return m;
}
inline Mat crz4(double t) {
    Mat m = identity(4);
    const C em = std::polar(1.0, -t / 2);
    m[0][0] = m[2][2] = em;
    m[1][1] = em;
    m[3][3] = std::polar(1.0, t / 2);
    return m;
}
inline Mat cswap8() {
    Mat m = identity(8);
    // index = control + 2a + 4b; control set and a!=b swaps (a,b)
    std::swap(m[0b011], m[0b101]);
    return m;
}

inline Mat gate_matrix(const qufleet::Gate& g) {
    using qufleet::GateKind;
    switch (g.kind) {
    case GateKind::H: return h2();
    case GateKind::RX: return rx2(g.angle);
    case GateKind::RY: return ry2(g.angle);
    case GateKind::RZ: return rz2(g.angle);
    case GateKind::RYY: return ryy4(g.angle);
    case GateKind::RZZ: return rzz4(g.angle);
    case GateKind::CRY: return cry4(g.angle);
    case GateKind::CRZ: return crz4(g.angle);
    case GateKind::CSWAP: return cswap8();
    }
    throw std::logic_error("unknown kind");
}

inline Vec apply_gates(std::size_t n_qubits, Vec state, const std::vector<qufleet::Gate>& gates) {
    for (const auto& g : gates) state = mat_vec(embed(n_qubits, gate_matrix(g), g.targets), state);
    return state;
}

inline C inner(const Vec& a, const Vec& b) {
    C acc(0);
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
    return acc;
}

inline Vec random_state(std::size_t n_qubits, std::mt19937_64& eng) {
    std::normal_distribution<double> g(0, 1);
    Vec v(std::size_t{1} << n_qubits);
    double norm2 = 0;
    for (auto& a : v) {
        a = C(g(eng), g(eng));
        norm2 += std::norm(a);
    }
    for (auto& a : v) a /= std::sqrt(norm2);
    return v;
}

} // namespace oracle
