// hilbert.hpp — truncated two-mode Fock space and dense operator algebra on it
// Basis is row-major with mode 1 as the slow index: |n1 n2>.
#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace crosskit::hilbert {

// --------------------------- space ------------------------------------------

struct SpaceDescriptor {
    std::array<int, 2> levels_per_mode{0, 0};
    int dimension{0};
    std::vector<std::pair<int, int>> basis_labels;  // (n1, n2), row-major, mode 1 slow

    int index_of(int n1, int n2) const {
        if (n1 < 0 || n1 >= levels_per_mode[0] || n2 < 0 || n2 >= levels_per_mode[1]) {
            throw std::invalid_argument("SpaceDescriptor: occupation out of range");
        }
        return n1 * levels_per_mode[1] + n2;
    }

    bool operator==(const SpaceDescriptor& other) const {
        return levels_per_mode == other.levels_per_mode;
    }
};

inline SpaceDescriptor make_space(const std::vector<int>& levels_per_mode) {
    if (levels_per_mode.size() != 2) {
        throw std::invalid_argument("make_space: exactly two modes are supported");
    }
    for (int l : levels_per_mode) {
        if (l < 2) {
            throw std::invalid_argument("make_space: a qubit needs at least two levels per mode");
        }
    }
    SpaceDescriptor space;
    space.levels_per_mode = {levels_per_mode[0], levels_per_mode[1]};
    space.dimension = levels_per_mode[0] * levels_per_mode[1];
    space.basis_labels.reserve(static_cast<std::size_t>(space.dimension));
    for (int n1 = 0; n1 < levels_per_mode[0]; ++n1) {
        for (int n2 = 0; n2 < levels_per_mode[1]; ++n2) {
            space.basis_labels.emplace_back(n1, n2);
        }
    }
    return space;
}

// --------------------------- operators --------------------------------------

struct Operator {
    SpaceDescriptor space;
    Eigen::MatrixXcd matrix;

    Operator() = default;
    Operator(SpaceDescriptor s, Eigen::MatrixXcd m) : space(std::move(s)), matrix(std::move(m)) {
        if (matrix.rows() != space.dimension || matrix.cols() != space.dimension) {
            throw std::invalid_argument("Operator: matrix dimensions do not match the space");
        }
    }
};

inline void require_same_space(const Operator& a, const Operator& b, const char* who) {
    if (!(a.space == b.space)) {
        throw std::invalid_argument(std::string(who) + ": operators live on different spaces");
    }
}

inline Operator identity(const SpaceDescriptor& space) {
    return {space, Eigen::MatrixXcd::Identity(space.dimension, space.dimension)};
}

inline Operator zero(const SpaceDescriptor& space) {
    return {space, Eigen::MatrixXcd::Zero(space.dimension, space.dimension)};
}

// Annihilation operator on the selected mode (1 or 2), identity on the other:
// <..., n-1, ...| a |..., n, ...> = sqrt(n).
inline Operator annihilation(const SpaceDescriptor& space, int mode) {
    if (mode != 1 && mode != 2) {
        throw std::invalid_argument("annihilation: mode must be 1 or 2");
    }
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(space.dimension, space.dimension);
    for (int row = 0; row < space.dimension; ++row) {
        auto [n1, n2] = space.basis_labels[static_cast<std::size_t>(row)];
        int n = (mode == 1) ? n1 : n2;
        int top = space.levels_per_mode[static_cast<std::size_t>(mode - 1)];
        if (n + 1 < top) {
            int col = (mode == 1) ? space.index_of(n1 + 1, n2) : space.index_of(n1, n2 + 1);
            m(row, col) = std::sqrt(static_cast<double>(n + 1));
        }
    }
    return {space, std::move(m)};
}

inline Operator adjoint(const Operator& op) {
    return {op.space, op.matrix.adjoint()};
}

inline Operator number_operator(const SpaceDescriptor& space, int mode) {
    Operator a = annihilation(space, mode);
    return {space, a.matrix.adjoint() * a.matrix};
}

inline Operator operator+(const Operator& a, const Operator& b) {
    require_same_space(a, b, "operator+");
    return {a.space, a.matrix + b.matrix};
}

inline Operator operator-(const Operator& a, const Operator& b) {
    require_same_space(a, b, "operator-");
    return {a.space, a.matrix - b.matrix};
}

inline Operator operator*(const Operator& a, const Operator& b) {
    require_same_space(a, b, "operator*");
    return {a.space, a.matrix * b.matrix};
}

inline Operator operator*(std::complex<double> scalar, const Operator& op) {
    return {op.space, scalar * op.matrix};
}

inline Operator operator*(double scalar, const Operator& op) {
    return {op.space, scalar * op.matrix};
}

// Checkable hermiticity predicate: max |O - O†| below tolerance.
inline bool hermitian(const Operator& op, double tol = 1e-12) {
    return (op.matrix - op.matrix.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace crosskit::hilbert
