// test_hilbert.cpp — truncated two-mode Fock space and operator algebra
#include <catch2/catch_amalgamated.hpp>

#include <complex>

#include "crosskit/hilbert.hpp"

using namespace crosskit;
using hilbert::Operator;
using hilbert::SpaceDescriptor;

TEST_CASE("make_space builds row-major two-mode labels", "[hilbert]") {
    SpaceDescriptor space = hilbert::make_space({4, 4});
    REQUIRE(space.dimension == 16);
    REQUIRE(space.basis_labels.size() == 16);
    // Mode 1 is the slow index: |n1 n2> at position n1*4 + n2.
    REQUIRE(space.basis_labels[0] == std::pair<int, int>{0, 0});
    REQUIRE(space.basis_labels[1] == std::pair<int, int>{0, 1});
    REQUIRE(space.basis_labels[4] == std::pair<int, int>{1, 0});
    REQUIRE(space.basis_labels[15] == std::pair<int, int>{3, 3});
    REQUIRE(space.index_of(1, 2) == 6);
    REQUIRE(space.index_of(3, 0) == 12);

    SpaceDescriptor uneven = hilbert::make_space({3, 5});
    REQUIRE(uneven.dimension == 15);
    REQUIRE(uneven.index_of(2, 4) == 14);
    REQUIRE(uneven.basis_labels[5] == std::pair<int, int>{1, 0});
}

TEST_CASE("make_space rejects malformed mode lists", "[hilbert]") {
    REQUIRE_THROWS_AS(hilbert::make_space({4}), std::invalid_argument);
    REQUIRE_THROWS_AS(hilbert::make_space({4, 4, 4}), std::invalid_argument);
    REQUIRE_THROWS_AS(hilbert::make_space({1, 4}), std::invalid_argument);
    REQUIRE_THROWS_AS(hilbert::make_space({4, 0}), std::invalid_argument);
}

TEST_CASE("index_of rejects out-of-range occupations", "[hilbert]") {
    SpaceDescriptor space = hilbert::make_space({4, 4});
    REQUIRE_THROWS_AS(space.index_of(4, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(space.index_of(0, 4), std::invalid_argument);
    REQUIRE_THROWS_AS(space.index_of(-1, 0), std::invalid_argument);
}

TEST_CASE("annihilation operators carry sqrt(n) matrix elements", "[hilbert]") {
    SpaceDescriptor space = hilbert::make_space({4, 4});
    Operator b = hilbert::annihilation(space, 1);
    Operator c = hilbert::annihilation(space, 2);

    // <n1-1, n2| b |n1, n2> = sqrt(n1); everything else zero.
    REQUIRE(b.matrix(space.index_of(0, 2), space.index_of(1, 2)).real() == Catch::Approx(1.0));
    REQUIRE(b.matrix(space.index_of(1, 0), space.index_of(2, 0)).real() ==
            Catch::Approx(std::sqrt(2.0)));
    REQUIRE(b.matrix(space.index_of(2, 3), space.index_of(3, 3)).real() ==
            Catch::Approx(std::sqrt(3.0)));
    REQUIRE(c.matrix(space.index_of(0, 1), space.index_of(0, 2)).real() ==
            Catch::Approx(std::sqrt(2.0)));
    REQUIRE(std::abs(b.matrix(space.index_of(0, 0), space.index_of(0, 1))) == 0.0);

    // Truncation: nothing maps out of the top level.
    REQUIRE(b.matrix.col(space.index_of(0, 0)).norm() == 0.0);
    int nonzeros = 0;
    for (int i = 0; i < space.dimension; ++i) {
        for (int j = 0; j < space.dimension; ++j) {
            if (std::abs(b.matrix(i, j)) > 0.0) {
                ++nonzeros;
            }
        }
    }
    REQUIRE(nonzeros == 12);  // 3 transitions per column of mode 2's 4 values

    REQUIRE_THROWS_AS(hilbert::annihilation(space, 3), std::invalid_argument);
    REQUIRE_THROWS_AS(hilbert::annihilation(space, 0), std::invalid_argument);
}

TEST_CASE("number operator is diagonal occupation", "[hilbert]") {
    SpaceDescriptor space = hilbert::make_space({4, 4});
    Operator n1 = hilbert::number_operator(space, 1);
    Operator n2 = hilbert::number_operator(space, 2);
    for (int i = 0; i < space.dimension; ++i) {
        auto [a, b] = space.basis_labels[i];
        REQUIRE(n1.matrix(i, i).real() == Catch::Approx(static_cast<double>(a)));
        REQUIRE(n2.matrix(i, i).real() == Catch::Approx(static_cast<double>(b)));
        for (int j = 0; j < space.dimension; ++j) {
            if (i != j) {
                REQUIRE(std::abs(n1.matrix(i, j)) == 0.0);
            }
        }
    }
    // n equals a† a built by hand.
    Operator b_op = hilbert::annihilation(space, 1);
    Eigen::MatrixXcd rebuilt = b_op.matrix.adjoint() * b_op.matrix;
    REQUIRE((rebuilt - n1.matrix).norm() == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("adjoint and commutator behave on the truncated space", "[hilbert]") {
    SpaceDescriptor space = hilbert::make_space({5, 5});
    Operator b = hilbert::annihilation(space, 1);
    Operator bdag = hilbert::adjoint(b);
    REQUIRE((bdag.matrix - b.matrix.adjoint()).norm() == 0.0);

    // [b, b†] = 1 except in the top occupation sector (truncation artifact).
    Eigen::MatrixXcd comm = b.matrix * bdag.matrix - bdag.matrix * b.matrix;
    for (int i = 0; i < space.dimension; ++i) {
        auto [n1, n2] = space.basis_labels[i];
        double expected = (n1 == 4) ? -4.0 : 1.0;
        REQUIRE(comm(i, i).real() == Catch::Approx(expected));
    }
}

TEST_CASE("operator arithmetic enforces matching spaces", "[hilbert]") {
    SpaceDescriptor s44 = hilbert::make_space({4, 4});
    SpaceDescriptor s33 = hilbert::make_space({3, 3});
    Operator a = hilbert::number_operator(s44, 1);
    Operator b = hilbert::number_operator(s44, 2);
    Operator sum = a + b;
    REQUIRE(sum.matrix(s44.index_of(2, 3), s44.index_of(2, 3)).real() == Catch::Approx(5.0));
    Operator diff = sum - a;
    REQUIRE((diff.matrix - b.matrix).norm() == 0.0);
    Operator prod = a * b;
    REQUIRE(prod.matrix(s44.index_of(2, 3), s44.index_of(2, 3)).real() == Catch::Approx(6.0));
    Operator scaled = 2.5 * a;
    REQUIRE(scaled.matrix(s44.index_of(2, 0), s44.index_of(2, 0)).real() == Catch::Approx(5.0));

    Operator other = hilbert::number_operator(s33, 1);
    REQUIRE_THROWS_AS(a + other, std::invalid_argument);
    REQUIRE_THROWS_AS(a - other, std::invalid_argument);
    REQUIRE_THROWS_AS(a * other, std::invalid_argument);
}

TEST_CASE("hermitian predicate", "[hilbert]") {
    SpaceDescriptor space = hilbert::make_space({4, 4});
    Operator b = hilbert::annihilation(space, 1);
    Operator n = hilbert::number_operator(space, 1);
    REQUIRE(hilbert::hermitian(n));
    REQUIRE_FALSE(hilbert::hermitian(b));
    Operator sym = Operator{space, b.matrix + b.matrix.adjoint()};
    REQUIRE(hilbert::hermitian(sym));
}
