#include <doctest.h>

#include <algorithm>
#include <array>
#include <map>
#include <numbers>

#include "qforage/error.hpp"
#include "qforage/qcore.hpp"
#include "support.hpp"

using namespace qforage;
using namespace qforage::qcore;

namespace {

ErrorKind kind_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return ErrorKind::IoError;
}

ComplexMatrix square(const ComplexMatrix& m) { return multiply(m, m); }

StateVector<Complex> plus_state() {
    const double h = 1.0 / std::sqrt(2.0);
    return StateVector<Complex>({Complex(h, 0), Complex(h, 0)});
}

}  // namespace

TEST_CASE("state vectors need a dimension and a nonzero norm to normalize") {
    CHECK(kind_of([] { StateVector<double>(std::vector<double>{}); }) == ErrorKind::EmptyInput);
    CHECK(kind_of([] { StateVector<double>::normalized({0.0, 0.0}); }) == ErrorKind::NotNormalized);
    const auto v = StateVector<double>::normalized({3.0, 4.0});
    CHECK(v[0] == doctest::Approx(0.6));
    CHECK(v.is_normalized());
}

TEST_CASE("tensor_product of a single factor is the factor") {
    const std::array<StateVector<double>, 1> one{StateVector<double>::basis(2, 0)};
    const auto t = tensor_product<double>(one);
    CHECK(t.dim() == 2);
    CHECK(t[0] == 1.0);
    CHECK(t[1] == 0.0);
}

TEST_CASE("tensor_product of |0> and |1> is (0,1,0,0)") {
    const std::array<StateVector<double>, 2> v{StateVector<double>::basis(2, 0), StateVector<double>::basis(2, 1)};
    const auto t = tensor_product<double>(v);
    REQUIRE(t.dim() == 4);
    CHECK(t[0] == 0.0);
    CHECK(t[1] == 1.0);
    CHECK(t[2] == 0.0);
    CHECK(t[3] == 0.0);
}

TEST_CASE("tensor_product of unit vectors has unit norm") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<StateVector<double>> v;
        for (int i = 0; i < 3; ++i) v.emplace_back(testgen::unit_real(rng, 3));
        const auto t = tensor_product<double>(v);
        CHECK(t.dim() == 27);
        CHECK(std::abs(t.norm() - 1.0) <= 1e-12);
    }
}

TEST_CASE("tensor_product is associative") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const StateVector<double> a(testgen::unit_real(rng, testgen::pick(rng, 1, 4)));
        const StateVector<double> b(testgen::unit_real(rng, testgen::pick(rng, 1, 4)));
        const StateVector<double> c(testgen::unit_real(rng, testgen::pick(rng, 1, 4)));
        const std::array<StateVector<double>, 2> ab{a, b};
        const std::array<StateVector<double>, 2> bc{b, c};
        const std::array<StateVector<double>, 2> left{tensor_product<double>(ab), c};
        const std::array<StateVector<double>, 2> right{a, tensor_product<double>(bc)};
        const auto l = tensor_product<double>(left);
        const auto r = tensor_product<double>(right);
        REQUIRE(l.dim() == r.dim());
        for (std::size_t i = 0; i < l.dim(); ++i) CHECK(std::abs(l[i] - r[i]) <= 1e-12);
    }
}

TEST_CASE("tensor_product rejects empty input and oversized results") {
    CHECK(kind_of([] { tensor_product<double>(std::span<const StateVector<double>>{}); }) == ErrorKind::EmptyInput);
    std::vector<StateVector<double>> many(7, StateVector<double>::basis(4, 0));
    CHECK(kind_of([&] { tensor_product<double>(many); }) == ErrorKind::DenseCapExceeded);
    std::vector<StateVector<double>> six(6, StateVector<double>::basis(4, 0));
    CHECK(tensor_product<double>(six).dim() == 4096);
}

TEST_CASE("projector examples") {
    const auto p0 = projector(StateVector<double>::basis(2, 0));
    CHECK(p0(0, 0) == 1.0);
    CHECK(p0(0, 1) == 0.0);
    CHECK(p0(1, 0) == 0.0);
    CHECK(p0(1, 1) == 0.0);

    const auto pp = projector(plus_state());
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(pp(i, j) - Complex(0.5, 0)) <= 1e-15);

    CHECK(kind_of([] { projector(StateVector<double>({1.0, 1.0})); }) == ErrorKind::NotNormalized);
}

TEST_CASE("random complex projectors have unit trace and are idempotent") {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const auto p = projector(testgen::unit_complex(rng, 4));
        CHECK(std::abs(trace(p) - Complex(1.0, 0.0)) <= 1e-12);
        CHECK(max_abs_diff(square(p), p) <= 1e-12);
    }
}

TEST_CASE("born_probability examples") {
    const auto zero = StateVector<Complex>::basis(2, 0);
    const auto p0 = projector(zero);
    const std::array<StateVector<Complex>, 1> z{zero};
    const std::array<double, 1> w{1.0};
    CHECK(born_probability(p0, build_density(w, z)) == doctest::Approx(1.0).epsilon(1e-15));
    const std::array<StateVector<Complex>, 1> plus{plus_state()};
    CHECK(std::abs(born_probability(p0, build_density(w, plus)) - 0.5) <= 1e-15);

    const auto rho3 = build_density(w, std::array<StateVector<Complex>, 1>{StateVector<Complex>::basis(3, 0)});
    CHECK(kind_of([&] { born_probability(p0, rho3); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("born_probability of a rank-2 block projector is a basis expansion") {
    Rng rng(14);
    for (int trial = 0; trial < 100; ++trial) {
        const auto rho = testgen::density(rng, 4);
        const std::size_t a = testgen::pick(rng, 0, 3);
        std::size_t b = testgen::pick(rng, 0, 2);
        if (b >= a) ++b;
        auto p = projector(StateVector<Complex>::basis(4, a));
        const auto pb = projector(StateVector<Complex>::basis(4, b));
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) p(i, j) += pb(i, j);
        // <b|rho|b> by explicit sandwich
        auto sandwich = [&](std::size_t idx) {
            const auto e = StateVector<Complex>::basis(4, idx);
            Complex s{0, 0};
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t j = 0; j < 4; ++j) s += std::conj(e[i]) * rho(i, j) * e[j];
            return s.real();
        };
        CHECK(std::abs(born_probability(p, rho) - (sandwich(a) + sandwich(b))) <= 1e-12);
    }
}

TEST_CASE("collapse of |0> is always index 0") {
    Rng rng(15);
    const auto zero = StateVector<double>::basis(3, 0);
    for (int i = 0; i < 1000; ++i) {
        const auto c = collapse_sample(zero, rng);
        CHECK(c.index == 0);
        CHECK(c.state[0] == 1.0);
    }
}

TEST_CASE("collapse frequencies follow squared amplitudes") {
    const double h = 1.0 / std::sqrt(2.0);
    struct Case {
        std::vector<double> amps;
        double expected;
    };
    for (const auto& c : {Case{{h, h}, 0.5}, Case{{0.6, 0.8}, 0.36}}) {
        Rng rng(16);
        const StateVector<double> psi(c.amps);
        int zeros = 0;
        for (int i = 0; i < 100000; ++i) zeros += collapse_sample(psi, rng).index == 0 ? 1 : 0;
        CHECK(std::abs(zeros / 100000.0 - c.expected) <= 0.01);
    }
}

TEST_CASE("collapse is reproducible under a seed and requires a unit vector") {
    const StateVector<Complex> psi({Complex(0.6, 0), Complex(0, 0.48), Complex(0.64, 0)});
    Rng a(99), b(99);
    for (int i = 0; i < 500; ++i) CHECK(collapse_sample(psi, a).index == collapse_sample(psi, b).index);
    CHECK(kind_of([&] { collapse_sample(StateVector<double>({0.5, 0.5}), a); }) == ErrorKind::NotNormalized);
}

TEST_CASE("build_density of one word is pure") {
    Rng rng(17);
    const std::array<StateVector<Complex>, 1> v{testgen::unit_complex(rng, 6)};
    const std::array<double, 1> w{1.0};
    const auto rho = build_density(w, v);
    CHECK(max_abs_diff(square(rho.matrix()), rho.matrix()) <= 1e-12);
}

TEST_CASE("equal mixture of two orthogonal words has eigenvalues one half") {
    const std::array<StateVector<Complex>, 2> v{StateVector<Complex>::basis(3, 0), StateVector<Complex>::basis(3, 2)};
    const std::array<double, 2> w{0.5, 0.5};
    const auto eig = hermitian_eigenvalues(build_density(w, v).matrix());
    REQUIRE(eig.size() == 3);
    CHECK(std::abs(eig[0]) <= 1e-12);
    CHECK(std::abs(eig[1] - 0.5) <= 1e-12);
    CHECK(std::abs(eig[2] - 0.5) <= 1e-12);
}

TEST_CASE("inserting a negation word changes the density matrix") {
    Rng rng(18);
    std::map<std::string, StateVector<Complex>> emb;
    for (const char* word : {"dogs", "do", "not", "chase", "cats"}) emb.emplace(word, testgen::unit_complex(rng, 6));
    auto rho_of = [&](std::vector<std::string> words) {
        std::vector<StateVector<Complex>> vs;
        for (const auto& w : words) vs.push_back(emb.at(w));
        std::vector<double> beta(words.size(), 1.0 / static_cast<double>(words.size()));
        return build_density(beta, vs);
    };
    const auto a = rho_of({"dogs", "chase", "cats"});
    const auto b = rho_of({"dogs", "do", "not", "chase", "cats"});
    CHECK(frobenius_distance(a.matrix(), b.matrix()) > 0.0);
}

TEST_CASE("build_density validates weights and dimensions") {
    const std::array<StateVector<Complex>, 2> v{StateVector<Complex>::basis(3, 0), StateVector<Complex>::basis(3, 1)};
    CHECK(kind_of([&] { build_density(std::array<double, 2>{0.5, 0.4}, v); }) == ErrorKind::WeightNotNormalized);
    CHECK(kind_of([&] { build_density(std::array<double, 2>{1.5, -0.5}, v); }) == ErrorKind::WeightNotNormalized);
    CHECK(kind_of([&] { build_density(std::array<double, 1>{1.0}, v); }) == ErrorKind::DimensionMismatch);
    const std::array<StateVector<Complex>, 2> mixed{StateVector<Complex>::basis(3, 0), StateVector<Complex>::basis(2, 1)};
    CHECK(kind_of([&] { build_density(std::array<double, 2>{0.5, 0.5}, mixed); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("random densities satisfy the density invariants and complete measurements sum to one") {
    Rng rng(19);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 3 * testgen::pick(rng, 1, 4);
        const auto rho = testgen::density(rng, d);
        const auto report = inspect_density(rho.matrix());
        CHECK(report.hermitian_error <= 1e-10);
        CHECK(report.trace_error <= 1e-10);
        CHECK(report.min_eigenvalue >= -1e-8);
        const auto obs = Observable::coordinate_blocks(d, {-1.0, 0.0, 1.0});
        double total = 0.0;
        for (double p : measure(obs, rho)) {
            CHECK(p >= 0.0);
            total += p;
        }
        CHECK(std::abs(total - 1.0) <= 1e-10);
    }
}

TEST_CASE("DensityMatrix::validated rejects non-densities") {
    ComplexMatrix m(2, 2);
    m(0, 0) = 0.7;
    m(1, 1) = 0.7;
    CHECK(kind_of([&] { DensityMatrix::validated(m); }) == ErrorKind::WeightNotNormalized);
    m(0, 0) = 1.2;
    m(1, 1) = -0.2;
    CHECK_THROWS_AS(DensityMatrix::validated(m), Error);
    m(0, 0) = 0.5;
    m(1, 1) = 0.5;
    m(0, 1) = Complex(0.1, 0.0);
    CHECK_THROWS_AS(DensityMatrix::validated(m), Error);
}

TEST_CASE("Observable rejects incomplete or overlapping projector sets") {
    const auto p0 = projector(StateVector<Complex>::basis(2, 0));
    const auto p1 = projector(StateVector<Complex>::basis(2, 1));
    const auto pp = projector(plus_state());
    CHECK_NOTHROW(Observable({p0, p1}, {0.0, 1.0}));
    CHECK_THROWS_AS(Observable({p0}, {0.0}), Error);
    CHECK_THROWS_AS(Observable({p0, pp}, {0.0, 1.0}), Error);
    CHECK_THROWS_AS(Observable({p0, p1}, {0.0}), Error);
    CHECK(kind_of([] { Observable::coordinate_blocks(4, {-1.0, 0.0, 1.0}); }) == ErrorKind::DimensionNotDivisible);
}

TEST_CASE("coordinate block projectors satisfy the observable invariants") {
    const auto obs = Observable::coordinate_blocks(6, {-1.0, 0.0, 1.0});
    const auto id = ComplexMatrix::identity(6);
    ComplexMatrix sum(6, 6);
    for (std::size_t c = 0; c < 3; ++c) {
        const auto& p = obs.projector(c);
        CHECK(max_abs_diff(adjoint(p), p) <= 1e-10);
        CHECK(max_abs_diff(square(p), p) <= 1e-10);
        for (std::size_t e = 0; e < 3; ++e)
            if (e != c) CHECK(max_abs_diff(multiply(p, obs.projector(e)), ComplexMatrix(6, 6)) <= 1e-10);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j) sum(i, j) += p(i, j);
    }
    CHECK(max_abs_diff(sum, id) <= 1e-10);
}

TEST_CASE("eigenvalue solvers on known spectra") {
    RealMatrix a(2, 2);
    a(0, 0) = 2;
    a(0, 1) = 1;
    a(1, 0) = 1;
    a(1, 1) = 2;
    const auto e = symmetric_eigenvalues(a);
    CHECK(e[0] == doctest::Approx(1.0));
    CHECK(e[1] == doctest::Approx(3.0));

    ComplexMatrix h(2, 2);
    h(0, 0) = 1;
    h(0, 1) = Complex(0, 1);
    h(1, 0) = Complex(0, -1);
    h(1, 1) = 1;
    const auto eh = hermitian_eigenvalues(h);
    REQUIRE(eh.size() == 2);
    CHECK(std::abs(eh[0]) <= 1e-12);
    CHECK(std::abs(eh[1] - 2.0) <= 1e-12);

    // A diag(l) A^dagger for a random unitary built from orthonormalized columns
    Rng rng(20);
    const std::vector<double> spectrum{-0.5, 0.25, 1.0, 3.0};
    std::vector<StateVector<Complex>> cols;
    for (std::size_t c = 0; c < 4; ++c) {
        auto v = testgen::unit_complex(rng, 4);
        std::vector<Complex> x(v.entries().begin(), v.entries().end());
        for (const auto& u : cols) {
            Complex dot{0, 0};
            for (std::size_t i = 0; i < 4; ++i) dot += std::conj(u[i]) * x[i];
            for (std::size_t i = 0; i < 4; ++i) x[i] -= dot * u[i];
        }
        cols.push_back(StateVector<Complex>::normalized(x));
    }
    ComplexMatrix m(4, 4);
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) m(i, j) += spectrum[c] * cols[c][i] * std::conj(cols[c][j]);
    const auto got = hermitian_eigenvalues(m);
    for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(got[c] - spectrum[c]) <= 1e-10);
}
