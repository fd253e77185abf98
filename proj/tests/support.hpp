#pragma once

// Hand-rolled generators shared by the unit suites.

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include <doctest.h>

#include "qforage/error.hpp"
#include "qforage/qcore.hpp"
#include "qforage/qrep.hpp"
#include "qforage/rng.hpp"

namespace testgen {

using qforage::Rng;
using qforage::qcore::Complex;

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(qforage::uniform01(rng) * static_cast<double>(hi - lo + 1));
}

inline std::vector<double> unit_real(Rng& rng, std::size_t k) {
    std::vector<double> v(k);
    double n = 0.0;
    for (double& x : v) {
        x = qforage::standard_normal(rng);
        n += x * x;
    }
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
}

inline qforage::qcore::StateVector<Complex> unit_complex(Rng& rng, std::size_t d) {
    std::vector<Complex> v(d);
    for (auto& z : v) z = Complex(qforage::standard_normal(rng), qforage::standard_normal(rng));
    return qforage::qcore::StateVector<Complex>::normalized(std::move(v));
}

inline qforage::qrep::QueryState query(Rng& rng, std::size_t order, std::size_t k) {
    qforage::qrep::QueryState q;
    q.basis_dim = k;
    for (std::size_t i = 0; i < order; ++i) {
        q.word_ids.push_back(2 + i);
        const auto row = unit_real(rng, k);
        q.rows.insert(q.rows.end(), row.begin(), row.end());
    }
    return q;
}

// Mixture of random pure states with random weights.
inline qforage::qcore::DensityMatrix density(Rng& rng, std::size_t d) {
    const std::size_t m = pick(rng, 1, d);
    std::vector<qforage::qcore::StateVector<Complex>> vs;
    std::vector<double> w(m);
    double s = 0.0;
    for (auto& x : w) {
        x = 0.05 + qforage::uniform01(rng);
        s += x;
    }
    for (auto& x : w) x /= s;
    for (std::size_t i = 0; i < m; ++i) vs.push_back(unit_complex(rng, d));
    return qforage::qcore::build_density(w, vs);
}

// Kind of the Error thrown by fn; fails the test when nothing is thrown.
template <typename F>
qforage::ErrorKind kind_of(const F& fn) {
    try {
        fn();
    } catch (const qforage::Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return qforage::ErrorKind::IoError;
}

template <typename T>
double max_entry_diff(const qforage::qcore::Matrix<T>& a, const qforage::qcore::Matrix<T>& b) {
    return qforage::qcore::max_abs_diff(a, b);
}

}  // namespace testgen
