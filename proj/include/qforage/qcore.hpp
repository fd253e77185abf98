#pragma once

// Finite-dimensional Hilbert-space primitives over the reals (actor side)
// and the complex numbers (critic side).

#include <cmath>
#include <complex>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "qforage/error.hpp"
#include "qforage/rng.hpp"

namespace qforage::qcore {

using Complex = std::complex<double>;

inline constexpr std::size_t kDefaultDenseCap = 4096;
inline constexpr double kNormTolerance = 1e-9;

template <typename T>
concept Field = std::same_as<T, double> || std::same_as<T, Complex>;

inline double abs2(double x) { return x * x; }
inline double abs2(const Complex& z) { return std::norm(z); }
inline double conj(double x) { return x; }
inline Complex conj(const Complex& z) { return std::conj(z); }
inline double real_part(double x) { return x; }
inline double real_part(const Complex& z) { return z.real(); }

template <Field T>
class StateVector {
public:
    explicit StateVector(std::vector<T> entries) : entries_(std::move(entries)) {
        if (entries_.empty()) throw Error(ErrorKind::EmptyInput, "state vector needs dimension >= 1");
    }

    static StateVector basis(std::size_t dim, std::size_t index) {
        if (index >= dim) throw Error(ErrorKind::IndexOutOfRange, "basis index exceeds dimension");
        std::vector<T> e(dim, T{0});
        e[index] = T{1};
        return StateVector(std::move(e));
    }

    // Rescales to unit norm; a zero vector cannot be normalized.
    static StateVector normalized(std::vector<T> entries) {
        StateVector v(std::move(entries));
        const double n = v.norm();
        if (n == 0.0 || !std::isfinite(n)) throw Error(ErrorKind::NotNormalized, "cannot normalize a zero vector");
        for (auto& x : v.entries_) x /= n;
        return v;
    }

    std::size_t dim() const noexcept { return entries_.size(); }
    std::span<const T> entries() const noexcept { return entries_; }
    const T& operator[](std::size_t i) const { return entries_[i]; }

    double norm() const {
        double s = 0.0;
        for (const auto& x : entries_) s += abs2(x);
        return std::sqrt(s);
    }

    bool is_normalized(double tol = kNormTolerance) const { return std::abs(norm() - 1.0) <= tol; }

private:
    std::vector<T> entries_;
};

template <Field T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, T{0}) {}

    static Matrix identity(std::size_t d) {
        Matrix m(d, d);
        for (std::size_t i = 0; i < d; ++i) m(i, i) = T{1};
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    std::span<const T> data() const noexcept { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using RealMatrix = Matrix<double>;
using ComplexMatrix = Matrix<Complex>;

template <Field T>
Matrix<T> multiply(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols() != b.rows()) throw Error(ErrorKind::ShapeMismatch, "matrix product shapes disagree");
    Matrix<T> out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const T aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

template <Field T>
Matrix<T> adjoint(const Matrix<T>& a) {
    Matrix<T> out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = conj(a(i, j));
    return out;
}

template <Field T>
T trace(const Matrix<T>& a) {
    T s{0};
    for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) s += a(i, i);
    return s;
}

// Largest entrywise modulus of a - b.
template <Field T>
double max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw Error(ErrorKind::ShapeMismatch, "matrix shapes disagree");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

template <Field T>
double frobenius_distance(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw Error(ErrorKind::ShapeMismatch, "matrix shapes disagree");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) s += abs2(a.data()[i] - b.data()[i]);
    return std::sqrt(s);
}

ComplexMatrix to_complex(const RealMatrix& m);

// Kronecker product in row-major index order (first factor is the slowest index).
template <Field T>
StateVector<T> tensor_product(std::span<const StateVector<T>> vectors, std::size_t dense_cap = kDefaultDenseCap) {
    if (vectors.empty()) throw Error(ErrorKind::EmptyInput, "tensor_product needs at least one vector");
    std::size_t total = 1;
    for (const auto& v : vectors) {
        if (v.dim() > dense_cap / total)
            throw Error(ErrorKind::DenseCapExceeded, "tensor product exceeds dense cap of " + std::to_string(dense_cap));
        total *= v.dim();
    }
    std::vector<T> acc(vectors.front().entries().begin(), vectors.front().entries().end());
    for (std::size_t f = 1; f < vectors.size(); ++f) {
        const auto rhs = vectors[f].entries();
        std::vector<T> next;
        next.reserve(acc.size() * rhs.size());
        for (const T& a : acc)
            for (const T& b : rhs) next.push_back(a * b);
        acc = std::move(next);
    }
    return StateVector<T>(std::move(acc));
}

// |v><v|
template <Field T>
Matrix<T> projector(const StateVector<T>& v) {
    if (!v.is_normalized()) throw Error(ErrorKind::NotNormalized, "projector requires a unit vector");
    const std::size_t d = v.dim();
    Matrix<T> p(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) p(i, j) = v[i] * conj(v[j]);
    return p;
}

template <Field T>
struct Collapse {
    std::size_t index;
    StateVector<T> state;
};

// Born-rule sampling of a basis outcome; the post-measurement state is |index>.
template <Field T>
Collapse<T> collapse_sample(const StateVector<T>& psi, Rng& rng) {
    if (!psi.is_normalized()) throw Error(ErrorKind::NotNormalized, "collapse requires a unit vector");
    const double u = uniform01(rng);
    double cumulative = 0.0;
    std::size_t chosen = psi.dim();
    std::size_t last_nonzero = 0;
    for (std::size_t i = 0; i < psi.dim(); ++i) {
        const double p = abs2(psi[i]);
        if (p > 0.0) last_nonzero = i;
        cumulative += p;
        if (chosen == psi.dim() && u < cumulative) chosen = i;
    }
    // u can land past a cumulative sum that rounds below 1
    if (chosen == psi.dim()) chosen = last_nonzero;
    return {chosen, StateVector<T>::basis(psi.dim(), chosen)};
}

// Eigenvalues (ascending) of a real symmetric matrix by cyclic Jacobi rotations.
std::vector<double> symmetric_eigenvalues(const RealMatrix& a);

// Eigenvalues (ascending) of a Hermitian matrix via its real 2d x 2d embedding.
std::vector<double> hermitian_eigenvalues(const ComplexMatrix& h);

struct DensityReport {
    double hermitian_error = 0.0;  // max |rho_ij - conj(rho_ji)|
    double trace_error = 0.0;      // |Tr rho - 1|
    double min_eigenvalue = 0.0;

    bool valid() const { return hermitian_error <= 1e-10 && trace_error <= 1e-10 && min_eigenvalue >= -1e-8; }
};

DensityReport inspect_density(const ComplexMatrix& rho);

class DensityMatrix {
public:
    // Checks Hermiticity, unit trace and positive semidefiniteness.
    static DensityMatrix validated(ComplexMatrix rho);
    // For matrices that are density matrices by construction.
    static DensityMatrix trusted(ComplexMatrix rho);

    std::size_t dim() const noexcept { return rho_.rows(); }
    const ComplexMatrix& matrix() const noexcept { return rho_; }
    const Complex& operator()(std::size_t i, std::size_t j) const { return rho_(i, j); }

private:
    explicit DensityMatrix(ComplexMatrix rho) : rho_(std::move(rho)) {}
    ComplexMatrix rho_;
};

// Projective measurement: mutually orthogonal projectors resolving the identity.
class Observable {
public:
    Observable(std::vector<ComplexMatrix> projectors, std::vector<double> eigenvalues);

    // Projectors onto consecutive coordinate blocks of equal size d / blocks.
    static Observable coordinate_blocks(std::size_t dim, std::vector<double> eigenvalues);

    std::size_t dim() const noexcept { return projectors_.front().rows(); }
    std::size_t outcomes() const noexcept { return projectors_.size(); }
    const ComplexMatrix& projector(std::size_t c) const { return projectors_.at(c); }
    double eigenvalue(std::size_t c) const { return eigenvalues_.at(c); }

private:
    std::vector<ComplexMatrix> projectors_;
    std::vector<double> eigenvalues_;
};

// Tr(P rho), snapped onto [0, 1] only when within 1e-10 of the boundary.
double born_probability(const ComplexMatrix& projector, const DensityMatrix& rho);

std::vector<double> measure(const Observable& obs, const DensityMatrix& rho);

// rho = sum_i weights_i |v_i><v_i|
DensityMatrix build_density(std::span<const double> weights, std::span<const StateVector<Complex>> vectors);

}  // namespace qforage::qcore
