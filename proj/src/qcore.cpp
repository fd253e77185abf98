#include "qforage/qcore.hpp"

#include <algorithm>
#include <numeric>

namespace qforage::qcore {

namespace {
constexpr double kProjectorTolerance = 1e-10;
constexpr double kBoundarySnap = 1e-10;
constexpr double kWeightTolerance = 1e-10;
}  // namespace

ComplexMatrix to_complex(const RealMatrix& m) {
    ComplexMatrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
    return out;
}

std::vector<double> symmetric_eigenvalues(const RealMatrix& input) {
    if (input.rows() != input.cols()) throw Error(ErrorKind::ShapeMismatch, "eigenvalues need a square matrix");
    const std::size_t n = input.rows();
    RealMatrix a = input;
    double scale = 0.0;
    for (double x : a.data()) scale = std::max(scale, std::abs(x));

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off <= 1e-30 * std::max(1.0, scale * scale)) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
    std::sort(eig.begin(), eig.end());
    return eig;
}

std::vector<double> hermitian_eigenvalues(const ComplexMatrix& h) {
    if (h.rows() != h.cols()) throw Error(ErrorKind::ShapeMismatch, "eigenvalues need a square matrix");
    const std::size_t d = h.rows();
    // [[A, -B], [B, A]] for H = A + iB carries each eigenvalue of H twice.
    RealMatrix real(2 * d, 2 * d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double re = 0.5 * (h(i, j).real() + h(j, i).real());
            const double im = 0.5 * (h(i, j).imag() - h(j, i).imag());
            real(i, j) = re;
            real(i + d, j + d) = re;
            real(i, j + d) = -im;
            real(i + d, j) = im;
        }
    const auto doubled = symmetric_eigenvalues(real);
    std::vector<double> eig(d);
    for (std::size_t i = 0; i < d; ++i) eig[i] = 0.5 * (doubled[2 * i] + doubled[2 * i + 1]);
    return eig;
}

DensityReport inspect_density(const ComplexMatrix& rho) {
    if (rho.rows() != rho.cols()) throw Error(ErrorKind::ShapeMismatch, "density matrix must be square");
    DensityReport r;
    for (std::size_t i = 0; i < rho.rows(); ++i)
        for (std::size_t j = 0; j < rho.cols(); ++j)
            r.hermitian_error = std::max(r.hermitian_error, std::abs(rho(i, j) - std::conj(rho(j, i))));
    r.trace_error = std::abs(trace(rho) - Complex{1.0, 0.0});
    r.min_eigenvalue = hermitian_eigenvalues(rho).front();
    return r;
}

DensityMatrix DensityMatrix::validated(ComplexMatrix rho) {
    const auto report = inspect_density(rho);
    if (report.hermitian_error > 1e-10) throw Error(ErrorKind::ShapeMismatch, "density matrix is not Hermitian");
    if (report.trace_error > 1e-10) throw Error(ErrorKind::WeightNotNormalized, "density matrix trace is not 1");
    if (report.min_eigenvalue < -1e-8) throw Error(ErrorKind::ShapeMismatch, "density matrix is not positive semidefinite");
    return DensityMatrix(std::move(rho));
}

DensityMatrix DensityMatrix::trusted(ComplexMatrix rho) {
    if (rho.rows() != rho.cols() || rho.rows() == 0)
        throw Error(ErrorKind::ShapeMismatch, "density matrix must be square and non-empty");
    return DensityMatrix(std::move(rho));
}

Observable::Observable(std::vector<ComplexMatrix> projectors, std::vector<double> eigenvalues)
    : projectors_(std::move(projectors)), eigenvalues_(std::move(eigenvalues)) {
    if (projectors_.empty()) throw Error(ErrorKind::EmptyInput, "observable needs at least one projector");
    if (projectors_.size() != eigenvalues_.size())
        throw Error(ErrorKind::ShapeMismatch, "one eigenvalue per projector required");
    const std::size_t d = projectors_.front().rows();
    ComplexMatrix sum(d, d);
    for (std::size_t a = 0; a < projectors_.size(); ++a) {
        const auto& p = projectors_[a];
        if (p.rows() != d || p.cols() != d) throw Error(ErrorKind::ShapeMismatch, "projector shapes disagree");
        if (max_abs_diff(p, adjoint(p)) > kProjectorTolerance)
            throw Error(ErrorKind::ShapeMismatch, "projector is not Hermitian");
        if (max_abs_diff(multiply(p, p), p) > kProjectorTolerance)
            throw Error(ErrorKind::ShapeMismatch, "projector is not idempotent");
        for (std::size_t b = a + 1; b < projectors_.size(); ++b)
            if (max_abs_diff(multiply(p, projectors_[b]), ComplexMatrix(d, d)) > kProjectorTolerance)
                throw Error(ErrorKind::ShapeMismatch, "projectors are not mutually orthogonal");
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) sum(i, j) += p(i, j);
    }
    if (max_abs_diff(sum, ComplexMatrix::identity(d)) > kProjectorTolerance)
        throw Error(ErrorKind::ShapeMismatch, "projectors do not resolve the identity");
}

Observable Observable::coordinate_blocks(std::size_t dim, std::vector<double> eigenvalues) {
    const std::size_t blocks = eigenvalues.size();
    if (blocks == 0) throw Error(ErrorKind::EmptyInput, "observable needs at least one block");
    if (dim % blocks != 0)
        throw Error(ErrorKind::DimensionNotDivisible,
                    "dimension " + std::to_string(dim) + " not divisible by " + std::to_string(blocks));
    const std::size_t size = dim / blocks;
    std::vector<ComplexMatrix> projectors;
    for (std::size_t c = 0; c < blocks; ++c) {
        ComplexMatrix p(dim, dim);
        for (std::size_t i = c * size; i < (c + 1) * size; ++i) p(i, i) = 1.0;
        projectors.push_back(std::move(p));
    }
    return Observable(std::move(projectors), std::move(eigenvalues));
}

double born_probability(const ComplexMatrix& projector, const DensityMatrix& rho) {
    const auto& m = rho.matrix();
    if (projector.rows() != m.rows() || projector.cols() != m.cols())
        throw Error(ErrorKind::ShapeMismatch, "projector and density matrix shapes disagree");
    Complex tr{0.0, 0.0};
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) tr += projector(i, j) * m(j, i);
    double p = tr.real();
    if (p < 0.0 && p >= -kBoundarySnap) p = 0.0;
    if (p > 1.0 && p <= 1.0 + kBoundarySnap) p = 1.0;
    return p;
}

std::vector<double> measure(const Observable& obs, const DensityMatrix& rho) {
    std::vector<double> p(obs.outcomes());
    for (std::size_t c = 0; c < obs.outcomes(); ++c) p[c] = born_probability(obs.projector(c), rho);
    return p;
}

DensityMatrix build_density(std::span<const double> weights, std::span<const StateVector<Complex>> vectors) {
    if (vectors.empty()) throw Error(ErrorKind::EmptyInput, "density needs at least one vector");
    if (weights.size() != vectors.size())
        throw Error(ErrorKind::DimensionMismatch, "one weight per vector required");
    double total = 0.0;
    for (double b : weights) {
        if (!(b >= 0.0)) throw Error(ErrorKind::WeightNotNormalized, "mixture weights must be nonnegative");
        total += b;
    }
    if (std::abs(total - 1.0) > kWeightTolerance)
        throw Error(ErrorKind::WeightNotNormalized, "mixture weights must sum to 1");
    const std::size_t d = vectors.front().dim();
    ComplexMatrix rho(d, d);
    for (std::size_t t = 0; t < vectors.size(); ++t) {
        const auto& v = vectors[t];
        if (v.dim() != d) throw Error(ErrorKind::DimensionMismatch, "word vectors differ in dimension");
        if (!v.is_normalized()) throw Error(ErrorKind::NotNormalized, "word vectors must be unit norm");
        const double b = weights[t];
        if (b == 0.0) continue;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) rho(i, j) += b * v[i] * std::conj(v[j]);
    }
    return DensityMatrix::trusted(std::move(rho));
}

}  // namespace qforage::qcore
