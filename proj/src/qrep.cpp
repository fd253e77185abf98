#include "qforage/qrep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace qforage::qrep {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Normalizes in place; returns false for a zero or non-finite vector.
bool normalize(std::span<double> v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (!(n > 0.0) || !std::isfinite(n)) return false;
    for (double& x : v) x /= n;
    return true;
}

void random_unit(std::span<double> v, Rng& rng) {
    do {
        for (double& x : v) x = standard_normal(rng);
    } while (!normalize(v));
}

std::size_t checked_power(std::size_t base, std::size_t exp, std::size_t cap) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < exp; ++i) {
        if (base != 0 && total > cap / base)
            throw Error(ErrorKind::DenseCapExceeded, "dense tensor exceeds cap of " + std::to_string(cap));
        total *= base;
    }
    if (total > cap) throw Error(ErrorKind::DenseCapExceeded, "dense tensor exceeds cap of " + std::to_string(cap));
    return total;
}

}  // namespace

Vocabulary::Vocabulary() : words_{std::string(kNullToken), std::string(kUnkToken)} {
    index_.emplace(words_[0], kNullId);
    index_.emplace(words_[1], kUnkId);
}

Vocabulary Vocabulary::from_words(std::span<const std::string> words) {
    std::set<std::string> unique(words.begin(), words.end());
    unique.erase(std::string(kNullToken));
    unique.erase(std::string(kUnkToken));
    Vocabulary v;
    for (const auto& w : unique) {
        v.index_.emplace(w, v.words_.size());
        v.words_.push_back(w);
    }
    return v;
}

Vocabulary Vocabulary::from_list(std::vector<std::string> words) {
    if (words.size() < 2 || words[0] != kNullToken || words[1] != kUnkToken)
        throw Error(ErrorKind::ParseError, "vocabulary must start with the reserved tokens");
    Vocabulary v;
    for (std::size_t i = 2; i < words.size(); ++i) {
        if (!v.index_.emplace(words[i], v.words_.size()).second)
            throw Error(ErrorKind::ParseError, "duplicate vocabulary word '" + words[i] + "'");
        v.words_.push_back(std::move(words[i]));
    }
    return v;
}

std::size_t Vocabulary::id(std::string_view word) const {
    const auto it = index_.find(std::string(word));
    return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view word) const { return index_.contains(std::string(word)); }

AmplitudeTable::AmplitudeTable(std::size_t vocab_size, std::size_t basis_dim, std::vector<double> amplitudes)
    : vocab_size_(vocab_size), basis_dim_(basis_dim), amplitudes_(std::move(amplitudes)) {
    if (vocab_size_ < 2) throw Error(ErrorKind::ShapeMismatch, "amplitude table needs the two reserved rows");
    if (basis_dim_ == 0) throw Error(ErrorKind::ShapeMismatch, "basis dimension must be >= 1");
    if (amplitudes_.size() != vocab_size_ * basis_dim_)
        throw Error(ErrorKind::ShapeMismatch, "amplitude table size disagrees with its shape");
    renormalize();
}

AmplitudeTable AmplitudeTable::random(std::size_t vocab_size, std::size_t basis_dim, Rng& rng) {
    std::vector<double> a(vocab_size * basis_dim);
    for (std::size_t w = 0; w < vocab_size; ++w)
        random_unit(std::span<double>(a).subspan(w * basis_dim, basis_dim), rng);
    return AmplitudeTable(vocab_size, basis_dim, std::move(a));
}

std::span<const double> AmplitudeTable::row(std::size_t id) const {
    if (id >= vocab_size_) throw Error(ErrorKind::IndexOutOfRange, "word id out of range");
    return std::span<const double>(amplitudes_).subspan(id * basis_dim_, basis_dim_);
}

void AmplitudeTable::set_row(std::size_t id, std::span<const double> values) {
    if (id >= vocab_size_) throw Error(ErrorKind::IndexOutOfRange, "word id out of range");
    if (id == kNullId) throw Error(ErrorKind::IndexOutOfRange, "the padding row is fixed");
    if (values.size() != basis_dim_) throw Error(ErrorKind::ShapeMismatch, "row length disagrees with basis dim");
    std::vector<double> v(values.begin(), values.end());
    if (!normalize(v)) throw Error(ErrorKind::NotNormalized, "amplitude row collapsed to zero");
    std::copy(v.begin(), v.end(), amplitudes_.begin() + static_cast<std::ptrdiff_t>(id * basis_dim_));
}

void AmplitudeTable::renormalize() {
    for (std::size_t w = 0; w < vocab_size_; ++w) {
        auto row = std::span<double>(amplitudes_).subspan(w * basis_dim_, basis_dim_);
        if (w == kNullId) {
            std::fill(row.begin(), row.end(), 0.0);
            row[0] = 1.0;
            continue;
        }
        double n = 0.0;
        for (double x : row) n += x * x;
        // rows already at unit norm are left bit-identical
        if (std::abs(std::sqrt(n) - 1.0) <= 1e-15) continue;
        if (!normalize(row)) throw Error(ErrorKind::NotNormalized, "amplitude row is zero");
    }
}

GlobalRepresentation::GlobalRepresentation(std::size_t rank, std::size_t order, std::size_t basis_dim,
                                           std::vector<double> weights, std::vector<double> factors)
    : rank_(rank), order_(order), basis_dim_(basis_dim), weights_(std::move(weights)), factors_(std::move(factors)) {
    if (rank_ == 0 || order_ == 0 || basis_dim_ == 0)
        throw Error(ErrorKind::ShapeMismatch, "rank, order and basis dim must be >= 1");
    if (weights_.size() != rank_ || factors_.size() != rank_ * order_ * basis_dim_)
        throw Error(ErrorKind::ShapeMismatch, "global representation sizes disagree with its shape");
    for (double w : weights_)
        if (!std::isfinite(w)) throw Error(ErrorKind::NonFiniteScore, "global weights must be finite");
    for (std::size_t f = 0; f < rank_ * order_; ++f) {
        auto v = std::span<double>(factors_).subspan(f * basis_dim_, basis_dim_);
        double n = 0.0;
        for (double x : v) n += x * x;
        if (std::abs(std::sqrt(n) - 1.0) <= 1e-15) continue;
        if (!normalize(v)) throw Error(ErrorKind::NotNormalized, "factor vector is zero");
    }
}

GlobalRepresentation GlobalRepresentation::random(std::size_t rank, std::size_t order, std::size_t basis_dim,
                                                  Rng& rng, double weight_scale) {
    std::vector<double> w(rank);
    for (double& x : w) x = weight_scale * standard_normal(rng);
    std::vector<double> f(rank * order * basis_dim);
    for (std::size_t i = 0; i < rank * order; ++i)
        random_unit(std::span<double>(f).subspan(i * basis_dim, basis_dim), rng);
    return GlobalRepresentation(rank, order, basis_dim, std::move(w), std::move(f));
}

std::span<const double> GlobalRepresentation::factor(std::size_t r, std::size_t i) const {
    if (r >= rank_ || i >= order_) throw Error(ErrorKind::IndexOutOfRange, "factor index out of range");
    return std::span<const double>(factors_).subspan((r * order_ + i) * basis_dim_, basis_dim_);
}

void GlobalRepresentation::set_weight(std::size_t r, double w) {
    if (!std::isfinite(w)) throw Error(ErrorKind::NonFiniteScore, "global weights must be finite");
    weights_.at(r) = w;
}

void GlobalRepresentation::set_factor(std::size_t r, std::size_t i, std::span<const double> values) {
    if (r >= rank_ || i >= order_) throw Error(ErrorKind::IndexOutOfRange, "factor index out of range");
    if (values.size() != basis_dim_) throw Error(ErrorKind::ShapeMismatch, "factor length disagrees with basis dim");
    std::vector<double> v(values.begin(), values.end());
    if (!normalize(v)) throw Error(ErrorKind::NotNormalized, "factor vector collapsed to zero");
    std::copy(v.begin(), v.end(), factors_.begin() + static_cast<std::ptrdiff_t>((r * order_ + i) * basis_dim_));
}

double DenseTensor::frobenius_norm() const {
    double s = 0.0;
    for (double x : data) s += x * x;
    return std::sqrt(s);
}

double inner(const DenseTensor& a, const DenseTensor& b) {
    if (a.shape != b.shape) throw Error(ErrorKind::ShapeMismatch, "tensor shapes disagree");
    return dot(a.data, b.data);
}

std::vector<std::size_t> pad_ids(std::span<const std::size_t> ids, std::size_t order) {
    std::vector<std::size_t> out(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), order)));
    out.resize(order, kNullId);
    return out;
}

QueryState embed_ids(std::span<const std::size_t> ids, const AmplitudeTable& table, std::size_t order) {
    if (ids.empty()) throw Error(ErrorKind::EmptyQuery, "query has no tokens");
    if (order == 0) throw Error(ErrorKind::ShapeMismatch, "query order must be >= 1");
    QueryState q;
    q.word_ids = pad_ids(ids, order);
    q.basis_dim = table.basis_dim();
    q.rows.reserve(order * q.basis_dim);
    for (std::size_t id : q.word_ids) {
        const auto row = table.row(id);
        q.rows.insert(q.rows.end(), row.begin(), row.end());
    }
    return q;
}

QueryState embed_query(std::span<const std::string> words, const Vocabulary& vocab, const AmplitudeTable& table,
                       std::size_t order) {
    if (words.empty()) throw Error(ErrorKind::EmptyQuery, "query has no tokens");
    std::vector<std::size_t> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(vocab.id(w));
    return embed_ids(ids, table, order);
}

DenseTensor materialize_local(const QueryState& q, std::size_t dense_cap) {
    std::vector<qcore::StateVector<double>> rows;
    rows.reserve(q.order());
    for (std::size_t i = 0; i < q.order(); ++i) {
        const auto r = q.row(i);
        rows.emplace_back(std::vector<double>(r.begin(), r.end()));
    }
    auto product = qcore::tensor_product<double>(rows, dense_cap);
    const auto e = product.entries();
    return DenseTensor{std::vector<std::size_t>(q.order(), q.basis_dim), std::vector<double>(e.begin(), e.end())};
}

DenseTensor cp_reconstruct(const GlobalRepresentation& g, std::size_t dense_cap) {
    const std::size_t n = g.order();
    const std::size_t k = g.basis_dim();
    const std::size_t total = checked_power(k, n, dense_cap);
    DenseTensor t{std::vector<std::size_t>(n, k), std::vector<double>(total, 0.0)};
    std::vector<std::size_t> idx(n, 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        double s = 0.0;
        for (std::size_t r = 0; r < g.rank(); ++r) {
            double term = g.weight(r);
            for (std::size_t i = 0; i < n; ++i) term *= g.factor(r, i)[idx[i]];
            s += term;
        }
        t.data[flat] = s;
        for (std::size_t i = n; i-- > 0;) {
            if (++idx[i] < k) break;
            idx[i] = 0;
        }
    }
    return t;
}

std::vector<double> product_pool(const GlobalRepresentation& g, const QueryState& q) {
    if (g.order() != q.order() || g.basis_dim() != q.basis_dim)
        throw Error(ErrorKind::ShapeMismatch, "global representation and query disagree on order or basis dim");
    std::vector<double> pooled(g.rank());
    for (std::size_t r = 0; r < g.rank(); ++r) {
        double p = 1.0;
        for (std::size_t i = 0; i < q.order(); ++i) p *= dot(g.factor(r, i), q.row(i));
        pooled[r] = p;
    }
    return pooled;
}

double project_pooled(const GlobalRepresentation& g, std::span<const double> pooled) {
    if (pooled.size() != g.rank()) throw Error(ErrorKind::ShapeMismatch, "pooled vector length differs from rank");
    double s = 0.0;
    for (std::size_t r = 0; r < g.rank(); ++r) s += g.weight(r) * pooled[r];
    return s;
}

double project(const GlobalRepresentation& g, const QueryState& q) { return project_pooled(g, product_pool(g, q)); }

namespace {

// Solves x * V = m for every row of m (V symmetric, R x R) via Cholesky.
// Rank-deficient systems get a ridge term, grown tenfold until factorable.
std::vector<double> solve_normal_equations(std::vector<double> v, const std::vector<double>& m, std::size_t rows,
                                           std::size_t rank, double ridge) {
    std::vector<double> chol;
    double extra = 0.0;
    for (int attempt = 0; attempt < 40; ++attempt) {
        chol = v;
        for (std::size_t r = 0; r < rank; ++r) chol[r * rank + r] += extra;
        bool ok = true;
        for (std::size_t j = 0; j < rank && ok; ++j) {
            double d = chol[j * rank + j];
            for (std::size_t p = 0; p < j; ++p) d -= chol[j * rank + p] * chol[j * rank + p];
            if (!(d > 1e-14 * std::max(1.0, v[j * rank + j]))) {
                ok = false;
                break;
            }
            d = std::sqrt(d);
            chol[j * rank + j] = d;
            for (std::size_t i = j + 1; i < rank; ++i) {
                double s = chol[i * rank + j];
                for (std::size_t p = 0; p < j; ++p) s -= chol[i * rank + p] * chol[j * rank + p];
                chol[i * rank + j] = s / d;
            }
        }
        if (ok) break;
        extra = extra == 0.0 ? ridge : extra * 10.0;
    }
    std::vector<double> x(rows * rank);
    std::vector<double> y(rank);
    for (std::size_t b = 0; b < rows; ++b) {
        for (std::size_t i = 0; i < rank; ++i) {
            double s = m[b * rank + i];
            for (std::size_t p = 0; p < i; ++p) s -= chol[i * rank + p] * y[p];
            y[i] = s / chol[i * rank + i];
        }
        for (std::size_t i = rank; i-- > 0;) {
            double s = y[i];
            for (std::size_t p = i + 1; p < rank; ++p) s -= chol[p * rank + i] * x[b * rank + p];
            x[b * rank + i] = s / chol[i * rank + i];
        }
    }
    return x;
}

struct AlsRun {
    std::vector<double> weights;
    std::vector<std::vector<double>> factors;  // per mode: k x R, row-major
    double error = std::numeric_limits<double>::infinity();
    std::size_t sweeps = 0;
    bool converged = false;
};

double relative_error(const DenseTensor& t, const std::vector<double>& weights,
                      const std::vector<std::vector<double>>& factors, std::size_t k, double t_norm) {
    const std::size_t n = factors.size();
    const std::size_t rank = weights.size();
    std::vector<std::size_t> idx(n, 0);
    double s = 0.0;
    for (std::size_t flat = 0; flat < t.data.size(); ++flat) {
        double rec = 0.0;
        for (std::size_t r = 0; r < rank; ++r) {
            double term = weights[r];
            for (std::size_t i = 0; i < n; ++i) term *= factors[i][idx[i] * rank + r];
            rec += term;
        }
        const double diff = t.data[flat] - rec;
        s += diff * diff;
        for (std::size_t i = n; i-- > 0;) {
            if (++idx[i] < k) break;
            idx[i] = 0;
        }
    }
    return std::sqrt(s) / t_norm;
}

// Line search along the last sweep's direction, kept only if it lowers the
// error; this shortens the long plateaus plain ALS shows near degenerate
// solutions.
void extrapolate(AlsRun& run, const std::pair<std::vector<double>, std::vector<std::vector<double>>>& previous,
                 const DenseTensor& t, std::size_t k, double t_norm, double step) {
    const std::size_t rank = run.weights.size();
    auto factors = run.factors;
    std::vector<double> weights(rank, 1.0);
    for (std::size_t i = 0; i < factors.size(); ++i)
        for (std::size_t x = 0; x < factors[i].size(); ++x)
            factors[i][x] += (step - 1.0) * (run.factors[i][x] - previous.second[i][x]);
    // weights ride on the last mode so columns can be renormalized uniformly
    auto& last = factors.back();
    for (std::size_t b = 0; b < k; ++b)
        for (std::size_t r = 0; r < rank; ++r) {
            const double now = run.weights[r] * run.factors.back()[b * rank + r];
            const double before = previous.first[r] * previous.second.back()[b * rank + r];
            last[b * rank + r] = now + (step - 1.0) * (now - before);
        }
    for (auto& f : factors)
        for (std::size_t r = 0; r < rank; ++r) {
            double norm = 0.0;
            for (std::size_t b = 0; b < k; ++b) norm += f[b * rank + r] * f[b * rank + r];
            norm = std::sqrt(norm);
            if (!(norm > 0.0) || !std::isfinite(norm)) return;
            for (std::size_t b = 0; b < k; ++b) f[b * rank + r] /= norm;
            weights[r] *= norm;
        }
    const double error = relative_error(t, weights, factors, k, t_norm);
    if (error < run.error) {
        run.weights = std::move(weights);
        run.factors = std::move(factors);
        run.error = error;
    }
}

AlsRun als_once(const DenseTensor& t, std::size_t rank, std::size_t k, double t_norm, Rng& rng,
                const CpOptions& opts) {
    const std::size_t n = t.shape.size();
    AlsRun run;
    run.weights.assign(rank, 1.0);
    run.factors.assign(n, std::vector<double>(k * rank));
    for (auto& f : run.factors) {
        for (std::size_t r = 0; r < rank; ++r) {
            std::vector<double> col(k);
            random_unit(col, rng);
            for (std::size_t b = 0; b < k; ++b) f[b * rank + r] = col[b];
        }
    }

    double prev_fit = -std::numeric_limits<double>::infinity();
    std::pair<std::vector<double>, std::vector<std::vector<double>>> previous;
    std::vector<std::size_t> idx(n);
    for (std::size_t sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
        for (std::size_t mode = 0; mode < n; ++mode) {
            // Gram-matrix Hadamard product of the other modes
            std::vector<double> v(rank * rank, 1.0);
            for (std::size_t j = 0; j < n; ++j) {
                if (j == mode) continue;
                for (std::size_t r = 0; r < rank; ++r)
                    for (std::size_t s = 0; s < rank; ++s) {
                        double g = 0.0;
                        for (std::size_t b = 0; b < k; ++b)
                            g += run.factors[j][b * rank + r] * run.factors[j][b * rank + s];
                        v[r * rank + s] *= g;
                    }
            }
            // Matricized tensor times the Khatri-Rao product of the other modes
            std::vector<double> m(k * rank, 0.0);
            std::fill(idx.begin(), idx.end(), 0);
            for (std::size_t flat = 0; flat < t.data.size(); ++flat) {
                const double x = t.data[flat];
                if (x != 0.0) {
                    for (std::size_t r = 0; r < rank; ++r) {
                        double kr = x;
                        for (std::size_t j = 0; j < n; ++j)
                            if (j != mode) kr *= run.factors[j][idx[j] * rank + r];
                        m[idx[mode] * rank + r] += kr;
                    }
                }
                for (std::size_t i = n; i-- > 0;) {
                    if (++idx[i] < k) break;
                    idx[i] = 0;
                }
            }
            auto updated = solve_normal_equations(std::move(v), m, k, rank, opts.ridge);
            for (std::size_t r = 0; r < rank; ++r) {
                double norm = 0.0;
                for (std::size_t b = 0; b < k; ++b) norm += updated[b * rank + r] * updated[b * rank + r];
                norm = std::sqrt(norm);
                if (norm > 0.0 && std::isfinite(norm)) {
                    for (std::size_t b = 0; b < k; ++b) updated[b * rank + r] /= norm;
                    run.weights[r] = norm;
                } else {
                    for (std::size_t b = 0; b < k; ++b) updated[b * rank + r] = b == 0 ? 1.0 : 0.0;
                    run.weights[r] = 0.0;
                }
            }
            run.factors[mode] = std::move(updated);
        }
        run.sweeps = sweep;
        run.error = relative_error(t, run.weights, run.factors, k, t_norm);
        if (sweep > 1) extrapolate(run, previous, t, k, t_norm, std::cbrt(static_cast<double>(sweep)));
        previous = {run.weights, run.factors};
        const double fit = 1.0 - run.error;
        if (std::abs(fit - prev_fit) < opts.fit_tolerance) {
            run.converged = true;
            break;
        }
        prev_fit = fit;
    }
    return run;
}

// Solves (h + mu I) x = rhs by Cholesky; false if not positive definite.
bool damped_solve(const std::vector<double>& h, double mu, const std::vector<double>& rhs, std::vector<double>& x) {
    const std::size_t p = rhs.size();
    std::vector<double> l(h);
    for (std::size_t i = 0; i < p; ++i) l[i * p + i] += mu;
    for (std::size_t j = 0; j < p; ++j) {
        double d = l[j * p + j];
        for (std::size_t q = 0; q < j; ++q) d -= l[j * p + q] * l[j * p + q];
        if (!(d > 0.0)) return false;
        d = std::sqrt(d);
        l[j * p + j] = d;
        for (std::size_t i = j + 1; i < p; ++i) {
            double s = l[i * p + j];
            for (std::size_t q = 0; q < j; ++q) s -= l[i * p + q] * l[j * p + q];
            l[i * p + j] = s / d;
        }
    }
    x.assign(p, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        double s = rhs[i];
        for (std::size_t q = 0; q < i; ++q) s -= l[i * p + q] * x[q];
        x[i] = s / l[i * p + i];
    }
    for (std::size_t i = p; i-- > 0;) {
        double s = x[i];
        for (std::size_t q = i + 1; q < p; ++q) s -= l[q * p + i] * x[q];
        x[i] = s / l[i * p + i];
    }
    return true;
}

// Levenberg-Marquardt refinement of all factors jointly. ALS converges only
// linearly near swamps; this finishes exact-rank fits to machine precision.
void polish(AlsRun& run, const DenseTensor& t, std::size_t k, double t_norm, std::size_t max_iterations) {
    const std::size_t n = run.factors.size();
    const std::size_t rank = run.weights.size();
    const std::size_t p = n * k * rank;
    const std::size_t total = t.data.size();

    // unit columns with the weights carried by the last mode
    auto factors = run.factors;
    for (std::size_t b = 0; b < k; ++b)
        for (std::size_t r = 0; r < rank; ++r) factors[n - 1][b * rank + r] *= run.weights[r];
    const std::vector<double> unit_weights(rank, 1.0);
    double error = relative_error(t, unit_weights, factors, k, t_norm);

    std::vector<double> jac(total * p);
    std::vector<double> resid(total);
    std::vector<double> h(p * p);
    std::vector<double> grad(p);
    std::vector<double> step;
    std::vector<std::size_t> idx(n);
    double mu = -1.0;
    for (std::size_t iter = 0; iter < max_iterations && error > 1e-15; ++iter) {
        std::fill(jac.begin(), jac.end(), 0.0);
        std::fill(idx.begin(), idx.end(), 0);
        for (std::size_t flat = 0; flat < total; ++flat) {
            double rec = 0.0;
            for (std::size_t r = 0; r < rank; ++r) {
                double prod = 1.0;
                for (std::size_t i = 0; i < n; ++i) prod *= factors[i][idx[i] * rank + r];
                rec += prod;
                for (std::size_t i = 0; i < n; ++i) {
                    double others = 1.0;
                    for (std::size_t j = 0; j < n; ++j)
                        if (j != i) others *= factors[j][idx[j] * rank + r];
                    jac[flat * p + (i * k + idx[i]) * rank + r] = others;
                }
            }
            resid[flat] = rec - t.data[flat];
            for (std::size_t i = n; i-- > 0;) {
                if (++idx[i] < k) break;
                idx[i] = 0;
            }
        }
        for (std::size_t a = 0; a < p; ++a) {
            double g = 0.0;
            for (std::size_t f = 0; f < total; ++f) g += jac[f * p + a] * resid[f];
            grad[a] = -g;
            for (std::size_t b = a; b < p; ++b) {
                double s = 0.0;
                for (std::size_t f = 0; f < total; ++f) s += jac[f * p + a] * jac[f * p + b];
                h[a * p + b] = h[b * p + a] = s;
            }
        }
        if (mu < 0.0) {
            double dmax = 0.0;
            for (std::size_t a = 0; a < p; ++a) dmax = std::max(dmax, h[a * p + a]);
            mu = 1e-3 * std::max(dmax, 1e-12);
        }
        bool improved = false;
        for (int attempt = 0; attempt < 30 && !improved; ++attempt) {
            if (damped_solve(h, mu, grad, step)) {
                auto trial = factors;
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t x = 0; x < k * rank; ++x) trial[i][x] += step[i * k * rank + x];
                const double trial_error = relative_error(t, unit_weights, trial, k, t_norm);
                if (trial_error < error) {
                    factors = std::move(trial);
                    error = trial_error;
                    mu = std::max(mu / 3.0, 1e-300);
                    improved = true;
                    continue;
                }
            }
            mu *= 4.0;
        }
        if (!improved) break;
    }
    if (!(error < run.error)) return;

    std::vector<double> weights(rank, 1.0);
    for (auto& f : factors)
        for (std::size_t r = 0; r < rank; ++r) {
            double norm = 0.0;
            for (std::size_t b = 0; b < k; ++b) norm += f[b * rank + r] * f[b * rank + r];
            norm = std::sqrt(norm);
            if (!(norm > 0.0) || !std::isfinite(norm)) return;
            for (std::size_t b = 0; b < k; ++b) f[b * rank + r] /= norm;
            weights[r] *= norm;
        }
    run.weights = std::move(weights);
    run.factors = std::move(factors);
    run.error = relative_error(t, run.weights, run.factors, k, t_norm);
}

GlobalRepresentation to_model(const AlsRun& run, std::size_t order, std::size_t k) {
    const std::size_t rank = run.weights.size();
    std::vector<double> factors(rank * order * k);
    for (std::size_t r = 0; r < rank; ++r)
        for (std::size_t i = 0; i < order; ++i)
            for (std::size_t b = 0; b < k; ++b) factors[(r * order + i) * k + b] = run.factors[i][b * rank + r];
    return GlobalRepresentation(rank, order, k, run.weights, std::move(factors));
}

}  // namespace

CpResult cp_decompose(const DenseTensor& t, std::size_t rank, Rng& rng, const CpOptions& opts) {
    if (t.shape.empty()) throw Error(ErrorKind::ShapeMismatch, "tensor needs at least one mode");
    const std::size_t n = t.shape.size();
    const std::size_t k = t.shape.front();
    for (std::size_t dim : t.shape)
        if (dim != k) throw Error(ErrorKind::ShapeMismatch, "cp_decompose expects equal mode sizes");
    const std::size_t total = checked_power(k, n, opts.dense_cap);
    if (t.data.size() != total) throw Error(ErrorKind::ShapeMismatch, "tensor data disagrees with its shape");
    if (rank == 0) throw Error(ErrorKind::RankTooLarge, "rank must be >= 1");
    if (rank > total / k)
        throw Error(ErrorKind::RankTooLarge,
                    "rank " + std::to_string(rank) + " exceeds guard " + std::to_string(total / k));

    const double t_norm = t.frobenius_norm();
    if (t_norm == 0.0) {
        std::vector<double> factors(rank * n * k, 0.0);
        for (std::size_t f = 0; f < rank * n; ++f) factors[f * k] = 1.0;
        return CpResult{GlobalRepresentation(rank, n, k, std::vector<double>(rank, 0.0), std::move(factors)), 0.0, 0, 0,
                        true};
    }

    AlsRun best;
    std::size_t best_restart = 0;
    const std::size_t restarts = std::max<std::size_t>(1, opts.restarts);
    for (std::size_t attempt = 0; attempt < restarts; ++attempt) {
        AlsRun run = als_once(t, rank, k, t_norm, rng, opts);
        if (run.error > 0.0 && opts.polish_iterations > 0) polish(run, t, k, t_norm, opts.polish_iterations);
        if (run.error < best.error) {
            best = std::move(run);
            best_restart = attempt;
        }
    }
    return CpResult{to_model(best, n, k), best.error, best.sweeps, best_restart, best.converged};
}

}  // namespace qforage::qrep
