#include "qforage/critic.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

namespace qforage::critic {

using qcore::Complex;

MatchClass class_from_reward(int reward) {
    switch (reward) {
        case -1: return MatchClass::Mismatch;
        case 0: return MatchClass::Partial;
        case 1: return MatchClass::Match;
        default: throw Error(ErrorKind::InvalidLabel, "reward " + std::to_string(reward) + " has no class");
    }
}

MatchClass class_from_index(int index) {
    if (index < 0 || index >= static_cast<int>(kClassCount))
        throw Error(ErrorKind::InvalidLabel, "class index " + std::to_string(index) + " out of range");
    return static_cast<MatchClass>(index);
}

int reward_of(MatchClass c) { return static_cast<int>(kClassRewards[static_cast<std::size_t>(c)]); }

double wrap_phase(double phi) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double wrapped = phi - two_pi * std::floor((phi + std::numbers::pi) / two_pi);
    if (wrapped >= std::numbers::pi) wrapped -= two_pi;
    if (wrapped < -std::numbers::pi) wrapped = -std::numbers::pi;
    return wrapped;
}

ComplexEmbeddingTable::ComplexEmbeddingTable(std::size_t vocab_size, std::size_t dim, std::vector<double> amplitudes,
                                             std::vector<double> phases, std::vector<double> salience)
    : vocab_size_(vocab_size),
      dim_(dim),
      amplitudes_(std::move(amplitudes)),
      phases_(std::move(phases)),
      salience_(std::move(salience)) {
    if (vocab_size_ == 0 || dim_ == 0) throw Error(ErrorKind::ShapeMismatch, "embedding table needs V, d >= 1");
    if (dim_ % kClassCount != 0)
        throw Error(ErrorKind::DimensionNotDivisible, "embedding dimension must be divisible by 3");
    if (amplitudes_.size() != vocab_size_ * dim_ || phases_.size() != vocab_size_ * dim_ ||
        salience_.size() != vocab_size_)
        throw Error(ErrorKind::ShapeMismatch, "embedding table sizes disagree with its shape");
    for (std::size_t w = 0; w < vocab_size_; ++w) {
        auto row = std::span<double>(amplitudes_).subspan(w * dim_, dim_);
        double n = 0.0;
        for (double& x : row) {
            x = std::abs(x);
            n += x * x;
        }
        n = std::sqrt(n);
        if (!(n > 0.0)) throw Error(ErrorKind::NotNormalized, "embedding amplitude row is zero");
        if (std::abs(n - 1.0) > 1e-15)
            for (double& x : row) x /= n;
    }
    for (double& p : phases_) p = wrap_phase(p);
}

ComplexEmbeddingTable ComplexEmbeddingTable::random(std::size_t vocab_size, std::size_t dim, Rng& rng) {
    std::vector<double> amp(vocab_size * dim);
    std::vector<double> phase(vocab_size * dim);
    for (double& a : amp) a = 0.05 + uniform01(rng);
    for (double& p : phase) p = (2.0 * uniform01(rng) - 1.0) * std::numbers::pi;
    return ComplexEmbeddingTable(vocab_size, dim, std::move(amp), std::move(phase),
                                 std::vector<double>(vocab_size, 0.0));
}

std::span<const double> ComplexEmbeddingTable::amplitude(std::size_t id) const {
    if (id >= vocab_size_) throw Error(ErrorKind::IndexOutOfRange, "word id out of range");
    return std::span<const double>(amplitudes_).subspan(id * dim_, dim_);
}

std::span<const double> ComplexEmbeddingTable::phase(std::size_t id) const {
    if (id >= vocab_size_) throw Error(ErrorKind::IndexOutOfRange, "word id out of range");
    return std::span<const double>(phases_).subspan(id * dim_, dim_);
}

qcore::StateVector<Complex> ComplexEmbeddingTable::embedding(std::size_t id) const {
    const auto a = amplitude(id);
    const auto p = phase(id);
    std::vector<Complex> v(dim_);
    for (std::size_t j = 0; j < dim_; ++j) v[j] = std::polar(a[j], p[j]);
    return qcore::StateVector<Complex>(std::move(v));
}

void ComplexEmbeddingTable::set_amplitude(std::size_t id, std::span<const double> values) {
    if (id >= vocab_size_) throw Error(ErrorKind::IndexOutOfRange, "word id out of range");
    if (values.size() != dim_) throw Error(ErrorKind::ShapeMismatch, "row length disagrees with dim");
    double n = 0.0;
    for (double x : values) n += x * x;
    n = std::sqrt(n);
    if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorKind::NotNormalized, "amplitude row collapsed to zero");
    for (std::size_t j = 0; j < dim_; ++j) amplitudes_[id * dim_ + j] = std::abs(values[j]) / n;
}

void ComplexEmbeddingTable::set_phase(std::size_t id, std::span<const double> values) {
    if (id >= vocab_size_) throw Error(ErrorKind::IndexOutOfRange, "word id out of range");
    if (values.size() != dim_) throw Error(ErrorKind::ShapeMismatch, "row length disagrees with dim");
    for (std::size_t j = 0; j < dim_; ++j) phases_[id * dim_ + j] = wrap_phase(values[j]);
}

void ComplexEmbeddingTable::set_salience(std::size_t id, double value) {
    if (!std::isfinite(value)) throw Error(ErrorKind::NonFiniteScore, "salience must be finite");
    salience_.at(id) = value;
}

std::vector<double> token_weights(std::span<const std::size_t> tokens, const ComplexEmbeddingTable& table) {
    if (tokens.empty()) throw Error(ErrorKind::EmptyInput, "critic needs at least one token");
    double m = -INFINITY;
    for (std::size_t id : tokens) m = std::max(m, table.salience(id));
    std::vector<double> beta(tokens.size());
    double sum = 0.0;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        beta[t] = std::exp(table.salience(tokens[t]) - m);
        sum += beta[t];
    }
    for (double& b : beta) b /= sum;
    return beta;
}

std::vector<std::size_t> concat_tokens(std::span<const std::size_t> state_tokens,
                                       std::span<const std::size_t> action_tokens) {
    std::vector<std::size_t> all(state_tokens.begin(), state_tokens.end());
    all.insert(all.end(), action_tokens.begin(), action_tokens.end());
    return all;
}

qcore::DensityMatrix critic_density(std::span<const std::size_t> tokens, const ComplexEmbeddingTable& table) {
    const auto beta = token_weights(tokens, table);
    std::vector<qcore::StateVector<Complex>> words;
    words.reserve(tokens.size());
    for (std::size_t id : tokens) words.push_back(table.embedding(id));
    return qcore::build_density(beta, words);
}

qcore::DensityMatrix critic_density(std::span<const std::size_t> state_tokens,
                                    std::span<const std::size_t> action_tokens, const ComplexEmbeddingTable& table) {
    const auto all = concat_tokens(state_tokens, action_tokens);
    return critic_density(all, table);
}

const qcore::Observable& class_observable(std::size_t dim) {
    // small cache: projectors are validated once per dimension
    static std::mutex mu;
    static std::map<std::size_t, std::unique_ptr<qcore::Observable>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[dim];
    if (!slot)
        slot = std::make_unique<qcore::Observable>(qcore::Observable::coordinate_blocks(
            dim, std::vector<double>(kClassRewards.begin(), kClassRewards.end())));
    return *slot;
}

ClassMeasurement measure_classes(const qcore::DensityMatrix& rho) {
    if (rho.dim() % kClassCount != 0)
        throw Error(ErrorKind::DimensionNotDivisible, "density dimension must be divisible by 3");
    const auto p = qcore::measure(class_observable(rho.dim()), rho);
    ClassMeasurement m;
    std::copy(p.begin(), p.end(), m.probabilities.begin());
    return m;
}

double q_value(const ClassMeasurement& m) {
    double q = 0.0;
    for (std::size_t c = 0; c < kClassCount; ++c) q += kClassRewards[c] * m.probabilities[c];
    return q;
}

MatchClass predicted_class(const ClassMeasurement& m) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < kClassCount; ++c)
        if (m.probabilities[c] > m.probabilities[best]) best = c;
    return static_cast<MatchClass>(best);
}

bool CriticGradients::all_zero() const {
    auto zero = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }); };
    for (const auto& [id, g] : amplitude_rows)
        if (!zero(g)) return false;
    for (const auto& [id, g] : phase_rows)
        if (!zero(g)) return false;
    for (const auto& [id, g] : salience)
        if (g != 0.0) return false;
    return true;
}

namespace {

// Word vector with the amplitude row normalized inside the forward pass.
std::vector<Complex> normalized_embedding(const ComplexEmbeddingTable& table, std::size_t id, double& norm) {
    const auto a = table.amplitude(id);
    const auto p = table.phase(id);
    norm = 0.0;
    for (double x : a) norm += x * x;
    norm = std::sqrt(norm);
    std::vector<Complex> w(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) w[j] = std::polar(a[j] / norm, p[j]);
    return w;
}

double evaluate_probability(std::span<const std::size_t> tokens, MatchClass label, const ComplexEmbeddingTable& table,
                            ClassMeasurement* measurement) {
    const auto beta = token_weights(tokens, table);
    std::vector<qcore::StateVector<Complex>> words;
    words.reserve(tokens.size());
    for (std::size_t id : tokens) {
        double norm = 0.0;
        words.emplace_back(normalized_embedding(table, id, norm));
    }
    const auto m = measure_classes(qcore::build_density(beta, words));
    if (measurement) *measurement = m;
    return m.probabilities[static_cast<std::size_t>(label)];
}

}  // namespace

double critic_loss(std::span<const std::size_t> tokens, MatchClass label, const ComplexEmbeddingTable& table) {
    const double p = evaluate_probability(tokens, label, table, nullptr);
    return -std::log(std::max(p, kProbabilityFloor));
}

CriticEvaluation critic_loss_and_gradients(std::span<const std::size_t> tokens, MatchClass label,
                                           const ComplexEmbeddingTable& table) {
    if (static_cast<std::size_t>(label) >= kClassCount) throw Error(ErrorKind::InvalidLabel, "label out of range");
    CriticEvaluation out;
    const double p = evaluate_probability(tokens, label, table, &out.measurement);
    out.loss = -std::log(std::max(p, kProbabilityFloor));

    const std::size_t d = table.dim();
    for (std::size_t id : tokens) {
        out.gradients.amplitude_rows.try_emplace(id, std::vector<double>(d, 0.0));
        out.gradients.phase_rows.try_emplace(id, std::vector<double>(d, 0.0));
        out.gradients.salience.try_emplace(id, 0.0);
    }
    // the floor makes the loss locally constant
    if (p < kProbabilityFloor) return out;
    const double dloss_dp = -1.0 / p;

    const auto& proj = class_observable(d).projector(static_cast<std::size_t>(label));
    const auto beta = token_weights(tokens, table);
    std::vector<double> dloss_dbeta(tokens.size());
    std::vector<Complex> pw(d);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const std::size_t id = tokens[t];
        double norm = 0.0;
        const auto w = normalized_embedding(table, id, norm);
        for (std::size_t j = 0; j < d; ++j) {
            Complex s{0.0, 0.0};
            for (std::size_t k = 0; k < d; ++k) s += proj(j, k) * w[k];
            pw[j] = s;
        }
        // p = sum_t beta_t <w_t|P|w_t>
        Complex expectation{0.0, 0.0};
        for (std::size_t j = 0; j < d; ++j) expectation += std::conj(w[j]) * pw[j];
        dloss_dbeta[t] = dloss_dp * expectation.real();

        // dp/dRe(w_j) + i dp/dIm(w_j) = 2 beta_t (P w)_j
        const auto phase = table.phase(id);
        std::vector<double> dloss_dunit(d);
        auto& dphase = out.gradients.phase_rows[id];
        for (std::size_t j = 0; j < d; ++j) {
            const Complex g = 2.0 * beta[t] * dloss_dp * pw[j];
            const Complex rotation = std::polar(1.0, phase[j]);
            dloss_dunit[j] = (std::conj(rotation) * g).real();
            dphase[j] += (std::conj(w[j]) * g).imag();
        }
        // chain through a -> a / |a|
        const auto a = table.amplitude(id);
        double radial = 0.0;
        for (std::size_t j = 0; j < d; ++j) radial += dloss_dunit[j] * a[j] / norm;
        auto& damp = out.gradients.amplitude_rows[id];
        for (std::size_t j = 0; j < d; ++j) damp[j] += (dloss_dunit[j] - radial * a[j] / norm) / norm;
    }
    double mean = 0.0;
    for (std::size_t t = 0; t < tokens.size(); ++t) mean += beta[t] * dloss_dbeta[t];
    for (std::size_t t = 0; t < tokens.size(); ++t)
        out.gradients.salience[tokens[t]] += beta[t] * (dloss_dbeta[t] - mean);
    return out;
}

}  // namespace qforage::critic
