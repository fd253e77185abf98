#include "qforage/actor.hpp"

#include <algorithm>
#include <cmath>

namespace qforage::actor {

void ActorParams::validate() const {
    if (!(temperature >= kMinTemperature && temperature <= kMaxTemperature))
        throw Error(ErrorKind::SpecInvalid, "temperature must lie in [1e-3, 1e3]");
    if (table.basis_dim() != global.basis_dim())
        throw Error(ErrorKind::ShapeMismatch, "amplitude table and global representation disagree on basis dim");
}

namespace {

void check_candidates(const ActorParams& params, std::span<const qrep::QueryState> candidates) {
    if (candidates.empty()) throw Error(ErrorKind::NoCandidates, "no candidate queries");
    for (const auto& q : candidates)
        if (q.order() != params.global.order() || q.basis_dim != params.global.basis_dim())
            throw Error(ErrorKind::ShapeMismatch, "candidate shape disagrees with the actor");
}

void check_finite(std::span<const double> scores) {
    if (scores.empty()) throw Error(ErrorKind::NoCandidates, "no scores");
    for (double s : scores)
        if (!std::isfinite(s)) throw Error(ErrorKind::NonFiniteScore, "candidate score is not finite");
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::size_t lowest_argmax(std::span<const double> scores) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.size(); ++c)
        if (scores[c] > scores[best]) best = c;
    return best;
}

double log_softmax_at(std::span<const double> scores, double temperature, std::size_t index) {
    double m = -INFINITY;
    for (double s : scores) m = std::max(m, s / temperature);
    double sum = 0.0;
    for (double s : scores) sum += std::exp(s / temperature - m);
    return scores[index] / temperature - m - std::log(sum);
}

}  // namespace

ForwardResult actor_forward(const ActorParams& params, std::span<const qrep::QueryState> candidates) {
    check_candidates(params, candidates);
    ForwardResult out;
    out.scores.reserve(candidates.size());
    out.pooled.reserve(candidates.size());
    for (const auto& q : candidates) {
        auto pooled = qrep::product_pool(params.global, q);
        out.scores.push_back(qrep::project_pooled(params.global, pooled));
        out.pooled.push_back(std::move(pooled));
    }
    return out;
}

std::vector<double> policy_probabilities(std::span<const double> scores, double temperature) {
    check_finite(scores);
    if (!(temperature > 0.0)) throw Error(ErrorKind::SpecInvalid, "temperature must be positive");
    double m = -INFINITY;
    for (double s : scores) m = std::max(m, s / temperature);
    std::vector<double> p(scores.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < scores.size(); ++c) {
        p[c] = std::exp(scores[c] / temperature - m);
        sum += p[c];
    }
    for (double& x : p) x /= sum;
    return p;
}

Selection select_greedy(std::span<const double> scores, double temperature) {
    check_finite(scores);
    if (!(temperature > 0.0)) throw Error(ErrorKind::SpecInvalid, "temperature must be positive");
    const std::size_t index = lowest_argmax(scores);
    return {index, log_softmax_at(scores, temperature, index)};
}

Selection select_action(std::span<const double> scores, double temperature, Rng& rng, SelectionMode mode) {
    if (mode == SelectionMode::Greedy) return select_greedy(scores, temperature);
    const auto p = policy_probabilities(scores, temperature);
    const double u = uniform01(rng);
    double cumulative = 0.0;
    std::size_t index = p.size();
    std::size_t last_positive = 0;
    for (std::size_t c = 0; c < p.size(); ++c) {
        if (p[c] > 0.0) last_positive = c;
        cumulative += p[c];
        if (index == p.size() && u < cumulative) index = c;
    }
    if (index == p.size()) index = last_positive;
    return {index, log_softmax_at(scores, temperature, index)};
}

ActionOutput act(const ActorParams& params, std::span<const qrep::QueryState> candidates, Rng& rng,
                 SelectionMode mode) {
    auto fwd = actor_forward(params, candidates);
    const auto sel = select_action(fwd.scores, params.temperature, rng, mode);
    ActionOutput out;
    out.index = sel.index;
    out.log_probability = sel.log_probability;
    out.probabilities = policy_probabilities(fwd.scores, params.temperature);
    out.action_vector = std::move(fwd.pooled[sel.index]);
    out.scores = std::move(fwd.scores);
    return out;
}

bool ActorGradients::all_zero() const {
    auto zero = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }); };
    if (!zero(weights) || !zero(factors)) return false;
    return std::all_of(table_rows.begin(), table_rows.end(), [&](const auto& kv) { return zero(kv.second); });
}

double actor_loss(const ActorParams& params, std::span<const qrep::QueryState> candidates, std::size_t chosen,
                  double advantage) {
    const auto fwd = actor_forward(params, candidates);
    if (chosen >= candidates.size()) throw Error(ErrorKind::IndexOutOfRange, "chosen index out of range");
    return -advantage * log_softmax_at(fwd.scores, params.temperature, chosen);
}

ActorGradients actor_gradients(const ActorParams& params, std::span<const qrep::QueryState> candidates,
                               std::size_t chosen, double advantage) {
    check_candidates(params, candidates);
    if (chosen >= candidates.size()) throw Error(ErrorKind::IndexOutOfRange, "chosen index out of range");
    const auto& g = params.global;
    const std::size_t rank = g.rank();
    const std::size_t order = g.order();
    const std::size_t k = g.basis_dim();

    ActorGradients grads;
    grads.weights.assign(rank, 0.0);
    grads.factors.assign(rank * order * k, 0.0);
    for (const auto& q : candidates)
        for (std::size_t id : q.word_ids) grads.table_rows.try_emplace(id, std::vector<double>(k, 0.0));

    const auto fwd = actor_forward(params, candidates);
    const auto probs = policy_probabilities(fwd.scores, params.temperature);

    std::vector<double> overlap(order);
    std::vector<double> prefix(order + 1);
    std::vector<double> suffix(order + 1);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        // d loss / d score_c for loss = -A log softmax(s / tau)_chosen
        const double indicator = c == chosen ? 1.0 : 0.0;
        const double dscore = -advantage * (indicator - probs[c]) / params.temperature;
        if (dscore == 0.0) continue;
        const auto& q = candidates[c];
        for (std::size_t r = 0; r < rank; ++r) {
            grads.weights[r] += dscore * fwd.pooled[c][r];
            for (std::size_t i = 0; i < order; ++i) overlap[i] = dot(g.factor(r, i), q.row(i));
            // leave-one-out products survive zero overlaps
            prefix[0] = 1.0;
            for (std::size_t i = 0; i < order; ++i) prefix[i + 1] = prefix[i] * overlap[i];
            suffix[order] = 1.0;
            for (std::size_t i = order; i-- > 0;) suffix[i] = suffix[i + 1] * overlap[i];
            for (std::size_t i = 0; i < order; ++i) {
                const double doverlap = dscore * g.weight(r) * prefix[i] * suffix[i + 1];
                const auto e = g.factor(r, i);
                const auto alpha = q.row(i);
                auto& row_grad = grads.table_rows[q.word_ids[i]];
                double* factor_grad = grads.factors.data() + (r * order + i) * k;
                for (std::size_t b = 0; b < k; ++b) {
                    factor_grad[b] += doverlap * alpha[b];
                    row_grad[b] += doverlap * e[b];
                }
            }
        }
    }
    return grads;
}

}  // namespace qforage::actor
