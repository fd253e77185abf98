#include "qforage/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <sstream>

#include "qforage/actor.hpp"
#include "qforage/critic.hpp"
#include "qforage/env.hpp"
#include "qforage/error.hpp"
#include "qforage/qcore.hpp"
#include "qforage/qrep.hpp"
#include "qforage/rng.hpp"
#include "qforage/trainer.hpp"

namespace qforage::oracle {

namespace {

using qcore::Complex;

constexpr double kFiniteDifferenceStep = 1e-5;
constexpr double kGradientTolerance = 1e-4;
// Relative error denominators never drop below this, so gradients that are
// zero analytically compare in absolute terms.
constexpr double kGradientFloor = 1e-4;

// Keeps NaN sticky so a non-finite comparison always fails.
void worst(double& m, double e) {
    if (std::isnan(m)) return;
    if (std::isnan(e) || e > m) m = e;
}

std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(hi - lo + 1));
}

std::vector<double> random_unit(Rng& rng, std::size_t k) {
    std::vector<double> v(k);
    double n = 0.0;
    do {
        n = 0.0;
        for (double& x : v) {
            x = standard_normal(rng);
            n += x * x;
        }
    } while (n == 0.0);
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
}

qrep::QueryState random_query(Rng& rng, std::size_t order, std::size_t k) {
    qrep::QueryState q;
    q.basis_dim = k;
    for (std::size_t i = 0; i < order; ++i) {
        q.word_ids.push_back(i + 2);
        const auto row = random_unit(rng, k);
        q.rows.insert(q.rows.end(), row.begin(), row.end());
    }
    return q;
}

std::size_t power(std::size_t base, std::size_t exp) {
    std::size_t p = 1;
    for (std::size_t i = 0; i < exp; ++i) p *= base;
    return p;
}

// Multi-index j (row-major, first mode slowest) of flat index `flat`.
std::vector<std::size_t> unravel(std::size_t flat, std::size_t order, std::size_t k) {
    std::vector<std::size_t> j(order);
    for (std::size_t i = order; i-- > 0;) {
        j[i] = flat % k;
        flat /= k;
    }
    return j;
}

// sum_r w_r prod_i e_{r,i}[j_i], one entry at a time.
double cp_entry(const qrep::GlobalRepresentation& g, const std::vector<std::size_t>& j) {
    double s = 0.0;
    for (std::size_t r = 0; r < g.rank(); ++r) {
        double p = g.weight(r);
        for (std::size_t i = 0; i < g.order(); ++i) p *= g.factor(r, i)[j[i]];
        s += p;
    }
    return s;
}

double local_entry(const qrep::QueryState& q, const std::vector<std::size_t>& j) {
    double p = 1.0;
    for (std::size_t i = 0; i < q.order(); ++i) p *= q.row(i)[j[i]];
    return p;
}

std::vector<CheckResult> check_projection(const OracleOptions& o) {
    Rng rng = make_stream(o.seed, "oracle.projection");
    CheckResult dense{"projection", "project_vs_dense_inner", o.projection_instances, 0.0, 1e-10};
    CheckResult brute{"projection", "project_vs_bruteforce_sum", o.projection_instances, 0.0, 1e-10};
    for (std::size_t t = 0; t < o.projection_instances; ++t) {
        const std::size_t n = uniform_int(rng, 1, 4);
        const std::size_t k = uniform_int(rng, 1, 4);
        const std::size_t R = uniform_int(rng, 1, 5);
        const auto g = qrep::GlobalRepresentation::random(R, n, k, rng);
        const auto q = random_query(rng, n, k);
        const double factored = qrep::project(g, q) + o.perturb;
        worst(dense.max_error, std::abs(factored - qrep::inner(qrep::cp_reconstruct(g), qrep::materialize_local(q))));
        double sum = 0.0;
        for (std::size_t f = 0; f < power(k, n); ++f) {
            const auto j = unravel(f, n, k);
            sum += cp_entry(g, j) * local_entry(q, j);
        }
        worst(brute.max_error, std::abs(factored - sum));
    }
    return {dense, brute};
}

std::vector<CheckResult> check_cp_reconstruct(const OracleOptions& o) {
    Rng rng = make_stream(o.seed, "oracle.cp_reconstruct");
    CheckResult rec{"cp_reconstruct", "cp_reconstruct_entries", o.projection_instances, 0.0, 1e-12};
    CheckResult loc{"cp_reconstruct", "materialize_local_entries", o.projection_instances, 0.0, 1e-12};
    for (std::size_t t = 0; t < o.projection_instances; ++t) {
        const std::size_t n = uniform_int(rng, 1, 4);
        const std::size_t k = uniform_int(rng, 1, 4);
        const std::size_t R = uniform_int(rng, 1, 5);
        const auto g = qrep::GlobalRepresentation::random(R, n, k, rng);
        const auto q = random_query(rng, n, k);
        const auto tg = qrep::cp_reconstruct(g);
        const auto tq = qrep::materialize_local(q);
        const std::size_t total = power(k, n);
        if (tg.data.size() != total || tq.data.size() != total) {
            worst(rec.max_error, INFINITY);
            continue;
        }
        for (std::size_t f = 0; f < total; ++f) {
            const auto j = unravel(f, n, k);
            worst(rec.max_error, std::abs(tg.data[f] + o.perturb - cp_entry(g, j)));
            worst(loc.max_error, std::abs(tq.data[f] + o.perturb - local_entry(q, j)));
        }
    }
    return {rec, loc};
}

// A A^dagger / Tr, with A having a random number of complex Gaussian columns.
qcore::ComplexMatrix random_density(Rng& rng, std::size_t d) {
    const std::size_t cols = uniform_int(rng, 1, d);
    std::vector<Complex> a(d * cols);
    for (auto& z : a) z = Complex(standard_normal(rng), standard_normal(rng));
    qcore::ComplexMatrix rho(d, d);
    double tr = 0.0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            Complex s{0.0, 0.0};
            for (std::size_t c = 0; c < cols; ++c) s += a[i * cols + c] * std::conj(a[j * cols + c]);
            rho(i, j) = s;
        }
    for (std::size_t i = 0; i < d; ++i) tr += rho(i, i).real();
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) rho(i, j) /= tr;
    for (std::size_t i = 0; i < d; ++i) {
        rho(i, i) = Complex(rho(i, i).real(), 0.0);
        for (std::size_t j = i + 1; j < d; ++j) rho(j, i) = std::conj(rho(i, j));
    }
    return rho;
}

std::vector<CheckResult> check_born(const OracleOptions& o) {
    Rng rng = make_stream(o.seed, "oracle.born");
    CheckResult sum{"born", "probabilities_sum_to_one", o.born_instances, 0.0, 1e-10};
    CheckResult neg{"born", "probabilities_nonnegative", o.born_instances, 0.0, 0.0};
    CheckResult diag{"born", "probability_equals_diagonal_block_sum", o.born_instances, 0.0, 1e-12};
    constexpr std::size_t dims[] = {3, 6, 9, 12};
    for (std::size_t t = 0; t < o.born_instances; ++t) {
        const std::size_t d = dims[uniform_int(rng, 0, 3)];
        const auto rho = qcore::DensityMatrix::validated(random_density(rng, d));
        const auto obs = qcore::Observable::coordinate_blocks(d, {-1.0, 0.0, 1.0});
        auto p = qcore::measure(obs, rho);
        for (double& x : p) x += o.perturb;
        double total = 0.0;
        const std::size_t block = d / 3;
        for (std::size_t c = 0; c < 3; ++c) {
            total += p[c];
            worst(neg.max_error, std::max(0.0, -p[c]));
            double partial = 0.0;
            for (std::size_t j = c * block; j < (c + 1) * block; ++j) partial += rho(j, j).real();
            worst(diag.max_error, std::abs(p[c] - partial));
        }
        worst(sum.max_error, std::abs(total - 1.0));
    }
    return {sum, neg, diag};
}

critic::ComplexEmbeddingTable random_critic_table(Rng& rng, std::size_t vocab, std::size_t dim) {
    auto table = critic::ComplexEmbeddingTable::random(vocab, dim, rng);
    for (std::size_t w = 0; w < vocab; ++w) table.set_salience(w, standard_normal(rng));
    return table;
}

std::vector<CheckResult> check_density(const OracleOptions& o) {
    Rng rng = make_stream(o.seed, "oracle.density");
    CheckResult herm{"density", "hermitian", o.density_instances, 0.0, 1e-10};
    CheckResult trace{"density", "unit_trace", o.density_instances, 0.0, 1e-10};
    CheckResult psd{"density", "min_eigenvalue_above_minus_1e-8", o.density_instances, 0.0, 1e-8};
    CheckResult mix{"density", "equals_weighted_projector_sum", o.density_instances, 0.0, 1e-12};
    for (std::size_t t = 0; t < o.density_instances; ++t) {
        const std::size_t vocab = uniform_int(rng, 2, 20);
        const std::size_t dim = 3 * uniform_int(rng, 1, 4);
        const auto table = random_critic_table(rng, vocab, dim);
        std::vector<std::size_t> tokens(uniform_int(rng, 1, 15));
        for (auto& id : tokens) id = uniform_int(rng, 0, vocab - 1);
        const auto density = critic::critic_density(tokens, table);
        const auto& rho = density.matrix();

        double h = 0.0;
        double tr = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            tr += rho(i, i).real() + o.perturb;
            for (std::size_t j = 0; j < dim; ++j) h = std::max(h, std::abs(rho(i, j) + o.perturb - std::conj(rho(j, i))));
        }
        worst(herm.max_error, h);
        worst(trace.max_error, std::abs(tr - 1.0));
        const auto eig = qcore::hermitian_eigenvalues(rho);
        worst(psd.max_error, std::max(0.0, -(eig.front() + o.perturb)));

        // softmax of salience, then sum of beta |w><w| with w = (a / |a|) e^{i phi}
        double smax = -INFINITY;
        for (auto id : tokens) smax = std::max(smax, table.saliences()[id]);
        std::vector<double> beta;
        double bsum = 0.0;
        for (auto id : tokens) {
            beta.push_back(std::exp(table.saliences()[id] - smax));
            bsum += beta.back();
        }
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = 0; j < dim; ++j) {
                Complex s{0.0, 0.0};
                for (std::size_t m = 0; m < tokens.size(); ++m) {
                    const auto a = table.amplitudes().subspan(tokens[m] * dim, dim);
                    const auto ph = table.phases().subspan(tokens[m] * dim, dim);
                    double n2 = 0.0;
                    for (double x : a) n2 += x * x;
                    const Complex wi = std::polar(a[i], ph[i]);
                    const Complex wj = std::polar(a[j], ph[j]);
                    s += beta[m] / bsum * wi * std::conj(wj) / n2;
                }
                worst(mix.max_error, std::abs(rho(i, j) + o.perturb - s));
            }
    }
    return {herm, trace, psd, mix};
}

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradientFloor});
}

double central_difference(const std::function<double(double)>& f) {
    return (f(kFiniteDifferenceStep) - f(-kFiniteDifferenceStep)) / (2.0 * kFiniteDifferenceStep);
}

std::vector<CheckResult> check_actor_gradient(const OracleOptions& o) {
    Rng rng = make_stream(o.seed, "oracle.actor_gradient");
    CheckResult loss{"actor_gradient", "loss_matches_reference", o.gradient_instances, 0.0, 1e-12};
    CheckResult grad{"actor_gradient", "finite_difference_relative_error", o.gradient_instances, 0.0,
                     kGradientTolerance};
    for (std::size_t t = 0; t < o.gradient_instances; ++t) {
        const std::size_t vocab = uniform_int(rng, 2, 5);
        const std::size_t n = uniform_int(rng, 1, 3);
        const std::size_t k = uniform_int(rng, 1, 3);
        const std::size_t R = uniform_int(rng, 1, 3);
        const std::size_t C = uniform_int(rng, 2, 4);
        actor::ActorParams params{qrep::AmplitudeTable::random(vocab, k, rng),
                                  qrep::GlobalRepresentation::random(R, n, k, rng), 0.2 + 1.8 * uniform01(rng)};
        std::vector<qrep::QueryState> cands;
        ActorProblem p;
        p.rank = R;
        p.order = n;
        p.basis_dim = k;
        p.weights.assign(params.global.weights().begin(), params.global.weights().end());
        p.factors.assign(params.global.factors().begin(), params.global.factors().end());
        p.table.assign(params.table.data().begin(), params.table.data().end());
        for (std::size_t c = 0; c < C; ++c) {
            std::vector<std::size_t> ids(uniform_int(rng, 1, n));
            for (auto& id : ids) id = uniform_int(rng, 0, vocab - 1);
            cands.push_back(qrep::embed_ids(ids, params.table, n));
            p.words.push_back(cands.back().word_ids);
        }
        p.chosen = uniform_int(rng, 0, C - 1);
        p.advantage = standard_normal(rng);
        p.temperature = params.temperature;

        worst(loss.max_error,
              std::abs(actor::actor_loss(params, cands, p.chosen, p.advantage) + o.perturb - reference_actor_loss(p)));
        const auto g = actor::actor_gradients(params, cands, p.chosen, p.advantage);

        auto probe = [&](std::vector<double>& vec, std::size_t idx, double analytic) {
            const double saved = vec[idx];
            const double numeric = central_difference([&](double h) {
                vec[idx] = saved + h;
                return reference_actor_loss(p);
            });
            vec[idx] = saved;
            worst(grad.max_error, relative_error(analytic + o.perturb, numeric));
        };
        for (std::size_t r = 0; r < R; ++r) probe(p.weights, r, g.weights.at(r));
        for (std::size_t f = 0; f < p.factors.size(); ++f) probe(p.factors, f, g.factors.at(f));
        for (std::size_t w = 0; w < vocab; ++w) {
            const auto it = g.table_rows.find(w);
            for (std::size_t b = 0; b < k; ++b)
                probe(p.table, w * k + b, it == g.table_rows.end() ? 0.0 : it->second.at(b));
        }
    }
    return {loss, grad};
}

std::vector<CheckResult> check_critic_gradient(const OracleOptions& o) {
    Rng rng = make_stream(o.seed, "oracle.critic_gradient");
    CheckResult loss{"critic_gradient", "loss_matches_reference", o.gradient_instances, 0.0, 1e-12};
    CheckResult grad{"critic_gradient", "finite_difference_relative_error", o.gradient_instances, 0.0,
                     kGradientTolerance};
    constexpr std::size_t dim = 6;
    for (std::size_t t = 0; t < o.gradient_instances; ++t) {
        const std::size_t vocab = uniform_int(rng, 2, 5);
        const auto table = random_critic_table(rng, vocab, dim);
        CriticProblem p;
        p.dim = dim;
        p.amplitudes.assign(table.amplitudes().begin(), table.amplitudes().end());
        p.phases.assign(table.phases().begin(), table.phases().end());
        p.salience.assign(table.saliences().begin(), table.saliences().end());
        p.tokens.resize(uniform_int(rng, 1, 6));
        for (auto& id : p.tokens) id = uniform_int(rng, 0, vocab - 1);
        p.label = uniform_int(rng, 0, 2);
        const auto label = critic::class_from_index(static_cast<int>(p.label));

        const auto eval = critic::critic_loss_and_gradients(p.tokens, label, table);
        worst(loss.max_error, std::abs(eval.loss + o.perturb - reference_critic_loss(p)));

        auto lookup = [](const std::map<std::size_t, std::vector<double>>& m, std::size_t w, std::size_t b) {
            const auto it = m.find(w);
            return it == m.end() ? 0.0 : it->second.at(b);
        };
        auto probe = [&](std::vector<double>& vec, std::size_t idx, double analytic) {
            const double saved = vec[idx];
            const double numeric = central_difference([&](double h) {
                vec[idx] = saved + h;
                return reference_critic_loss(p);
            });
            vec[idx] = saved;
            worst(grad.max_error, relative_error(analytic + o.perturb, numeric));
        };
        for (std::size_t w = 0; w < vocab; ++w) {
            for (std::size_t b = 0; b < dim; ++b) {
                probe(p.amplitudes, w * dim + b, lookup(eval.gradients.amplitude_rows, w, b));
                probe(p.phases, w * dim + b, lookup(eval.gradients.phase_rows, w, b));
            }
            const auto it = eval.gradients.salience.find(w);
            probe(p.salience, w, it == eval.gradients.salience.end() ? 0.0 : it->second);
        }
    }
    return {loss, grad};
}

std::vector<CheckResult> check_cp_decompose(const OracleOptions& o) {
    Rng rng = make_stream(o.seed, "oracle.cp_decompose");
    CheckResult reported{"cp_decompose", "reported_relative_error", o.cp_instances, 0.0, 1e-6};
    CheckResult recomputed{"cp_decompose", "recomputed_relative_error", o.cp_instances, 0.0, 1e-6};
    for (std::size_t t = 0; t < o.cp_instances; ++t) {
        std::size_t n = 0, k = 0, R = 0;
        do {
            n = uniform_int(rng, 1, 3);
            k = uniform_int(rng, 1, 3);
            R = uniform_int(rng, 1, 3);
        } while (R > power(k, n) / k);
        const auto truth = qrep::GlobalRepresentation::random(R, n, k, rng);
        qrep::DenseTensor target;
        target.shape.assign(n, k);
        double norm2 = 0.0;
        for (std::size_t f = 0; f < power(k, n); ++f) {
            target.data.push_back(cp_entry(truth, unravel(f, n, k)));
            norm2 += target.data.back() * target.data.back();
        }
        const auto result = qrep::cp_decompose(target, R, rng);
        worst(reported.max_error, result.relative_error + o.perturb);
        double diff2 = 0.0;
        for (std::size_t f = 0; f < power(k, n); ++f) {
            const double e = cp_entry(result.model, unravel(f, n, k)) + o.perturb - target.data[f];
            diff2 += e * e;
        }
        worst(recomputed.max_error, norm2 == 0.0 ? std::sqrt(diff2) : std::sqrt(diff2 / norm2));
    }
    return {reported, recomputed};
}

std::vector<CheckResult> check_collapse(const OracleOptions& o) {
    Rng rng = make_stream(o.seed, "oracle.collapse");
    const qcore::StateVector<double> psi({0.6, 0.8});
    std::size_t zeros = 0;
    for (std::size_t t = 0; t < o.collapse_draws; ++t)
        if (qcore::collapse_sample(psi, rng).index == 0) ++zeros;
    const double freq = static_cast<double>(zeros) / static_cast<double>(o.collapse_draws);
    return {CheckResult{"collapse", "index0_frequency_vs_0.36", o.collapse_draws,
                        std::abs(freq + o.perturb - 0.6 * 0.6), 0.01}};
}

std::vector<CheckResult> check_reward(const OracleOptions& o) {
    Rng rng = make_stream(o.seed, "oracle.reward");
    env::GenSpec spec;
    spec.noise = 0.1;
    const auto corpus = env::gen_corpus(spec, rng);
    CheckResult direct{"reward", "step_reward_equals_label", 0, 0.0, 0.0};
    for (std::size_t d = 0; d < corpus.size(); ++d) {
        const auto& doc = corpus.documents[d];
        env::Observation obs;
        obs.doc_index = d;
        obs.doc_id = doc.id;
        obs.patch_id = doc.patch;
        obs.candidates = doc.candidates;
        for (std::size_t c = 0; c < doc.candidates.size(); ++c) {
            const int r = env::step(obs, c).reward;
            const int label = doc.candidates[c].label;
            const bool in_range = r == -1 || r == 0 || r == 1;
            worst(direct.max_error, std::abs(r + o.perturb - label) + (in_range ? 0.0 : 1.0));
            ++direct.instances;
        }
    }
    CheckResult sampled{"reward", "environment_observations_reward_equals_label", 0, 0.0, 0.0};
    env::Environment environment(corpus, env::Mode::Session, make_stream(o.seed, "oracle.reward.env"));
    for (std::size_t e = 0; e < corpus.size(); ++e) {
        const auto obs = environment.reset();
        for (std::size_t c = 0; c < obs.candidates.size(); ++c) {
            const int r = env::step(obs, c).reward;
            worst(sampled.max_error, std::abs(r + o.perturb - obs.candidates[c].label));
            ++sampled.instances;
        }
    }
    return {direct, sampled};
}

std::vector<CheckResult> check_scent(const OracleOptions& o) {
    struct Trace {
        std::vector<int> rewards;
        double lambda;
    };
    // Dyadic smoothing keeps every recursion step exact in binary floating point.
    const std::vector<Trace> traces = {
        {{1, 1, 0}, 0.5},   {{-1, 0, 1, 1}, 0.25}, {{0, 0, 0}, 0.5},
        {{1, -1, 1, -1, 1}, 1.0}, {{-1}, 0.125}, {{1, 0, -1, 0, 1, 1}, 0.5},
    };
    CheckResult scalar{"scent", "smoothed_scalar_closed_form", traces.size(), 0.0, 0.0};
    CheckResult dist{"scent", "distribution_closed_form", traces.size(), 0.0, 0.0};
    for (const auto& tr : traces) {
        env::ScentTracker tracker(tr.lambda);
        for (int r : tr.rewards) tracker.record("p0", r);
        const auto s = tracker.stats().overall;
        // lambda * sum_t (1 - lambda)^(T - t) r_t
        double closed = 0.0;
        const std::size_t T = tr.rewards.size();
        for (std::size_t t = 0; t < T; ++t)
            closed += tr.lambda * std::pow(1.0 - tr.lambda, static_cast<double>(T - 1 - t)) * tr.rewards[t];
        worst(scalar.max_error, std::abs(s.scalar + o.perturb - closed));
        for (int v = -1; v <= 1; ++v) {
            const auto count = std::count(tr.rewards.begin(), tr.rewards.end(), v);
            const double expected = static_cast<double>(count) / static_cast<double>(T);
            worst(dist.max_error, std::abs(s.distribution[static_cast<std::size_t>(v + 1)] + o.perturb - expected));
        }
    }
    return {scalar, dist};
}

std::string serialize(const trainer::Checkpoint& cp) {
    std::ostringstream out;
    trainer::write_checkpoint(cp, out);
    return out.str();
}

std::string serialize_log(const std::vector<trainer::MetricRecord>& log) {
    std::string s;
    for (const auto& m : log) s += trainer::format_metric_line(m) + "\n";
    return s;
}

std::vector<double> checkpoint_numbers(const trainer::Checkpoint& cp) {
    std::vector<double> v;
    const auto& m = cp.model;
    v.insert(v.end(), m.actor.table.data().begin(), m.actor.table.data().end());
    v.insert(v.end(), m.actor.global.weights().begin(), m.actor.global.weights().end());
    v.insert(v.end(), m.actor.global.factors().begin(), m.actor.global.factors().end());
    v.push_back(m.actor.temperature);
    v.insert(v.end(), m.critic.amplitudes().begin(), m.critic.amplitudes().end());
    v.insert(v.end(), m.critic.phases().begin(), m.critic.phases().end());
    v.insert(v.end(), m.critic.saliences().begin(), m.critic.saliences().end());
    return v;
}

double number_mismatch(const std::vector<double>& a, const std::vector<double>& b, double perturb) {
    if (a.size() != b.size()) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst(m, std::abs(a[i] + perturb - b[i]));
    return m;
}

std::vector<CheckResult> check_determinism(const OracleOptions& o) {
    Rng corpus_rng = make_stream(o.seed, "oracle.determinism");
    env::GenSpec spec;
    spec.docs = 10;
    const auto corpus = env::gen_corpus(spec, corpus_rng);
    trainer::TrainConfig cfg;
    cfg.seed = o.seed;
    cfg.episodes = o.determinism_episodes;
    cfg.eval_interval = std::max<std::size_t>(1, o.determinism_episodes / 3);
    const auto a = trainer::train(cfg, corpus);
    const auto b = trainer::train(cfg, corpus);

    CheckResult runs{"determinism", "identical_runs_bitwise", 2, 0.0, 0.0};
    worst(runs.max_error, number_mismatch(checkpoint_numbers(a.checkpoint), checkpoint_numbers(b.checkpoint), o.perturb));
    if (serialize(a.checkpoint) != serialize(b.checkpoint)) worst(runs.max_error, 1.0);
    if (serialize_log(a.log) != serialize_log(b.log)) worst(runs.max_error, 1.0);

    CheckResult trip{"determinism", "checkpoint_round_trip_bitwise", 1, 0.0, 0.0};
    const std::string text = serialize(a.checkpoint);
    std::istringstream in(text);
    const auto loaded = trainer::read_checkpoint(in);
    worst(trip.max_error, number_mismatch(checkpoint_numbers(loaded), checkpoint_numbers(a.checkpoint), o.perturb));
    if (serialize(loaded) != text) worst(trip.max_error, 1.0);
    if (loaded.env_rng != a.checkpoint.env_rng || loaded.policy_rng != a.checkpoint.policy_rng)
        worst(trip.max_error, 1.0);
    return {runs, trip};
}

using GroupFn = std::vector<CheckResult> (*)(const OracleOptions&);

const std::vector<std::pair<std::string, GroupFn>>& registry() {
    static const std::vector<std::pair<std::string, GroupFn>> groups = {
        {"projection", check_projection},
        {"cp_reconstruct", check_cp_reconstruct},
        {"born", check_born},
        {"density", check_density},
        {"actor_gradient", check_actor_gradient},
        {"critic_gradient", check_critic_gradient},
        {"cp_decompose", check_cp_decompose},
        {"collapse", check_collapse},
        {"reward", check_reward},
        {"scent", check_scent},
        {"determinism", check_determinism},
    };
    return groups;
}

}  // namespace

double reference_actor_loss(const ActorProblem& p) {
    const std::size_t k = p.basis_dim;
    std::vector<double> z;
    for (const auto& words : p.words) {
        double score = 0.0;
        for (std::size_t r = 0; r < p.rank; ++r) {
            double prod = p.weights[r];
            for (std::size_t i = 0; i < p.order; ++i) {
                double overlap = 0.0;
                for (std::size_t b = 0; b < k; ++b)
                    overlap += p.factors[(r * p.order + i) * k + b] * p.table[words[i] * k + b];
                prod *= overlap;
            }
            score += prod;
        }
        z.push_back(score / p.temperature);
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    double lse = 0.0;
    for (double x : z) lse += std::exp(x - zmax);
    lse = zmax + std::log(lse);
    return -p.advantage * (z[p.chosen] - lse);
}

double reference_critic_loss(const CriticProblem& p) {
    const std::size_t d = p.dim;
    double smax = -INFINITY;
    for (auto id : p.tokens) smax = std::max(smax, p.salience[id]);
    double bsum = 0.0;
    for (auto id : p.tokens) bsum += std::exp(p.salience[id] - smax);
    // Diagonal of rho restricted to the label block; phases cancel on the diagonal
    // but are kept in the arithmetic so that a phase-dependent bug would show.
    const std::size_t block = d / 3;
    double prob = 0.0;
    for (auto id : p.tokens) {
        const double beta = std::exp(p.salience[id] - smax) / bsum;
        double n2 = 0.0;
        for (std::size_t b = 0; b < d; ++b) n2 += p.amplitudes[id * d + b] * p.amplitudes[id * d + b];
        for (std::size_t j = p.label * block; j < (p.label + 1) * block; ++j) {
            const Complex w = std::polar(p.amplitudes[id * d + j], p.phases[id * d + j]) / std::sqrt(n2);
            prob += beta * (w * std::conj(w)).real();
        }
    }
    return -std::log(std::max(prob, critic::kProbabilityFloor));
}

const std::vector<std::string>& check_groups() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& [name, fn] : registry()) v.push_back(name);
        return v;
    }();
    return names;
}

bool is_check_group(const std::string& name) {
    const auto& g = check_groups();
    return std::find(g.begin(), g.end(), name) != g.end();
}

std::vector<CheckResult> run_group(const std::string& group, const OracleOptions& opts) {
    for (const auto& [name, fn] : registry())
        if (name == group) return fn(opts);
    throw Error(ErrorKind::ConfigError, "unknown oracle check '" + group + "'");
}

std::vector<CheckResult> run_checks(std::span<const std::string> groups, const OracleOptions& opts) {
    std::vector<CheckResult> out;
    const auto& all = check_groups();
    const std::span<const std::string> selected = groups.empty() ? std::span<const std::string>(all) : groups;
    for (const auto& g : selected) {
        auto r = run_group(g, opts);
        out.insert(out.end(), r.begin(), r.end());
    }
    return out;
}

}  // namespace qforage::oracle
