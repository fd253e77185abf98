#include "qforage/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace qforage::trainer {

std::vector<Settings::Entry> train_setting_defaults() {
    const TrainConfig d;
    return {
        {"episodes", std::to_string(d.episodes)},
        {"lr_actor", format_double(d.lr_actor)},
        {"lr_critic", format_double(d.lr_critic)},
        {"tau", format_double(d.temperature)},
        {"lambda", format_double(d.smoothing)},
        {"gamma", format_double(d.discount)},
        {"mode", std::string(env::to_string(d.mode))},
        {"eval_interval", std::to_string(d.eval_interval)},
        {"k", std::to_string(d.model.basis_dim)},
        {"order", std::to_string(d.model.order)},
        {"rank", std::to_string(d.model.rank)},
        {"critic_dim", std::to_string(d.model.critic_dim)},
        {"keywords", std::to_string(d.model.keywords)},
        {"init_weight_scale", format_double(d.model.init_weight_scale)},
    };
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& why) { throw Error(ErrorKind::ConfigError, why); };
    if (episodes < 1) fail("episodes must be >= 1");
    if (!(lr_actor >= 0.0) || !(lr_critic >= 0.0)) fail("learning rates must be nonnegative");
    if (!(temperature >= actor::kMinTemperature && temperature <= actor::kMaxTemperature))
        fail("tau must lie in [1e-3, 1e3]");
    if (!(smoothing > 0.0 && smoothing <= 1.0)) fail("lambda must lie in (0, 1]");
    if (!(discount >= 0.0 && discount <= 1.0)) fail("gamma must lie in [0, 1]");
    if (model.basis_dim < 1 || model.order < 1 || model.rank < 1) fail("k, order and rank must be >= 1");
    if (model.critic_dim < 3 || model.critic_dim % 3 != 0) fail("critic_dim must be a positive multiple of 3");
    if (!std::isfinite(model.init_weight_scale)) fail("init_weight_scale must be finite");
}

TrainConfig TrainConfig::from_settings(const Settings& s) {
    TrainConfig c;
    c.episodes = s.get_size("episodes");
    c.lr_actor = s.get_double("lr_actor");
    c.lr_critic = s.get_double("lr_critic");
    c.temperature = s.get_double("tau");
    c.smoothing = s.get_double("lambda");
    c.discount = s.get_double("gamma");
    c.mode = env::parse_mode(s.get("mode"));
    c.eval_interval = s.get_size("eval_interval");
    c.model.basis_dim = s.get_size("k");
    c.model.order = s.get_size("order");
    c.model.rank = s.get_size("rank");
    c.model.critic_dim = s.get_size("critic_dim");
    c.model.keywords = s.get_size("keywords");
    c.model.init_weight_scale = s.get_double("init_weight_scale");
    if (s.has("seed")) c.seed = s.get_u64("seed");
    c.validate();
    return c;
}

Model init_model(const ModelConfig& cfg, double temperature, const env::Corpus& corpus, std::uint64_t seed) {
    auto vocab = qrep::Vocabulary::from_words(corpus.vocabulary);
    Rng actor_rng = make_stream(seed, "init.actor");
    Rng critic_rng = make_stream(seed, "init.critic");
    auto table = qrep::AmplitudeTable::random(vocab.size(), cfg.basis_dim, actor_rng);
    auto global = qrep::GlobalRepresentation::random(cfg.rank, cfg.order, cfg.basis_dim, actor_rng, cfg.init_weight_scale);
    auto critic_table = critic::ComplexEmbeddingTable::random(vocab.size(), cfg.critic_dim, critic_rng);
    Model m{std::move(vocab), actor::ActorParams{std::move(table), std::move(global), temperature},
            std::move(critic_table)};
    m.actor.validate();
    return m;
}

std::vector<std::size_t> token_ids(const qrep::Vocabulary& vocab, std::span<const std::string> tokens) {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(vocab.id(t));
    return ids;
}

std::vector<qrep::QueryState> encode_candidates(const Model& model, std::span<const env::Candidate> candidates) {
    std::vector<qrep::QueryState> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(qrep::embed_query(c.tokens, model.vocab, model.actor.table, model.order()));
    return out;
}

Rollout rollout_step(const Model& model, const env::Observation& obs, Rng& policy_rng) {
    const auto states = encode_candidates(model, obs.candidates);
    const auto action = actor::act(model.actor, states, policy_rng, actor::SelectionMode::Sample);
    return Rollout{obs, env::step(obs, action.index, action.log_probability)};
}

namespace {

std::vector<std::size_t> critic_tokens(const Model& model, const env::Observation& obs, std::size_t chosen) {
    const auto state = token_ids(model.vocab, obs.keywords);
    const auto action = token_ids(model.vocab, obs.candidates.at(chosen).tokens);
    return critic::concat_tokens(state, action);
}

// x - lr * g, reporting whether any entry moved.
bool descend(std::span<const double> x, std::span<const double> g, double lr, std::vector<double>& out) {
    out.assign(x.begin(), x.end());
    bool moved = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double step = lr * g[i];
        if (step != 0.0) {
            out[i] = x[i] - step;
            moved = true;
        }
    }
    return moved;
}

void update_actor(actor::ActorParams& p, const actor::ActorGradients& g, double lr) {
    std::vector<double> next;
    for (const auto& [id, grad] : g.table_rows) {
        if (id == qrep::kNullId) continue;
        if (descend(p.table.row(id), grad, lr, next)) p.table.set_row(id, next);
    }
    auto& global = p.global;
    for (std::size_t r = 0; r < global.rank(); ++r) {
        const double step = lr * g.weights[r];
        if (step != 0.0) global.set_weight(r, global.weight(r) - step);
        for (std::size_t i = 0; i < global.order(); ++i) {
            const auto grad = std::span<const double>(g.factors).subspan((r * global.order() + i) * global.basis_dim(),
                                                                         global.basis_dim());
            if (descend(global.factor(r, i), grad, lr, next)) global.set_factor(r, i, next);
        }
    }
}

void update_critic(critic::ComplexEmbeddingTable& t, const critic::CriticGradients& g, double lr) {
    std::vector<double> next;
    for (const auto& [id, grad] : g.amplitude_rows)
        if (descend(t.amplitude(id), grad, lr, next)) t.set_amplitude(id, next);
    for (const auto& [id, grad] : g.phase_rows)
        if (descend(t.phase(id), grad, lr, next)) t.set_phase(id, next);
    for (const auto& [id, grad] : g.salience) {
        const double step = lr * grad;
        if (step != 0.0) t.set_salience(id, t.salience(id) - step);
    }
}

}  // namespace

StepMetrics apply_update(Model& model, const env::Observation& obs, std::size_t chosen, int reward,
                         double coefficient, const TrainConfig& cfg) {
    const auto states = encode_candidates(model, obs.candidates);
    const auto tokens = critic_tokens(model, obs, chosen);
    const auto label = critic::class_from_reward(reward);
    const auto critic_eval = critic::critic_loss_and_gradients(tokens, label, model.critic);

    StepMetrics m;
    m.reward = reward;
    m.coefficient = coefficient;
    m.q_value = critic::q_value(critic_eval.measurement);
    m.advantage = coefficient - m.q_value;
    m.critic_loss = critic_eval.loss;
    m.critic_probabilities = critic_eval.measurement.probabilities;

    const auto actor_grads = actor::actor_gradients(model.actor, states, chosen, m.advantage);
    update_actor(model.actor, actor_grads, cfg.lr_actor);
    update_critic(model.critic, critic_eval.gradients, cfg.lr_critic);
    return m;
}

StepResult train_step(Model& model, const env::Observation& obs, Rng& policy_rng, const TrainConfig& cfg) {
    auto roll = rollout_step(model, obs, policy_rng);
    const int r = roll.transition.reward;
    const auto metrics = apply_update(model, obs, roll.transition.chosen, r, static_cast<double>(r), cfg);
    roll.transition.critic_probabilities = metrics.critic_probabilities;
    return StepResult{std::move(roll.transition), metrics};
}

EvalMetrics evaluate(const Model& model, const env::Corpus& corpus, double smoothing) {
    EvalMetrics out;
    if (corpus.empty()) return out;
    env::ScentTracker scent(smoothing);
    std::size_t hits = 0;
    std::size_t critic_hits = 0;
    std::size_t critic_total = 0;
    double reward_sum = 0.0;
    for (const auto& doc : corpus.documents) {
        const auto states = encode_candidates(model, doc.candidates);
        const auto fwd = actor::actor_forward(model.actor, states);
        const auto sel = actor::select_greedy(fwd.scores, model.actor.temperature);
        const int reward = doc.candidates[sel.index].label;
        hits += reward == 1 ? 1 : 0;
        reward_sum += reward;
        scent.record(doc.patch, reward);
        out.choices.push_back(
            DocChoice{doc.id, doc.patch, sel.index, doc.candidates[sel.index].text, reward, fwd.scores[sel.index]});

        const auto state = token_ids(model.vocab, doc.keywords);
        for (const auto& cand : doc.candidates) {
            const auto action = token_ids(model.vocab, cand.tokens);
            const auto m = critic::measure_classes(critic::critic_density(state, action, model.critic));
            critic_hits += critic::predicted_class(m) == critic::class_from_reward(cand.label) ? 1 : 0;
            ++critic_total;
        }
    }
    const double n = static_cast<double>(corpus.size());
    out.greedy_accuracy = static_cast<double>(hits) / n;
    out.mean_reward = reward_sum / n;
    out.critic_accuracy = static_cast<double>(critic_hits) / static_cast<double>(critic_total);
    out.scent = scent.stats();
    return out;
}

std::string format_metric_line(const MetricRecord& m) {
    return std::to_string(m.episode) + "\t" + format_double(m.avg_reward) + "\t" + format_double(m.greedy_accuracy) +
           "\t" + format_double(m.critic_accuracy) + "\t" + format_double(m.scent_scalar);
}

std::string rng_state(const Rng& rng) {
    std::ostringstream ss;
    ss << rng;
    return ss.str();
}

TrainResult train(const TrainConfig& cfg, const env::Corpus& corpus, std::vector<std::string> config_echo) {
    cfg.validate();
    if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "corpus has no documents");
    TrainResult result;
    Model model = init_model(cfg.model, cfg.temperature, corpus, cfg.seed);
    env::Environment environment(corpus, cfg.mode, make_stream(cfg.seed, "env"));
    Rng policy_rng = make_stream(cfg.seed, "policy");
    env::ScentTracker scent(cfg.smoothing);

    auto snapshot = [&]() {
        return Checkpoint{config_echo, model, rng_state(environment.rng()), rng_state(policy_rng)};
    };

    double interval_sum = 0.0;
    std::size_t interval_count = 0;
    auto record = [&](std::size_t episode) {
        const auto eval = evaluate(model, corpus, cfg.smoothing);
        MetricRecord m;
        m.episode = episode;
        m.avg_reward = interval_count > 0 ? interval_sum / static_cast<double>(interval_count) : 0.0;
        m.greedy_accuracy = eval.greedy_accuracy;
        m.critic_accuracy = eval.critic_accuracy;
        m.scent_scalar = scent.stats().overall.scalar;
        result.log.push_back(m);
        interval_sum = 0.0;
        interval_count = 0;
        if (!cfg.checkpoint_path.empty()) save_checkpoint(snapshot(), cfg.checkpoint_path);
    };

    for (std::size_t episode = 1; episode <= cfg.episodes; ++episode) {
        double episode_reward = 0.0;
        if (cfg.mode == env::Mode::Bandit) {
            const auto obs = environment.reset();
            const auto res = train_step(model, obs, policy_rng, cfg);
            scent.record(res.transition.patch_id, res.transition.reward);
            episode_reward = res.transition.reward;
        } else {
            std::vector<Rollout> trajectory;
            do {
                trajectory.push_back(rollout_step(model, environment.reset(), policy_rng));
            } while (!trajectory.back().transition.done);
            std::vector<double> returns(trajectory.size());
            double g = 0.0;
            for (std::size_t t = trajectory.size(); t-- > 0;) {
                g = trajectory[t].transition.reward + cfg.discount * g;
                returns[t] = g;
            }
            for (std::size_t t = 0; t < trajectory.size(); ++t) {
                auto& tr = trajectory[t].transition;
                tr.critic_probabilities =
                    apply_update(model, trajectory[t].observation, tr.chosen, tr.reward, returns[t], cfg)
                        .critic_probabilities;
                scent.record(tr.patch_id, tr.reward);
                episode_reward += tr.reward;
            }
            episode_reward /= static_cast<double>(trajectory.size());
        }
        result.episode_rewards.push_back(episode_reward);
        interval_sum += episode_reward;
        ++interval_count;
        if (cfg.eval_interval > 0 && (episode % cfg.eval_interval == 0 || episode == cfg.episodes)) record(episode);
    }

    result.checkpoint = snapshot();
    if (!cfg.checkpoint_path.empty()) save_checkpoint(result.checkpoint, cfg.checkpoint_path);
    return result;
}

namespace {

void write_block_header(std::ostream& out, std::string_view name, std::size_t rows, std::size_t cols) {
    out << '[' << name << ' ' << rows << ' ' << cols << "]\n";
}

void write_matrix(std::ostream& out, std::string_view name, std::span<const double> data, std::size_t rows,
                  std::size_t cols) {
    write_block_header(out, name, rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (j) out << ' ';
            out << format_double17(data[i * cols + j]);
        }
        out << '\n';
    }
}

void write_tokens(std::ostream& out, std::string_view name, const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> tokens;
    for (std::string t; in >> t;) tokens.push_back(t);
    write_block_header(out, name, 1, tokens.size());
    for (std::size_t j = 0; j < tokens.size(); ++j) out << (j ? " " : "") << tokens[j];
    out << '\n';
}

struct Block {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::string> tokens;
};

[[noreturn]] void parse_fail(const std::string& why, std::size_t line) { throw Error(ErrorKind::ParseError, why, line); }

std::vector<double> to_doubles(const Block& b, std::string_view name) {
    std::vector<double> out;
    out.reserve(b.tokens.size());
    for (const auto& t : b.tokens) {
        try {
            out.push_back(parse_double(t));
        } catch (const Error&) {
            throw Error(ErrorKind::ParseError, "non-numeric entry in block '" + std::string(name) + "'");
        }
    }
    return out;
}

}  // namespace

void write_checkpoint(const Checkpoint& cp, std::ostream& out) {
    const Model& m = cp.model;
    out << kCheckpointHeader << '\n';
    for (const auto& line : cp.config_echo) out << "# " << line << '\n';
    write_block_header(out, "vocab", m.vocab.size(), 1);
    for (const auto& w : m.vocab.words()) out << w << '\n';
    const auto& table = m.actor.table;
    write_matrix(out, "actor_amplitudes", table.data(), table.vocab_size(), table.basis_dim());
    const auto& g = m.actor.global;
    write_matrix(out, "global_weights", g.weights(), g.rank(), 1);
    write_matrix(out, "global_factors", g.factors(), g.rank() * g.order(), g.basis_dim());
    const double tau = m.actor.temperature;
    write_matrix(out, "temperature", std::span<const double>(&tau, 1), 1, 1);
    const auto& c = m.critic;
    write_matrix(out, "critic_amplitudes", c.amplitudes(), c.vocab_size(), c.dim());
    write_matrix(out, "critic_phases", c.phases(), c.vocab_size(), c.dim());
    write_matrix(out, "critic_salience", c.saliences(), c.vocab_size(), 1);
    write_tokens(out, "rng_env", cp.env_rng);
    write_tokens(out, "rng_policy", cp.policy_rng);
}

Checkpoint read_checkpoint(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) parse_fail("empty checkpoint", 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCheckpointHeader) {
        if (line.rfind("qforage-checkpoint", 0) == 0)
            throw Error(ErrorKind::VersionMismatch, "unsupported checkpoint header '" + line + "'", line_no);
        parse_fail("missing checkpoint header", line_no);
    }

    Checkpoint cp;
    std::map<std::string, Block> blocks;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            cp.config_echo.push_back(line.size() > 2 ? line.substr(2) : std::string());
            continue;
        }
        if (line.front() != '[' || line.back() != ']') parse_fail("expected a block header", line_no);
        std::istringstream hdr(line.substr(1, line.size() - 2));
        std::string name;
        Block b;
        if (!(hdr >> name >> b.rows >> b.cols)) parse_fail("malformed block header", line_no);
        const std::size_t header_line = line_no;
        for (std::size_t r = 0; r < b.rows; ++r) {
            if (!std::getline(in, line)) parse_fail("block '" + name + "' is truncated", header_line);
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            std::istringstream row(line);
            std::size_t count = 0;
            for (std::string t; row >> t; ++count) b.tokens.push_back(t);
            if (count != b.cols) parse_fail("block '" + name + "' row has " + std::to_string(count) + " entries", line_no);
        }
        if (!blocks.emplace(name, std::move(b)).second) parse_fail("duplicate block '" + name + "'", header_line);
    }

    auto need = [&](const std::string& name) -> const Block& {
        const auto it = blocks.find(name);
        if (it == blocks.end()) throw Error(ErrorKind::ParseError, "checkpoint lacks block '" + name + "'");
        return it->second;
    };

    const auto& vocab = need("vocab");
    cp.model.vocab = qrep::Vocabulary::from_list(vocab.tokens);
    const std::size_t V = cp.model.vocab.size();

    const auto& amp = need("actor_amplitudes");
    if (amp.rows != V) parse_fail("actor_amplitudes rows disagree with vocab", 0);
    const std::size_t k = amp.cols;
    const auto& w = need("global_weights");
    const auto& f = need("global_factors");
    const std::size_t R = w.rows;
    if (w.cols != 1 || R == 0 || f.rows % R != 0 || f.cols != k) parse_fail("global representation blocks disagree", 0);
    const auto& tau = need("temperature");
    if (tau.tokens.size() != 1) parse_fail("temperature block must hold one value", 0);
    const auto& camp = need("critic_amplitudes");
    const auto& cph = need("critic_phases");
    const auto& csal = need("critic_salience");
    if (camp.rows != V || cph.rows != V || csal.rows != V || cph.cols != camp.cols || csal.cols != 1)
        parse_fail("critic blocks disagree with vocab", 0);

    cp.model.actor = actor::ActorParams{qrep::AmplitudeTable(V, k, to_doubles(amp, "actor_amplitudes")),
                                        qrep::GlobalRepresentation(R, f.rows / R, k, to_doubles(w, "global_weights"),
                                                                   to_doubles(f, "global_factors")),
                                        to_doubles(tau, "temperature").front()};
    cp.model.actor.validate();
    cp.model.critic = critic::ComplexEmbeddingTable(V, camp.cols, to_doubles(camp, "critic_amplitudes"),
                                                    to_doubles(cph, "critic_phases"), to_doubles(csal, "critic_salience"));

    auto join = [](const Block& b) {
        std::string s;
        for (const auto& t : b.tokens) s += (s.empty() ? "" : " ") + t;
        return s;
    };
    cp.env_rng = join(need("rng_env"));
    cp.policy_rng = join(need("rng_policy"));
    return cp;
}

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write checkpoint '" + path.string() + "'");
    write_checkpoint(cp, out);
    if (!out) throw Error(ErrorKind::IoError, "failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open checkpoint '" + path.string() + "'");
    return read_checkpoint(in);
}

}  // namespace qforage::trainer
