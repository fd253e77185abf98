#include "qforage/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>

#include "qforage/actor.hpp"
#include "qforage/config.hpp"
#include "qforage/critic.hpp"
#include "qforage/env.hpp"
#include "qforage/error.hpp"
#include "qforage/oracle.hpp"
#include "qforage/trainer.hpp"

namespace qforage::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr std::uint64_t kDefaultSeed = 7;

std::vector<Settings::Entry> gen_defaults() {
    const env::GenSpec g;
    return {
        {"seed", std::to_string(kDefaultSeed)},
        {"docs", std::to_string(g.docs)},
        {"patches", std::to_string(g.patches)},
        {"vocab", std::to_string(g.vocab)},
        {"candidates", std::to_string(g.candidates)},
        {"noise", format_double(g.noise)},
        {"doc_length", std::to_string(g.doc_length)},
        {"query_length", std::to_string(g.query_length)},
    };
}

std::vector<Settings::Entry> train_defaults() {
    auto d = trainer::train_setting_defaults();
    d.insert(d.begin(), {"seed", std::to_string(kDefaultSeed)});
    return d;
}

std::vector<Settings::Entry> eval_defaults() {
    const trainer::TrainConfig t;
    return {
        {"seed", std::to_string(kDefaultSeed)},
        {"lambda", format_double(t.smoothing)},
        {"keywords", std::to_string(t.model.keywords)},
    };
}

std::vector<Settings::Entry> inspect_defaults() {
    auto d = eval_defaults();
    d.emplace_back("top", "5");
    return d;
}

std::vector<Settings::Entry> oracle_defaults() {
    return {{"seed", std::to_string(kDefaultSeed)}, {"perturb", "0"}};
}

// Keys understood by some subcommand; a shared config file may carry any of them.
bool known_anywhere(const std::string& key) {
    for (const auto& defaults : {gen_defaults(), train_defaults(), inspect_defaults(), oracle_defaults()})
        for (const auto& [k, v] : defaults)
            if (k == key) return true;
    return false;
}

std::string flag_name(const std::string& key) {
    std::string f = key;
    std::replace(f.begin(), f.end(), '_', '-');
    return "--" + f;
}

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string out = ".";
};

// One string option per settings key (except seed, which is global).
struct KeyFlags {
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    void attach(CLI::App& app, const std::vector<Settings::Entry>& defaults) {
        for (const auto& [key, def] : defaults) {
            if (key == "seed") continue;
            options[key] = app.add_option(flag_name(key), values[key], "override '" + key + "' (default " + def + ")");
        }
    }
};

// Rethrows configuration problems as usage errors (exit 2).
template <typename F>
auto usage_phase(F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::ConfigError || e.kind() == ErrorKind::SpecInvalid || e.kind() == ErrorKind::IoError)
            throw UsageError(e.what());
        throw;
    }
}

// default < checkpoint echo < config file < flag
Settings build_settings(std::vector<Settings::Entry> defaults, const Globals& g, const KeyFlags& flags,
                        const std::vector<std::string>& inherited = {}) {
    return usage_phase([&] {
        Settings s(std::move(defaults));
        for (const auto& line : inherited) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = line.substr(0, eq);
            if (key != "seed" && s.has(key)) s.set(key, line.substr(eq + 1));
        }
        if (!g.config.empty()) {
            for (const auto& [key, value] : load_config_file(g.config)) {
                if (s.has(key))
                    s.set(key, value);
                else if (!known_anywhere(key))
                    throw Error(ErrorKind::ConfigError, "unknown config key '" + key + "'");
            }
        }
        for (const auto& [key, opt] : flags.options)
            if (opt->count() > 0) s.set(key, flags.values.at(key));
        if (g.seed) s.set("seed", std::to_string(*g.seed));
        s.get_u64("seed");
        return s;
    });
}

void write_echo(std::ostream& out, const Settings& s) {
    for (const auto& line : s.echo()) out << "# " << line << '\n';
}

fs::path output_dir(const Globals& g) {
    fs::path dir(g.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create output directory '" + dir.string() + "'");
    return dir;
}

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw UsageError(what + " path is required");
    if (!fs::exists(path)) throw UsageError(what + " '" + path + "' does not exist");
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write '" + path.string() + "'");
    return out;
}

// ---- gen-corpus

struct GenArgs {
    KeyFlags flags;
    std::string output;
};

int cmd_gen_corpus(const Globals& g, const GenArgs& a, std::ostream& out) {
    const Settings s = build_settings(gen_defaults(), g, a.flags);
    const env::GenSpec spec = usage_phase([&] {
        env::GenSpec sp;
        sp.docs = s.get_size("docs");
        sp.patches = s.get_size("patches");
        sp.vocab = s.get_size("vocab");
        sp.candidates = s.get_size("candidates");
        sp.noise = s.get_double("noise");
        sp.doc_length = s.get_size("doc_length");
        sp.query_length = s.get_size("query_length");
        sp.validate();
        return sp;
    });
    Rng rng = make_stream(s.get_u64("seed"), "corpus");
    const auto corpus = env::gen_corpus(spec, rng);
    const fs::path path = a.output.empty() ? output_dir(g) / "corpus.tsv" : fs::path(a.output);
    auto file = open_output(path);
    env::write_corpus(corpus, file, s.echo());
    if (!file) throw Error(ErrorKind::IoError, "failed writing '" + path.string() + "'");

    std::size_t candidates = 0;
    for (const auto& d : corpus.documents) candidates += d.candidates.size();
    out << "wrote " << path.string() << '\n'
        << "documents\t" << corpus.size() << '\n'
        << "patches\t" << corpus.patches().size() << '\n'
        << "candidates\t" << candidates << '\n'
        << "vocabulary\t" << corpus.vocabulary.size() << '\n';
    return kExitOk;
}

// ---- train

struct TrainArgs {
    KeyFlags flags;
    std::string corpus;
};

int cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out) {
    const Settings s = build_settings(train_defaults(), g, a.flags);
    auto cfg = usage_phase([&] { return trainer::TrainConfig::from_settings(s); });
    require_file(a.corpus, "corpus");
    const auto corpus = env::load_corpus(a.corpus, cfg.model.keywords);
    const fs::path dir = output_dir(g);
    cfg.checkpoint_path = dir / "checkpoint.txt";
    const auto result = trainer::train(cfg, corpus, s.echo());

    const fs::path metrics_path = dir / "metrics.tsv";
    auto metrics = open_output(metrics_path);
    write_echo(metrics, s);
    metrics << "# episode\tavg_reward\tgreedy_acc\tcritic_acc\tscent_scalar\n";
    for (const auto& m : result.log) metrics << trainer::format_metric_line(m) << '\n';
    if (!metrics) throw Error(ErrorKind::IoError, "failed writing '" + metrics_path.string() + "'");

    out << "wrote " << cfg.checkpoint_path.string() << '\n' << "wrote " << metrics_path.string() << '\n';
    if (!result.log.empty()) out << "final\t" << trainer::format_metric_line(result.log.back()) << '\n';
    return kExitOk;
}

// ---- eval

struct EvalArgs {
    KeyFlags flags;
    std::string corpus;
    std::string checkpoint;
};

fs::path checkpoint_path(const Globals& g, const std::string& explicit_path) {
    return explicit_path.empty() ? fs::path(g.out) / "checkpoint.txt" : fs::path(explicit_path);
}

void print_scent(std::ostream& out, const std::string& label, const env::PatternScent& p) {
    out << label << '\t' << format_double(p.scalar) << '\t' << format_double(p.distribution[0]) << '\t'
        << format_double(p.distribution[1]) << '\t' << format_double(p.distribution[2]) << '\t' << p.count << '\n';
}

int cmd_eval(const Globals& g, const EvalArgs& a, std::ostream& out) {
    require_file(a.corpus, "corpus");
    const auto cp = trainer::load_checkpoint(checkpoint_path(g, a.checkpoint));
    const Settings s = build_settings(eval_defaults(), g, a.flags, cp.config_echo);
    const double smoothing = usage_phase([&] {
        const double l = s.get_double("lambda");
        if (!(l > 0.0 && l <= 1.0)) throw Error(ErrorKind::ConfigError, "lambda must lie in (0, 1]");
        return l;
    });
    const auto corpus = env::load_corpus(a.corpus, usage_phase([&] { return s.get_size("keywords"); }));
    if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "corpus has no documents");
    const auto m = trainer::evaluate(cp.model, corpus, smoothing);

    write_echo(out, s);
    out << "# doc_id\tpatch\tchosen\treward\tscore\tquery\n";
    for (const auto& c : m.choices)
        out << c.doc_id << '\t' << c.patch_id << '\t' << c.chosen << '\t' << c.reward << '\t' << format_double(c.score)
            << '\t' << c.query << '\n';
    out << "greedy_acc\t" << format_double(m.greedy_accuracy) << '\n'
        << "mean_reward\t" << format_double(m.mean_reward) << '\n'
        << "critic_acc\t" << format_double(m.critic_accuracy) << '\n'
        << "# scent\tscalar\tp(-1)\tp(0)\tp(+1)\tcount\n";
    print_scent(out, "scent", m.scent.overall);
    for (const auto& [patch, p] : m.scent.per_patch) print_scent(out, "scent:" + patch, p);
    out << "patch_switches\t" << m.scent.patch_switches << '\n';
    return kExitOk;
}

// ---- inspect

struct InspectArgs {
    KeyFlags flags;
    std::string corpus;
    std::string checkpoint;
    std::string doc;
    std::vector<std::string> candidates;
};

std::string join_values(std::span<const double> v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_double(v[i]);
    return s;
}

int cmd_inspect(const Globals& g, const InspectArgs& a, std::ostream& out) {
    require_file(a.corpus, "corpus");
    if (a.doc.empty()) throw UsageError("--doc is required");
    const auto cp = trainer::load_checkpoint(checkpoint_path(g, a.checkpoint));
    const Settings s = build_settings(inspect_defaults(), g, a.flags, cp.config_echo);
    const std::size_t top = usage_phase([&] { return s.get_size("top"); });
    const auto corpus = env::load_corpus(a.corpus, usage_phase([&] { return s.get_size("keywords"); }));
    const env::Document* doc = corpus.find(a.doc);
    if (!doc) throw Error(ErrorKind::IndexOutOfRange, "unknown document id '" + a.doc + "'");

    std::vector<env::Candidate> candidates = doc->candidates;
    const bool overridden = !a.candidates.empty();
    if (overridden) {
        candidates.clear();
        for (const auto& text : a.candidates) candidates.push_back(env::Candidate{env::tokenize(text), text, 0});
    }
    const auto& model = cp.model;
    const auto states = trainer::encode_candidates(model, candidates);
    const auto fwd = actor::actor_forward(model.actor, states);
    const auto probs = actor::policy_probabilities(fwd.scores, model.actor.temperature);
    const auto greedy = actor::select_greedy(fwd.scores, model.actor.temperature);

    write_echo(out, s);
    out << "doc\t" << doc->id << '\n' << "patch\t" << doc->patch << '\n';
    out << "keywords\t";
    for (std::size_t i = 0; i < doc->keywords.size(); ++i) out << (i ? " " : "") << doc->keywords[i];
    out << '\n' << "rank\t" << model.actor.global.rank() << '\n' << "tau\t" << format_double(model.actor.temperature) << '\n';
    out << "greedy\t" << greedy.index << '\n';

    const auto state = trainer::token_ids(model.vocab, doc->keywords);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        out << "candidate " << c << '\t' << candidates[c].text << '\n';
        if (!overridden) out << "  label\t" << candidates[c].label << '\n';
        out << "  score\t" << format_double(fwd.scores[c]) << '\n'
            << "  policy\t" << format_double(probs[c]) << '\n'
            << "  pooled\t" << join_values(fwd.pooled[c]) << '\n';

        const auto action = trainer::token_ids(model.vocab, candidates[c].tokens);
        const auto rho = critic::critic_density(state, action, model.critic);
        const auto m = critic::measure_classes(rho);
        const auto& p = m.probabilities;
        out << "  critic_p\t" << join_values(p) << '\n'
            << "  critic_p_sum\t" << format_double(p[0] + p[1] + p[2]) << '\n'
            << "  q\t" << format_double(critic::q_value(m)) << '\n';
        std::vector<double> diag;
        struct Entry {
            double magnitude;
            std::size_t i, j;
        };
        std::vector<Entry> off;
        for (std::size_t i = 0; i < rho.dim(); ++i) {
            diag.push_back(rho(i, i).real());
            for (std::size_t j = i + 1; j < rho.dim(); ++j) off.push_back({std::abs(rho(i, j)), i, j});
        }
        std::stable_sort(off.begin(), off.end(), [](const Entry& x, const Entry& y) { return x.magnitude > y.magnitude; });
        out << "  rho_diag\t" << join_values(diag) << '\n' << "  rho_offdiag_top";
        for (std::size_t t = 0; t < std::min(top, off.size()); ++t)
            out << '\t' << off[t].i << ',' << off[t].j << '=' << format_double(off[t].magnitude);
        out << '\n';
    }
    return kExitOk;
}

// ---- oracle

struct OracleArgs {
    KeyFlags flags;
    std::vector<std::string> checks;
};

int cmd_oracle(const Globals& g, const OracleArgs& a, std::ostream& out) {
    const Settings s = build_settings(oracle_defaults(), g, a.flags);
    oracle::OracleOptions opts;
    opts.seed = s.get_u64("seed");
    opts.perturb = usage_phase([&] { return s.get_double("perturb"); });
    for (const auto& c : a.checks)
        if (!oracle::is_check_group(c)) throw UsageError("unknown check '" + c + "'");

    write_echo(out, s);
    out << "# status\tcheck\tinstances\tmax_error\ttolerance\n";
    std::size_t failed = 0;
    const auto results = oracle::run_checks(a.checks, opts);
    for (const auto& r : results) {
        failed += r.passed() ? 0 : 1;
        out << (r.passed() ? "PASS" : "FAIL") << '\t' << r.group << '/' << r.name << '\t' << r.instances << '\t'
            << format_double(r.max_error) << '\t' << format_double(r.tolerance) << '\n';
    }
    out << "passed " << results.size() - failed << '/' << results.size() << '\n';
    return failed == 0 ? kExitOk : kExitOracleFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Quantum-inspired actor-critic query matcher", "qforage"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals globals;
    std::uint64_t seed = 0;
    auto* seed_opt = app.add_option("--seed", seed, "root seed for every random stream");
    app.add_option("--config", globals.config, "flat key=value config file");
    app.add_option("--out", globals.out, "output directory")->capture_default_str();

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-corpus", "write a synthetic patchy corpus");
    gen.flags.attach(*gen_cmd, gen_defaults());
    gen_cmd->add_option("--output", gen.output, "corpus file (default <out>/corpus.tsv)");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "train the actor and critic on a corpus");
    train.flags.attach(*train_cmd, train_defaults());
    train_cmd->add_option("--corpus", train.corpus, "corpus file")->required();

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
    eval.flags.attach(*eval_cmd, eval_defaults());
    eval_cmd->add_option("--corpus", eval.corpus, "corpus file")->required();
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint (default <out>/checkpoint.txt)");

    InspectArgs inspect;
    auto* inspect_cmd = app.add_subcommand("inspect", "dump actor and critic internals for one document");
    inspect.flags.attach(*inspect_cmd, inspect_defaults());
    inspect_cmd->add_option("--corpus", inspect.corpus, "corpus file")->required();
    inspect_cmd->add_option("--checkpoint", inspect.checkpoint, "checkpoint (default <out>/checkpoint.txt)");
    inspect_cmd->add_option("--doc", inspect.doc, "document id")->required();
    inspect_cmd->add_option("--candidate", inspect.candidates, "replace the document's candidates (repeatable)");

    OracleArgs orc;
    auto* oracle_cmd = app.add_subcommand("oracle", "run the independent verification suite");
    orc.flags.attach(*oracle_cmd, oracle_defaults());
    oracle_cmd->add_option("--checks", orc.checks, "comma-separated check groups")->delimiter(',');

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    if (seed_opt->count() > 0) globals.seed = seed;

    try {
        if (*gen_cmd) return cmd_gen_corpus(globals, gen, out);
        if (*train_cmd) return cmd_train(globals, train, out);
        if (*eval_cmd) return cmd_eval(globals, eval, out);
        if (*inspect_cmd) return cmd_inspect(globals, inspect, out);
        if (*oracle_cmd) return cmd_oracle(globals, orc, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n' << "run with --help for usage\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace qforage::cli
