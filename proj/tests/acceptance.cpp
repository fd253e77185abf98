// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "qforage/cli.hpp"
#include "qforage/env.hpp"
#include "qforage/oracle.hpp"
#include "qforage/trainer.hpp"

using namespace qforage;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int id, const std::string& title, bool ok, const std::string& detail, double secs, double limit) {
    const bool in_time = secs < limit;
    const bool pass = ok && in_time;
    if (!pass) ++failures;
    std::printf("%s  %2d %-28s %s  time %.2fs (limit %.0fs)%s\n", pass ? "PASS" : "FAIL", id, title.c_str(),
                detail.c_str(), secs, limit, in_time ? "" : " OVER TIME");
    std::fflush(stdout);
}

// Runs oracle groups and folds their checks into one criterion line.
void oracle_criterion(int id, const std::string& title, std::vector<std::string> groups, double limit) {
    const auto start = Clock::now();
    const auto results = oracle::run_checks(groups, oracle::OracleOptions{});
    const double secs = seconds_since(start);
    bool ok = !results.empty();
    std::ostringstream detail;
    for (const auto& r : results) {
        ok = ok && r.passed();
        detail << "[" << r.name << " n=" << r.instances << " max=" << r.max_error << " tol=" << r.tolerance << "] ";
    }
    report(id, title, ok, detail.str(), secs, limit);
}

void learning_criterion() {
    constexpr double kLimitPerSeed = 120.0;
    constexpr std::size_t kWindow = 200;
    bool ok = true;
    double worst_secs = 0.0;
    std::ostringstream detail;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        env::GenSpec spec;
        spec.docs = 50;
        spec.patches = 2;
        spec.candidates = 3;
        spec.noise = 0.0;
        Rng corpus_rng = make_stream(seed, "corpus");
        const auto corpus = env::gen_corpus(spec, corpus_rng);
        trainer::TrainConfig cfg;
        cfg.seed = seed;
        cfg.episodes = 2000;
        cfg.mode = env::Mode::Bandit;

        const auto start = Clock::now();
        const auto res = trainer::train(cfg, corpus);
        worst_secs = std::max(worst_secs, seconds_since(start));
        const double greedy = trainer::evaluate(res.checkpoint.model, corpus, cfg.smoothing).greedy_accuracy;
        const auto& r = res.episode_rewards;
        const double first = std::accumulate(r.begin(), r.begin() + kWindow, 0.0) / kWindow;
        const double last = std::accumulate(r.end() - kWindow, r.end(), 0.0) / kWindow;
        const bool seed_ok = greedy >= 0.9 && last > first;
        ok = ok && seed_ok;
        detail << "[seed " << seed << " greedy=" << greedy << " first200=" << first << " last200=" << last
               << (seed_ok ? "" : " FAIL") << "] ";
    }
    report(7, "end-to-end learning", ok, detail.str(), worst_secs, kLimitPerSeed);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism_criterion() {
    const auto start = Clock::now();
    const fs::path root = fs::temp_directory_path() / "qforage_acceptance";
    fs::remove_all(root);
    fs::create_directories(root / "a");
    fs::create_directories(root / "b");
    std::ostringstream sink, err;
    bool ok = cli::run_cli({"--out", root.string(), "gen-corpus"}, sink, err) == cli::kExitOk;
    const std::string corpus = (root / "corpus.tsv").string();
    for (const char* sub : {"a", "b"})
        ok = ok && cli::run_cli({"--out", (root / sub).string(), "train", "--corpus", corpus}, sink, err) == cli::kExitOk;

    const auto ckpt_a = slurp(root / "a" / "checkpoint.txt");
    const bool same_ckpt = !ckpt_a.empty() && ckpt_a == slurp(root / "b" / "checkpoint.txt");
    const auto log_a = slurp(root / "a" / "metrics.tsv");
    const bool same_log = !log_a.empty() && log_a == slurp(root / "b" / "metrics.tsv");

    bool round_trip = false;
    try {
        const auto cp = trainer::load_checkpoint(root / "a" / "checkpoint.txt");
        trainer::save_checkpoint(cp, root / "resaved.txt");
        round_trip = slurp(root / "resaved.txt") == ckpt_a;
    } catch (const Error& e) {
        err << e.what();
    }
    fs::remove_all(root);
    ok = ok && same_ckpt && same_log && round_trip;
    std::ostringstream detail;
    detail << "[checkpoint " << (same_ckpt ? "identical" : "DIFFERS") << "] [metrics " << (same_log ? "identical" : "DIFFER")
           << "] [save/load " << (round_trip ? "bitwise" : "MISMATCH") << "] " << err.str();
    report(9, "determinism", ok, detail.str(), seconds_since(start), 120.0);
}

}  // namespace

int main() {
    oracle_criterion(1, "factored/dense equivalence", {"projection"}, 10.0);
    oracle_criterion(2, "born completeness", {"born"}, 5.0);
    oracle_criterion(3, "density validity", {"density"}, 10.0);
    oracle_criterion(4, "gradient fidelity", {"actor_gradient", "critic_gradient"}, 30.0);
    oracle_criterion(5, "cp oracle", {"cp_decompose"}, 60.0);
    oracle_criterion(6, "collapse statistics", {"collapse"}, 1.0);
    learning_criterion();
    oracle_criterion(8, "reward mapping", {"reward"}, 1.0);
    determinism_criterion();
    oracle_criterion(10, "scent statistics", {"scent"}, 1.0);
    std::printf("%s: %d criterion failure(s)\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
    return failures == 0 ? 0 : 1;
}
