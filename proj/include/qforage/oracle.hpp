#pragma once

// Independent verification suite. Each check recomputes a library quantity
// by a separate route (brute-force tensor sums, direct diagonal sums, finite
// differences of a standalone loss, closed forms) and reports the worst
// disagreement against a tolerance.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qforage::oracle {

struct CheckResult {
    std::string group;
    std::string name;
    std::size_t instances = 0;
    double max_error = 0.0;
    double tolerance = 0.0;

    // NaN errors fail.
    bool passed() const { return max_error <= tolerance; }
};

struct OracleOptions {
    std::uint64_t seed = 7;
    // Added to the library side of every comparison; a nonzero value must
    // make the suite fail.
    double perturb = 0.0;
    std::size_t projection_instances = 500;
    std::size_t born_instances = 500;
    std::size_t density_instances = 500;
    std::size_t gradient_instances = 100;
    std::size_t cp_instances = 50;
    std::size_t collapse_draws = 100000;
    std::size_t determinism_episodes = 300;
};

// Group names in run order.
const std::vector<std::string>& check_groups();
bool is_check_group(const std::string& name);

std::vector<CheckResult> run_group(const std::string& group, const OracleOptions& opts);
// Empty `groups` runs everything.
std::vector<CheckResult> run_checks(std::span<const std::string> groups, const OracleOptions& opts);

// Standalone loss -A log softmax(s / tau)_chosen with
// s_c = sum_r w_r prod_i <e_{r,i}, alpha_{c,i}>, on raw unnormalized arrays.
struct ActorProblem {
    std::size_t rank = 0, order = 0, basis_dim = 0;
    std::vector<double> weights;                  // rank
    std::vector<double> factors;                  // rank x order x basis_dim
    std::vector<std::vector<std::size_t>> words;  // candidate x order
    std::vector<double> table;                    // vocab x basis_dim
    std::size_t chosen = 0;
    double advantage = 0.0;
    double temperature = 1.0;
};
double reference_actor_loss(const ActorProblem& p);

// Standalone critic cross-entropy: rows normalized inside, block projectors
// over three equal coordinate blocks.
struct CriticProblem {
    std::size_t dim = 0;
    std::vector<double> amplitudes;  // vocab x dim
    std::vector<double> phases;      // vocab x dim
    std::vector<double> salience;    // vocab
    std::vector<std::size_t> tokens;
    std::size_t label = 0;
};
double reference_critic_loss(const CriticProblem& p);

}  // namespace qforage::oracle
