#pragma once

// Policy network. Each candidate query is convolved with the CP factor
// vectors (per-position inner products), product-pooled per rank, and scored
// by the rank weights; a tempered softmax over scores is the policy.

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "qforage/qrep.hpp"
#include "qforage/rng.hpp"

namespace qforage::actor {

inline constexpr double kMinTemperature = 1e-3;
inline constexpr double kMaxTemperature = 1e3;

struct ActorParams {
    qrep::AmplitudeTable table;
    qrep::GlobalRepresentation global;
    double temperature = 1.0;

    void validate() const;
};

struct ForwardResult {
    std::vector<double> scores;               // one per candidate
    std::vector<std::vector<double>> pooled;  // candidate x rank
};

ForwardResult actor_forward(const ActorParams& params, std::span<const qrep::QueryState> candidates);

// softmax(scores / temperature) with max-shift.
std::vector<double> policy_probabilities(std::span<const double> scores, double temperature);

enum class SelectionMode { Sample, Greedy };

struct Selection {
    std::size_t index = 0;
    double log_probability = 0.0;
};

// Greedy mode picks the lowest-index argmax; the log-probability is always
// taken under the tempered softmax.
Selection select_action(std::span<const double> scores, double temperature, Rng& rng,
                        SelectionMode mode = SelectionMode::Sample);
Selection select_greedy(std::span<const double> scores, double temperature);

struct ActionOutput {
    std::size_t index = 0;
    std::vector<double> scores;
    std::vector<double> probabilities;
    std::vector<double> action_vector;  // pooled per-rank values of the chosen candidate
    double log_probability = 0.0;
};

ActionOutput act(const ActorParams& params, std::span<const qrep::QueryState> candidates, Rng& rng,
                 SelectionMode mode = SelectionMode::Sample);

struct ActorGradients {
    std::map<std::size_t, std::vector<double>> table_rows;  // word id -> d/d alpha row
    std::vector<double> weights;                            // rank
    std::vector<double> factors;                            // rank x order x basis_dim

    bool all_zero() const;
};

// Gradients of -advantage * log pi(chosen).
ActorGradients actor_gradients(const ActorParams& params, std::span<const qrep::QueryState> candidates,
                               std::size_t chosen, double advantage);

// Loss value matching actor_gradients, for finite-difference checks.
double actor_loss(const ActorParams& params, std::span<const qrep::QueryState> candidates, std::size_t chosen,
                  double advantage);

}  // namespace qforage::actor
