#pragma once

// Actor-critic training loop, greedy evaluation, and checkpoint persistence.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qforage/actor.hpp"
#include "qforage/config.hpp"
#include "qforage/critic.hpp"
#include "qforage/env.hpp"
#include "qforage/qrep.hpp"

namespace qforage::trainer {

struct ModelConfig {
    std::size_t basis_dim = 4;   // k
    std::size_t order = 5;       // n
    std::size_t rank = 10;       // R
    std::size_t critic_dim = 12; // d, divisible by 3
    std::size_t keywords = env::kDefaultKeywords;
    double init_weight_scale = 0.7;
};

struct TrainConfig {
    std::size_t episodes = 2000;
    double lr_actor = 0.07;
    double lr_critic = 0.1;
    double temperature = 0.25;
    double smoothing = 0.1;  // scent lambda
    double discount = 0.9;   // session-mode gamma
    std::uint64_t seed = 7;
    env::Mode mode = env::Mode::Bandit;
    std::size_t eval_interval = 100;  // 0 disables evaluation records
    std::filesystem::path checkpoint_path;  // empty: no periodic checkpoints
    ModelConfig model;

    void validate() const;
    static TrainConfig from_settings(const Settings& s);
};

// Default keys and values for training settings, in echo order.
std::vector<Settings::Entry> train_setting_defaults();

struct Model {
    qrep::Vocabulary vocab;
    actor::ActorParams actor;
    critic::ComplexEmbeddingTable critic;

    std::size_t order() const { return actor.global.order(); }
};

Model init_model(const ModelConfig& cfg, double temperature, const env::Corpus& corpus, std::uint64_t seed);

std::vector<std::size_t> token_ids(const qrep::Vocabulary& vocab, std::span<const std::string> tokens);
std::vector<qrep::QueryState> encode_candidates(const Model& model, std::span<const env::Candidate> candidates);

struct StepMetrics {
    int reward = 0;
    double coefficient = 0.0;  // reward (bandit) or discounted return (session)
    double q_value = 0.0;
    double advantage = 0.0;
    double critic_loss = 0.0;
    std::array<double, 3> critic_probabilities{};  // before the update
};

struct Rollout {
    env::Observation observation;
    env::Transition transition;
};

// Samples an action and steps the environment; parameters untouched.
Rollout rollout_step(const Model& model, const env::Observation& obs, Rng& policy_rng);

// One actor-critic update for a recorded (state, action): the critic measures
// Q(state, action), the actor follows -(coefficient - Q) * grad log pi, the
// critic follows cross-entropy against the label implied by the reward.
StepMetrics apply_update(Model& model, const env::Observation& obs, std::size_t chosen, int reward,
                         double coefficient, const TrainConfig& cfg);

struct StepResult {
    env::Transition transition;
    StepMetrics metrics;
};

// Bandit step: rollout then update with the reward as coefficient.
StepResult train_step(Model& model, const env::Observation& obs, Rng& policy_rng, const TrainConfig& cfg);

struct DocChoice {
    std::string doc_id;
    std::string patch_id;
    std::size_t chosen = 0;  // index in corpus candidate order
    std::string query;
    int reward = 0;
    double score = 0.0;
};

struct EvalMetrics {
    double greedy_accuracy = 0.0;
    double mean_reward = 0.0;
    double critic_accuracy = 0.0;
    env::ScentStats scent;
    std::vector<DocChoice> choices;
};

EvalMetrics evaluate(const Model& model, const env::Corpus& corpus, double smoothing);

struct MetricRecord {
    std::size_t episode = 0;
    double avg_reward = 0.0;
    double greedy_accuracy = 0.0;
    double critic_accuracy = 0.0;
    double scent_scalar = 0.0;
};

std::string format_metric_line(const MetricRecord& m);

struct Checkpoint {
    std::vector<std::string> config_echo;  // "key=value"
    Model model;
    std::string env_rng;
    std::string policy_rng;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<MetricRecord> log;
    std::vector<double> episode_rewards;  // mean step reward per episode
};

TrainResult train(const TrainConfig& cfg, const env::Corpus& corpus, std::vector<std::string> config_echo = {});

inline constexpr std::string_view kCheckpointHeader = "qforage-checkpoint v1";

void write_checkpoint(const Checkpoint& cp, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string rng_state(const Rng& rng);

}  // namespace qforage::trainer
