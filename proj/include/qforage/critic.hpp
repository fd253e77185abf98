#pragma once

// Quantum-language-model critic: tokens become complex unit embeddings,
// a salience-weighted mixture of their projectors forms the density matrix,
// and projective measurement over three coordinate blocks yields class
// probabilities for (mismatch, partial, match).

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "qforage/qcore.hpp"
#include "qforage/rng.hpp"

namespace qforage::critic {

enum class MatchClass : std::size_t { Mismatch = 0, Partial = 1, Match = 2 };

inline constexpr std::size_t kClassCount = 3;
// Observable eigenvalues double as the class rewards.
inline constexpr std::array<double, kClassCount> kClassRewards{-1.0, 0.0, 1.0};

MatchClass class_from_reward(int reward);  // -1, 0, +1
MatchClass class_from_index(int index);    // 0, 1, 2
int reward_of(MatchClass c);

class ComplexEmbeddingTable {
public:
    ComplexEmbeddingTable() = default;
    ComplexEmbeddingTable(std::size_t vocab_size, std::size_t dim, std::vector<double> amplitudes,
                          std::vector<double> phases, std::vector<double> salience);
    static ComplexEmbeddingTable random(std::size_t vocab_size, std::size_t dim, Rng& rng);

    std::size_t vocab_size() const noexcept { return vocab_size_; }
    std::size_t dim() const noexcept { return dim_; }
    std::span<const double> amplitude(std::size_t id) const;
    std::span<const double> phase(std::size_t id) const;
    double salience(std::size_t id) const { return salience_.at(id); }
    std::span<const double> amplitudes() const noexcept { return amplitudes_; }
    std::span<const double> phases() const noexcept { return phases_; }
    std::span<const double> saliences() const noexcept { return salience_; }

    qcore::StateVector<qcore::Complex> embedding(std::size_t id) const;

    // Stores |values| rescaled to unit norm.
    void set_amplitude(std::size_t id, std::span<const double> values);
    // Stores values wrapped into [-pi, pi).
    void set_phase(std::size_t id, std::span<const double> values);
    void set_salience(std::size_t id, double value);

private:
    std::size_t vocab_size_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> amplitudes_;  // vocab x dim, nonnegative, unit rows
    std::vector<double> phases_;      // vocab x dim
    std::vector<double> salience_;    // vocab
};

double wrap_phase(double phi);

struct ClassMeasurement {
    std::array<double, kClassCount> probabilities{};
};

// softmax of salience over the token sequence
std::vector<double> token_weights(std::span<const std::size_t> tokens, const ComplexEmbeddingTable& table);

std::vector<std::size_t> concat_tokens(std::span<const std::size_t> state_tokens,
                                       std::span<const std::size_t> action_tokens);

qcore::DensityMatrix critic_density(std::span<const std::size_t> state_tokens,
                                    std::span<const std::size_t> action_tokens, const ComplexEmbeddingTable& table);
qcore::DensityMatrix critic_density(std::span<const std::size_t> tokens, const ComplexEmbeddingTable& table);

const qcore::Observable& class_observable(std::size_t dim);
ClassMeasurement measure_classes(const qcore::DensityMatrix& rho);
double q_value(const ClassMeasurement& m);
MatchClass predicted_class(const ClassMeasurement& m);  // lowest-index argmax

struct CriticGradients {
    std::map<std::size_t, std::vector<double>> amplitude_rows;
    std::map<std::size_t, std::vector<double>> phase_rows;
    std::map<std::size_t, double> salience;

    bool all_zero() const;
};

struct CriticEvaluation {
    double loss = 0.0;
    ClassMeasurement measurement;
    CriticGradients gradients;
};

inline constexpr double kProbabilityFloor = 1e-12;

// Cross-entropy -log p_label. Amplitude rows enter the forward pass through
// their normalization, so amplitude gradients are tangent to the unit sphere.
CriticEvaluation critic_loss_and_gradients(std::span<const std::size_t> tokens, MatchClass label,
                                           const ComplexEmbeddingTable& table);
double critic_loss(std::span<const std::size_t> tokens, MatchClass label, const ComplexEmbeddingTable& table);

}  // namespace qforage::critic
