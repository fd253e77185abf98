#pragma once

// Word and query representations on the actor side: per-word amplitude rows,
// rank-1 query tensors, and the CP-factored global semantic tensor.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qforage/qcore.hpp"
#include "qforage/rng.hpp"

namespace qforage::qrep {

inline constexpr std::size_t kNullId = 0;
inline constexpr std::size_t kUnkId = 1;
inline constexpr std::string_view kNullToken = "<null>";
inline constexpr std::string_view kUnkToken = "<unk>";

// Word ids: 0 is the padding word, 1 the unknown word, then corpus words.
class Vocabulary {
public:
    Vocabulary();
    // Reserved entries followed by the sorted unique words.
    static Vocabulary from_words(std::span<const std::string> words);
    // Exactly the given list; the first two entries must be the reserved tokens.
    static Vocabulary from_list(std::vector<std::string> words);

    std::size_t size() const noexcept { return words_.size(); }
    std::size_t id(std::string_view word) const;  // unknown words map to kUnkId
    bool contains(std::string_view word) const;
    const std::string& word(std::size_t id) const { return words_.at(id); }
    const std::vector<std::string>& words() const noexcept { return words_; }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, std::size_t> index_;
};

class AmplitudeTable {
public:
    // Rows are normalized on construction; the padding row is forced to e_0.
    AmplitudeTable() = default;
    AmplitudeTable(std::size_t vocab_size, std::size_t basis_dim, std::vector<double> amplitudes);
    static AmplitudeTable random(std::size_t vocab_size, std::size_t basis_dim, Rng& rng);

    std::size_t vocab_size() const noexcept { return vocab_size_; }
    std::size_t basis_dim() const noexcept { return basis_dim_; }
    std::span<const double> row(std::size_t id) const;
    std::span<const double> data() const noexcept { return amplitudes_; }

    // Stores the normalized values; the padding row is read-only.
    void set_row(std::size_t id, std::span<const double> values);
    void renormalize();

private:
    std::size_t vocab_size_ = 0;
    std::size_t basis_dim_ = 0;
    std::vector<double> amplitudes_;
};

struct QueryState {
    std::vector<std::size_t> word_ids;  // length == order
    std::size_t basis_dim = 0;
    std::vector<double> rows;           // order x basis_dim

    std::size_t order() const noexcept { return word_ids.size(); }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(rows).subspan(i * basis_dim, basis_dim);
    }
};

// Sum_r w_r e_{r,1} (x) ... (x) e_{r,n} with unit factor vectors.
class GlobalRepresentation {
public:
    GlobalRepresentation() = default;
    GlobalRepresentation(std::size_t rank, std::size_t order, std::size_t basis_dim, std::vector<double> weights,
                         std::vector<double> factors);
    static GlobalRepresentation random(std::size_t rank, std::size_t order, std::size_t basis_dim, Rng& rng,
                                       double weight_scale = 1.0);

    std::size_t rank() const noexcept { return rank_; }
    std::size_t order() const noexcept { return order_; }
    std::size_t basis_dim() const noexcept { return basis_dim_; }
    double weight(std::size_t r) const { return weights_.at(r); }
    std::span<const double> weights() const noexcept { return weights_; }
    std::span<const double> factor(std::size_t r, std::size_t i) const;
    std::span<const double> factors() const noexcept { return factors_; }

    void set_weight(std::size_t r, double w);
    // Stores the normalized vector.
    void set_factor(std::size_t r, std::size_t i, std::span<const double> values);

private:
    std::size_t rank_ = 0;
    std::size_t order_ = 0;
    std::size_t basis_dim_ = 0;
    std::vector<double> weights_;
    std::vector<double> factors_;  // rank x order x basis_dim
};

struct DenseTensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;  // row-major, first mode slowest

    double frobenius_norm() const;
};

double inner(const DenseTensor& a, const DenseTensor& b);

// Token ids after truncation to `order` and right-padding with the padding id.
std::vector<std::size_t> pad_ids(std::span<const std::size_t> ids, std::size_t order);

QueryState embed_ids(std::span<const std::size_t> ids, const AmplitudeTable& table, std::size_t order);
QueryState embed_query(std::span<const std::string> words, const Vocabulary& vocab, const AmplitudeTable& table,
                       std::size_t order);

DenseTensor materialize_local(const QueryState& q, std::size_t dense_cap = qcore::kDefaultDenseCap);
DenseTensor cp_reconstruct(const GlobalRepresentation& g, std::size_t dense_cap = qcore::kDefaultDenseCap);

// Per-rank products of position-wise overlaps: prod_i <e_{r,i}, alpha_i>.
std::vector<double> product_pool(const GlobalRepresentation& g, const QueryState& q);
// Sum_r w_r * product_pool(g, q)_r, evaluated without forming k^n entries.
double project(const GlobalRepresentation& g, const QueryState& q);
double project_pooled(const GlobalRepresentation& g, std::span<const double> pooled);

struct CpOptions {
    std::size_t restarts = 20;
    std::size_t max_sweeps = 500;
    double fit_tolerance = 1e-9;
    double ridge = 1e-10;
    // Levenberg-Marquardt iterations applied after each ALS run; 0 disables.
    std::size_t polish_iterations = 100;
    std::size_t dense_cap = qcore::kDefaultDenseCap;
};

struct CpResult {
    GlobalRepresentation model;
    double relative_error = 0.0;  // ||t - reconstruct|| / ||t||, 0 for a zero tensor
    std::size_t sweeps = 0;       // of the winning restart
    std::size_t best_restart = 0;
    bool converged = false;
};

// Alternating least squares with seeded restarts; keeps the lowest-error run.
CpResult cp_decompose(const DenseTensor& t, std::size_t rank, Rng& rng, const CpOptions& opts = {});

}  // namespace qforage::qrep
