#pragma once

// Patchy-corpus environment. Documents are grouped into topical patches and
// carry labeled candidate queries; choosing a candidate yields its label as
// the reward (-1 mismatch, 0 partial, +1 match).

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qforage/rng.hpp"

namespace qforage::env {

inline constexpr std::string_view kNegationToken = "not";
inline constexpr std::size_t kDefaultKeywords = 5;

struct Candidate {
    std::vector<std::string> tokens;
    std::string text;
    int label = 0;
};

struct Document {
    std::string id;
    std::string patch;
    std::string text;
    std::vector<std::string> tokens;
    std::vector<std::string> keywords;
    std::vector<Candidate> candidates;
    std::size_t first_line = 0;
};

struct Corpus {
    std::vector<Document> documents;
    std::vector<std::string> vocabulary;  // sorted unique tokens

    bool empty() const noexcept { return documents.empty(); }
    std::size_t size() const noexcept { return documents.size(); }
    const Document* find(std::string_view doc_id) const;
    std::vector<std::string> patches() const;  // first-appearance order
};

// Lowercased whitespace-separated tokens.
std::vector<std::string> tokenize(std::string_view text);

// Top-m tokens by in-document frequency, ties broken by first appearance.
std::vector<std::string> keyword_summary(std::span<const std::string> tokens, std::size_t m);

// Fraction of query tokens (by position) that occur in the document.
double overlap_fraction(std::span<const std::string> query, std::span<const std::string> document);

Corpus parse_corpus(std::istream& in, std::size_t keywords = kDefaultKeywords);
Corpus load_corpus(const std::filesystem::path& path, std::size_t keywords = kDefaultKeywords);
// Comment lines are written first, each prefixed with "# ".
void write_corpus(const Corpus& corpus, std::ostream& out, std::span<const std::string> comments = {});

struct GenSpec {
    std::size_t docs = 50;
    std::size_t patches = 2;
    std::size_t vocab = 60;       // content words, excluding the negation token
    std::size_t candidates = 3;
    double noise = 0.0;           // per-token replacement probability
    std::size_t doc_length = 12;
    std::size_t query_length = 4;
    std::size_t keywords = kDefaultKeywords;

    void validate() const;
};

Corpus gen_corpus(const GenSpec& spec, Rng& rng);

enum class Mode { Bandit, Session };

Mode parse_mode(std::string_view text);
std::string_view to_string(Mode mode);

struct Observation {
    Mode mode = Mode::Bandit;
    std::size_t doc_index = 0;
    std::string doc_id;
    std::string patch_id;
    std::vector<std::string> keywords;
    std::vector<Candidate> candidates;  // shuffled order
    bool last_in_patch = true;
};

struct Transition {
    std::string doc_id;
    std::string patch_id;
    std::vector<Candidate> candidates;
    std::size_t chosen = 0;
    int reward = 0;
    std::array<double, 3> critic_probabilities{};
    double log_probability = 0.0;
    bool done = true;
};

class Environment {
public:
    Environment(const Corpus& corpus, Mode mode, Rng rng);

    // Bandit: uniform document. Session: documents patch by patch, wrapping around.
    Observation reset();
    Mode mode() const noexcept { return mode_; }
    const Rng& rng() const noexcept { return rng_; }

private:
    const Corpus* corpus_;
    Mode mode_;
    Rng rng_;
    std::vector<std::size_t> session_order_;
    std::vector<bool> session_last_;
    std::size_t cursor_ = 0;
};

// Reward is the chosen candidate's label; bandit episodes end after one step.
Transition step(const Observation& obs, std::size_t index, double log_probability = 0.0);

struct PatternScent {
    double scalar = 0.0;                 // exponentially smoothed reward
    std::array<double, 3> distribution{};  // frequencies of -1, 0, +1
    std::size_t count = 0;
};

struct ScentStats {
    PatternScent overall;
    std::map<std::string, PatternScent> per_patch;
    std::size_t patch_switches = 0;
};

class ScentTracker {
public:
    explicit ScentTracker(double smoothing);
    void record(const std::string& patch, int reward);
    ScentStats stats() const;

private:
    struct Accumulator {
        double scalar = 0.0;
        std::array<std::size_t, 3> counts{};
    };
    static PatternScent finish(const Accumulator& a);
    static void add(Accumulator& a, int reward, double smoothing);

    double smoothing_;
    Accumulator overall_;
    std::map<std::string, Accumulator> per_patch_;
    std::string last_patch_;
    std::size_t switches_ = 0;
    bool any_ = false;
};

ScentStats scent_stats(std::span<const Transition> transitions, double smoothing);

}  // namespace qforage::env
