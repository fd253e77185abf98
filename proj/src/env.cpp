#include "qforage/env.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "qforage/error.hpp"

namespace qforage::env {

namespace {

std::size_t uniform_index(Rng& rng, std::size_t n) {
    const auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
    return std::min(i, n - 1);
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::string join(std::span<const std::string> tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        fields.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return fields;
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace

const Document* Corpus::find(std::string_view doc_id) const {
    for (const auto& d : documents)
        if (d.id == doc_id) return &d;
    return nullptr;
}

std::vector<std::string> Corpus::patches() const {
    std::vector<std::string> out;
    for (const auto& d : documents)
        if (std::find(out.begin(), out.end(), d.patch) == out.end()) out.push_back(d.patch);
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else {
            current += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::vector<std::string> keyword_summary(std::span<const std::string> tokens, std::size_t m) {
    struct Entry {
        std::string word;
        std::size_t count;
        std::size_t first;
    };
    std::vector<Entry> entries;
    std::unordered_map<std::string, std::size_t> at;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        auto [it, inserted] = at.try_emplace(tokens[i], entries.size());
        if (inserted)
            entries.push_back({tokens[i], 1, i});
        else
            ++entries[it->second].count;
    }
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.first < b.first;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(m, entries.size()); ++i) out.push_back(entries[i].word);
    return out;
}

double overlap_fraction(std::span<const std::string> query, std::span<const std::string> document) {
    if (query.empty()) return 0.0;
    const std::unordered_set<std::string> doc(document.begin(), document.end());
    std::size_t shared = 0;
    for (const auto& t : query)
        if (doc.contains(t)) ++shared;
    return static_cast<double>(shared) / static_cast<double>(query.size());
}

Corpus parse_corpus(std::istream& in, std::size_t keywords) {
    Corpus corpus;
    std::unordered_map<std::string, std::size_t> by_id;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        if (trim(line).empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != 5)
            throw Error(ErrorKind::ParseError, "expected 5 tab-separated fields, got " + std::to_string(fields.size()),
                        line_no);
        const std::string doc_id = trim(fields[0]);
        const std::string patch_id = trim(fields[1]);
        const std::string& doc_text = fields[2];
        const std::string& query_text = fields[3];
        const std::string label_text = trim(fields[4]);
        if (doc_id.empty() || patch_id.empty()) throw Error(ErrorKind::ParseError, "empty document or patch id", line_no);

        int label = 0;
        if (label_text == "-1")
            label = -1;
        else if (label_text == "0")
            label = 0;
        else if (label_text == "1" || label_text == "+1")
            label = 1;
        else
            throw Error(ErrorKind::BadLabel, "label '" + label_text + "' not in {-1, 0, 1}", line_no);

        auto query_tokens = tokenize(query_text);
        if (query_tokens.empty()) throw Error(ErrorKind::ParseError, "empty candidate query", line_no);

        auto [it, inserted] = by_id.try_emplace(doc_id, corpus.documents.size());
        if (inserted) {
            Document doc;
            doc.id = doc_id;
            doc.patch = patch_id;
            doc.text = doc_text;
            doc.tokens = tokenize(doc_text);
            if (doc.tokens.empty()) throw Error(ErrorKind::ParseError, "empty document text", line_no);
            doc.keywords = keyword_summary(doc.tokens, keywords);
            doc.first_line = line_no;
            corpus.documents.push_back(std::move(doc));
        }
        Document& doc = corpus.documents[it->second];
        if (doc.text != doc_text)
            throw Error(ErrorKind::ParseError, "document text differs from earlier lines of '" + doc_id + "'", line_no);
        if (doc.patch != patch_id)
            throw Error(ErrorKind::ParseError, "patch id differs from earlier lines of '" + doc_id + "'", line_no);
        doc.candidates.push_back(Candidate{std::move(query_tokens), query_text, label});
    }

    std::set<std::string> vocab;
    for (const auto& doc : corpus.documents) {
        if (doc.candidates.size() < 2)
            throw Error(ErrorKind::ParseError, "document '" + doc.id + "' needs at least 2 candidates", doc.first_line);
        const bool has_match =
            std::any_of(doc.candidates.begin(), doc.candidates.end(), [](const Candidate& c) { return c.label == 1; });
        if (!has_match)
            throw Error(ErrorKind::MissingPositiveCandidate, "document '" + doc.id + "' has no +1 candidate",
                        doc.first_line);
        vocab.insert(doc.tokens.begin(), doc.tokens.end());
        for (const auto& c : doc.candidates) vocab.insert(c.tokens.begin(), c.tokens.end());
    }
    corpus.vocabulary.assign(vocab.begin(), vocab.end());
    return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, std::size_t keywords) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open corpus '" + path.string() + "'");
    return parse_corpus(in, keywords);
}

void write_corpus(const Corpus& corpus, std::ostream& out, std::span<const std::string> comments) {
    for (const auto& c : comments) out << "# " << c << '\n';
    for (const auto& doc : corpus.documents)
        for (const auto& cand : doc.candidates)
            out << doc.id << '\t' << doc.patch << '\t' << doc.text << '\t' << cand.text << '\t' << cand.label << '\n';
}

void GenSpec::validate() const {
    auto fail = [](const std::string& why) { throw Error(ErrorKind::SpecInvalid, why); };
    if (docs < 1) fail("docs must be >= 1");
    if (patches < 1) fail("patches must be >= 1");
    if (patches > docs) fail("patches must not exceed docs");
    if (candidates < 2) fail("candidates must be >= 2");
    if (query_length < 2) fail("query length must be >= 2");
    if (doc_length < 1) fail("document length must be >= 1");
    if (!(noise >= 0.0 && noise <= 1.0)) fail("noise must lie in [0, 1]");
    const std::size_t background = std::max(query_length, vocab / 4);
    if (vocab <= background || (vocab - background) / patches < query_length)
        fail("vocab too small: each patch needs at least query-length topic words plus background words");
}

Corpus gen_corpus(const GenSpec& spec, Rng& rng) {
    spec.validate();
    // Words never appearing in any document; they dilute partial queries and
    // fill off-topic mismatches.
    const std::size_t background_count = std::max(spec.query_length, spec.vocab / 4);
    const std::size_t topic_count = (spec.vocab - background_count) / spec.patches;
    std::vector<std::string> background;
    for (std::size_t j = 0; j < background_count; ++j) background.push_back("bg" + std::to_string(j));
    std::vector<std::vector<std::string>> topics(spec.patches);
    std::vector<std::string> all_words = background;
    for (std::size_t p = 0; p < spec.patches; ++p)
        for (std::size_t j = 0; j < topic_count; ++j) {
            topics[p].push_back("t" + std::to_string(p) + "w" + std::to_string(j));
            all_words.push_back(topics[p].back());
        }

    // j document tokens out of L: the largest j with j / L < 0.6
    const std::size_t partial_shared =
        static_cast<std::size_t>(std::ceil(0.6 * static_cast<double>(spec.query_length))) - 1;

    auto sample_distinct = [&](const std::vector<std::string>& pool, std::size_t count) {
        std::vector<std::string> copy = pool;
        shuffle(copy, rng);
        std::vector<std::string> out;
        for (std::size_t i = 0; i < count; ++i) out.push_back(copy[i % copy.size()]);
        return out;
    };

    Corpus corpus;
    const std::size_t width = std::to_string(spec.docs).size();
    for (std::size_t d = 0; d < spec.docs; ++d) {
        const std::size_t patch = d * spec.patches / spec.docs;
        Document doc;
        std::string num = std::to_string(d);
        doc.id = "d" + std::string(width - num.size(), '0') + num;
        doc.patch = "p" + std::to_string(patch);
        for (std::size_t t = 0; t < spec.doc_length; ++t)
            doc.tokens.push_back(topics[patch][uniform_index(rng, topics[patch].size())]);
        doc.text = join(doc.tokens);
        doc.keywords = keyword_summary(doc.tokens, spec.keywords);
        std::vector<std::string> distinct;
        for (const auto& t : doc.tokens)
            if (std::find(distinct.begin(), distinct.end(), t) == distinct.end()) distinct.push_back(t);

        std::vector<int> labels{1, -1, 0};
        labels.resize(std::min<std::size_t>(3, spec.candidates));
        while (labels.size() < spec.candidates) labels.push_back(static_cast<int>(uniform_index(rng, 3)) - 1);

        for (int label : labels) {
            std::vector<std::string> q;
            if (label == 1) {
                q = sample_distinct(distinct, spec.query_length);
            } else if (label == 0) {
                q = sample_distinct(distinct, partial_shared);
                const auto filler = sample_distinct(background, spec.query_length - partial_shared);
                q.insert(q.end(), filler.begin(), filler.end());
                shuffle(q, rng);
            } else if (uniform01(rng) < 0.5) {
                // polarity flip: on-topic words with the negation token inserted
                q = sample_distinct(distinct, spec.query_length - 1);
                q.insert(q.begin() + static_cast<std::ptrdiff_t>(1 + uniform_index(rng, q.size())),
                         std::string(kNegationToken));
            } else {
                q = sample_distinct(background, spec.query_length);
            }
            for (auto& t : q)
                if (spec.noise > 0.0 && uniform01(rng) < spec.noise) t = all_words[uniform_index(rng, all_words.size())];
            doc.candidates.push_back(Candidate{q, join(q), label});
        }
        shuffle(doc.candidates, rng);
        corpus.documents.push_back(std::move(doc));
    }

    std::set<std::string> vocab;
    for (const auto& doc : corpus.documents) {
        vocab.insert(doc.tokens.begin(), doc.tokens.end());
        for (const auto& c : doc.candidates) vocab.insert(c.tokens.begin(), c.tokens.end());
    }
    corpus.vocabulary.assign(vocab.begin(), vocab.end());
    return corpus;
}

Mode parse_mode(std::string_view text) {
    if (text == "bandit") return Mode::Bandit;
    if (text == "session") return Mode::Session;
    throw Error(ErrorKind::ConfigError, "mode must be 'bandit' or 'session'");
}

std::string_view to_string(Mode mode) { return mode == Mode::Bandit ? "bandit" : "session"; }

Environment::Environment(const Corpus& corpus, Mode mode, Rng rng) : corpus_(&corpus), mode_(mode), rng_(rng) {
    if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "corpus has no documents");
    for (const auto& patch : corpus.patches()) {
        for (std::size_t i = 0; i < corpus.size(); ++i)
            if (corpus.documents[i].patch == patch) {
                session_order_.push_back(i);
                session_last_.push_back(false);
            }
        session_last_.back() = true;
    }
}

Observation Environment::reset() {
    std::size_t index = 0;
    bool last = true;
    if (mode_ == Mode::Bandit) {
        index = uniform_index(rng_, corpus_->size());
    } else {
        index = session_order_[cursor_];
        last = session_last_[cursor_];
        cursor_ = (cursor_ + 1) % session_order_.size();
    }
    const Document& doc = corpus_->documents[index];
    Observation obs;
    obs.mode = mode_;
    obs.doc_index = index;
    obs.doc_id = doc.id;
    obs.patch_id = doc.patch;
    obs.keywords = doc.keywords;
    obs.candidates = doc.candidates;
    shuffle(obs.candidates, rng_);
    obs.last_in_patch = last;
    return obs;
}

Transition step(const Observation& obs, std::size_t index, double log_probability) {
    if (index >= obs.candidates.size())
        throw Error(ErrorKind::IndexOutOfRange, "candidate index " + std::to_string(index) + " out of range");
    Transition t;
    t.doc_id = obs.doc_id;
    t.patch_id = obs.patch_id;
    t.candidates = obs.candidates;
    t.chosen = index;
    t.reward = obs.candidates[index].label;
    t.log_probability = log_probability;
    t.done = obs.mode == Mode::Bandit || obs.last_in_patch;
    return t;
}

ScentTracker::ScentTracker(double smoothing) : smoothing_(smoothing) {
    if (!(smoothing > 0.0 && smoothing <= 1.0)) throw Error(ErrorKind::SpecInvalid, "scent smoothing must lie in (0, 1]");
}

void ScentTracker::add(Accumulator& a, int reward, double smoothing) {
    if (reward < -1 || reward > 1) throw Error(ErrorKind::BadLabel, "reward outside {-1, 0, 1}");
    a.scalar = smoothing * reward + (1.0 - smoothing) * a.scalar;
    ++a.counts[static_cast<std::size_t>(reward + 1)];
}

void ScentTracker::record(const std::string& patch, int reward) {
    add(overall_, reward, smoothing_);
    add(per_patch_[patch], reward, smoothing_);
    if (any_ && patch != last_patch_) ++switches_;
    last_patch_ = patch;
    any_ = true;
}

PatternScent ScentTracker::finish(const Accumulator& a) {
    PatternScent s;
    s.scalar = a.scalar;
    s.count = a.counts[0] + a.counts[1] + a.counts[2];
    if (s.count > 0)
        for (std::size_t i = 0; i < 3; ++i) s.distribution[i] = static_cast<double>(a.counts[i]) / static_cast<double>(s.count);
    return s;
}

ScentStats ScentTracker::stats() const {
    ScentStats s;
    s.overall = finish(overall_);
    for (const auto& [patch, acc] : per_patch_) s.per_patch.emplace(patch, finish(acc));
    s.patch_switches = switches_;
    return s;
}

ScentStats scent_stats(std::span<const Transition> transitions, double smoothing) {
    ScentTracker tracker(smoothing);
    for (const auto& t : transitions) tracker.record(t.patch_id, t.reward);
    return tracker.stats();
}

}  // namespace qforage::env
