#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "qforage/error.hpp"
#include "qforage/qrep.hpp"
#include "support.hpp"

using namespace qforage;
using namespace qforage::qrep;

namespace {

ErrorKind kind_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return ErrorKind::IoError;
}

struct Fixture {
    std::vector<std::string> words{"cats", "chase", "dogs"};
    Vocabulary vocab = Vocabulary::from_words(words);
    Rng rng{21};
    AmplitudeTable table = AmplitudeTable::random(vocab.size(), 3, rng);

    std::vector<double> row(std::string_view w) const {
        const auto r = table.row(vocab.id(w));
        return {r.begin(), r.end()};
    }
};

std::vector<double> as_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

// entry (b_1..b_n) of sum_r w_r e_{r,1} (x) ... (x) e_{r,n}
double direct_entry(const GlobalRepresentation& g, const std::vector<std::size_t>& b) {
    double s = 0.0;
    for (std::size_t r = 0; r < g.rank(); ++r) {
        double p = g.weight(r);
        for (std::size_t i = 0; i < g.order(); ++i) p *= g.factor(r, i)[b[i]];
        s += p;
    }
    return s;
}

}  // namespace

TEST_CASE("vocabulary reserves padding and unknown ids") {
    Fixture f;
    CHECK(f.vocab.size() == 5);
    CHECK(f.vocab.word(kNullId) == kNullToken);
    CHECK(f.vocab.word(kUnkId) == kUnkToken);
    CHECK(f.vocab.id("cats") == 2);
    CHECK(f.vocab.id("zzzunseen") == kUnkId);
    CHECK(Vocabulary::from_list(f.vocab.words()).words() == f.vocab.words());
    CHECK(kind_of([] { Vocabulary::from_list({"a", "b"}); }) == ErrorKind::ParseError);
}

TEST_CASE("amplitude rows are unit norm and the padding row is e0") {
    Fixture f;
    for (std::size_t w = 0; w < f.table.vocab_size(); ++w) {
        double n = 0.0;
        for (double x : f.table.row(w)) n += x * x;
        CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-9);
    }
    CHECK(as_vec(f.table.row(kNullId)) == std::vector<double>{1.0, 0.0, 0.0});
    CHECK_THROWS_AS(f.table.set_row(kNullId, std::vector<double>{0.0, 1.0, 0.0}), Error);
}

TEST_CASE("renormalization is idempotent") {
    Rng rng(22);
    std::vector<double> raw(6 * 4);
    for (double& x : raw) x = qforage::standard_normal(rng);
    AmplitudeTable t(6, 4, raw);
    const auto once = as_vec(t.data());
    t.renormalize();
    CHECK(as_vec(t.data()) == once);
}

TEST_CASE("embed_query pads short queries with the padding row") {
    Fixture f;
    const std::vector<std::string> q{"cats"};
    const auto s = embed_query(q, f.vocab, f.table, 3);
    REQUIRE(s.order() == 3);
    CHECK(s.word_ids == std::vector<std::size_t>{f.vocab.id("cats"), kNullId, kNullId});
    CHECK(as_vec(s.row(0)) == f.row("cats"));
    CHECK(as_vec(s.row(1)) == std::vector<double>{1.0, 0.0, 0.0});
    CHECK(as_vec(s.row(2)) == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("embed_query keeps word order and maps unseen words to the unknown row") {
    Fixture f;
    const std::vector<std::string> q{"dogs", "chase", "cats"};
    const auto s = embed_query(q, f.vocab, f.table, 3);
    CHECK(as_vec(s.row(0)) == f.row("dogs"));
    CHECK(as_vec(s.row(1)) == f.row("chase"));
    CHECK(as_vec(s.row(2)) == f.row("cats"));

    const std::vector<std::string> oov{"dogs", "zzzunseen", "cats"};
    const auto u = embed_query(oov, f.vocab, f.table, 3);
    CHECK(u.word_ids[1] == kUnkId);
    CHECK(as_vec(u.row(1)) == as_vec(f.table.row(kUnkId)));
}

TEST_CASE("embed_query truncates long queries and rejects empty ones") {
    Fixture f;
    const std::vector<std::string> q{"dogs", "chase", "cats", "dogs"};
    CHECK(embed_query(q, f.vocab, f.table, 2).word_ids == std::vector<std::size_t>{4, 3});
    CHECK(kind_of([&] { embed_query(std::vector<std::string>{}, f.vocab, f.table, 3); }) == ErrorKind::EmptyQuery);
}

TEST_CASE("materialize_local examples") {
    Rng rng(23);
    const auto q1 = testgen::query(rng, 1, 4);
    CHECK(materialize_local(q1).data == as_vec(q1.row(0)));

    QueryState q2{{2, 3}, 2, {1.0, 0.0, 0.0, 1.0}};
    const auto t2 = materialize_local(q2);
    CHECK(t2.shape == std::vector<std::size_t>{2, 2});
    CHECK(t2.data == std::vector<double>{0.0, 1.0, 0.0, 0.0});

    for (int trial = 0; trial < 50; ++trial) {
        const auto q = testgen::query(rng, 3, 2);
        CHECK(std::abs(materialize_local(q).frobenius_norm() - 1.0) <= 1e-12);
    }
    const auto big = testgen::query(rng, 7, 4);
    CHECK(kind_of([&] { materialize_local(big); }) == ErrorKind::DenseCapExceeded);
}

TEST_CASE("cp_reconstruct examples") {
    GlobalRepresentation one(1, 3, 2, {1.0}, {1, 0, 1, 0, 1, 0});
    const auto t = cp_reconstruct(one);
    CHECK(t.data == std::vector<double>{1, 0, 0, 0, 0, 0, 0, 0});

    GlobalRepresentation cancel(2, 2, 3, {0.7, -0.7}, {0.6, 0.8, 0, 0, 0, 1, 0.6, 0.8, 0, 0, 0, 1});
    for (double x : cp_reconstruct(cancel).data) CHECK(x == 0.0);

    Rng rng(24);
    for (int trial = 0; trial < 50; ++trial) {
        const auto g = GlobalRepresentation::random(2, 3, 2, rng);
        const auto dense = cp_reconstruct(g);
        for (std::size_t b1 = 0; b1 < 2; ++b1)
            for (std::size_t b2 = 0; b2 < 2; ++b2)
                for (std::size_t b3 = 0; b3 < 2; ++b3)
                    CHECK(std::abs(dense.data[b1 * 4 + b2 * 2 + b3] - direct_entry(g, {b1, b2, b3})) <= 1e-12);
    }
}

TEST_CASE("project examples") {
    Rng rng(25);
    for (int trial = 0; trial < 20; ++trial) {
        const auto g = GlobalRepresentation::random(3, 1, 4, rng);
        const auto q = testgen::query(rng, 1, 4);
        double expected = 0.0;
        for (std::size_t r = 0; r < 3; ++r) {
            double d = 0.0;
            for (std::size_t b = 0; b < 4; ++b) d += g.factor(r, 0)[b] * q.row(0)[b];
            expected += g.weight(r) * d;
        }
        CHECK(std::abs(project(g, q) - expected) <= 1e-12);
        CHECK(std::abs(project(g, q) - inner(cp_reconstruct(g), materialize_local(q))) <= 1e-12);
    }

    GlobalRepresentation g(2, 3, 2, {2.0, 3.0}, std::vector<double>{1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0});
    QueryState q{{2, 2, 2}, 2, {1, 0, 1, 0, 1, 0}};
    CHECK(project(g, q) == 5.0);

    for (int trial = 0; trial < 100; ++trial) {
        const auto gr = GlobalRepresentation::random(2, 3, 2, rng);
        const auto qr = testgen::query(rng, 3, 2);
        CHECK(std::abs(project(gr, qr) - inner(cp_reconstruct(gr), materialize_local(qr))) <= 1e-10);
    }
    CHECK(kind_of([&] { project(g, testgen::query(rng, 2, 2)); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("factored projection matches the dense inner product across shapes") {
    Rng rng(26);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = testgen::pick(rng, 1, 4);
        const std::size_t k = testgen::pick(rng, 1, 4);
        const std::size_t R = testgen::pick(rng, 1, 5);
        const auto g = GlobalRepresentation::random(R, n, k, rng);
        const auto q = testgen::query(rng, n, k);
        CHECK(std::abs(project(g, q) - inner(cp_reconstruct(g), materialize_local(q))) <= 1e-10);
    }
}

TEST_CASE("project is linear in the weights") {
    Rng rng(27);
    for (int trial = 0; trial < 50; ++trial) {
        auto g = GlobalRepresentation::random(3, 3, 3, rng);
        const auto q = testgen::query(rng, 3, 3);
        const double before = project(g, q);
        for (std::size_t r = 0; r < g.rank(); ++r) g.set_weight(r, 2.0 * g.weight(r));
        CHECK(std::abs(project(g, q) - 2.0 * before) <= 1e-12);
    }
}

TEST_CASE("product_pool examples") {
    Rng rng(28);
    // factor orthogonal to the amplitude at position 1 annihilates rank 0
    GlobalRepresentation g(2, 2, 2, {1.0, 1.0}, {0.6, 0.8, 0.0, 1.0, 0.6, 0.8, 0.6, 0.8});
    QueryState q{{2, 3}, 2, {0.8, -0.6, 1.0, 0.0}};
    const auto pooled = product_pool(g, q);
    CHECK(pooled[0] == 0.0);

    const auto g1 = GlobalRepresentation::random(4, 1, 3, rng);
    const auto q1 = testgen::query(rng, 1, 3);
    const auto p1 = product_pool(g1, q1);
    for (std::size_t r = 0; r < 4; ++r) {
        double d = 0.0;
        for (std::size_t b = 0; b < 3; ++b) d += g1.factor(r, 0)[b] * q1.row(0)[b];
        CHECK(p1[r] == doctest::Approx(d).epsilon(1e-14));
    }

    for (int trial = 0; trial < 50; ++trial) {
        const auto gr = GlobalRepresentation::random(3, 3, 2, rng);
        const auto qr = testgen::query(rng, 3, 2);
        CHECK(project_pooled(gr, product_pool(gr, qr)) == project(gr, qr));
    }
}

TEST_CASE("global representation keeps unit factors") {
    Rng rng(29);
    auto g = GlobalRepresentation::random(3, 2, 3, rng, 0.5);
    g.set_factor(1, 1, std::vector<double>{3.0, 0.0, 4.0});
    CHECK(as_vec(g.factor(1, 1)) == std::vector<double>{0.6, 0.0, 0.8});
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t i = 0; i < 2; ++i) {
            double n = 0.0;
            for (double x : g.factor(r, i)) n += x * x;
            CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-9);
        }
    CHECK(kind_of([&] { g.set_factor(0, 0, std::vector<double>{0.0, 0.0, 0.0}); }) == ErrorKind::NotNormalized);
    CHECK(kind_of([&] { g.set_weight(0, INFINITY); }) == ErrorKind::NonFiniteScore);
}

TEST_CASE("cp_decompose recovers a rank-1 tensor") {
    Rng rng(30);
    const auto truth = GlobalRepresentation::random(1, 3, 3, rng);
    const auto res = cp_decompose(cp_reconstruct(truth), 1, rng);
    CHECK(res.relative_error < 1e-10);
}

TEST_CASE("cp_decompose recovers a synthetic rank-2 2x2x2 tensor") {
    GlobalRepresentation truth(2, 3, 2, {1.5, -0.8}, {1, 0, 0.6, 0.8, 0, 1, 0.8, 0.6, 0, 1, 1, 0});
    Rng rng(31);
    const auto t = cp_reconstruct(truth);
    const auto res = cp_decompose(t, 2, rng);
    CHECK(res.relative_error < 1e-6);
    // the reported error is the error of the returned model
    double diff = 0.0;
    const auto rec = cp_reconstruct(res.model);
    for (std::size_t i = 0; i < t.data.size(); ++i) diff += (rec.data[i] - t.data[i]) * (rec.data[i] - t.data[i]);
    CHECK(std::abs(std::sqrt(diff) / t.frobenius_norm() - res.relative_error) <= 1e-12);
}

TEST_CASE("cp_decompose of generic random CP tensors") {
    Rng rng(32);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = testgen::pick(rng, 2, 3);
        const std::size_t k = testgen::pick(rng, 2, 3);
        const std::size_t R = testgen::pick(rng, 1, std::min<std::size_t>(3, k));
        const auto truth = GlobalRepresentation::random(R, n, k, rng);
        CHECK(cp_decompose(cp_reconstruct(truth), R, rng).relative_error < 1e-6);
    }
}

TEST_CASE("cp_decompose of the zero tensor") {
    DenseTensor zero{{3, 3}, std::vector<double>(9, 0.0)};
    Rng rng(33);
    const auto res = cp_decompose(zero, 2, rng);
    CHECK(res.relative_error == 0.0);
    for (double w : res.model.weights()) CHECK(w == 0.0);
}

TEST_CASE("cp_decompose guards") {
    Rng rng(34);
    DenseTensor t{{2, 2}, {1, 0, 0, 1}};
    CHECK(kind_of([&] { cp_decompose(t, 3, rng); }) == ErrorKind::RankTooLarge);
    DenseTensor ragged{{2, 3}, std::vector<double>(6, 1.0)};
    CHECK(kind_of([&] { cp_decompose(ragged, 1, rng); }) == ErrorKind::ShapeMismatch);
    DenseTensor huge{std::vector<std::size_t>(7, 4), {}};
    CHECK(kind_of([&] { cp_decompose(huge, 1, rng); }) == ErrorKind::DenseCapExceeded);
}
