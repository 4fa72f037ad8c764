#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "promptrec/eval.hpp"
#include "promptrec/phi2.hpp"

using namespace promptrec;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.n_layers = 1;
    cfg.d_ff = 16;
    cfg.max_len = 32;
    return cfg;
}

EmbeddingVector vec(std::vector<double> v) { return {std::move(v), "test"}; }

}  // namespace

TEST_CASE("cross_entropy_bits: hand values and input validation") {
    CHECK(cross_entropy_bits({0.5, 0.5}) == Catch::Approx(1.0).epsilon(1e-15));
    CHECK(cross_entropy_bits({0.25}) == Catch::Approx(2.0).epsilon(1e-15));
    CHECK(cross_entropy_bits({1.0, 1.0, 1.0}) == Catch::Approx(0.0).margin(1e-15));
    CHECK_THROWS_AS(cross_entropy_bits({}), DataError);
    CHECK_THROWS_AS(cross_entropy_bits({0.0}), DataError);
    CHECK_THROWS_AS(cross_entropy_bits({1.5}), DataError);
    CHECK_THROWS_AS(cross_entropy_bits({-0.1}), DataError);
    // clamp: a tiny but positive probability is floored, not rejected
    CHECK(cross_entropy_bits({1e-300}) == Catch::Approx(-std::log2(kProbClamp)).epsilon(1e-12));
}

TEST_CASE("uniform model scores perplexity exactly V") {
    Rng rng(21);
    GemmaModel m = init_gemma(tiny_config(), rng);
    for (double& w : m.head_W.data()) w = 0.0;  // logits identically zero
    for (double& b : m.head_b.data()) b = 0.0;
    PerplexityReport rep = perplexity(m, TokenSequence(std::vector<int>{1, 40, 80, 120, 2}));
    const double v = static_cast<double>(m.config.vocab_size);
    CHECK(std::fabs(rep.perplexity - v) / v < 1e-9);
    CHECK(rep.cross_entropy_bits == Catch::Approx(std::log2(v)).epsilon(1e-12));
    for (double q : rep.token_probs) CHECK(q == Catch::Approx(1.0 / v).epsilon(1e-12));
}

TEST_CASE("perplexity agrees with the per-prefix oracle and its own invariants") {
    Rng rng(22);
    GemmaModel m = init_gemma(tiny_config(), rng);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<int> ids{Vocabulary::kBos};
        const std::size_t body = 2 + rng.below(10);
        for (std::size_t i = 0; i < body; ++i) ids.push_back(5 + static_cast<int>(rng.below(256)));
        ids.push_back(Vocabulary::kEos);
        TokenSequence t(ids);

        PerplexityReport got = perplexity(m, t);
        PerplexityReport want = oracle::naive_perplexity(m, t);

        REQUIRE(got.n_tokens == want.n_tokens);
        REQUIRE(got.token_probs.size() == got.n_tokens);
        for (std::size_t i = 0; i < got.n_tokens; ++i)
            CHECK(oracle::rel_err(got.token_probs[i], want.token_probs[i]) < 1e-9);
        CHECK(oracle::rel_err(got.cross_entropy_bits, want.cross_entropy_bits) < 1e-9);
        CHECK(oracle::rel_err(got.perplexity, want.perplexity) < 1e-9);

        // internal identities
        CHECK(got.perplexity == Catch::Approx(std::exp2(got.cross_entropy_bits)).epsilon(1e-12));
        CHECK(got.cross_entropy_bits == Catch::Approx(cross_entropy_bits(got.token_probs)).epsilon(1e-12));
        CHECK(got.perplexity >= 1.0);
    }
    CHECK_THROWS_AS(perplexity(m, TokenSequence(std::vector<int>{1})), DataError);
    CHECK_THROWS_AS(perplexity(m, TokenSequence()), DataError);
}

TEST_CASE("scs: exact anchor values") {
    CHECK(scs(vec({1, 0}), vec({1, 0})) == 1.0);
    CHECK(scs(vec({0.3, -0.7}), vec({0.3, -0.7})) == 1.0);
    CHECK(scs(vec({0.3, -0.7}), vec({-0.3, 0.7})) == -1.0);
    CHECK(scs(vec({1, 0}), vec({0, 1})) == Catch::Approx(0.0).margin(1e-15));
    // cosine exactly 0.5 -> 0.125
    CHECK(scs(vec({1, 0}), vec({0.5, std::sqrt(3.0) / 2.0})) == Catch::Approx(0.125).epsilon(1e-9));
    // cubing preserves sign
    CHECK(scs(vec({1, 0}), vec({-0.5, std::sqrt(3.0) / 2.0})) == Catch::Approx(-0.125).epsilon(1e-9));
}

TEST_CASE("scs: symmetry, scale invariance, and bounds over random pairs") {
    Rng rng(23);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.below(16);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = rng.uniform(-1.0, 1.0);
            b[i] = rng.uniform(-1.0, 1.0);
        }
        const double ab = scs(vec(a), vec(b));
        CHECK(std::fabs(ab) <= 1.0 + 1e-9);
        CHECK(std::fabs(ab - scs(vec(b), vec(a))) < 1e-9);
        std::vector<double> a2 = a, b3 = b;
        for (double& x : a2) x *= 2.0;
        for (double& x : b3) x *= 3.0;
        CHECK(std::fabs(scs(vec(a2), vec(b3)) - ab) < 1e-9);
    }
}

TEST_CASE("scs: mismatched or degenerate inputs throw") {
    CHECK_THROWS_AS(scs(vec({1, 0}), vec({1, 0, 0})), DataError);
    CHECK_THROWS_AS(scs(vec({0, 0}), vec({1, 0})), DataError);
    CHECK_THROWS_AS(scs({{1, 0}, "a"}, {{1, 0}, "b"}), DataError);
}

TEST_CASE("reference embedder: deterministic unit vectors") {
    ReferenceEmbedder e;
    CHECK(e.id() == std::string(kReferenceEmbedderId));
    EmbeddingVector a = e.embed_text("Rewrite the text in uppercase.");
    EmbeddingVector b = e.embed_text("Rewrite the text in uppercase.");
    REQUIRE(a.values.size() == kReferenceEmbedderWidth);
    CHECK(a.embedder_id == e.id());
    CHECK(a.values == b.values);
    CHECK(scs(a, b) == 1.0);

    double nrm2 = 0.0;
    for (double v : a.values) nrm2 += v * v;
    CHECK(nrm2 == Catch::Approx(1.0).epsilon(1e-12));

    // different texts give different vectors with similarity below 1
    EmbeddingVector c = e.embed_text("Reverse the order of the words in the text.");
    CHECK(scs(a, c) < 1.0);
    CHECK(scs(a, c) > -1.0);
}

TEST_CASE("reference embedder: short and empty texts still embed") {
    ReferenceEmbedder e;
    EmbeddingVector empty = e.embed_text("");
    CHECK(empty.values[0] == 1.0);
    for (std::size_t i = 1; i < empty.values.size(); ++i) CHECK(empty.values[i] == 0.0);

    for (const char* s : {"a", "ab", "x y", "  "}) {
        EmbeddingVector v = e.embed_text(s);
        double nrm2 = 0.0;
        for (double x : v.values) nrm2 += x * x;
        CHECK(nrm2 == Catch::Approx(1.0).epsilon(1e-12));
    }

    // near-duplicate texts score higher than unrelated ones
    const double close = scs(e.embed_text("Rewrite the text in uppercase."),
                             e.embed_text("Rewrite the text in uppercase!"));
    const double far = scs(e.embed_text("Rewrite the text in uppercase."),
                           e.embed_text("zq jx vw kp bd gt"));
    CHECK(close > far);
}
