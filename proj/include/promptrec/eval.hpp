#ifndef PROMPTREC_EVAL_HPP
#define PROMPTREC_EVAL_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "promptrec/common.hpp"
#include "promptrec/gemma.hpp"
#include "promptrec/tokenizer.hpp"

namespace promptrec {

// Floor applied to per-token probabilities before taking logs, so the
// cross entropy stays finite on badly miscalibrated models.
inline constexpr double kProbClamp = 1e-12;

struct PerplexityReport {
    std::size_t n_tokens = 0;             // N: number of predictions scored
    std::vector<double> token_probs;      // q(x_i), clamped into (0,1]
    double cross_entropy_bits = 0.0;      // H = -(1/N) sum log2 q(x_i)
    double perplexity = 1.0;              // 2^H
};

// H in bits of a sequence of correct-token probabilities.
inline double cross_entropy_bits(const std::vector<double>& q_correct) {
    if (q_correct.empty()) throw DataError("cross_entropy_bits: empty probability sequence");
    double acc = 0.0;
    for (double q : q_correct) {
        if (!(q > 0.0) || q > 1.0)
            throw DataError("cross_entropy_bits: probability " + std::to_string(q) + " outside (0,1]");
        acc += std::log2(q < kProbClamp ? kProbClamp : q);
    }
    return -acc / static_cast<double>(q_correct.size());
}

// Perplexity of t under the model: q(x_i) is the model's probability of
// token i given tokens < i. One causal forward scores every position; with
// the additive mask the per-position rows match per-prefix forwards exactly.
inline PerplexityReport perplexity(const GemmaModel& m, const TokenSequence& t) {
    if (t.size() < 2)
        throw DataError("perplexity: sequence of length " + std::to_string(t.size()) +
                        " has no next-token predictions (need >= 2 tokens)");
    NoGradGuard ng;
    Tensor logits = gemma_forward(m, t);
    Tensor probs = softmax_rows(logits);
    const std::size_t n = t.size() - 1, v = m.config.vocab_size;
    PerplexityReport rep;
    rep.n_tokens = n;
    rep.token_probs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double q = probs.data()[i * v + static_cast<std::size_t>(t.ids[i + 1])];
        rep.token_probs.push_back(q < kProbClamp ? kProbClamp : q);
    }
    rep.cross_entropy_bits = cross_entropy_bits(rep.token_probs);
    rep.perplexity = std::exp2(rep.cross_entropy_bits);
    return rep;
}

// ---- sentence embeddings and similarity ----

struct EmbeddingVector {
    std::vector<double> values;
    std::string embedder_id;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::string id() const = 0;
    virtual EmbeddingVector embed_text(const std::string& text) const = 0;
};

inline constexpr const char* kReferenceEmbedderId = "ref-trigram-256-v1";
inline constexpr std::size_t kReferenceEmbedderWidth = 256;

// Deterministic offline sentence embedder: signed character-trigram feature
// hashing over "^" + text + "$", L2-normalized. Empty text maps to e0. A
// pathological all-cancelling text falls back to a single hashed bucket so
// non-empty text always has unit norm.
inline EmbeddingVector reference_embed(const std::string& text) {
    EmbeddingVector out;
    out.embedder_id = kReferenceEmbedderId;
    out.values.assign(kReferenceEmbedderWidth, 0.0);
    if (text.empty()) {
        out.values[0] = 1.0;
        return out;
    }
    const std::string padded = "^" + text + "$";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
        const std::uint64_t h = fnv1a64(padded.data() + i, 3);
        const std::size_t bucket = static_cast<std::size_t>(h % kReferenceEmbedderWidth);
        const double sign = ((h >> 32) & 1u) ? 1.0 : -1.0;
        out.values[bucket] += sign;
    }
    double nrm2 = 0.0;
    for (double v : out.values) nrm2 += v * v;
    if (nrm2 == 0.0) {
        out.values[static_cast<std::size_t>(fnv1a64(text) % kReferenceEmbedderWidth)] = 1.0;
        return out;
    }
    const double inv = 1.0 / std::sqrt(nrm2);
    for (double& v : out.values) v *= inv;
    return out;
}

class ReferenceEmbedder : public Embedder {
public:
    std::string id() const override { return kReferenceEmbedderId; }
    EmbeddingVector embed_text(const std::string& text) const override { return reference_embed(text); }
};

// Sharpened cosine similarity: cos(a,b) cubed, unclipped. Identical vectors
// score exactly 1 and exact negations exactly -1, bypassing rounding.
inline double scs(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.embedder_id != b.embedder_id)
        throw DataError("scs: embedder mismatch: '" + a.embedder_id + "' vs '" + b.embedder_id + "'");
    if (a.values.size() != b.values.size())
        throw DataError("scs: vector widths differ: " + std::to_string(a.values.size()) + " vs " +
                        std::to_string(b.values.size()));
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    bool same = true, negated = true;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double x = a.values[i], y = b.values[i];
        dot += x * y;
        na2 += x * x;
        nb2 += y * y;
        same = same && (x == y);
        negated = negated && (x == -y);
    }
    if (na2 == 0.0 || nb2 == 0.0) throw DataError("scs: zero-norm embedding vector");
    if (same) return 1.0;
    if (negated) return -1.0;
    const double c = dot / (std::sqrt(na2) * std::sqrt(nb2));
    return c * c * c;
}

}  // namespace promptrec

#endif
