#ifndef PROMPTREC_GEMMA_HPP
#define PROMPTREC_GEMMA_HPP

#include <cmath>
#include <string>
#include <vector>

#include "promptrec/common.hpp"
#include "promptrec/rng.hpp"
#include "promptrec/tensor.hpp"
#include "promptrec/tokenizer.hpp"

namespace promptrec {

struct ModelConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t d_ff = 256;
    std::size_t max_len = 256;
    std::size_t vocab_size = 261;

    std::size_t d_head() const {
        if (n_heads == 0 || d_model % n_heads != 0)
            throw std::invalid_argument("d_model " + std::to_string(d_model) + " must divide evenly into n_heads " +
                                        std::to_string(n_heads));
        return d_model / n_heads;
    }
};

struct NamedParam {
    std::string name;
    Tensor tensor;
};

struct AttentionHeadParams {
    Tensor Wq, Wk, Wv;  // each [d_model x d_head]
};

struct MultiHeadParams {
    std::vector<AttentionHeadParams> heads;
    Tensor Wo;  // [d_model x d_model]
};

struct FeedForwardParams {
    Tensor W1, b1, W2, b2;  // [d_model x d_ff], [d_ff], [d_ff x d_model], [d_model]
};

struct LayerNormParams {
    Tensor gain, bias;  // each [d_model]
};

struct DecoderBlock {
    MultiHeadParams attn;
    FeedForwardParams ffn;
    LayerNormParams ln1, ln2;
};

struct GemmaModel {
    ModelConfig config;
    EmbeddingTable embedding;
    Tensor pos_embedding;  // [max_len x d_model]
    std::vector<DecoderBlock> blocks;
    Tensor head_W;  // [d_model x vocab_size]
    Tensor head_b;  // [vocab_size]
};

// ---- initialization ----

namespace detail {

inline Tensor init_matrix(Rng& rng, std::size_t rows, std::size_t cols, std::size_t fan_in) {
    Tensor t({rows, cols}, 0.0, true);
    const double lim = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data()) v = rng.uniform(-lim, lim);
    return t;
}

inline Tensor init_vector(std::size_t n, double fill) { return Tensor({n}, fill, true); }

inline MultiHeadParams init_multi_head(Rng& rng, const ModelConfig& cfg) {
    MultiHeadParams p;
    const std::size_t dh = cfg.d_head();
    for (std::size_t h = 0; h < cfg.n_heads; ++h)
        p.heads.push_back({init_matrix(rng, cfg.d_model, dh, cfg.d_model),
                           init_matrix(rng, cfg.d_model, dh, cfg.d_model),
                           init_matrix(rng, cfg.d_model, dh, cfg.d_model)});
    p.Wo = init_matrix(rng, cfg.d_model, cfg.d_model, cfg.d_model);
    return p;
}

inline FeedForwardParams init_ffn(Rng& rng, const ModelConfig& cfg) {
    return {init_matrix(rng, cfg.d_model, cfg.d_ff, cfg.d_model), init_vector(cfg.d_ff, 0.0),
            init_matrix(rng, cfg.d_ff, cfg.d_model, cfg.d_ff), init_vector(cfg.d_model, 0.0)};
}

inline LayerNormParams init_ln(const ModelConfig& cfg) {
    return {init_vector(cfg.d_model, 1.0), init_vector(cfg.d_model, 0.0)};
}

}  // namespace detail

inline GemmaModel init_gemma(const ModelConfig& cfg, Rng& rng) {
    GemmaModel m;
    m.config = cfg;
    m.embedding = EmbeddingTable(cfg.vocab_size, cfg.d_model);
    m.embedding.table = detail::init_matrix(rng, cfg.vocab_size, cfg.d_model, cfg.d_model);
    m.pos_embedding = detail::init_matrix(rng, cfg.max_len, cfg.d_model, cfg.d_model);
    for (std::size_t l = 0; l < cfg.n_layers; ++l)
        m.blocks.push_back({detail::init_multi_head(rng, cfg), detail::init_ffn(rng, cfg),
                            detail::init_ln(cfg), detail::init_ln(cfg)});
    m.head_W = detail::init_matrix(rng, cfg.d_model, cfg.vocab_size, cfg.d_model);
    m.head_b = detail::init_vector(cfg.vocab_size, 0.0);
    return m;
}

// ---- attention ----

namespace detail {

// Shared score path for plain and bias-augmented attention. Layout:
// softmax((Q Kᵀ [+ bias]) / sqrt(d_scale) [+ causal mask]) V. The zero-bias
// case takes the identical code path, so the two mechanisms agree exactly.
inline Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* bias,
                             bool causal, double d_scale) {
    if (k.rows() != v.rows())
        throw std::invalid_argument("attention: K has " + std::to_string(k.rows()) + " rows but V has " +
                                    std::to_string(v.rows()));
    Tensor scores = matmul_nt(q, k);  // [s x t]
    if (bias) scores = add(scores, *bias);
    scores = scale(scores, 1.0 / std::sqrt(d_scale));
    if (causal) scores = add_causal_mask(scores);
    return matmul(softmax_rows(scores), v);
}

}  // namespace detail

inline Tensor scaled_attention(const Tensor& q, const Tensor& k, const Tensor& v, bool causal_mask = false) {
    return detail::attention_core(q, k, v, nullptr, causal_mask, static_cast<double>(q.cols()));
}

inline Tensor multi_head(const MultiHeadParams& p, const Tensor& x, bool causal = false) {
    if (p.heads.empty()) throw std::invalid_argument("multi_head: no heads");
    std::vector<Tensor> outs;
    outs.reserve(p.heads.size());
    for (const AttentionHeadParams& h : p.heads)
        outs.push_back(scaled_attention(matmul(x, h.Wq), matmul(x, h.Wk), matmul(x, h.Wv), causal));
    return matmul(concat_cols(outs), p.Wo);
}

inline Tensor ffn(const FeedForwardParams& p, const Tensor& x) {
    return add_bias_rows(matmul(relu(add_bias_rows(matmul(x, p.W1), p.b1)), p.W2), p.b2);
}

// Pre-norm residual block: x + attn(ln1(x)), then x + ffn(ln2(x)).
inline Tensor decoder_block_forward(const DecoderBlock& b, const Tensor& x, bool causal) {
    Tensor h = add(x, multi_head(b.attn, layer_norm(x, b.ln1.gain, b.ln1.bias), causal));
    return add(h, ffn(b.ffn, layer_norm(h, b.ln2.gain, b.ln2.bias)));
}

// Full forward to logits at every position: [len x vocab_size].
inline Tensor gemma_forward(const GemmaModel& m, const TokenSequence& t) {
    if (t.empty()) throw DataError("gemma_forward: empty token sequence");
    if (t.size() > m.config.max_len)
        throw DataError("gemma_forward: sequence of length " + std::to_string(t.size()) +
                        " exceeds max_len " + std::to_string(m.config.max_len));
    Tensor h = add(embed(m.embedding, t), slice_rows(m.pos_embedding, 0, t.size()));
    for (const DecoderBlock& b : m.blocks) h = decoder_block_forward(b, h, /*causal=*/true);
    return add_bias_rows(matmul(h, m.head_W), m.head_b);
}

// Probability vector for the token after the sequence end. Inference-only.
inline std::vector<double> next_token_distribution(const GemmaModel& m, const TokenSequence& t) {
    NoGradGuard ng;
    Tensor logits = gemma_forward(m, t);
    Tensor probs = softmax_rows(slice_rows(logits, t.size() - 1, t.size()));
    return probs.data();
}

struct GenerateMode {
    enum Kind { kGreedy, kSample } kind = kGreedy;
    std::uint64_t seed = 0;
    double temperature = 1.0;

    static GenerateMode greedy() { return {}; }
    static GenerateMode sample(std::uint64_t seed, double temperature = 1.0) {
        return {kSample, seed, temperature};
    }
};

namespace detail {

inline std::size_t argmax_index(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

// Draw from probabilities sharpened by 1/temperature (equivalent to applying
// temperature to the logits before the softmax).
inline std::size_t sample_index(const std::vector<double>& probs, double temperature, Rng& rng) {
    if (!(temperature > 0.0)) throw std::invalid_argument("sampling temperature must be positive");
    std::vector<double> w(probs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::pow(probs[i], 1.0 / temperature);
        total += w[i];
    }
    double u = rng.uniform() * total, cum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        cum += w[i];
        if (u < cum) return i;
    }
    return w.size() - 1;
}

}  // namespace detail

// Appends up to max_new tokens, stopping at eos or when the model's context
// window is full. Greedy mode is fully deterministic; sample mode is
// deterministic given the mode seed.
inline TokenSequence generate(const GemmaModel& m, const TokenSequence& prefix, std::size_t max_new,
                              const GenerateMode& mode = GenerateMode::greedy()) {
    if (prefix.empty()) throw DataError("generate: empty prefix");
    NoGradGuard ng;
    TokenSequence out = prefix;
    Rng rng(mode.seed);
    for (std::size_t step = 0; step < max_new && out.size() < m.config.max_len; ++step) {
        std::vector<double> probs = next_token_distribution(m, out);
        std::size_t id = (mode.kind == GenerateMode::kGreedy)
                             ? detail::argmax_index(probs)
                             : detail::sample_index(probs, mode.temperature, rng);
        out.ids.push_back(static_cast<int>(id));
        if (static_cast<int>(id) == Vocabulary::kEos) break;
    }
    return out;
}

// ---- parameter registry (optimizer + checkpoints) ----

inline void collect_params(GemmaModel& m, const std::string& prefix, std::vector<NamedParam>& out) {
    out.push_back({prefix + ".embedding", m.embedding.table});
    out.push_back({prefix + ".pos_embedding", m.pos_embedding});
    for (std::size_t l = 0; l < m.blocks.size(); ++l) {
        const std::string bp = prefix + ".block" + std::to_string(l);
        DecoderBlock& b = m.blocks[l];
        for (std::size_t h = 0; h < b.attn.heads.size(); ++h) {
            const std::string hp = bp + ".attn.head" + std::to_string(h);
            out.push_back({hp + ".Wq", b.attn.heads[h].Wq});
            out.push_back({hp + ".Wk", b.attn.heads[h].Wk});
            out.push_back({hp + ".Wv", b.attn.heads[h].Wv});
        }
        out.push_back({bp + ".attn.Wo", b.attn.Wo});
        out.push_back({bp + ".ffn.W1", b.ffn.W1});
        out.push_back({bp + ".ffn.b1", b.ffn.b1});
        out.push_back({bp + ".ffn.W2", b.ffn.W2});
        out.push_back({bp + ".ffn.b2", b.ffn.b2});
        out.push_back({bp + ".ln1.gain", b.ln1.gain});
        out.push_back({bp + ".ln1.bias", b.ln1.bias});
        out.push_back({bp + ".ln2.gain", b.ln2.gain});
        out.push_back({bp + ".ln2.bias", b.ln2.bias});
    }
    out.push_back({prefix + ".head_W", m.head_W});
    out.push_back({prefix + ".head_b", m.head_b});
}

}  // namespace promptrec

#endif
