#ifndef PROMPTREC_PHI2_HPP
#define PROMPTREC_PHI2_HPP

#include <cmath>
#include <string>
#include <vector>

#include "promptrec/common.hpp"
#include "promptrec/eval.hpp"
#include "promptrec/gemma.hpp"
#include "promptrec/rng.hpp"
#include "promptrec/tensor.hpp"
#include "promptrec/tokenizer.hpp"

namespace promptrec {

// One attention head with learned projections plus a learned bias per
// relative offset; the bias table covers offsets -(max_len-1)..(max_len-1).
struct SpecialAttentionHead {
    Tensor Wq, Wk, Wv;    // each [d_model x d_head]
    Tensor relpos_bias;   // [2*max_len - 1]
};

struct SpecialAttentionParams {
    std::vector<SpecialAttentionHead> heads;
    Tensor Wo;            // [d_model x d_model]
    double d_k_phi = 0.0; // scale denominator; equals d_head
};

struct EDAttentionHead {
    Tensor Wq;        // decoder side
    Tensor Wk, Wv;    // encoder side
};

struct EDAttentionParams {
    std::vector<EDAttentionHead> heads;
    Tensor Wo;  // [d_model x d_model]
};

struct Phi2EncoderBlock {
    SpecialAttentionParams attn;
    FeedForwardParams ffn;
    LayerNormParams ln1, ln2;
};

struct Phi2DecoderBlock {
    SpecialAttentionParams self_attn;
    EDAttentionParams cross_attn;
    FeedForwardParams ffn;
    LayerNormParams ln1, ln2, ln3;
};

struct Phi2Model {
    ModelConfig config;
    EmbeddingTable embedding;  // shared by encoder and decoder
    std::vector<Phi2EncoderBlock> encoder;
    std::vector<Phi2DecoderBlock> decoder;
    Tensor perplexity_proj;    // [1 x d_model]
    Tensor head_W;             // [d_model x vocab_size]
    Tensor head_b;             // [vocab_size]
};

struct RecoveryInput {
    TokenSequence original_tokens;
    TokenSequence rewritten_tokens;
    double perplexity = 1.0;  // >= 1
};

// ---- initialization ----

namespace detail {

inline SpecialAttentionParams init_special_attention(Rng& rng, const ModelConfig& cfg) {
    SpecialAttentionParams p;
    const std::size_t dh = cfg.d_head();
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        SpecialAttentionHead head;
        head.Wq = init_matrix(rng, cfg.d_model, dh, cfg.d_model);
        head.Wk = init_matrix(rng, cfg.d_model, dh, cfg.d_model);
        head.Wv = init_matrix(rng, cfg.d_model, dh, cfg.d_model);
        head.relpos_bias = Tensor({2 * cfg.max_len - 1}, 0.0, true);  // start as plain attention
        p.heads.push_back(std::move(head));
    }
    p.Wo = init_matrix(rng, cfg.d_model, cfg.d_model, cfg.d_model);
    p.d_k_phi = static_cast<double>(dh);
    return p;
}

inline EDAttentionParams init_ed_attention(Rng& rng, const ModelConfig& cfg) {
    EDAttentionParams p;
    const std::size_t dh = cfg.d_head();
    for (std::size_t h = 0; h < cfg.n_heads; ++h)
        p.heads.push_back({init_matrix(rng, cfg.d_model, dh, cfg.d_model),
                           init_matrix(rng, cfg.d_model, dh, cfg.d_model),
                           init_matrix(rng, cfg.d_model, dh, cfg.d_model)});
    p.Wo = init_matrix(rng, cfg.d_model, cfg.d_model, cfg.d_model);
    return p;
}

}  // namespace detail

inline Phi2Model init_phi2(const ModelConfig& cfg, Rng& rng) {
    Phi2Model m;
    m.config = cfg;
    m.embedding = EmbeddingTable(cfg.vocab_size, cfg.d_model);
    m.embedding.table = detail::init_matrix(rng, cfg.vocab_size, cfg.d_model, cfg.d_model);
    for (std::size_t l = 0; l < cfg.n_layers; ++l)
        m.encoder.push_back({detail::init_special_attention(rng, cfg), detail::init_ffn(rng, cfg),
                             detail::init_ln(cfg), detail::init_ln(cfg)});
    for (std::size_t l = 0; l < cfg.n_layers; ++l)
        m.decoder.push_back({detail::init_special_attention(rng, cfg), detail::init_ed_attention(rng, cfg),
                             detail::init_ffn(rng, cfg), detail::init_ln(cfg), detail::init_ln(cfg),
                             detail::init_ln(cfg)});
    m.perplexity_proj = detail::init_matrix(rng, 1, cfg.d_model, cfg.d_model);
    m.head_W = detail::init_matrix(rng, cfg.d_model, cfg.vocab_size, cfg.d_model);
    m.head_b = detail::init_vector(cfg.vocab_size, 0.0);
    return m;
}

// ---- attention variants ----

// Self-attention with the per-head relative-position bias added to the raw
// scores before scaling. A zero bias table reduces to multi_head exactly.
inline Tensor special_attention(const SpecialAttentionParams& p, const Tensor& x, bool causal = false) {
    if (p.heads.empty()) throw std::invalid_argument("special_attention: no heads");
    if (!(p.d_k_phi > 0.0)) throw std::invalid_argument("special_attention: scale denominator must be positive");
    const std::size_t s = x.rows();
    std::vector<Tensor> outs;
    outs.reserve(p.heads.size());
    for (const SpecialAttentionHead& h : p.heads) {
        const std::size_t center = (h.relpos_bias.shape()[0] - 1) / 2;
        Tensor bias = relpos_bias_matrix(h.relpos_bias, s, s, center);
        outs.push_back(detail::attention_core(matmul(x, h.Wq), matmul(x, h.Wk), matmul(x, h.Wv), &bias,
                                              causal, p.d_k_phi));
    }
    return matmul(concat_cols(outs), p.Wo);
}

// Full (unmasked) cross-attention: queries from the decoder stream, keys and
// values from the encoder output.
inline Tensor encoder_decoder_attention(const EDAttentionParams& p, const Tensor& dec_x, const Tensor& enc_out) {
    if (p.heads.empty()) throw std::invalid_argument("encoder_decoder_attention: no heads");
    if (dec_x.cols() != enc_out.cols())
        throw std::invalid_argument("encoder_decoder_attention width mismatch: " + shape_str(dec_x.shape()) +
                                    " vs " + shape_str(enc_out.shape()));
    const double d_scale = static_cast<double>(p.heads[0].Wq.cols());
    std::vector<Tensor> outs;
    outs.reserve(p.heads.size());
    for (const EDAttentionHead& h : p.heads)
        outs.push_back(detail::attention_core(matmul(dec_x, h.Wq), matmul(enc_out, h.Wk), matmul(enc_out, h.Wv),
                                              nullptr, /*causal=*/false, d_scale));
    return matmul(concat_cols(outs), p.Wo);
}

// ---- encoder / decoder stacks ----

// Differentiable core: the conditioning slot is log2(perplexity) times the
// learned projection row, taken as a graph scalar so gradient can flow back
// into whatever produced the perplexity.
inline Tensor encode_pair_graph(const Phi2Model& m, const TokenSequence& original,
                                const TokenSequence& rewritten, const Tensor& log2_perplexity) {
    const std::size_t total = 1 + original.size() + 1 + rewritten.size();
    if (total > m.config.max_len)
        throw DataError("encode_pair: packed length " + std::to_string(total) + " exceeds max_len " +
                        std::to_string(m.config.max_len));
    std::vector<Tensor> parts;
    parts.push_back(mul_scalar(log2_perplexity, m.perplexity_proj));
    if (!original.empty()) parts.push_back(embed(m.embedding, original));
    parts.push_back(embed(m.embedding, TokenSequence(std::vector<int>{Vocabulary::kSep})));
    if (!rewritten.empty()) parts.push_back(embed(m.embedding, rewritten));
    Tensor h = concat_rows(parts);
    for (const Phi2EncoderBlock& b : m.encoder) {
        h = add(h, special_attention(b.attn, layer_norm(h, b.ln1.gain, b.ln1.bias), /*causal=*/false));
        h = add(h, ffn(b.ffn, layer_norm(h, b.ln2.gain, b.ln2.bias)));
    }
    return h;
}

inline Tensor encode_pair(const Phi2Model& m, const RecoveryInput& inp) {
    if (!(inp.perplexity >= 1.0))
        throw DataError("encode_pair: perplexity " + std::to_string(inp.perplexity) + " must be >= 1");
    return encode_pair_graph(m, inp.original_tokens, inp.rewritten_tokens,
                             Tensor::scalar(std::log2(inp.perplexity)));
}

// Decoder stack to logits at every decoder position: [len x vocab_size].
inline Tensor phi2_decode_logits(const Phi2Model& m, const Tensor& enc_out, const TokenSequence& dec_tokens) {
    if (dec_tokens.empty()) throw DataError("phi2_decode_logits: empty decoder sequence");
    if (dec_tokens.size() > m.config.max_len)
        throw DataError("phi2_decode_logits: sequence of length " + std::to_string(dec_tokens.size()) +
                        " exceeds max_len " + std::to_string(m.config.max_len));
    Tensor h = embed(m.embedding, dec_tokens);
    for (const Phi2DecoderBlock& b : m.decoder) {
        h = add(h, special_attention(b.self_attn, layer_norm(h, b.ln1.gain, b.ln1.bias), /*causal=*/true));
        h = add(h, encoder_decoder_attention(b.cross_attn, layer_norm(h, b.ln2.gain, b.ln2.bias), enc_out));
        h = add(h, ffn(b.ffn, layer_norm(h, b.ln3.gain, b.ln3.bias)));
    }
    return add_bias_rows(matmul(h, m.head_W), m.head_b);
}

// ---- end-to-end prompt recovery ----

inline constexpr std::size_t kRecoverMaxNewTokens = 96;

// Token packing used everywhere the language model scores raw text.
inline TokenSequence lm_sequence(const Vocabulary& v, const std::string& text) {
    TokenSequence t;
    t.ids.push_back(Vocabulary::kBos);
    TokenSequence body = encode(v, text);
    t.ids.insert(t.ids.end(), body.ids.begin(), body.ids.end());
    t.ids.push_back(Vocabulary::kEos);
    return t;
}

// The byte-level vocabulary is corpus-independent; one shared instance.
inline const Vocabulary& byte_vocab() {
    static const Vocabulary v = build_vocab({""});
    return v;
}

// Recover the rewrite prompt for an (original, rewritten) pair: score the
// rewritten text's perplexity under the language model, condition the
// encoder on it, then decode autoregressively from bos.
inline std::string recover_prompt(const GemmaModel& gemma, const Phi2Model& phi,
                                  const std::string& original, const std::string& rewritten,
                                  const GenerateMode& mode = GenerateMode::greedy(),
                                  std::size_t max_new = kRecoverMaxNewTokens) {
    if (original.empty() || rewritten.empty())
        throw DataError("recover_prompt: original and rewritten text must be non-empty");
    NoGradGuard ng;
    const Vocabulary& v = byte_vocab();

    RecoveryInput inp;
    inp.original_tokens = encode(v, original);
    inp.rewritten_tokens = encode(v, rewritten);
    inp.perplexity = perplexity(gemma, lm_sequence(v, rewritten)).perplexity;
    Tensor enc_out = encode_pair(phi, inp);

    TokenSequence dec(std::vector<int>{Vocabulary::kBos});
    Rng rng(mode.seed);
    for (std::size_t step = 0; step < max_new; ++step) {
        if (dec.size() >= phi.config.max_len)
            throw DataError("recover_prompt: generation exceeded max_len " + std::to_string(phi.config.max_len));
        Tensor logits = phi2_decode_logits(phi, enc_out, dec);
        Tensor probs = softmax_rows(slice_rows(logits, dec.size() - 1, dec.size()));
        std::size_t id = (mode.kind == GenerateMode::kGreedy)
                             ? detail::argmax_index(probs.data())
                             : detail::sample_index(probs.data(), mode.temperature, rng);
        if (static_cast<int>(id) == Vocabulary::kEos) break;
        dec.ids.push_back(static_cast<int>(id));
    }
    return decode(v, dec);
}

// ---- parameter registry ----

namespace detail {

inline void collect_special(SpecialAttentionParams& p, const std::string& prefix, std::vector<NamedParam>& out) {
    for (std::size_t h = 0; h < p.heads.size(); ++h) {
        const std::string hp = prefix + ".head" + std::to_string(h);
        out.push_back({hp + ".Wq", p.heads[h].Wq});
        out.push_back({hp + ".Wk", p.heads[h].Wk});
        out.push_back({hp + ".Wv", p.heads[h].Wv});
        out.push_back({hp + ".relpos_bias", p.heads[h].relpos_bias});
    }
    out.push_back({prefix + ".Wo", p.Wo});
}

inline void collect_ffn(FeedForwardParams& p, const std::string& prefix, std::vector<NamedParam>& out) {
    out.push_back({prefix + ".W1", p.W1});
    out.push_back({prefix + ".b1", p.b1});
    out.push_back({prefix + ".W2", p.W2});
    out.push_back({prefix + ".b2", p.b2});
}

inline void collect_ln(LayerNormParams& p, const std::string& prefix, std::vector<NamedParam>& out) {
    out.push_back({prefix + ".gain", p.gain});
    out.push_back({prefix + ".bias", p.bias});
}

}  // namespace detail

inline void collect_params(Phi2Model& m, const std::string& prefix, std::vector<NamedParam>& out) {
    out.push_back({prefix + ".embedding", m.embedding.table});
    for (std::size_t l = 0; l < m.encoder.size(); ++l) {
        const std::string bp = prefix + ".enc" + std::to_string(l);
        detail::collect_special(m.encoder[l].attn, bp + ".attn", out);
        detail::collect_ffn(m.encoder[l].ffn, bp + ".ffn", out);
        detail::collect_ln(m.encoder[l].ln1, bp + ".ln1", out);
        detail::collect_ln(m.encoder[l].ln2, bp + ".ln2", out);
    }
    for (std::size_t l = 0; l < m.decoder.size(); ++l) {
        const std::string bp = prefix + ".dec" + std::to_string(l);
        detail::collect_special(m.decoder[l].self_attn, bp + ".self_attn", out);
        for (std::size_t h = 0; h < m.decoder[l].cross_attn.heads.size(); ++h) {
            const std::string hp = bp + ".cross_attn.head" + std::to_string(h);
            out.push_back({hp + ".Wq", m.decoder[l].cross_attn.heads[h].Wq});
            out.push_back({hp + ".Wk", m.decoder[l].cross_attn.heads[h].Wk});
            out.push_back({hp + ".Wv", m.decoder[l].cross_attn.heads[h].Wv});
        }
        out.push_back({bp + ".cross_attn.Wo", m.decoder[l].cross_attn.Wo});
        detail::collect_ffn(m.decoder[l].ffn, bp + ".ffn", out);
        detail::collect_ln(m.decoder[l].ln1, bp + ".ln1", out);
        detail::collect_ln(m.decoder[l].ln2, bp + ".ln2", out);
        detail::collect_ln(m.decoder[l].ln3, bp + ".ln3", out);
    }
    out.push_back({prefix + ".perplexity_proj", m.perplexity_proj});
    out.push_back({prefix + ".head_W", m.head_W});
    out.push_back({prefix + ".head_b", m.head_b});
}

}  // namespace promptrec

#endif
