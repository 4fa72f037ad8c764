#ifndef PROMPTREC_TRAINING_HPP
#define PROMPTREC_TRAINING_HPP

#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "promptrec/checkpoint.hpp"
#include "promptrec/common.hpp"
#include "promptrec/data.hpp"
#include "promptrec/eval.hpp"
#include "promptrec/gemma.hpp"
#include "promptrec/optimizer.hpp"
#include "promptrec/phi2.hpp"
#include "promptrec/rng.hpp"
#include "promptrec/tokenizer.hpp"

namespace promptrec {

struct TrainingConfig {
    std::uint64_t seed = 0;
    double learning_rate = 3e-4;
    std::size_t batch_size = 8;
    std::size_t steps_stage1 = 0;
    std::size_t steps_stage2 = 0;
    double composite_weight = 0.5;  // weight on the language-model term
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 1.0;

    void validate() const {
        if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
        if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
        if (!(composite_weight >= 0.0 && composite_weight <= 1.0))
            throw std::invalid_argument("composite_weight must lie in [0,1]");
    }

    AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }
};

// Weighted sum of the two objective values.
inline double composite_loss(double lm_loss, double prompt_loss, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw std::invalid_argument("composite weight " + std::to_string(lambda) + " outside [0,1]");
    return lambda * lm_loss + (1.0 - lambda) * prompt_loss;
}

struct CurvePoint {
    std::size_t step = 0;
    Stage stage = Stage::stage1;
    double composite_loss = 0.0;
    double lm_loss = 0.0;
    double prompt_loss = 0.0;
};

inline std::string curve_to_jsonl(const std::vector<CurvePoint>& curve) {
    std::string out;
    char buf[256];
    for (const CurvePoint& p : curve) {
        std::snprintf(buf, sizeof(buf),
                      "{\"step\":%zu,\"stage\":\"%s\",\"composite_loss\":%.17g,\"lm_loss\":%.17g,"
                      "\"prompt_loss\":%.17g}\n",
                      p.step, stage_name(p.stage), p.composite_loss, p.lm_loss, p.prompt_loss);
        out += buf;
    }
    return out;
}

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<CurvePoint> curve;
};

// ---- record-level losses ----

// Both objective terms for one record, as graph scalars in nats. The
// conditioning scalar handed to the encoder is the language-model cross
// entropy converted to bits — exactly log2 of the rewritten text's
// perplexity — so it stays differentiable end to end.
struct RecordLosses {
    Tensor lm;      // next-token cross entropy on the rewritten text
    Tensor prompt;  // prompt-reconstruction cross entropy
};

inline RecordLosses record_losses(const GemmaModel& gemma, const Phi2Model& phi, const Vocabulary& v,
                                  const RewriteRecord& rec) {
    RecordLosses out;

    const TokenSequence lm_seq = lm_sequence(v, rec.rewrite_text);
    const std::size_t n = lm_seq.size();
    Tensor lm_logits = gemma_forward(gemma, lm_seq);
    std::vector<int> lm_targets(lm_seq.ids.begin() + 1, lm_seq.ids.end());
    out.lm = cross_entropy_rows(slice_rows(lm_logits, 0, n - 1), lm_targets);

    // nats -> bits: the slot value equals the report-level cross_entropy_bits.
    Tensor log2_ppl = scale(out.lm, 1.0 / std::numbers::ln2);
    Tensor enc_out = encode_pair_graph(phi, encode(v, rec.original_text), encode(v, rec.rewrite_text), log2_ppl);

    const TokenSequence prompt_tokens = encode(v, rec.rewrite_prompt);
    TokenSequence dec_in(std::vector<int>{Vocabulary::kBos});
    dec_in.ids.insert(dec_in.ids.end(), prompt_tokens.ids.begin(), prompt_tokens.ids.end());
    std::vector<int> dec_targets = prompt_tokens.ids;
    dec_targets.push_back(Vocabulary::kEos);
    Tensor dec_logits = phi2_decode_logits(phi, enc_out, dec_in);
    out.prompt = cross_entropy_rows(dec_logits, dec_targets);

    return out;
}

// ---- preflight ----

struct PreflightStats {
    std::size_t kept = 0;
    std::size_t dropped_overlong = 0;
    std::size_t dropped_missing_prompt = 0;
};

// Records a model of this size can actually train on. Oversized or
// prompt-less records are dropped (counted), not fatal; an empty result is.
inline std::vector<RewriteRecord> training_view(const std::vector<RewriteRecord>& records,
                                                const ModelConfig& cfg, PreflightStats* stats = nullptr) {
    PreflightStats st;
    std::vector<RewriteRecord> out;
    out.reserve(records.size());
    for (const RewriteRecord& r : records) {
        if (r.rewrite_prompt.empty()) {
            ++st.dropped_missing_prompt;
            continue;
        }
        const bool fits = r.rewrite_text.size() + 2 <= cfg.max_len &&
                          r.original_text.size() + r.rewrite_text.size() + 2 <= cfg.max_len &&
                          r.rewrite_prompt.size() + 1 <= cfg.max_len;
        if (!fits) {
            ++st.dropped_overlong;
            continue;
        }
        ++st.kept;
        out.push_back(r);
    }
    if (stats) *stats = st;
    if (out.empty())
        throw DataError("no trainable records: " + std::to_string(st.dropped_overlong) + " overlong, " +
                        std::to_string(st.dropped_missing_prompt) + " without a prompt");
    return out;
}

// ---- training driver ----

namespace detail {

inline void run_stage(GemmaModel& gemma, Phi2Model& phi, const std::vector<RewriteRecord>& records,
                      const TrainingConfig& cfg, double lambda, Stage stage, std::size_t steps,
                      std::vector<CurvePoint>& curve) {
    const Vocabulary& v = byte_vocab();
    std::vector<NamedParam> params;
    collect_params(gemma, "gemma", params);
    collect_params(phi, "phi2", params);
    AdamState state;
    const AdamConfig acfg = cfg.adam();
    Rng batch_rng = Rng(cfg.seed).split(stage == Stage::stage1 ? "stage1-batches" : "stage2-batches");

    for (std::size_t step = 0; step < steps; ++step) {
        for (NamedParam& p : params) p.tensor.zero_grad();

        Tensor lm_sum, prompt_sum;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const std::size_t idx = static_cast<std::size_t>(batch_rng.below(records.size()));
            RecordLosses rl = record_losses(gemma, phi, v, records[idx]);
            lm_sum = lm_sum.valid() ? add(lm_sum, rl.lm) : rl.lm;
            prompt_sum = prompt_sum.valid() ? add(prompt_sum, rl.prompt) : rl.prompt;
        }
        const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
        Tensor lm_mean = scale(lm_sum, inv_b);
        Tensor prompt_mean = scale(prompt_sum, inv_b);
        Tensor total = add(scale(lm_mean, lambda), scale(prompt_mean, 1.0 - lambda));

        if (!std::isfinite(total.item()))
            throw NumericError("non-finite loss at " + std::string(stage_name(stage)) + " step " +
                               std::to_string(step));
        backward(total);
        clip_global_norm(params, cfg.clip_norm);
        optimizer_step(params, state, acfg);
        curve.push_back({step, stage, total.item(), lm_mean.item(), prompt_mean.item()});
    }
}

}  // namespace detail

// Stage 1: joint optimization of the composite objective on the synthetic
// corpus. Mutates the passed-in models and snapshots them at the end.
inline TrainResult pretrain(GemmaModel& gemma, Phi2Model& phi, const std::vector<RewriteRecord>& corpus,
                            const TrainingConfig& cfg) {
    cfg.validate();
    if (corpus.empty()) throw DataError("pretrain: empty corpus");
    const std::vector<RewriteRecord> usable = training_view(corpus, gemma.config);
    TrainResult res;
    detail::run_stage(gemma, phi, usable, cfg, cfg.composite_weight, Stage::stage1, cfg.steps_stage1, res.curve);
    res.checkpoint = make_checkpoint(gemma, phi, Stage::stage1, cfg.steps_stage1);
    return res;
}

// Stage 2: domain adaptation on prompt reconstruction alone (weight 0 on the
// language-model term; gradient still reaches the language model through the
// conditioning slot). The input checkpoint is never mutated.
inline TrainResult finetune(const Checkpoint& ckpt, const std::vector<RewriteRecord>& domain,
                            const TrainingConfig& cfg) {
    cfg.validate();
    if (domain.empty()) throw DataError("finetune: empty domain dataset");
    if (ckpt.stage == Stage::stage2)
        std::fprintf(stderr, "warning: fine-tuning from a stage2 checkpoint (expected stage1); proceeding\n");
    auto [gemma, phi] = models_from_checkpoint(ckpt);
    const std::vector<RewriteRecord> usable = training_view(domain, gemma.config);
    TrainResult res;
    detail::run_stage(gemma, phi, usable, cfg, /*lambda=*/0.0, Stage::stage2, cfg.steps_stage2, res.curve);
    res.checkpoint = make_checkpoint(gemma, phi, Stage::stage2, ckpt.step + cfg.steps_stage2);
    return res;
}

// ---- frozen-model evaluation helpers ----

// Mean prompt-reconstruction cross entropy (nats) over records, no grads.
inline double mean_prompt_loss(const GemmaModel& gemma, const Phi2Model& phi,
                               const std::vector<RewriteRecord>& records) {
    if (records.empty()) throw DataError("mean_prompt_loss: no records");
    NoGradGuard ng;
    const Vocabulary& v = byte_vocab();
    double acc = 0.0;
    for (const RewriteRecord& r : records) acc += record_losses(gemma, phi, v, r).prompt.item();
    return acc / static_cast<double>(records.size());
}

// Mean composite objective (nats) at a given weight, no grads.
inline double mean_composite_loss(const GemmaModel& gemma, const Phi2Model& phi,
                                  const std::vector<RewriteRecord>& records, double lambda) {
    if (records.empty()) throw DataError("mean_composite_loss: no records");
    NoGradGuard ng;
    const Vocabulary& v = byte_vocab();
    double acc = 0.0;
    for (const RewriteRecord& r : records) {
        RecordLosses rl = record_losses(gemma, phi, v, r);
        acc += composite_loss(rl.lm.item(), rl.prompt.item(), lambda);
    }
    return acc / static_cast<double>(records.size());
}

}  // namespace promptrec

#endif
