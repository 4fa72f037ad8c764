// promptrec: prompt-recovery pipeline driver.
//
// Subcommands: gen-data, pretrain, finetune, recover, eval, benchmark.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "promptrec/benchmark.hpp"
#include "promptrec/checkpoint.hpp"
#include "promptrec/config.hpp"
#include "promptrec/data.hpp"
#include "promptrec/embed_service.hpp"
#include "promptrec/eval.hpp"
#include "promptrec/synthetic.hpp"
#include "promptrec/training.hpp"

namespace {

using namespace promptrec;

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write to '" + path + "' failed");
}

// Sidecar metadata next to artifacts whose own format has no room for it.
void write_meta(const std::string& artifact_path, std::uint64_t seed, const std::string& config_digest,
                const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json j = extra;
    j["seed"] = seed;
    j["config_digest"] = config_digest;
    j["tool_version"] = std::string(kToolVersion);
    write_file(artifact_path + ".meta.json", j.dump(2) + "\n");
}

std::unique_ptr<Embedder> make_embedder(const std::string& spec) {
    if (spec == "reference") return std::make_unique<ReferenceEmbedder>();
    if (spec.rfind("unix:", 0) == 0 || spec.rfind("tcp:", 0) == 0)
        return std::make_unique<ServiceEmbedder>(spec);
    throw std::invalid_argument("embedder must be 'reference' or a unix:/tcp: endpoint, got '" + spec + "'");
}

std::string path_stem(const std::string& path) {
    const std::size_t slash = path.find_last_of("/\\");
    std::string base = (slash == std::string::npos) ? path : path.substr(slash + 1);
    const std::size_t dot = base.find_last_of('.');
    return (dot == std::string::npos || dot == 0) ? base : base.substr(0, dot);
}

// Flag values that override the config file only when actually given.
struct CommonFlags {
    CLI::App* cmd = nullptr;
    std::string config_path;
    std::uint64_t seed = 0;
    std::string data_path;
    std::string out_path;

    void attach(CLI::App& sub, bool with_data) {
        cmd = &sub;
        sub.add_option("--config", config_path, "configuration file (sectioned key = value)");
        sub.add_option("--seed", seed, "root random seed (overrides config)");
        if (with_data) sub.add_option("--data", data_path, "dataset file (overrides [paths] dataset)");
        sub.add_option("--out", out_path, "output path");
    }

    RunConfig effective() const {
        RunConfig rc;
        if (!config_path.empty()) rc = load_run_config(config_path);
        if (cmd->count("--seed")) rc.training.seed = seed;
        if (cmd->count("--data")) rc.dataset_path = data_path;
        return rc;
    }
};

std::vector<RewriteRecord> load_records(const RunConfig& rc) {
    if (rc.dataset_path.empty()) throw std::invalid_argument("no dataset given (--data or [paths] dataset)");
    std::vector<RejectedLine> rejected;
    std::vector<RewriteRecord> records = load_dataset(rc.dataset_path, &rejected);
    for (const RejectedLine& r : rejected)
        std::fprintf(stderr, "warning: %s line %zu rejected: %s\n", rc.dataset_path.c_str(), r.line_number,
                     r.reason.c_str());
    std::printf("records: %zu (rejected: %zu)\n", records.size(), rejected.size());
    return records;
}

void print_losses(const TrainResult& res, const char* stage) {
    if (res.curve.empty()) {
        std::printf("%s: 0 steps, parameters untouched\n", stage);
        return;
    }
    std::printf("%s: %zu steps, composite %.4f -> %.4f (lm %.4f -> %.4f, prompt %.4f -> %.4f)\n", stage,
                res.curve.size(), res.curve.front().composite_loss, res.curve.back().composite_loss,
                res.curve.front().lm_loss, res.curve.back().lm_loss, res.curve.front().prompt_loss,
                res.curve.back().prompt_loss);
}

void save_train_outputs(const TrainResult& res, const std::string& out_path, const std::string& curve_path,
                        std::uint64_t seed, const std::string& config_digest) {
    save_checkpoint(res.checkpoint, out_path);
    write_meta(out_path, seed, config_digest,
               {{"stage", stage_name(res.checkpoint.stage)},
                {"step", res.checkpoint.step},
                {"checkpoint_digest", hex64(checkpoint_digest(res.checkpoint))}});
    write_file(curve_path, curve_to_jsonl(res.curve));
    write_meta(curve_path, seed, config_digest);
    std::printf("checkpoint: %s (digest %s)\n", out_path.c_str(),
                hex64(checkpoint_digest(res.checkpoint)).c_str());
}

// ---- subcommand bodies ----

int cmd_gen_data(const std::string& families_csv, std::size_t n, std::size_t min_words, std::size_t max_words,
                 std::uint64_t seed, const std::string& out_path) {
    if (out_path.empty()) throw std::invalid_argument("gen-data needs --out");
    SyntheticSpec spec;
    spec.families.clear();
    std::string cur;
    for (char c : families_csv + ",") {
        if (c == ',') {
            if (!cur.empty()) spec.families.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    spec.samples_per_family = n;
    spec.min_words = min_words;
    spec.max_words = max_words;
    spec.seed = seed;

    const std::vector<RewriteRecord> records = generate_synthetic_corpus(spec);
    write_file(out_path, to_jsonl(records));

    std::string canon = "families=" + families_csv;
    canon += ";n=" + std::to_string(n) + ";min_words=" + std::to_string(min_words) +
             ";max_words=" + std::to_string(max_words);
    nlohmann::json extra;
    extra["record_count"] = records.size();
    extra["families"] = spec.families;
    write_meta(out_path, seed, hex64(fnv1a64(canon)), extra);
    std::printf("wrote %zu records to %s\n", records.size(), out_path.c_str());
    return 0;
}

int cmd_pretrain(const CommonFlags& common, std::size_t steps_flag, bool steps_given, double lr_flag,
                 bool lr_given, std::size_t batch_flag, bool batch_given, double lambda_flag, bool lambda_given,
                 const std::string& curve_flag) {
    RunConfig rc = common.effective();
    if (steps_given) rc.training.steps_stage1 = steps_flag;
    if (lr_given) rc.training.learning_rate = lr_flag;
    if (batch_given) rc.training.batch_size = batch_flag;
    if (lambda_given) rc.training.composite_weight = lambda_flag;
    std::string out = !common.out_path.empty() ? common.out_path : rc.checkpoint_path;
    if (out.empty()) throw std::invalid_argument("pretrain needs --out or [paths] checkpoint");
    rc.checkpoint_path = out;

    const std::vector<RewriteRecord> records = load_records(rc);
    Rng root(rc.training.seed);
    Rng ginit = root.split("gemma-init");
    Rng pinit = root.split("phi2-init");
    GemmaModel gemma = init_gemma(rc.model, ginit);
    Phi2Model phi = init_phi2(rc.model, pinit);

    TrainResult res = pretrain(gemma, phi, records, rc.training);
    print_losses(res, "stage1");
    const std::string curve = curve_flag.empty() ? out + ".curve.jsonl" : curve_flag;
    save_train_outputs(res, out, curve, rc.training.seed, run_config_digest(rc));
    return 0;
}

int cmd_finetune(const CommonFlags& common, const std::string& ckpt_path, std::size_t steps_flag,
                 bool steps_given, double lr_given_value, bool lr_given, std::size_t batch_flag, bool batch_given,
                 const std::string& curve_flag) {
    if (ckpt_path.empty()) throw std::invalid_argument("finetune needs --ckpt (stage1 checkpoint)");
    RunConfig rc = common.effective();
    if (steps_given) rc.training.steps_stage2 = steps_flag;
    if (lr_given) rc.training.learning_rate = lr_given_value;
    if (batch_given) rc.training.batch_size = batch_flag;
    std::string out = !common.out_path.empty() ? common.out_path : rc.checkpoint_path;
    if (out.empty()) throw std::invalid_argument("finetune needs --out or [paths] checkpoint");
    rc.checkpoint_path = out;

    const Checkpoint start = load_checkpoint(ckpt_path);
    rc.model = start.config;  // the checkpoint defines the architecture
    const std::vector<RewriteRecord> records = load_records(rc);

    TrainResult res = finetune(start, records, rc.training);
    print_losses(res, "stage2");
    const std::string curve = curve_flag.empty() ? out + ".curve.jsonl" : curve_flag;
    save_train_outputs(res, out, curve, rc.training.seed, run_config_digest(rc));
    return 0;
}

int cmd_recover(const std::string& ckpt_path, const std::string& original, const std::string& rewritten,
                bool sample, std::uint64_t gen_seed, double temperature) {
    if (ckpt_path.empty()) throw std::invalid_argument("recover needs --ckpt");
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    auto [gemma, phi] = models_from_checkpoint(ckpt);
    const GenerateMode mode = sample ? GenerateMode::sample(gen_seed, temperature) : GenerateMode::greedy();
    const std::string prompt = recover_prompt(gemma, phi, original, rewritten, mode);
    std::printf("%s\n", prompt.c_str());
    return 0;
}

int run_benchmark(const RunConfig& rc, const std::vector<std::string>& ckpt_specs, bool with_baselines,
                  std::size_t jobs, const std::string& out_path, const std::string& table_path) {
    const std::vector<RewriteRecord> records = load_records(rc);
    std::unique_ptr<Embedder> embedder = make_embedder(rc.embedder);

    // Keep every checkpoint's models alive for the read-only recover lambdas.
    std::vector<std::unique_ptr<std::pair<GemmaModel, Phi2Model>>> models;
    std::vector<BenchmarkConfigEntry> configs;
    for (const std::string& spec : ckpt_specs) {
        std::string name, path;
        const std::size_t eq = spec.find('=');
        if (eq != std::string::npos) {
            name = spec.substr(0, eq);
            path = spec.substr(eq + 1);
        } else {
            path = spec;
            name = path_stem(path);
        }
        const Checkpoint ckpt = load_checkpoint(path);
        models.push_back(std::make_unique<std::pair<GemmaModel, Phi2Model>>(models_from_checkpoint(ckpt)));
        auto* pair = models.back().get();
        configs.push_back({name, [pair](const RewriteRecord& rec) {
                               return recover_prompt(pair->first, pair->second, rec.original_text,
                                                     rec.rewrite_text, GenerateMode::greedy());
                           }});
    }
    if (with_baselines) {
        configs.push_back({"echo ground truth", [](const RewriteRecord& rec) { return rec.rewrite_prompt; }});
        configs.push_back({"constant empty", [](const RewriteRecord&) { return std::string(); }});
    }
    if (configs.empty()) throw std::invalid_argument("benchmark needs at least one --ckpt or baselines enabled");

    BenchmarkReport rep = benchmark(configs, records, *embedder, jobs);
    rep.seed = rc.training.seed;
    rep.config_digest = run_config_digest(rc);

    std::string out = out_path;
    if (out.empty()) out = rc.report_path;
    if (out.empty()) throw std::invalid_argument("benchmark needs --out or [paths] report");
    write_file(out, report_to_json(rep));

    std::string table = render_table(rep);
    table += "seed=" + std::to_string(rep.seed) + " config=" + rep.config_digest +
             " tool=" + rep.tool_version + "\n";
    const std::string tpath = table_path.empty() ? out + ".txt" : table_path;
    write_file(tpath, table);
    std::fputs(table.c_str(), stdout);

    for (const BenchmarkRow& row : rep.rows)
        if (row.n_scored == 0)
            throw DataError("configuration '" + row.name + "' produced zero scores (report written to " + out +
                            ")");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prompt recovery pipeline (language model + encoder-decoder + perplexity conditioning)"};
    app.require_subcommand(1);
    int rc_code = 0;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic rewrite-triple dataset");
    std::string gen_families = "uppercase,word_reverse,emoji_append,keyword_formalize";
    std::size_t gen_n = 8, gen_min = 3, gen_max = 8;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    gen->add_option("--families", gen_families, "comma-separated transformation families");
    gen->add_option("--n", gen_n, "samples per family");
    gen->add_option("--min-words", gen_min, "minimum base-text words");
    gen->add_option("--max-words", gen_max, "maximum base-text words");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--out", gen_out, "output dataset path");
    gen->callback([&] { rc_code = cmd_gen_data(gen_families, gen_n, gen_min, gen_max, gen_seed, gen_out); });

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "stage 1: composite-objective training on synthetic data");
    CommonFlags pre_common;
    pre_common.attach(*pre, /*with_data=*/true);
    std::size_t pre_steps = 0, pre_batch = 0;
    double pre_lr = 0.0, pre_lambda = 0.0;
    std::string pre_curve;
    pre->add_option("--steps", pre_steps, "stage 1 optimizer steps (overrides config)");
    pre->add_option("--lr", pre_lr, "learning rate (overrides config)");
    pre->add_option("--batch", pre_batch, "batch size (overrides config)");
    pre->add_option("--lambda", pre_lambda, "composite weight on the language-model term");
    pre->add_option("--curve", pre_curve, "training-curve log path (default <out>.curve.jsonl)");
    pre->callback([&] {
        rc_code = cmd_pretrain(pre_common, pre_steps, pre->count("--steps") > 0, pre_lr, pre->count("--lr") > 0,
                               pre_batch, pre->count("--batch") > 0, pre_lambda, pre->count("--lambda") > 0,
                               pre_curve);
    });

    // finetune
    auto* fin = app.add_subcommand("finetune", "stage 2: prompt-reconstruction fine-tuning from a checkpoint");
    CommonFlags fin_common;
    fin_common.attach(*fin, /*with_data=*/true);
    std::string fin_ckpt, fin_curve;
    std::size_t fin_steps = 0, fin_batch = 0;
    double fin_lr = 0.0;
    fin->add_option("--ckpt", fin_ckpt, "input stage1 checkpoint");
    fin->add_option("--steps", fin_steps, "stage 2 optimizer steps (overrides config)");
    fin->add_option("--lr", fin_lr, "learning rate (overrides config)");
    fin->add_option("--batch", fin_batch, "batch size (overrides config)");
    fin->add_option("--curve", fin_curve, "training-curve log path (default <out>.curve.jsonl)");
    fin->callback([&] {
        rc_code = cmd_finetune(fin_common, fin_ckpt, fin_steps, fin->count("--steps") > 0, fin_lr,
                               fin->count("--lr") > 0, fin_batch, fin->count("--batch") > 0, fin_curve);
    });

    // recover
    auto* rec = app.add_subcommand("recover", "recover the rewrite prompt for one text pair");
    std::string rec_ckpt, rec_original, rec_rewritten;
    bool rec_sample = false;
    std::uint64_t rec_seed = 0;
    double rec_temp = 1.0;
    rec->add_option("--ckpt", rec_ckpt, "checkpoint to load");
    rec->add_option("--original", rec_original, "original text");
    rec->add_option("--rewritten", rec_rewritten, "rewritten text");
    rec->add_flag("--sample", rec_sample, "sample instead of greedy decoding");
    rec->add_option("--gen-seed", rec_seed, "sampling seed");
    rec->add_option("--temperature", rec_temp, "sampling temperature");
    rec->callback([&] { rc_code = cmd_recover(rec_ckpt, rec_original, rec_rewritten, rec_sample, rec_seed, rec_temp); });

    // eval
    auto* ev = app.add_subcommand("eval", "score one checkpoint against ground-truth prompts");
    CommonFlags ev_common;
    ev_common.attach(*ev, /*with_data=*/true);
    std::string ev_ckpt, ev_table, ev_embedder;
    std::size_t ev_jobs = 1;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint to score");
    ev->add_option("--table", ev_table, "aligned-table output path (default <out>.txt)");
    ev->add_option("--embedder", ev_embedder, "reference | unix:PATH | tcp:HOST:PORT");
    ev->add_option("--jobs", ev_jobs, "parallel evaluation workers");
    ev->callback([&] {
        if (ev_ckpt.empty()) throw std::invalid_argument("eval needs --ckpt");
        RunConfig rc = ev_common.effective();
        if (ev->count("--embedder")) rc.embedder = ev_embedder;
        rc_code = run_benchmark(rc, {ev_ckpt}, /*with_baselines=*/false, ev_jobs, ev_common.out_path, ev_table);
    });

    // benchmark
    auto* bm = app.add_subcommand("benchmark", "score checkpoints plus baseline configurations");
    CommonFlags bm_common;
    bm_common.attach(*bm, /*with_data=*/true);
    std::vector<std::string> bm_ckpts;
    std::string bm_table, bm_embedder;
    std::size_t bm_jobs = 1;
    bool bm_no_baselines = false;
    bm->add_option("--ckpt", bm_ckpts, "checkpoint(s), each PATH or NAME=PATH")->take_all();
    bm->add_option("--table", bm_table, "aligned-table output path (default <out>.txt)");
    bm->add_option("--embedder", bm_embedder, "reference | unix:PATH | tcp:HOST:PORT");
    bm->add_option("--jobs", bm_jobs, "parallel evaluation workers");
    bm->add_flag("--no-baselines", bm_no_baselines, "omit the echo/empty baseline rows");
    bm->callback([&] {
        RunConfig rc = bm_common.effective();
        if (bm->count("--embedder")) rc.embedder = bm_embedder;
        rc_code = run_benchmark(rc, bm_ckpts, !bm_no_baselines, bm_jobs, bm_common.out_path, bm_table);
    });

    try {
        app.parse(argc, argv);
        return rc_code;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
