#ifndef PROMPTREC_BENCHMARK_HPP
#define PROMPTREC_BENCHMARK_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptrec/common.hpp"
#include "promptrec/data.hpp"
#include "promptrec/eval.hpp"
#include "promptrec/synthetic.hpp"

namespace promptrec {

using RecoverFn = std::function<std::string(const RewriteRecord&)>;

struct BenchmarkConfigEntry {
    std::string name;
    RecoverFn recover;
};

struct RowFailure {
    std::size_t record_index = 0;
    std::string reason;
};

struct BenchmarkRow {
    std::string name;
    double mean_scs = 0.0;  // NaN when nothing scored
    std::size_t n_scored = 0;
    std::size_t n_failed = 0;
    std::vector<double> scores;  // per scored record, dataset order
    std::vector<RowFailure> failures;
};

// Published similarity numbers shipped for display next to measured rows;
// external reference values only, never recomputed here.
struct ReferenceRow {
    const char* name;
    double similarity;
};

inline constexpr ReferenceRow kReferenceRows[] = {
    {"Gemma 2b + KerasNLP + LoRA", 0.48},
    {"Gemma 7b + KerasNLP + LoRA", 0.48},
    {"Sentence-T5 + Pretrain", 0.54},
    {"Mistral 7B", 0.60},
    {"Gemma-2b-it + Phi2 model + Pretrain", 0.61},
};

struct BenchmarkReport {
    std::vector<BenchmarkRow> rows;  // sorted by mean ascending, ties by name
    std::string embedder_id;
    std::string dataset_digest;  // hex of the canonical record serialization
    std::uint64_t seed = 0;
    std::string config_digest;
    std::string tool_version = std::string(kToolVersion);
};

inline std::string dataset_digest(const std::vector<RewriteRecord>& records) {
    return hex64(fnv1a64(to_jsonl(records)));
}

namespace detail {

// Strided parallel map over record indices: worker k handles i % jobs == k,
// writing into its own slots. Results are identical for any job count.
template <typename Fn>
void parallel_rows(std::size_t n, std::size_t jobs, Fn fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min(jobs, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t k = 0; k < workers; ++k)
        pool.emplace_back([k, n, workers, &fn] {
            for (std::size_t i = k; i < n; i += workers) fn(i);
        });
    for (std::thread& t : pool) t.join();
}

}  // namespace detail

// Scores every configuration against the ground-truth prompts. Per-record
// failures (recovery or embedding) are excluded from the mean and reported;
// the mean itself is accumulated sequentially in index order so the result
// is byte-stable for any number of jobs.
inline BenchmarkReport benchmark(const std::vector<BenchmarkConfigEntry>& configs,
                                 const std::vector<RewriteRecord>& dataset, const Embedder& embedder,
                                 std::size_t jobs = 1) {
    if (configs.empty()) throw DataError("benchmark: no configurations");
    if (dataset.empty()) throw DataError("benchmark: empty dataset");
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (dataset[i].rewrite_prompt.empty())
            throw DataError("benchmark: record " + std::to_string(i) + " lacks a ground-truth rewrite_prompt");

    BenchmarkReport rep;
    rep.embedder_id = embedder.id();  // probe before any worker threads exist
    rep.dataset_digest = dataset_digest(dataset);

    const std::size_t n = dataset.size();
    struct Slot {
        double score = 0.0;
        bool ok = false;
        std::string error;
    };

    // Ground-truth embeddings are shared by every configuration.
    std::vector<Slot> truth_ok(n);
    std::vector<EmbeddingVector> truths(n);
    detail::parallel_rows(n, jobs, [&](std::size_t i) {
        try {
            truths[i] = embedder.embed_text(dataset[i].rewrite_prompt);
            truth_ok[i].ok = true;
        } catch (const std::exception& e) {
            truth_ok[i].error = std::string("ground-truth embedding failed: ") + e.what();
        }
    });

    for (const BenchmarkConfigEntry& cfg : configs) {
        std::vector<Slot> slots(n);
        detail::parallel_rows(n, jobs, [&](std::size_t i) {
            NoGradGuard ng;  // worker threads default to recording
            if (!truth_ok[i].ok) {
                slots[i].error = truth_ok[i].error;
                return;
            }
            try {
                const std::string predicted = cfg.recover(dataset[i]);
                slots[i].score = scs(embedder.embed_text(predicted), truths[i]);
                slots[i].ok = true;
            } catch (const std::exception& e) {
                slots[i].error = e.what();
            }
        });

        BenchmarkRow row;
        row.name = cfg.name;
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (slots[i].ok) {
                sum += slots[i].score;
                row.scores.push_back(slots[i].score);
                ++row.n_scored;
            } else {
                row.failures.push_back({i, slots[i].error});
                ++row.n_failed;
            }
        }
        row.mean_scs = row.n_scored ? sum / static_cast<double>(row.n_scored)
                                    : std::numeric_limits<double>::quiet_NaN();
        rep.rows.push_back(std::move(row));
    }

    std::sort(rep.rows.begin(), rep.rows.end(), [](const BenchmarkRow& a, const BenchmarkRow& b) {
        const bool an = std::isnan(a.mean_scs), bn = std::isnan(b.mean_scs);
        if (an != bn) return an;  // unscored rows sort first
        if (!an && a.mean_scs != b.mean_scs) return a.mean_scs < b.mean_scs;
        return a.name < b.name;
    });
    return rep;
}

// Plain-text aligned table: measured rows, then the external reference rows.
inline std::string render_table(const BenchmarkReport& rep) {
    std::size_t width = std::string("Model").size();
    for (const BenchmarkRow& r : rep.rows) width = std::max(width, r.name.size());
    for (const ReferenceRow& r : kReferenceRows)
        width = std::max(width, std::string(r.name).size() + std::string(" (external reference)").size());

    std::string out;
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%-*s  %s\n", static_cast<int>(width), "Model", "Similarity");
    out += buf;
    out += std::string(width + 12, '-');
    out.push_back('\n');
    for (const BenchmarkRow& r : rep.rows) {
        if (std::isnan(r.mean_scs))
            std::snprintf(buf, sizeof(buf), "%-*s  %s\n", static_cast<int>(width), r.name.c_str(), "n/a");
        else
            std::snprintf(buf, sizeof(buf), "%-*s  %.2f\n", static_cast<int>(width), r.name.c_str(), r.mean_scs);
        out += buf;
        if (r.n_failed) {
            std::snprintf(buf, sizeof(buf), "%-*s  (%zu of %zu rows failed)\n", static_cast<int>(width), "",
                          r.n_failed, r.n_scored + r.n_failed);
            out += buf;
        }
    }
    for (const ReferenceRow& r : kReferenceRows) {
        const std::string label = std::string(r.name) + " (external reference)";
        std::snprintf(buf, sizeof(buf), "%-*s  %.2f\n", static_cast<int>(width), label.c_str(), r.similarity);
        out += buf;
    }
    return out;
}

// Structured report; keys serialize in sorted order, so two identical runs
// produce byte-identical files.
inline std::string report_to_json(const BenchmarkReport& rep) {
    nlohmann::json j;
    j["embedder_id"] = rep.embedder_id;
    j["dataset_digest"] = rep.dataset_digest;
    j["seed"] = rep.seed;
    j["config_digest"] = rep.config_digest;
    j["tool_version"] = rep.tool_version;
    j["rows"] = nlohmann::json::array();
    for (const BenchmarkRow& r : rep.rows) {
        nlohmann::json row;
        row["name"] = r.name;
        if (std::isnan(r.mean_scs))
            row["mean_scs"] = nullptr;
        else
            row["mean_scs"] = r.mean_scs;
        row["n_scored"] = r.n_scored;
        row["n_failed"] = r.n_failed;
        row["scores"] = r.scores;
        row["failures"] = nlohmann::json::array();
        for (const RowFailure& f : r.failures)
            row["failures"].push_back({{"record", f.record_index}, {"reason", f.reason}});
        j["rows"].push_back(std::move(row));
    }
    j["reference_rows"] = nlohmann::json::array();
    for (const ReferenceRow& r : kReferenceRows)
        j["reference_rows"].push_back(
            {{"name", r.name}, {"similarity", r.similarity}, {"source", "external reference"}});
    return j.dump(2) + "\n";
}

}  // namespace promptrec

#endif
