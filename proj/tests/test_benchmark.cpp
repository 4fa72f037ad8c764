#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "promptrec/benchmark.hpp"
#include "promptrec/synthetic.hpp"

using namespace promptrec;

namespace {

std::vector<RewriteRecord> sample_dataset(std::size_t per_family = 4) {
    SyntheticSpec spec;
    spec.samples_per_family = per_family;
    spec.seed = 81;
    return generate_synthetic_corpus(spec);
}

BenchmarkConfigEntry echo_entry() {
    return {"echo oracle", [](const RewriteRecord& r) { return r.rewrite_prompt; }};
}

}  // namespace

TEST_CASE("echo configuration scores exactly 1.0 on every record") {
    ReferenceEmbedder emb;
    std::vector<RewriteRecord> data = sample_dataset();
    BenchmarkReport rep = benchmark({echo_entry()}, data, emb);
    REQUIRE(rep.rows.size() == 1);
    const BenchmarkRow& row = rep.rows[0];
    CHECK(row.n_scored == data.size());
    CHECK(row.n_failed == 0);
    CHECK(row.mean_scs == 1.0);
    for (double s : row.scores) CHECK(s == 1.0);
    CHECK(rep.embedder_id == emb.id());
    CHECK(rep.dataset_digest == dataset_digest(data));
}

TEST_CASE("rows sort ascending by mean with n/a rows first") {
    ReferenceEmbedder emb;
    std::vector<RewriteRecord> data = sample_dataset();
    std::vector<BenchmarkConfigEntry> configs{
        echo_entry(),
        {"always empty", [](const RewriteRecord&) { return std::string(); }},
        {"always fails", [](const RewriteRecord&) -> std::string { throw DataError("boom"); }},
    };
    BenchmarkReport rep = benchmark(configs, data, emb);
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.rows[0].name == "always fails");
    CHECK(std::isnan(rep.rows[0].mean_scs));
    CHECK(rep.rows[0].n_scored == 0);
    CHECK(rep.rows[0].n_failed == data.size());
    for (const RowFailure& f : rep.rows[0].failures) CHECK(f.reason == "boom");

    CHECK(rep.rows[1].name == "always empty");
    CHECK(rep.rows[1].mean_scs < rep.rows[2].mean_scs);
    CHECK(rep.rows[2].name == "echo oracle");
}

TEST_CASE("per-record failures are excluded from the mean, not fatal") {
    ReferenceEmbedder emb;
    std::vector<RewriteRecord> data = sample_dataset();
    BenchmarkConfigEntry flaky{"flaky", [&data](const RewriteRecord& r) -> std::string {
                                   if (&r == &data[2]) throw DataError("record 2 exploded");
                                   return r.rewrite_prompt;
                               }};
    BenchmarkReport rep = benchmark({flaky}, data, emb);
    const BenchmarkRow& row = rep.rows[0];
    CHECK(row.n_scored == data.size() - 1);
    CHECK(row.n_failed == 1);
    REQUIRE(row.failures.size() == 1);
    CHECK(row.failures[0].record_index == 2);
    CHECK(row.failures[0].reason == "record 2 exploded");
    CHECK(row.mean_scs == 1.0);  // the surviving echoes all score 1
}

TEST_CASE("parallel evaluation reproduces the sequential report byte for byte") {
    ReferenceEmbedder emb;
    std::vector<RewriteRecord> data = sample_dataset(8);
    std::vector<BenchmarkConfigEntry> configs{
        echo_entry(),
        {"first words", [](const RewriteRecord& r) { return r.original_text.substr(0, 5); }},
    };
    BenchmarkReport seq = benchmark(configs, data, emb, 1);
    for (std::size_t jobs : {2, 4, 7, 16}) {
        BenchmarkReport par = benchmark(configs, data, emb, jobs);
        CHECK(report_to_json(par) == report_to_json(seq));
    }
}

TEST_CASE("benchmark input validation") {
    ReferenceEmbedder emb;
    std::vector<RewriteRecord> data = sample_dataset();
    CHECK_THROWS_AS(benchmark({}, data, emb), DataError);
    CHECK_THROWS_AS(benchmark({echo_entry()}, {}, emb), DataError);
    std::vector<RewriteRecord> unlabeled{{"a", "", "b"}};
    CHECK_THROWS_AS(benchmark({echo_entry()}, unlabeled, emb), DataError);
}

TEST_CASE("dataset digest is order- and content-sensitive") {
    std::vector<RewriteRecord> data = sample_dataset();
    const std::string d1 = dataset_digest(data);
    CHECK(d1 == dataset_digest(data));
    std::swap(data[0], data[1]);
    CHECK(dataset_digest(data) != d1);
    std::swap(data[0], data[1]);
    data[0].rewrite_text += "!";
    CHECK(dataset_digest(data) != d1);
}

TEST_CASE("rendered table lists measured rows then labeled reference rows") {
    ReferenceEmbedder emb;
    BenchmarkReport rep = benchmark({echo_entry()}, sample_dataset(), emb);
    rep.seed = 5;
    rep.config_digest = "deadbeef";
    const std::string table = render_table(rep);

    CHECK(table.find("Model") != std::string::npos);
    CHECK(table.find("Similarity") != std::string::npos);
    CHECK(table.find("echo oracle") != std::string::npos);
    CHECK(table.find("1.00") != std::string::npos);
    CHECK(table.find("Gemma 2b + KerasNLP + LoRA (external reference)") != std::string::npos);
    CHECK(table.find("Gemma 7b + KerasNLP + LoRA (external reference)") != std::string::npos);
    CHECK(table.find("Sentence-T5 + Pretrain (external reference)") != std::string::npos);
    CHECK(table.find("Mistral 7B (external reference)") != std::string::npos);
    CHECK(table.find("Gemma-2b-it + Phi2 model + Pretrain (external reference)") != std::string::npos);
    CHECK(table.find("0.48") != std::string::npos);
    CHECK(table.find("0.54") != std::string::npos);
    CHECK(table.find("0.60") != std::string::npos);
    CHECK(table.find("0.61") != std::string::npos);
    // measured rows come before the reference block
    CHECK(table.find("echo oracle") < table.find("external reference"));
}

TEST_CASE("structured report carries metadata and reference rows") {
    ReferenceEmbedder emb;
    BenchmarkReport rep = benchmark({echo_entry()}, sample_dataset(), emb);
    rep.seed = 123;
    rep.config_digest = "cafef00d";
    const std::string json = report_to_json(rep);
    CHECK(json.find("\"seed\": 123") != std::string::npos);
    CHECK(json.find("\"config_digest\": \"cafef00d\"") != std::string::npos);
    CHECK(json.find("\"tool_version\": \"" + std::string(kToolVersion) + "\"") != std::string::npos);
    CHECK(json.find("\"embedder_id\": \"" + emb.id() + "\"") != std::string::npos);
    CHECK(json.find("\"source\": \"external reference\"") != std::string::npos);
    CHECK(json.find("0.48") != std::string::npos);
    CHECK(json.find("0.61") != std::string::npos);

    // NaN means serialize as null
    BenchmarkReport nan_rep = benchmark(
        {{"broken", [](const RewriteRecord&) -> std::string { throw DataError("x"); }}}, sample_dataset(), emb);
    CHECK(report_to_json(nan_rep).find("\"mean_scs\": null") != std::string::npos);
}
