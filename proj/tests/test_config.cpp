#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "promptrec/config.hpp"

using namespace promptrec;

TEST_CASE("parse_run_config reads every section") {
    const std::string text =
        "# a comment\n"
        "[model]\n"
        "d_model = 16\n"
        "n_heads = 2\n"
        "n_layers = 1\n"
        "d_ff = 32\n"
        "max_len = 96\n"
        "; another comment\n"
        "[training]\n"
        "seed = 42\n"
        "learning_rate = 0.001\n"
        "batch_size = 4\n"
        "steps_stage1 = 10\n"
        "steps_stage2 = 5\n"
        "composite_weight = 0.25\n"
        "[paths]\n"
        "dataset = /tmp/data.jsonl\n"
        "checkpoint = /tmp/model.ckpt\n"
        "report = /tmp/report.json\n"
        "[embedder]\n"
        "kind = reference\n";
    RunConfig rc = parse_run_config(text);
    CHECK(rc.model.d_model == 16);
    CHECK(rc.model.n_heads == 2);
    CHECK(rc.model.n_layers == 1);
    CHECK(rc.model.d_ff == 32);
    CHECK(rc.model.max_len == 96);
    CHECK(rc.model.vocab_size == 261);  // fixed by the byte tokenizer
    CHECK(rc.training.seed == 42);
    CHECK(rc.training.learning_rate == Catch::Approx(0.001));
    CHECK(rc.training.batch_size == 4);
    CHECK(rc.training.steps_stage1 == 10);
    CHECK(rc.training.steps_stage2 == 5);
    CHECK(rc.training.composite_weight == Catch::Approx(0.25));
    CHECK(rc.dataset_path == "/tmp/data.jsonl");
    CHECK(rc.checkpoint_path == "/tmp/model.ckpt");
    CHECK(rc.report_path == "/tmp/report.json");
    CHECK(rc.embedder == "reference");

    CHECK(parse_run_config("").embedder == "reference");  // defaults
    CHECK(parse_run_config("[embedder]\nendpoint = unix:/tmp/e.sock\n").embedder == "unix:/tmp/e.sock");
}

TEST_CASE("typos are hard errors with line numbers") {
    auto expect_error = [](const std::string& text, const char* needle) {
        try {
            parse_run_config(text);
            FAIL("expected std::invalid_argument for: " << text);
        } catch (const std::invalid_argument& e) {
            INFO(e.what());
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_error("[model]\nd_modle = 16\n", "line 2");
    expect_error("[bogus]\n", "line 1");
    expect_error("[model]\nno equals sign\n", "line 2");
    expect_error("key = before any section\n", "line 1");
    expect_error("[model]\nd_model = sixteen\n", "non-negative integer");
    expect_error("[training]\nlearning_rate = fast\n", "number");
    expect_error("[training]\nunknown_knob = 1\n", "unknown [training] key");
    expect_error("[paths]\nwrong = x\n", "unknown [paths] key");
}

TEST_CASE("load_run_config reads a file; missing files are data errors") {
    const std::string path = "/tmp/promptrec_test_cfg.ini";
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "[training]\nseed = 9\n";
    }
    RunConfig rc = load_run_config(path);
    CHECK(rc.training.seed == 9);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_run_config("/nonexistent/nowhere.ini"), DataError);
}

TEST_CASE("canonical rendering re-parses to the same configuration") {
    RunConfig rc;
    rc.model.d_model = 24;
    rc.training.learning_rate = 3.5e-4;
    rc.training.seed = 1234;
    rc.dataset_path = "/tmp/x.jsonl";
    rc.embedder = "tcp:localhost:9000";
    RunConfig back = parse_run_config(render_run_config(rc));
    CHECK(render_run_config(back) == render_run_config(rc));
    CHECK(back.model.d_model == 24);
    CHECK(back.training.learning_rate == rc.training.learning_rate);  // %.17g is lossless
    CHECK(back.embedder == "tcp:localhost:9000");
}

TEST_CASE("config digest tracks every effective value") {
    RunConfig a, b;
    CHECK(run_config_digest(a) == run_config_digest(b));
    b.training.seed = 1;
    CHECK(run_config_digest(a) != run_config_digest(b));
    b = a;
    b.model.d_ff = 100;
    CHECK(run_config_digest(a) != run_config_digest(b));
    b = a;
    b.dataset_path = "/elsewhere";
    CHECK(run_config_digest(a) != run_config_digest(b));
}
