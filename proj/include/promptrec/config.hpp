#ifndef PROMPTREC_CONFIG_HPP
#define PROMPTREC_CONFIG_HPP

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "promptrec/common.hpp"
#include "promptrec/gemma.hpp"
#include "promptrec/training.hpp"

namespace promptrec {

// Tool-level configuration: sectioned key-value file, overridable by flags.
struct RunConfig {
    ModelConfig model;
    TrainingConfig training;
    std::string dataset_path;
    std::string checkpoint_path;
    std::string report_path;
    std::string embedder = "reference";  // "reference" or a unix:/tcp: endpoint
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return static_cast<std::size_t>(v);
    } catch (...) {
        throw std::invalid_argument("config: key '" + key + "' needs a non-negative integer, got '" + value + "'");
    }
}

inline double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::invalid_argument("config: key '" + key + "' needs a number, got '" + value + "'");
    }
}

}  // namespace detail

// Parses the sectioned key = value format. Unknown sections or keys are
// errors so typos cannot silently fall back to defaults.
inline RunConfig parse_run_config(const std::string& text) {
    RunConfig rc;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = t.substr(1, t.size() - 2);
            if (section != "model" && section != "training" && section != "paths" && section != "embedder")
                throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown section [" +
                                            section + "]");
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        if (section == "model") {
            if (key == "d_model") rc.model.d_model = detail::parse_size(key, value);
            else if (key == "n_heads") rc.model.n_heads = detail::parse_size(key, value);
            else if (key == "n_layers") rc.model.n_layers = detail::parse_size(key, value);
            else if (key == "d_ff") rc.model.d_ff = detail::parse_size(key, value);
            else if (key == "max_len") rc.model.max_len = detail::parse_size(key, value);
            else throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown [model] key '" + key + "'");
        } else if (section == "training") {
            if (key == "seed") rc.training.seed = detail::parse_size(key, value);
            else if (key == "learning_rate") rc.training.learning_rate = detail::parse_real(key, value);
            else if (key == "batch_size") rc.training.batch_size = detail::parse_size(key, value);
            else if (key == "steps_stage1") rc.training.steps_stage1 = detail::parse_size(key, value);
            else if (key == "steps_stage2") rc.training.steps_stage2 = detail::parse_size(key, value);
            else if (key == "composite_weight") rc.training.composite_weight = detail::parse_real(key, value);
            else if (key == "beta1") rc.training.beta1 = detail::parse_real(key, value);
            else if (key == "beta2") rc.training.beta2 = detail::parse_real(key, value);
            else if (key == "epsilon") rc.training.epsilon = detail::parse_real(key, value);
            else if (key == "clip_norm") rc.training.clip_norm = detail::parse_real(key, value);
            else throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown [training] key '" + key + "'");
        } else if (section == "paths") {
            if (key == "dataset") rc.dataset_path = value;
            else if (key == "checkpoint") rc.checkpoint_path = value;
            else if (key == "report") rc.report_path = value;
            else throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown [paths] key '" + key + "'");
        } else if (section == "embedder") {
            if (key == "kind" || key == "endpoint") rc.embedder = value;
            else throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown [embedder] key '" + key + "'");
        } else {
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": key outside any section");
        }
    }
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

// Canonical rendering of the effective configuration; every command stamps
// its digest into output metadata.
inline std::string render_run_config(const RunConfig& rc) {
    char buf[512];
    std::string out;
    std::snprintf(buf, sizeof(buf),
                  "[model]\nd_model = %zu\nn_heads = %zu\nn_layers = %zu\nd_ff = %zu\nmax_len = %zu\n",
                  rc.model.d_model, rc.model.n_heads, rc.model.n_layers, rc.model.d_ff, rc.model.max_len);
    out += buf;
    std::snprintf(buf, sizeof(buf),
                  "[training]\nseed = %llu\nlearning_rate = %.17g\nbatch_size = %zu\nsteps_stage1 = %zu\n"
                  "steps_stage2 = %zu\ncomposite_weight = %.17g\nbeta1 = %.17g\nbeta2 = %.17g\n"
                  "epsilon = %.17g\nclip_norm = %.17g\n",
                  static_cast<unsigned long long>(rc.training.seed), rc.training.learning_rate,
                  rc.training.batch_size, rc.training.steps_stage1, rc.training.steps_stage2,
                  rc.training.composite_weight, rc.training.beta1, rc.training.beta2, rc.training.epsilon,
                  rc.training.clip_norm);
    out += buf;
    out += "[paths]\ndataset = " + rc.dataset_path + "\ncheckpoint = " + rc.checkpoint_path +
           "\nreport = " + rc.report_path + "\n";
    out += "[embedder]\nkind = " + rc.embedder + "\n";
    return out;
}

inline std::string run_config_digest(const RunConfig& rc) { return hex64(fnv1a64(render_run_config(rc))); }

}  // namespace promptrec

#endif
