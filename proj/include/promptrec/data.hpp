#ifndef PROMPTREC_DATA_HPP
#define PROMPTREC_DATA_HPP

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptrec/common.hpp"

namespace promptrec {

struct RewriteRecord {
    std::string original_text;
    std::string rewrite_prompt;  // empty on inference-only records
    std::string rewrite_text;
};

struct RejectedLine {
    std::size_t line_number = 0;  // 1-based
    std::string reason;
};

namespace detail {

// Drops one leading enumeration marker ("1.", "23)", "-", "*") if the line
// starts with one; returns whether anything was removed.
inline bool strip_one_marker(std::string& line) {
    std::size_t i = 0;
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
    std::size_t end;  // one past the marker body
    if (j > i && j < line.size() && (line[j] == '.' || line[j] == ')')) {
        end = j + 1;
    } else if (i < line.size() && (line[i] == '-' || line[i] == '*')) {
        end = i + 1;
    } else {
        return false;
    }
    // A marker must be followed by whitespace or end the line, so "3.14"
    // and "-5" survive untouched.
    if (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) return false;
    line.erase(0, end);
    return true;
}

}  // namespace detail

// Normalizes raw dataset text: repeatedly strips enumeration markers at line
// starts, then collapses every whitespace run to a single space and trims.
// Idempotent, and never produces a longer string than its input.
inline std::string preprocess(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    lines.push_back(cur);

    std::string joined;
    for (std::string& line : lines) {
        while (detail::strip_one_marker(line)) {
        }
        if (!joined.empty()) joined.push_back(' ');
        joined += line;
    }

    std::string out;
    out.reserve(joined.size());
    bool in_space = true;  // swallow leading whitespace
    for (char c : joined) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out.push_back(' ');
            in_space = false;
            out.push_back(c);
        }
    }
    return out;
}

// Reads a line-delimited structured-text dataset. Lines that fail to parse
// or hold empty text after preprocessing are rejected (reported once each,
// with their 1-based line number); blank lines are skipped. A file yielding
// zero valid records is an error.
inline std::vector<RewriteRecord> load_dataset(const std::string& path,
                                               std::vector<RejectedLine>* rejected_out = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_dataset: cannot open '" + path + "'");
    std::vector<RewriteRecord> records;
    std::vector<RejectedLine> rejected;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded() || !j.is_object()) {
            rejected.push_back({lineno, "not a well-formed object"});
            continue;
        }
        RewriteRecord rec;
        bool bad = false;
        for (const char* key : {"original_text", "rewrite_text"}) {
            if (!j.contains(key) || !j[key].is_string()) {
                rejected.push_back({lineno, std::string("missing or non-text field '") + key + "'"});
                bad = true;
                break;
            }
        }
        if (bad) continue;
        rec.original_text = preprocess(j["original_text"].get<std::string>());
        rec.rewrite_text = preprocess(j["rewrite_text"].get<std::string>());
        if (j.contains("rewrite_prompt")) {
            if (!j["rewrite_prompt"].is_string()) {
                rejected.push_back({lineno, "non-text field 'rewrite_prompt'"});
                continue;
            }
            rec.rewrite_prompt = j["rewrite_prompt"].get<std::string>();
        }
        if (rec.original_text.empty()) {
            rejected.push_back({lineno, "empty original_text after preprocessing"});
            continue;
        }
        if (rec.rewrite_text.empty()) {
            rejected.push_back({lineno, "empty rewrite_text after preprocessing"});
            continue;
        }
        records.push_back(std::move(rec));
    }
    if (records.empty())
        throw DataError("load_dataset: '" + path + "' holds no valid records (" +
                        std::to_string(rejected.size()) + " rejected lines)");
    if (rejected_out) *rejected_out = std::move(rejected);
    return records;
}

// ---- prompt templates ----

struct PromptTemplate {
    std::string name;
    std::string pattern;  // may reference {original} and {rewritten}, each at most once
};

namespace detail {

inline std::size_t count_occurrences(const std::string& s, const std::string& needle) {
    std::size_t n = 0, pos = 0;
    while ((pos = s.find(needle, pos)) != std::string::npos) {
        ++n;
        pos += needle.size();
    }
    return n;
}

}  // namespace detail

// Substitutes {original} and {rewritten} from the record. Any other
// {word} token in the pattern is an unresolved placeholder.
inline std::string construct_prompt(const PromptTemplate& tmpl, const RewriteRecord& rec) {
    for (const char* ph : {"{original}", "{rewritten}"})
        if (detail::count_occurrences(tmpl.pattern, ph) > 1)
            throw DataError("construct_prompt: template '" + tmpl.name + "' repeats placeholder " + ph);
    std::size_t scan = 0;
    while ((scan = tmpl.pattern.find('{', scan)) != std::string::npos) {
        const std::size_t close = tmpl.pattern.find('}', scan);
        if (close == std::string::npos) break;  // a lone brace is literal text
        const std::string token = tmpl.pattern.substr(scan, close - scan + 1);
        if (token != "{original}" && token != "{rewritten}")
            throw DataError("construct_prompt: template '" + tmpl.name + "' has unresolved placeholder " + token);
        scan = close + 1;
    }
    std::string out = tmpl.pattern;
    auto substitute = [&out](const std::string& ph, const std::string& value) {
        const std::size_t pos = out.find(ph);
        if (pos != std::string::npos) out.replace(pos, ph.size(), value);
    };
    substitute("{original}", rec.original_text);
    substitute("{rewritten}", rec.rewrite_text);
    return out;
}

// Template file: plain text holding the pattern; the name is the file stem.
inline PromptTemplate load_template(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_template: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    PromptTemplate t;
    t.pattern = ss.str();
    while (!t.pattern.empty() && (t.pattern.back() == '\n' || t.pattern.back() == '\r')) t.pattern.pop_back();
    std::size_t slash = path.find_last_of("/\\");
    std::string base = (slash == std::string::npos) ? path : path.substr(slash + 1);
    std::size_t dot = base.find_last_of('.');
    t.name = (dot == std::string::npos) ? base : base.substr(0, dot);
    return t;
}

}  // namespace promptrec

#endif
