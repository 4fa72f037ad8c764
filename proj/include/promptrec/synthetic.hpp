#ifndef PROMPTREC_SYNTHETIC_HPP
#define PROMPTREC_SYNTHETIC_HPP

#include <array>
#include <cctype>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "promptrec/common.hpp"
#include "promptrec/data.hpp"
#include "promptrec/rng.hpp"

namespace promptrec {

// Fixed 200-word lexicon for seeded base-text generation.
inline constexpr std::array<const char*, 200> kLexicon = {
    "time",       "year",     "people",   "way",     "day",        "man",          "thing",     "woman",
    "life",       "child",    "world",    "school",  "state",      "family",       "student",   "group",
    "country",    "problem",  "hand",     "part",    "place",      "case",         "week",      "company",
    "system",     "program",  "question", "work",    "night",      "point",        "home",      "water",
    "room",       "mother",   "area",     "money",   "story",      "fact",         "month",     "lot",
    "right",      "study",    "book",     "eye",     "job",        "word",         "business",  "issue",
    "side",       "kind",     "head",     "house",   "service",    "friend",       "father",    "power",
    "hour",       "game",     "line",     "end",     "member",     "law",          "car",       "city",
    "community",  "name",     "president", "team",   "minute",     "idea",         "body",      "information",
    "back",       "parent",   "face",     "others",  "level",      "office",       "door",      "health",
    "person",     "art",      "war",      "history", "party",      "result",       "change",    "morning",
    "reason",     "research", "girl",     "guy",     "moment",     "air",          "teacher",   "force",
    "education",  "foot",     "boy",      "age",     "policy",     "process",      "music",     "market",
    "sense",      "nation",   "plan",     "college", "interest",   "death",        "experience", "effect",
    "use",        "class",    "control",  "care",    "field",      "development",  "role",      "effort",
    "rate",       "heart",    "drug",     "show",    "leader",     "light",        "voice",     "wife",
    "police",     "mind",     "price",    "report",  "decision",   "son",          "view",      "relationship",
    "town",       "road",     "arm",      "difference", "value",   "building",     "action",    "model",
    "season",     "society",  "tax",      "director", "position",  "player",       "record",    "paper",
    "space",      "ground",   "form",     "event",   "official",   "matter",       "center",    "couple",
    "site",       "project",  "activity", "star",    "table",      "need",         "court",     "produce",
    "american",   "oil",      "situation", "cost",   "industry",   "figure",       "street",    "image",
    "phase",      "phone",    "data",     "picture", "practice",   "piece",        "land",      "product",
    "doctor",     "wall",     "patient",  "worker",  "news",       "test",         "movie",     "north",
    "love",       "support",  "technology", "step",  "baby",       "computer",     "type",      "attention"};

// Informal keyword -> formal replacement; both sides are disjoint from the
// lexicon so the transformation always changes the text.
inline const std::vector<std::pair<std::string, std::string>>& formalize_map() {
    static const std::vector<std::pair<std::string, std::string>> m = {
        {"kinda", "somewhat"}, {"stuff", "material"},      {"gonna", "going to"},
        {"lots", "numerous"},  {"okay", "acceptable"},     {"big", "substantial"}};
    return m;
}

inline const std::vector<std::string>& synthetic_families() {
    static const std::vector<std::string> f = {"uppercase", "word_reverse", "emoji_append", "keyword_formalize"};
    return f;
}

// The fixed instruction text each family's records carry as ground truth.
inline std::string family_prompt(const std::string& family) {
    if (family == "uppercase") return "Rewrite the text in uppercase.";
    if (family == "word_reverse") return "Reverse the order of the words in the text.";
    if (family == "emoji_append") return "Append a smiley emoji to the end of the text.";
    if (family == "keyword_formalize") return "Replace informal words with formal alternatives.";
    throw DataError("unknown transformation family '" + family + "'");
}

struct SyntheticSpec {
    std::vector<std::string> families = synthetic_families();
    std::size_t samples_per_family = 8;
    std::size_t min_words = 3;
    std::size_t max_words = 8;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

inline std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out.push_back(' ');
        out += words[i];
    }
    return out;
}

inline std::string apply_family(const std::string& family, const std::string& base) {
    if (family == "uppercase") {
        std::string out = base;
        for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        return out;
    }
    if (family == "word_reverse") {
        std::vector<std::string> words = split_words(base);
        std::vector<std::string> rev(words.rbegin(), words.rend());
        return join_words(rev);
    }
    if (family == "emoji_append") return base + " \xF0\x9F\x99\x82";  // U+1F642
    if (family == "keyword_formalize") {
        std::vector<std::string> words = split_words(base);
        for (std::string& w : words)
            for (const auto& [informal, formal] : formalize_map())
                if (w == informal) {
                    w = formal;
                    break;
                }
        return join_words(words);
    }
    throw DataError("unknown transformation family '" + family + "'");
}

}  // namespace detail

// Rule-based corpus: seeded word salad plus the family's exact
// transformation, so every record's prompt is true by construction.
inline std::vector<RewriteRecord> generate_synthetic_corpus(const SyntheticSpec& spec) {
    if (spec.families.empty()) throw DataError("generate_synthetic_corpus: no families selected");
    if (spec.samples_per_family == 0) throw DataError("generate_synthetic_corpus: samples_per_family must be >= 1");
    if (spec.min_words == 0 || spec.max_words < spec.min_words)
        throw DataError("generate_synthetic_corpus: bad word-count range");
    for (const std::string& f : spec.families) family_prompt(f);  // validate names up front

    Rng rng(spec.seed);
    std::vector<RewriteRecord> out;
    out.reserve(spec.families.size() * spec.samples_per_family);
    for (const std::string& family : spec.families) {
        for (std::size_t s = 0; s < spec.samples_per_family; ++s) {
            const std::size_t n = spec.min_words + rng.below(spec.max_words - spec.min_words + 1);
            std::vector<std::string> words;
            words.reserve(n + 1);
            for (std::size_t i = 0; i < n; ++i)
                words.push_back(kLexicon[static_cast<std::size_t>(rng.below(kLexicon.size()))]);
            if (family == "keyword_formalize") {
                // Guarantee at least one informal keyword to replace.
                const auto& m = formalize_map();
                const std::string& kw = m[static_cast<std::size_t>(rng.below(m.size()))].first;
                words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.below(words.size() + 1)), kw);
            }
            RewriteRecord rec;
            rec.original_text = detail::join_words(words);
            rec.rewrite_prompt = family_prompt(family);
            rec.rewrite_text = detail::apply_family(family, rec.original_text);
            out.push_back(std::move(rec));
        }
    }
    return out;
}

// Line-delimited serialization matching load_dataset's schema.
inline std::string to_jsonl(const std::vector<RewriteRecord>& records) {
    std::string out;
    for (const RewriteRecord& r : records) {
        nlohmann::json j;
        j["original_text"] = r.original_text;
        j["rewrite_prompt"] = r.rewrite_prompt;
        j["rewrite_text"] = r.rewrite_text;
        out += j.dump();
        out.push_back('\n');
    }
    return out;
}

}  // namespace promptrec

#endif
