#ifndef PROMPTREC_TOKENIZER_HPP
#define PROMPTREC_TOKENIZER_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "promptrec/common.hpp"
#include "promptrec/tensor.hpp"

namespace promptrec {

// Byte-level vocabulary: five reserved specials at ids 0..4, then all 256
// byte values at ids 5..260. No merges, so round trips are lossless.
struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kSep = 3;
    static constexpr int kUnk = 4;
    static constexpr int kByteOffset = 5;

    std::unordered_map<std::string, int> token_to_id;
    std::vector<std::string> id_to_token;

    int size() const { return static_cast<int>(id_to_token.size()); }
    bool is_special(int id) const { return id >= 0 && id < kByteOffset; }
};

struct TokenSequence {
    std::vector<int> ids;

    TokenSequence() = default;
    explicit TokenSequence(std::vector<int> v) : ids(std::move(v)) {}

    std::size_t size() const { return ids.size(); }
    bool empty() const { return ids.empty(); }
    int operator[](std::size_t i) const { return ids[i]; }
};

inline Vocabulary build_vocab(const std::vector<std::string>& corpus) {
    if (corpus.empty()) throw DataError("build_vocab: corpus is empty");
    Vocabulary v;
    v.id_to_token = {"<pad>", "<bos>", "<eos>", "<sep>", "<unk>"};
    v.id_to_token.reserve(261);
    for (int b = 0; b < 256; ++b)
        v.id_to_token.push_back(std::string(1, static_cast<char>(static_cast<unsigned char>(b))));
    for (int i = 0; i < static_cast<int>(v.id_to_token.size()); ++i)
        v.token_to_id.emplace(v.id_to_token[static_cast<std::size_t>(i)], i);
    return v;
}

// Specials are never emitted: every byte maps to its own content token.
inline TokenSequence encode(const Vocabulary&, const std::string& text) {
    TokenSequence t;
    t.ids.reserve(text.size());
    for (unsigned char c : text) t.ids.push_back(Vocabulary::kByteOffset + static_cast<int>(c));
    return t;
}

// Inverse of encode on content tokens; special ids are skipped so padded or
// framed sequences decode to the plain text.
inline std::string decode(const Vocabulary& v, const TokenSequence& t) {
    std::string out;
    out.reserve(t.size());
    for (int id : t.ids) {
        if (id < 0 || id >= v.size())
            throw DataError("decode: token id " + std::to_string(id) + " out of range for vocabulary of size " +
                            std::to_string(v.size()));
        if (v.is_special(id)) continue;
        out.push_back(static_cast<char>(static_cast<unsigned char>(id - Vocabulary::kByteOffset)));
    }
    return out;
}

struct EmbeddingTable {
    Tensor table;  // [vocab_size x d_model]

    EmbeddingTable() = default;
    EmbeddingTable(std::size_t vocab_size, std::size_t d_model)
        : table(Tensor({vocab_size, d_model}, 0.0, true)) {}

    std::size_t vocab_size() const { return table.rows(); }
    std::size_t d_model() const { return table.cols(); }
};

// Row gather: out[i] = table[t[i]]. Backward scatter-adds into the touched
// rows, so repeated ids accumulate every position's gradient.
inline Tensor embed(const EmbeddingTable& tab, const TokenSequence& t) {
    const std::size_t len = t.size(), d = tab.d_model(), vs = tab.vocab_size();
    if (len == 0) throw DataError("embed: empty token sequence");
    std::vector<double> out(len * d);
    for (std::size_t i = 0; i < len; ++i) {
        const int id = t.ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= vs)
            throw DataError("embed: token id " + std::to_string(id) + " out of range for table with " +
                            std::to_string(vs) + " rows");
        const double* src = tab.table.data().data() + static_cast<std::size_t>(id) * d;
        std::copy(src, src + d, out.data() + i * d);
    }
    std::vector<int> ids = t.ids;
    return detail::make_op({len, d}, std::move(out), {tab.table}, [d, ids = std::move(ids)](detail::Node& self) {
        detail::Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            double* dst = p->grad.data() + static_cast<std::size_t>(ids[i]) * d;
            const double* src = self.grad.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
}

}  // namespace promptrec

#endif
