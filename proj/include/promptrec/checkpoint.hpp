#ifndef PROMPTREC_CHECKPOINT_HPP
#define PROMPTREC_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "promptrec/common.hpp"
#include "promptrec/gemma.hpp"
#include "promptrec/phi2.hpp"
#include "promptrec/tokenizer.hpp"

namespace promptrec {

enum class Stage : std::uint8_t { stage1 = 1, stage2 = 2 };

inline const char* stage_name(Stage s) { return s == Stage::stage1 ? "stage1" : "stage2"; }

// In-memory image of a .ckpt file: everything needed to rebuild both models.
struct Checkpoint {
    std::uint32_t format_version = 1;
    Vocabulary vocab;
    ModelConfig config;
    Stage stage = Stage::stage1;
    std::uint64_t step = 0;
    std::vector<NamedParam> params;  // detached snapshots, in registry order
};

namespace detail {

inline constexpr char kCkptMagic[8] = {'P', 'R', 'C', 'K', 'P', 'T', '0', '1'};

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

// Cursor over a byte buffer; every read is bounds-checked.
struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw DataError("checkpoint truncated at byte " + std::to_string(pos));
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace detail

// Deterministic little-endian serialization; the trailing u64 is the
// FNV-1a digest of every preceding byte.
inline std::string serialize_checkpoint(const Checkpoint& c) {
    std::string out;
    out.append(detail::kCkptMagic, sizeof(detail::kCkptMagic));
    detail::put_u32(out, c.format_version);
    detail::put_u32(out, static_cast<std::uint32_t>(c.vocab.id_to_token.size()));
    for (const std::string& tok : c.vocab.id_to_token) {
        detail::put_u32(out, static_cast<std::uint32_t>(tok.size()));
        out += tok;
    }
    for (std::size_t v : {c.config.d_model, c.config.n_heads, c.config.n_layers, c.config.d_ff,
                          c.config.max_len, c.config.vocab_size})
        detail::put_u64(out, static_cast<std::uint64_t>(v));
    out.push_back(static_cast<char>(c.stage));
    detail::put_u64(out, c.step);
    detail::put_u32(out, static_cast<std::uint32_t>(c.params.size()));
    for (const NamedParam& p : c.params) {
        detail::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out += p.name;
        detail::put_u32(out, static_cast<std::uint32_t>(p.tensor.rank()));
        for (std::size_t d : p.tensor.shape()) detail::put_u64(out, static_cast<std::uint64_t>(d));
        for (double v : p.tensor.data()) detail::put_f64(out, v);
    }
    detail::put_u64(out, fnv1a64(out.data(), out.size()));
    return out;
}

inline std::uint64_t checkpoint_digest(const Checkpoint& c) {
    const std::string bytes = serialize_checkpoint(c);
    detail::ByteReader r{bytes, bytes.size() - 8};
    return r.u64();
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
    const std::string bytes = serialize_checkpoint(c);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("save_checkpoint: cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("save_checkpoint: write to '" + path + "' failed");
}

inline Checkpoint parse_checkpoint(const std::string& bytes) {
    if (bytes.size() < sizeof(detail::kCkptMagic) + 8)
        throw DataError("checkpoint too small to be valid");
    if (bytes.compare(0, sizeof(detail::kCkptMagic), detail::kCkptMagic, sizeof(detail::kCkptMagic)) != 0)
        throw DataError("checkpoint magic mismatch (not a .ckpt file?)");
    {
        detail::ByteReader tail{bytes, bytes.size() - 8};
        const std::uint64_t stored = tail.u64();
        const std::uint64_t actual = fnv1a64(bytes.data(), bytes.size() - 8);
        if (stored != actual)
            throw DataError("checkpoint digest mismatch: stored " + hex64(stored) + ", computed " + hex64(actual));
    }
    detail::ByteReader r{bytes, sizeof(detail::kCkptMagic)};
    Checkpoint c;
    c.format_version = r.u32();
    if (c.format_version != 1)
        throw DataError("unsupported checkpoint format version " + std::to_string(c.format_version));
    const std::uint32_t ntok = r.u32();
    c.vocab.id_to_token.reserve(ntok);
    for (std::uint32_t i = 0; i < ntok; ++i) {
        const std::uint32_t len = r.u32();
        c.vocab.id_to_token.push_back(r.bytes(len));
        c.vocab.token_to_id.emplace(c.vocab.id_to_token.back(), static_cast<int>(i));
    }
    c.config.d_model = static_cast<std::size_t>(r.u64());
    c.config.n_heads = static_cast<std::size_t>(r.u64());
    c.config.n_layers = static_cast<std::size_t>(r.u64());
    c.config.d_ff = static_cast<std::size_t>(r.u64());
    c.config.max_len = static_cast<std::size_t>(r.u64());
    c.config.vocab_size = static_cast<std::size_t>(r.u64());
    const std::uint8_t st = r.u8();
    if (st != 1 && st != 2) throw DataError("checkpoint stage tag " + std::to_string(st) + " invalid");
    c.stage = static_cast<Stage>(st);
    c.step = r.u64();
    const std::uint32_t nparams = r.u32();
    c.params.reserve(nparams);
    for (std::uint32_t i = 0; i < nparams; ++i) {
        const std::uint32_t nlen = r.u32();
        std::string name = r.bytes(nlen);
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > 4) throw DataError("checkpoint parameter '" + name + "' has rank " + std::to_string(rank));
        std::vector<std::size_t> shape;
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape.push_back(static_cast<std::size_t>(r.u64()));
            numel *= shape.back();
        }
        std::vector<double> data(numel);
        for (std::size_t j = 0; j < numel; ++j) data[j] = r.f64();
        c.params.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
    }
    return c;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_checkpoint: cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

// Snapshot both models (parameter values detached from any live graph).
inline Checkpoint make_checkpoint(GemmaModel& gemma, Phi2Model& phi, Stage stage, std::uint64_t step) {
    const ModelConfig& a = gemma.config;
    const ModelConfig& b = phi.config;
    if (a.d_model != b.d_model || a.n_heads != b.n_heads || a.n_layers != b.n_layers || a.d_ff != b.d_ff ||
        a.max_len != b.max_len || a.vocab_size != b.vocab_size)
        throw std::invalid_argument("make_checkpoint: models disagree on configuration");
    Checkpoint c;
    c.vocab = byte_vocab();
    c.config = a;
    c.stage = stage;
    c.step = step;
    std::vector<NamedParam> live;
    collect_params(gemma, "gemma", live);
    collect_params(phi, "phi2", live);
    c.params.reserve(live.size());
    for (NamedParam& p : live) c.params.push_back({p.name, p.tensor.clone_detached()});
    return c;
}

// Rebuild live models from a checkpoint: fresh structures with every
// parameter tensor overwritten from the stored snapshot.
inline std::pair<GemmaModel, Phi2Model> models_from_checkpoint(const Checkpoint& c) {
    Rng scratch(0);  // placeholder values, all overwritten below
    GemmaModel gemma = init_gemma(c.config, scratch);
    Phi2Model phi = init_phi2(c.config, scratch);
    std::vector<NamedParam> live;
    collect_params(gemma, "gemma", live);
    collect_params(phi, "phi2", live);
    std::unordered_map<std::string, Tensor*> by_name;
    for (NamedParam& p : live) by_name.emplace(p.name, &p.tensor);
    if (c.params.size() != live.size())
        throw DataError("checkpoint holds " + std::to_string(c.params.size()) + " parameters, models expect " +
                        std::to_string(live.size()));
    for (const NamedParam& stored : c.params) {
        auto it = by_name.find(stored.name);
        if (it == by_name.end()) throw DataError("checkpoint parameter '" + stored.name + "' is unknown");
        if (it->second->shape() != stored.tensor.shape())
            throw DataError("checkpoint parameter '" + stored.name + "' has shape " +
                            shape_str(stored.tensor.shape()) + ", expected " + shape_str(it->second->shape()));
        it->second->data() = stored.tensor.data();
    }
    return {std::move(gemma), std::move(phi)};
}

}  // namespace promptrec

#endif
