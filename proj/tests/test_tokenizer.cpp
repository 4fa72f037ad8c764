#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "oracles.hpp"
#include "promptrec/tensor.hpp"
#include "promptrec/tokenizer.hpp"

using namespace promptrec;

TEST_CASE("vocabulary layout: five specials then all bytes") {
    Vocabulary v = build_vocab({"abc"});
    CHECK(v.size() == 261);
    CHECK(Vocabulary::kPad == 0);
    CHECK(Vocabulary::kBos == 1);
    CHECK(Vocabulary::kEos == 2);
    CHECK(Vocabulary::kSep == 3);
    CHECK(Vocabulary::kUnk == 4);
    CHECK(v.is_special(0));
    CHECK(v.is_special(4));
    CHECK_FALSE(v.is_special(5));
    CHECK_FALSE(v.is_special(260));
    CHECK_THROWS_AS(build_vocab({}), DataError);
}

TEST_CASE("encode maps bytes to offset ids") {
    Vocabulary v = build_vocab({""});
    TokenSequence t = encode(v, "Ab");
    REQUIRE(t.size() == 2);
    CHECK(t.ids[0] == Vocabulary::kByteOffset + 'A');
    CHECK(t.ids[1] == Vocabulary::kByteOffset + 'b');
    CHECK(encode(v, "").empty());
}

TEST_CASE("decode inverts encode and skips special ids") {
    Vocabulary v = build_vocab({""});
    CHECK(decode(v, encode(v, "hello, world")) == "hello, world");

    TokenSequence with_specials(std::vector<int>{Vocabulary::kBos, Vocabulary::kByteOffset + 'x',
                                                 Vocabulary::kSep, Vocabulary::kByteOffset + 'y',
                                                 Vocabulary::kEos});
    CHECK(decode(v, with_specials) == "xy");
}

TEST_CASE("round trip is lossless over random byte strings") {
    Vocabulary v = build_vocab({""});
    Rng rng(42);
    for (int iter = 0; iter < 2000; ++iter) {
        const std::size_t len = rng.below(64);
        std::string s;
        for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<char>(rng.below(256)));
        CHECK(decode(v, encode(v, s)) == s);
    }
    // multi-byte sequences survive byte-level splitting
    const std::string emoji = "caf\xC3\xA9 \xF0\x9F\x99\x82";
    CHECK(decode(v, encode(v, emoji)) == emoji);
}

TEST_CASE("embedding gather selects rows and scatters gradients") {
    Rng rng(7);
    EmbeddingTable tab(10, 4);
    tab.table = oracle::random_tensor({10, 4}, rng);

    TokenSequence t(std::vector<int>{3, 7, 3});  // repeated id accumulates
    Tensor e = embed(tab, t);
    REQUIRE(e.shape() == std::vector<std::size_t>({3, 4}));
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(e.at(0, j) == tab.table.at(3, j));
        CHECK(e.at(1, j) == tab.table.at(7, j));
        CHECK(e.at(2, j) == tab.table.at(3, j));
    }

    tab.table.zero_grad();
    Tensor mixer = oracle::random_tensor({3, 4}, rng);
    backward(sum(matmul_nt(embed(tab, t), mixer)));
    Rng probe(8);
    auto value = [&] {
        NoGradGuard ng;
        return sum(matmul_nt(embed(tab, t), mixer)).item();
    };
    auto res = oracle::fd_check_tensor(value, tab.table, probe, 40);
    INFO("max relative error " << res.max_rel);
    CHECK(res.max_rel < 1e-5);

    CHECK_THROWS_AS(embed(tab, TokenSequence(std::vector<int>{10})), DataError);
    CHECK_THROWS_AS(embed(tab, TokenSequence(std::vector<int>{-1})), DataError);
}
