#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "parlab/corpus.hpp"
#include "parlab/rng.hpp"

using namespace parlab;

TEST_CASE("tokenize basics") {
    CHECK(tokenize("") == TokenSeq{vocab::EOS});
    CHECK(tokenize("ab") == TokenSeq{97, 98, vocab::EOS});
    CHECK(tokenize("a\n\nb") == TokenSeq{'a', vocab::EOS, 'b', vocab::EOS});
    // no raw-text token is ever the MASK sentinel
    for (int id : tokenize("hello\n\nworld\n"))
        CHECK(id != vocab::MASK);
}

TEST_CASE("tokenize/detokenize round-trip") {
    Rng rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
        size_t len = rng.uniform_int(200);
        std::string s;
        for (size_t i = 0; i < len; ++i) {
            // bias toward newlines so document boundaries are exercised
            uint64_t r = rng.uniform_int(10);
            s.push_back(r < 3 ? '\n' : (char)(unsigned char)rng.uniform_int(256));
        }
        CAPTURE(trial);
        CHECK(detokenize(tokenize(s)) == s);
    }
}

TEST_CASE("detokenize rejects MASK") {
    CHECK_THROWS_AS(detokenize(TokenSeq{97, vocab::MASK}), std::invalid_argument);
}

TEST_CASE("build_chunks") {
    TokenSeq ten(10, 7);
    auto c = build_chunks(ten, 4);
    REQUIRE(c.size() == 2);
    CHECK(c[0].size() == 4);
    CHECK(build_chunks(TokenSeq(8, 1), 4).size() == 2);
    CHECK(build_chunks(TokenSeq(3, 1), 4).empty());
    CHECK_THROWS_AS(build_chunks(ten, 1), std::invalid_argument);

    // order preserved, non-overlapping
    TokenSeq ramp;
    for (int i = 0; i < 12; ++i) ramp.push_back(i % 256);
    auto r = build_chunks(ramp, 5);
    REQUIRE(r.size() == 2);
    CHECK(r[0] == TokenSeq{0, 1, 2, 3, 4});
    CHECK(r[1] == TokenSeq{5, 6, 7, 8, 9});
}

TEST_CASE("split takes final chunks") {
    auto mk = [](size_t n) {
        std::vector<TokenSeq> chunks;
        for (size_t i = 0; i < n; ++i) chunks.push_back(TokenSeq{(int)(i % 256), 0});
        return chunks;
    };
    auto s = split(mk(100), 0.05);
    CHECK(s.train_chunks.size() == 95);
    CHECK(s.val_chunks.size() == 5);
    CHECK(s.val_chunks.front()[0] == 95); // exactly the final chunks, in order

    auto s40 = split(mk(40), 0.05);
    CHECK(s40.train_chunks.size() == 38);
    CHECK(s40.val_chunks.size() == 2);

    CHECK_THROWS_AS(split(mk(1), 0.05), std::invalid_argument); // degenerate: no train left
    CHECK_THROWS_AS(split(mk(10), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(split(mk(10), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(split({}, 0.05), std::invalid_argument);
}

TEST_CASE("chunk file round-trip") {
    Rng rng(7);
    std::vector<TokenSeq> chunks;
    for (int i = 0; i < 20; ++i) {
        TokenSeq c(16);
        for (auto& id : c) id = (int)rng.uniform_int(vocab::SIZE);
        chunks.push_back(std::move(c));
    }
    auto path = std::filesystem::temp_directory_path() / "parlab_chunks_test.bin";
    write_chunk_file(path.string(), chunks, 16);
    CHECK(read_chunk_file(path.string()) == chunks);
    std::filesystem::remove(path);
}
