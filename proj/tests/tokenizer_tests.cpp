#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "support/test_util.hpp"
#include "tek/corpus.hpp"
#include "tek/rng.hpp"
#include "tek/tokenizer.hpp"

using namespace tek;

namespace {

CorpusIndex one_sentence_corpus(const std::string& text, const std::string& title = "t") {
    const std::string line = test::page_json("p1", title, {test::sentence_json(text, {})});
    return CorpusIndex::ingest_jsonl(line + "\n", "test");
}

}  // namespace

TEST_CASE("build_vocab keeps frequency-ranked word types plus specials") {
    const CorpusIndex corpus = one_sentence_corpus("a a b", "a");
    const Vocab v = Vocab::build(corpus, 7);
    CHECK(v.size() == 7);
    CHECK(v.contains("a"));
    CHECK(v.contains("b"));
    CHECK(v.id("a") == kNumSpecials);  // most frequent first
    CHECK(v.id("b") == kNumSpecials + 1);
}

TEST_CASE("build_vocab with max_size 5 keeps specials only") {
    const CorpusIndex corpus = one_sentence_corpus("a a b", "a");
    const Vocab v = Vocab::build(corpus, 5);
    CHECK(v.size() == 5);
    CHECK(v.id("a") == kUnkId);
    CHECK(v.id("b") == kUnkId);
    const TokenizedText t = encode("a b c", v);
    for (int id : t.ids) {
        CHECK(id == kUnkId);
    }
}

TEST_CASE("build_vocab ties break lexicographically with room for one") {
    // title "x y" + sentence "x y": both words at frequency 2, one slot
    const CorpusIndex corpus = one_sentence_corpus("x y", "x y");
    const Vocab v = Vocab::build(corpus, 6);
    CHECK(v.size() == 6);
    CHECK(v.contains("x"));
    CHECK(!v.contains("y"));
}

TEST_CASE("build_vocab equal-frequency tie keeps the lexicographically smaller word") {
    // frequencies: q=3 (title + twice), x=1, y=1; max_size leaves room for two
    const std::string line =
        test::page_json("p1", "q", {test::sentence_json("q q x y", {})});
    const CorpusIndex corpus = CorpusIndex::ingest_jsonl(line + "\n", "test");
    const Vocab v = Vocab::build(corpus, 7);
    CHECK(v.size() == 7);
    CHECK(v.contains("q"));
    CHECK(v.contains("x"));
    CHECK(!v.contains("y"));
}

TEST_CASE("encode splits words and punctuation with offsets") {
    const CorpusIndex corpus = one_sentence_corpus("euphrates flows .");
    const Vocab v = Vocab::build(corpus, 100);
    const TokenizedText t = encode("Euphrates flows.", v);
    REQUIRE(t.ids.size() == 3);
    CHECK(v.token(t.ids[0]) == "euphrates");
    CHECK(v.token(t.ids[1]) == "flows");
    CHECK(v.token(t.ids[2]) == ".");
    CHECK(t.offsets[0] == std::pair<int, int>{0, 9});
    CHECK(t.offsets[1] == std::pair<int, int>{10, 15});
    CHECK(t.offsets[2] == std::pair<int, int>{15, 16});
}

TEST_CASE("encode of empty text is empty") {
    const CorpusIndex corpus = one_sentence_corpus("a");
    const Vocab v = Vocab::build(corpus, 100);
    CHECK(encode("", v).ids.empty());
}

TEST_CASE("OOV word becomes a single UNK with correct offsets") {
    const CorpusIndex corpus = one_sentence_corpus("a b");
    const Vocab v = Vocab::build(corpus, 100);
    const TokenizedText t = encode("zzz", v);
    REQUIRE(t.ids.size() == 1);
    CHECK(t.ids[0] == kUnkId);
    CHECK(t.offsets[0] == std::pair<int, int>{0, 3});
}

TEST_CASE("decode joins tokens and omits specials; unknown ids error") {
    const CorpusIndex corpus = one_sentence_corpus("alpha beta .");
    const Vocab v = Vocab::build(corpus, 100);
    const std::vector<int> ids = {kClsId, v.id("alpha"), kSepId, v.id("beta"), kPadId};
    CHECK(decode(ids, v) == "alpha beta");
    CHECK(decode({}, v).empty());
    CHECK_THROWS_AS(decode({static_cast<int>(v.size())}, v), TekError);
}

TEST_CASE("encode(decode(ids)) is the identity on regular token ids") {
    const CorpusIndex corpus =
        one_sentence_corpus("the euphrates river flows through syria and iraq : note .");
    const Vocab v = Vocab::build(corpus, 100);
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const auto ids =
            test::random_token_ids(rng, 1 + rng.below(40), static_cast<int>(v.size()));
        const std::string text = decode(ids, v);
        const TokenizedText round = encode(text, v);
        CHECK(round.ids == ids);
    }
}

TEST_CASE("offsets reconstruct each token's source surface") {
    const CorpusIndex corpus = one_sentence_corpus("alpha beta gamma .");
    const Vocab v = Vocab::build(corpus, 100);
    const std::string text = "Alpha  beta,Gamma.";
    const TokenizedText t = encode(text, v);
    const utf8::Decoded d = utf8::decode(text);
    int prev_end = 0;
    for (size_t i = 0; i < t.ids.size(); ++i) {
        const auto [s, e] = t.offsets[i];
        CHECK(s >= prev_end);
        CHECK(s < e);
        prev_end = e;
        std::string surface = utf8::slice(text, d, static_cast<size_t>(s),
                                          static_cast<size_t>(e));
        for (auto& c : surface) {
            if (c >= 'A' && c <= 'Z') {
                c = static_cast<char>(c + 32);
            }
        }
        if (t.ids[i] != kUnkId) {
            CHECK(surface == v.token(t.ids[i]));
        }
    }
}

TEST_CASE("encode is pure: identical inputs give identical outputs") {
    const CorpusIndex corpus = one_sentence_corpus("a b c d");
    const Vocab v = Vocab::build(corpus, 100);
    const TokenizedText a = encode("a b, c. d", v);
    const TokenizedText b = encode("a b, c. d", v);
    CHECK(a.ids == b.ids);
    CHECK(a.offsets == b.offsets);
}

TEST_CASE("vocab file round-trips with line number = id - 5") {
    const CorpusIndex corpus = one_sentence_corpus("b b a c");
    const Vocab v = Vocab::build(corpus, 100);
    const std::string path = "vocab_roundtrip_test.txt";
    v.save(path);
    std::ifstream in(path);
    std::string first_line;
    std::getline(in, first_line);
    CHECK(first_line == v.token(kNumSpecials));
    const Vocab loaded = Vocab::load(path);
    CHECK(loaded.size() == v.size());
    for (int id = 0; id < static_cast<int>(v.size()); ++id) {
        CHECK(loaded.token(id) == v.token(id));
    }
    std::remove(path.c_str());
}

TEST_CASE("utf8 offsets are scalar-value indices") {
    const CorpusIndex corpus = one_sentence_corpus("caf\xc3\xa9 time");
    const Vocab v = Vocab::build(corpus, 100);
    const TokenizedText t = encode("caf\xc3\xa9 time", v);
    REQUIRE(t.ids.size() == 2);
    CHECK(t.offsets[0] == std::pair<int, int>{0, 4});  // 4 codepoints, 5 bytes
    CHECK(t.offsets[1] == std::pair<int, int>{5, 9});
    CHECK(v.token(t.ids[0]) == "caf\xc3\xa9");
}
