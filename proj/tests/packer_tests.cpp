#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support/test_util.hpp"
#include "tek/metrics.hpp"
#include "tek/packer.hpp"
#include "tek/rng.hpp"

using namespace tek;

namespace {

Vocab word_vocab() {
    return Vocab::from_tokens({"who",   "likes",  "the",  "euphrates", "river", "rises",
                               "in",    "turkey", "and",  "flows",     "south", ":",
                               "syria", "iraq",   "joins", "tigris",   ".",     ",",
                               "a",     "b",      "c",    "d",         "e",     "source",
                               "of",    "wins",   "prize"});
}

std::vector<int> ids_of(const Vocab& v, const std::string& text) {
    return encode(text, v).ids;
}

Background make_bg(const Vocab& v, const std::string& formatted, int score = 1) {
    Background bg;
    bg.entity_title = "t";
    bg.sentence = {"p", 0};
    bg.score = score;
    bg.formatted_tokens = ids_of(v, formatted);
    return bg;
}

PackConfig small_cfg(int total, int n_c, int stride = 4) {
    PackConfig cfg;
    cfg.total_len = total;
    cfg.n_c = n_c;
    cfg.n_b = total - n_c;
    cfg.stride = stride;
    return cfg;
}

}  // namespace

TEST_CASE("PackConfig validation") {
    PackConfig ok;
    ok.validate();
    PackConfig bad = ok;
    bad.n_b = 100;
    CHECK_THROWS_AS(bad.validate(), TekError);
    bad = ok;
    bad.stride = 0;
    CHECK_THROWS_AS(bad.validate(), TekError);
    bad = ok;
    bad.stride = ok.n_c + 1;
    CHECK_THROWS_AS(bad.validate(), TekError);
}

TEST_CASE("pack_rc lays out CLS q SEP p SEP then backgrounds") {
    const Vocab v = word_vocab();
    const auto q = ids_of(v, "who likes the euphrates");
    const auto p = ids_of(v, "the euphrates rises in turkey");
    const std::vector<Background> bgs = {make_bg(v, "euphrates : flows south", 5),
                                         make_bg(v, "tigris : joins iraq", 3)};
    const PackConfig cfg = small_cfg(32, 16);
    const PackedInput out = pack_rc(q, p, bgs, cfg);
    REQUIRE(out.ids.size() == 32);
    CHECK(out.ids[0] == kClsId);
    CHECK(out.regions.question == std::pair<int, int>{1, 5});
    CHECK(out.ids[5] == kSepId);
    CHECK(out.regions.passage == std::pair<int, int>{6, 11});
    CHECK(out.ids[11] == kSepId);
    CHECK(out.regions.context_len == 12);
    REQUIRE(out.regions.backgrounds.size() == 2);
    CHECK(out.regions.backgrounds[0].first == 12);
    CHECK(out.ids[static_cast<size_t>(out.regions.backgrounds[0].second)] == kSepId);
    CHECK(test::packed_violation(out, cfg, true) == std::nullopt);
    // round-trip the background region text
    const auto [b0, e0] = out.regions.backgrounds[0];
    const std::vector<int> bg_ids(out.ids.begin() + b0, out.ids.begin() + e0);
    CHECK(decode(bg_ids, v) == "euphrates : flows south");
}

TEST_CASE("pack_rc with no backgrounds pads the background region") {
    const Vocab v = word_vocab();
    const PackConfig cfg = small_cfg(24, 12);
    const PackedInput out = pack_rc(ids_of(v, "a b"), ids_of(v, "c d e"), {}, cfg);
    CHECK(out.regions.backgrounds.empty());
    for (size_t i = static_cast<size_t>(out.regions.context_len); i < out.ids.size(); ++i) {
        CHECK(out.ids[i] == kPadId);
    }
    CHECK(test::packed_violation(out, cfg, true) == std::nullopt);
}

TEST_CASE("greedy fitting skips oversize backgrounds and keeps trying") {
    const Vocab v = word_vocab();
    // budget 10; formatted lengths 12, 6, 5 -> only the 6-token one fits
    std::vector<Background> bgs = {
        make_bg(v, "a b c d e syria iraq turkey south flows joins river"),  // 12
        make_bg(v, "a : b c d e"),                                          // 6
        make_bg(v, "tigris : joins iraq ."),                                // 5
    };
    REQUIRE(bgs[0].formatted_tokens.size() == 12);
    REQUIRE(bgs[1].formatted_tokens.size() == 6);
    REQUIRE(bgs[2].formatted_tokens.size() == 5);
    const PackConfig cfg = small_cfg(22, 12);
    REQUIRE(cfg.n_b == 10);
    const PackedInput out = pack_rc(ids_of(v, "a"), ids_of(v, "b"), bgs, cfg);
    REQUIRE(out.regions.backgrounds.size() == 1);
    const auto [b0, e0] = out.regions.backgrounds[0];
    CHECK(e0 - b0 == 6);
    CHECK(test::packed_violation(out, cfg, true) == std::nullopt);
}

TEST_CASE("an over-long question is an error") {
    const Vocab v = word_vocab();
    const PackConfig cfg = small_cfg(16, 8);
    const auto q = ids_of(v, "a b c d e who likes");  // 7 > 8 - 3
    CHECK_THROWS_WITH_AS(pack_rc(q, {}, {}, cfg), doctest::Contains("question too long"),
                         TekError);
}

TEST_CASE("sliding_windows covers a 600-token document in exactly 3 windows") {
    // capacity W = n_c - q_len - 3 = 384: the 600/384/128 worked example
    PackConfig cfg;
    cfg.total_len = 512;
    cfg.n_c = 390;
    cfg.n_b = 122;
    cfg.stride = 128;
    std::vector<int> doc(600);
    for (size_t i = 0; i < doc.size(); ++i) {
        doc[i] = kNumSpecials + static_cast<int>(i % 50);
    }
    const auto windows = sliding_windows(doc, 3, cfg);
    REQUIRE(windows.size() == 3);
    CHECK(windows[0].start == 0);
    CHECK(windows[1].start == 128);
    CHECK(windows[2].start == 256);
    CHECK(windows[2].tokens.size() == 344);
    std::vector<bool> covered(doc.size(), false);
    for (const auto& w : windows) {
        for (size_t i = 0; i < w.tokens.size(); ++i) {
            covered[static_cast<size_t>(w.start) + i] = true;
            CHECK(w.tokens[i] == doc[static_cast<size_t>(w.start) + i]);
        }
    }
    CHECK(std::all_of(covered.begin(), covered.end(), [](bool b) { return b; }));
}

TEST_CASE("a short document yields a single window") {
    PackConfig cfg;
    std::vector<int> doc(100, kNumSpecials);
    const auto windows = sliding_windows(doc, 0, cfg);
    REQUIRE(windows.size() == 1);
    CHECK(windows[0].tokens.size() == 100);
}

TEST_CASE("an empty document yields one empty window") {
    PackConfig cfg;
    const auto windows = sliding_windows({}, 10, cfg);
    REQUIRE(windows.size() == 1);
    CHECK(windows[0].start == 0);
    CHECK(windows[0].tokens.empty());
}

TEST_CASE("a question consuming the context budget is an error") {
    PackConfig cfg;
    CHECK_THROWS_WITH_AS(sliding_windows({1, 2, 3}, 381, cfg),
                         doctest::Contains("question consumes context budget"), TekError);
}

TEST_CASE("random documents are fully covered when stride <= capacity") {
    Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        PackConfig cfg;
        const size_t doc_len = rng.below(3000);
        const size_t q_len = rng.below(40);
        std::vector<int> doc(doc_len, kNumSpecials + 1);
        const auto windows = sliding_windows(doc, q_len, cfg);
        std::vector<bool> covered(doc_len, false);
        for (const auto& w : windows) {
            for (size_t i = 0; i < w.tokens.size(); ++i) {
                covered[static_cast<size_t>(w.start) + i] = true;
            }
        }
        CHECK(std::all_of(covered.begin(), covered.end(), [](bool b) { return b; }));
    }
}

TEST_CASE("label_answer picks the bare answer token, not the article") {
    const Vocab v = word_vocab();
    const auto q = ids_of(v, "who");
    const auto p = ids_of(v, "source of the euphrates river .");
    const PackConfig cfg = small_cfg(24, 16);
    const PackedInput packed = pack_rc(q, p, {}, cfg);
    const auto [s, e] = label_answer(packed, {"Euphrates"}, v);
    // passage starts at 3: [source of the euphrates river .]
    CHECK(s == e);
    CHECK(v.token(packed.ids[static_cast<size_t>(s)]) == "euphrates");
    CHECK(s == packed.regions.passage.first + 3);
}

TEST_CASE("label_answer never matches inside backgrounds") {
    const Vocab v = word_vocab();
    const auto q = ids_of(v, "who likes iraq");
    const auto p = ids_of(v, "the river flows");
    const std::vector<Background> bgs = {make_bg(v, "euphrates : joins iraq")};
    const PackConfig cfg = small_cfg(24, 12);
    const PackedInput packed = pack_rc(q, p, bgs, cfg);
    // "iraq" appears only in the background
    const auto [s, e] = label_answer(packed, {"iraq"}, v);
    CHECK(s == 0);
    CHECK(e == 0);
}

TEST_CASE("label_answer picks the first occurrence") {
    const Vocab v = word_vocab();
    const auto p = ids_of(v, "tigris , euphrates and euphrates again");
    // 'again' is OOV in this vocab; that's fine for this test
    const PackConfig cfg = small_cfg(24, 16);
    const PackedInput packed = pack_rc(ids_of(v, "who"), p, {}, cfg);
    const auto [s, e] = label_answer(packed, {"euphrates"}, v);
    CHECK(s == packed.regions.passage.first + 2);
    CHECK(e == s);
}

TEST_CASE("label_answer multi-word answers take the shortest span at a start") {
    const Vocab v = word_vocab();
    const auto p = ids_of(v, "the euphrates river , flows");
    const PackConfig cfg = small_cfg(24, 16);
    const PackedInput packed = pack_rc(ids_of(v, "who"), p, {}, cfg);
    const auto [s, e] = label_answer(packed, {"Euphrates River"}, v);
    CHECK(s == packed.regions.passage.first + 1);
    CHECK(e == s + 1);  // excludes the trailing comma
    // detokenized span EM-normalizes back to the gold (round-trip property)
    std::vector<int> span(packed.ids.begin() + s, packed.ids.begin() + e + 1);
    CHECK(em_normalize(decode(span, v)) == em_normalize("Euphrates River"));
}

TEST_CASE("label_answer returns CLS when no gold matches") {
    const Vocab v = word_vocab();
    const PackConfig cfg = small_cfg(24, 16);
    const PackedInput packed = pack_rc(ids_of(v, "who"), ids_of(v, "a b c"), {}, cfg);
    CHECK(label_answer(packed, {"missing"}, v) == std::pair<int, int>{0, 0});
}

TEST_CASE("pack_pretrain: a 382-token block fills the context part exactly") {
    Rng rng(43);
    const auto block = test::random_token_ids(rng, 382, 1000);
    PackConfig cfg;  // 512/384/128
    PretrainBackground bg;
    bg.fallback = true;
    bg.fallback_tokens = test::random_token_ids(rng, 300, 1000);
    const PackedInput out = pack_pretrain(block, bg, cfg);
    CHECK(out.regions.context_len == 384);
    CHECK(out.regions.passage == std::pair<int, int>{1, 383});
    // fallback context truncated to the budget, no separators appended
    REQUIRE(out.regions.backgrounds.size() == 1);
    const auto [b0, e0] = out.regions.backgrounds[0];
    CHECK(b0 == 384);
    CHECK(e0 - b0 == 128);
    CHECK(out.regions.fallback_background);
    CHECK(test::packed_violation(out, cfg, false) == std::nullopt);
}

TEST_CASE("pack_pretrain rejects oversize blocks") {
    Rng rng(44);
    const auto block = test::random_token_ids(rng, 383, 1000);
    PackConfig cfg;
    CHECK_THROWS_WITH_AS(pack_pretrain(block, {}, cfg), doctest::Contains("block too long"),
                         TekError);
}

TEST_CASE("pack_pretrain with N_B = 0 packs pure context") {
    Rng rng(45);
    const auto block = test::random_token_ids(rng, 100, 1000);
    PackConfig cfg = small_cfg(384, 384, 128);
    PretrainBackground bg;
    bg.backgrounds = {};
    const PackedInput out = pack_pretrain(block, bg, cfg);
    CHECK(out.regions.backgrounds.empty());
    CHECK(test::packed_violation(out, cfg, false) == std::nullopt);
}

TEST_CASE("packing is deterministic") {
    const Vocab v = word_vocab();
    const auto q = ids_of(v, "who likes");
    const auto p = ids_of(v, "the euphrates river");
    const std::vector<Background> bgs = {make_bg(v, "euphrates : flows")};
    const PackConfig cfg = small_cfg(24, 12);
    const PackedInput a = pack_rc(q, p, bgs, cfg);
    const PackedInput b = pack_rc(q, p, bgs, cfg);
    CHECK(a.ids == b.ids);
}

TEST_CASE("all five context/background configurations pack cleanly") {
    Rng rng(47);
    const std::vector<std::pair<int, int>> configs = {
        {512, 0}, {384, 0}, {384, 128}, {256, 256}, {128, 384}};
    for (const auto& [n_c, n_b] : configs) {
        PackConfig cfg;
        cfg.n_c = n_c;
        cfg.n_b = n_b;
        cfg.total_len = n_c + n_b;
        cfg.stride = 128;
        for (int trial = 0; trial < 50; ++trial) {
            const auto q = test::random_token_ids(rng, 1 + rng.below(20), 1000);
            const auto doc = test::random_token_ids(rng, rng.below(1000), 1000);
            std::vector<Background> bgs;
            const int n_bgs = static_cast<int>(rng.below(6));
            for (int b = 0; b < n_bgs; ++b) {
                Background bg;
                bg.formatted_tokens = test::random_token_ids(rng, 2 + rng.below(40), 1000);
                bg.score = static_cast<int64_t>(rng.below(10));
                bgs.push_back(std::move(bg));
            }
            for (const auto& w : sliding_windows(doc, q.size(), cfg)) {
                const PackedInput out = pack_rc(q, w.tokens, bgs, cfg);
                const auto violation = test::packed_violation(out, cfg, true);
                if (violation.has_value()) {
                    FAIL(*violation);
                }
            }
        }
    }
}
