// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ulab/corpus.hpp"

using namespace ulab;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string token_of(const FactCorpus& c, std::size_t fact, std::size_t pos) {
    return c.vocab.token(c.facts[fact][pos]);
}

} // namespace

TEST_CASE("default spec gives 40 facts split 8 / 32") {
    const auto c = generate_corpus({10, 4, 2, 7});
    CHECK(c.facts.size() == 40);
    CHECK(c.forget_ids.size() == 8);
    CHECK(c.retain_ids.size() == 32);
    CHECK(c.vocab.size() == 3 + 10 + 4 + 20);
    CHECK(desk_scale_violations({10, 4, 2, 7}).empty());
}

TEST_CASE("facts follow the five-token template") {
    const auto c = generate_corpus({10, 4, 2, 7});
    for (std::size_t f = 0; f < c.facts.size(); ++f) {
        REQUIRE(c.facts[f].size() == 5);
        CHECK(c.facts[f][0] == Vocab::kBos);
        CHECK(token_of(c, f, 1)[0] == 'e');
        CHECK(token_of(c, f, 2)[0] == 'a');
        CHECK(token_of(c, f, 3)[0] == 'v');
        CHECK(c.facts[f][4] == Vocab::kEos);
    }
}

TEST_CASE("every (entity, attribute) pair has exactly one value") {
    const auto c = generate_corpus({10, 4, 2, 7});
    std::set<std::pair<TokenId, TokenId>> keys;
    for (const auto& f : c.facts) CHECK(keys.insert({f[1], f[2]}).second);
    CHECK(keys.size() == 40);
}

TEST_CASE("forget split is entity level") {
    const auto c = generate_corpus({10, 4, 2, 7});
    std::set<TokenId> forget_entities, retain_entities;
    for (auto i : c.forget_ids) forget_entities.insert(c.facts[i][1]);
    for (auto i : c.retain_ids) retain_entities.insert(c.facts[i][1]);
    CHECK(forget_entities.size() == 2);
    for (auto e : forget_entities) CHECK(retain_entities.count(e) == 0);
}

TEST_CASE("partition holds on 100 random specs") {
    Rng rng = make_rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        CorpusSpec s;
        s.n_entities = 2 + static_cast<int>(uniform_index(rng, 20));
        s.n_attributes = 1 + static_cast<int>(uniform_index(rng, 6));
        s.n_forget_entities = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(s.n_entities)));
        s.seed = rng();
        const auto c = generate_corpus(s);
        std::vector<int> seen(c.facts.size(), 0);
        for (auto i : c.forget_ids) seen.at(i) += 1;
        for (auto i : c.retain_ids) seen.at(i) += 2;
        CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1 || v == 2; }));
        CHECK(c.forget_ids.size() == static_cast<std::size_t>(s.n_forget_entities * s.n_attributes));
        for (auto n : c.neighbor_ids) CHECK(std::find(c.retain_ids.begin(), c.retain_ids.end(), n) != c.retain_ids.end());
    }
}

TEST_CASE("same seed regenerates identical bytes, other seeds differ") {
    const auto a = serialize_corpus(generate_corpus({10, 4, 2, 7}));
    const auto b = serialize_corpus(generate_corpus({10, 4, 2, 7}));
    const auto c = serialize_corpus(generate_corpus({10, 4, 2, 8}));
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("neighbors agree with a brute-force scan") {
    for (CorpusSpec s : {CorpusSpec{5, 2, 2, 3}, CorpusSpec{10, 4, 2, 7}, CorpusSpec{8, 3, 1, 99}}) {
        const auto c = generate_corpus(s);
        std::vector<std::size_t> expected;
        for (auto r : c.retain_ids) {
            bool shares = false;
            for (auto f : c.forget_ids) shares = shares || token_of(c, r, 3) == token_of(c, f, 3);
            if (shares) expected.push_back(r);
        }
        CHECK(c.neighbor_ids == expected);
    }
    CHECK(generate_corpus({10, 4, 2, 7}).neighbor_ids.size() == 11);
}

TEST_CASE("vocabulary layout and tokenize examples") {
    const auto v = make_corpus_vocab(10, 4);
    // reserved tokens, then entities, attributes, values
    const TokenSeq ids = tokenize({"<bos>", "e1", "a2", "v12", "<eos>"}, v);
    CHECK(ids == TokenSeq{0, 3 + 1, 3 + 10 + 2, 3 + 10 + 4 + 12, 1});
    CHECK(tokenize({}, v).empty());
    CHECK_THROWS_AS(tokenize({"<bos>", "MISSING"}, v), UnknownTokenError);
    try {
        tokenize({"MISSING"}, v);
    } catch (const UnknownTokenError& e) {
        CHECK(std::string(e.what()).find("MISSING") != std::string::npos);
    }
}

TEST_CASE("detokenize inverts tokenize on every generated fact") {
    const auto c = generate_corpus({12, 5, 3, 1});
    for (const auto& f : c.facts) CHECK(tokenize(detokenize(f, c.vocab), c.vocab) == f);
}

TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS_AS(generate_corpus({0, 4, 0, 1}), InvalidSpecError);
    CHECK_THROWS_AS(generate_corpus({4, 0, 0, 1}), InvalidSpecError);
    CHECK_THROWS_AS(generate_corpus({4, 2, 4, 1}), InvalidSpecError);
    CHECK_THROWS_AS(generate_corpus({90, 3, 1, 1}), InvalidSpecError); // |V| > 200
    CHECK_FALSE(desk_scale_violations({5, 2, 2, 3}).empty());
}

TEST_CASE("serialized corpus matches the golden file") {
    const auto text = serialize_corpus(generate_corpus({10, 4, 2, 7}));
    const std::string golden = read_file(std::string(ULAB_GOLDEN_DIR) + "/corpus_10_4_2_seed7.txt");
    REQUIRE_FALSE(golden.empty());
    CHECK(text == golden);
}

TEST_CASE("corpus files round-trip") {
    const auto c = generate_corpus({10, 4, 2, 7});
    const auto path = (std::filesystem::temp_directory_path() / "ulab_corpus_roundtrip.txt").string();
    save_corpus(c, path);
    const auto d = load_corpus(path);
    CHECK(d.facts == c.facts);
    CHECK(d.forget_ids == c.forget_ids);
    CHECK(d.retain_ids == c.retain_ids);
    CHECK(d.neighbor_ids == c.neighbor_ids);
    CHECK(d.seed == c.seed);
    CHECK(d.vocab == c.vocab);
    CHECK(serialize_corpus(d) == serialize_corpus(c));
    std::filesystem::remove(path);
}

TEST_CASE("malformed corpus text is rejected") {
    CHECK_THROWS_AS(parse_corpus("<bos> e0 a0 v0 <eos>\n"), InvalidSpecError);
    CHECK_THROWS_AS(parse_corpus("#seed=1\n#forget=5\n#neighbors=\n<bos> e0 a0 v0 <eos>\n"), InvalidSpecError);
    CHECK_THROWS_AS(parse_corpus("#seed=1\n#forget=\n#neighbors=\n<bos> e0 a0 <eos>\n"), InvalidSpecError);
}
