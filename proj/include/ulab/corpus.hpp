// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic fact corpus: every fact is "<bos> entity attribute value <eos>", each
// (entity, attribute) pair has exactly one value, and the forget set is chosen at the
// entity level. Values for one attribute are distinct across entities but are drawn from
// a pool shared by all attributes, so the same value token can answer facts about
// different attributes. A retained fact whose value token also answers some forget fact
// is a "neighbor": it probes collateral damage on shared answers. (This neighbor
// definition is specific to this corpus.)

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ulab/error.hpp"
#include "ulab/rng.hpp"

namespace ulab {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr std::string_view kBosToken = "<bos>";
inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr std::string_view kPadToken = "<pad>";

/// Closed vocabulary. Reserved ids: <bos>=0, <eos>=1, <pad>=2.
class Vocab {
public:
    static constexpr TokenId kBos = 0;
    static constexpr TokenId kEos = 1;
    static constexpr TokenId kPad = 2;

    Vocab() : Vocab(std::vector<std::string>{}) {}

    /// `content` lists the non-reserved tokens in index order, starting at id 3.
    explicit Vocab(const std::vector<std::string>& content) {
        tokens_ = {std::string(kBosToken), std::string(kEosToken), std::string(kPadToken)};
        tokens_.insert(tokens_.end(), content.begin(), content.end());
        for (std::size_t i = 0; i < tokens_.size(); ++i) {
            if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
                throw InvalidSpecError("duplicate vocabulary token '" + tokens_[i] + "'");
        }
    }

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    const std::string& token(TokenId id) const { return tokens_.at(id); }

    TokenId id(std::string_view token) const {
        auto it = index_.find(std::string(token));
        if (it == index_.end()) throw UnknownTokenError(std::string(token));
        return it->second;
    }

    bool contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

    bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

inline TokenSeq tokenize(const std::vector<std::string>& text, const Vocab& vocab) {
    TokenSeq ids;
    ids.reserve(text.size());
    for (const auto& t : text) ids.push_back(vocab.id(t));
    return ids;
}

inline std::vector<std::string> detokenize(const TokenSeq& ids, const Vocab& vocab) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (TokenId id : ids) out.push_back(vocab.token(id));
    return out;
}

struct CorpusSpec {
    int n_entities = 10;
    int n_attributes = 4;
    int n_forget_entities = 2;
    std::uint64_t seed = 7;
};

/// Size of the value pool shared across attributes.
inline int value_pool_size(int n_entities) { return 2 * n_entities; }

inline Vocab make_corpus_vocab(int n_entities, int n_attributes) {
    std::vector<std::string> content;
    for (int i = 0; i < n_entities; ++i) content.push_back("e" + std::to_string(i));
    for (int j = 0; j < n_attributes; ++j) content.push_back("a" + std::to_string(j));
    for (int v = 0; v < value_pool_size(n_entities); ++v) content.push_back("v" + std::to_string(v));
    return Vocab(content);
}

/// Position of the first answer token inside a fact ("<bos> e a" is the prompt).
inline constexpr std::size_t kPromptLength = 3;

struct FactCorpus {
    Vocab vocab;
    int n_entities = 0;
    int n_attributes = 0;
    std::uint64_t seed = 0;
    std::vector<TokenSeq> facts;
    std::vector<std::size_t> forget_ids;
    std::vector<std::size_t> retain_ids;
    std::vector<std::size_t> neighbor_ids;

    std::vector<TokenSeq> subset(const std::vector<std::size_t>& ids) const {
        std::vector<TokenSeq> out;
        out.reserve(ids.size());
        for (auto i : ids) out.push_back(facts.at(i));
        return out;
    }
    std::vector<TokenSeq> forget_facts() const { return subset(forget_ids); }
    std::vector<TokenSeq> retain_facts() const { return subset(retain_ids); }
    std::vector<TokenSeq> neighbor_facts() const { return subset(neighbor_ids); }
};

/// Answer span of a fact: the tokens between the prompt and the trailing <eos>.
inline std::pair<std::size_t, std::size_t> answer_span(const TokenSeq& fact) {
    std::size_t end = fact.size();
    while (end > kPromptLength && (fact[end - 1] == Vocab::kEos || fact[end - 1] == Vocab::kPad)) --end;
    return {std::min(kPromptLength, fact.size()), end};
}

/// Retain facts whose value token also answers a forget fact.
inline std::vector<std::size_t> find_neighbors(const std::vector<TokenSeq>& facts,
                                               const std::vector<std::size_t>& forget_ids,
                                               const std::vector<std::size_t>& retain_ids) {
    std::set<TokenId> forget_values;
    for (auto i : forget_ids) {
        auto [b, e] = answer_span(facts[i]);
        forget_values.insert(facts[i].begin() + static_cast<std::ptrdiff_t>(b),
                             facts[i].begin() + static_cast<std::ptrdiff_t>(e));
    }
    std::vector<std::size_t> out;
    for (auto i : retain_ids) {
        auto [b, e] = answer_span(facts[i]);
        for (std::size_t t = b; t < e; ++t) {
            if (forget_values.count(facts[i][t])) {
                out.push_back(i);
                break;
            }
        }
    }
    return out;
}

/// Hard preconditions only; see desk_scale_violations() for the size recommendations.
inline FactCorpus generate_corpus(const CorpusSpec& spec) {
    if (spec.n_entities <= 0 || spec.n_attributes <= 0)
        throw InvalidSpecError("corpus spec needs at least one entity and one attribute");
    if (spec.n_forget_entities < 0 || spec.n_forget_entities >= spec.n_entities)
        throw InvalidSpecError("n_forget_entities must be in [0, n_entities)");

    FactCorpus c;
    c.vocab = make_corpus_vocab(spec.n_entities, spec.n_attributes);
    if (c.vocab.size() > 200) throw InvalidSpecError("vocabulary would exceed 200 tokens");
    c.n_entities = spec.n_entities;
    c.n_attributes = spec.n_attributes;
    c.seed = spec.seed;

    Rng rng = make_rng(spec.seed, 0xC0FFEE);
    const int pool = value_pool_size(spec.n_entities);
    // values[j][i]: value index of entity i for attribute j; distinct across entities.
    std::vector<std::vector<int>> values(static_cast<std::size_t>(spec.n_attributes));
    for (auto& column : values) {
        std::vector<int> perm(static_cast<std::size_t>(pool));
        for (int v = 0; v < pool; ++v) perm[static_cast<std::size_t>(v)] = v;
        shuffle(std::span<int>(perm), rng);
        column.assign(perm.begin(), perm.begin() + spec.n_entities);
    }
    std::vector<int> entities(static_cast<std::size_t>(spec.n_entities));
    for (int i = 0; i < spec.n_entities; ++i) entities[static_cast<std::size_t>(i)] = i;
    shuffle(std::span<int>(entities), rng);
    std::set<int> forget_entities(entities.begin(), entities.begin() + spec.n_forget_entities);

    for (int i = 0; i < spec.n_entities; ++i) {
        for (int j = 0; j < spec.n_attributes; ++j) {
            const std::size_t idx = c.facts.size();
            c.facts.push_back({Vocab::kBos, c.vocab.id("e" + std::to_string(i)),
                               c.vocab.id("a" + std::to_string(j)),
                               c.vocab.id("v" + std::to_string(values[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)])),
                               Vocab::kEos});
            (forget_entities.count(i) ? c.forget_ids : c.retain_ids).push_back(idx);
        }
    }
    c.neighbor_ids = find_neighbors(c.facts, c.forget_ids, c.retain_ids);
    return c;
}

/// Soft recommendations for experiment corpora: at least 40 facts, forget share at most 25%.
inline std::vector<std::string> desk_scale_violations(const CorpusSpec& spec) {
    std::vector<std::string> out;
    const long facts = static_cast<long>(spec.n_entities) * spec.n_attributes;
    if (facts < 40) out.push_back("fewer than 40 facts (" + std::to_string(facts) + ")");
    if (spec.n_entities > 0 && 4L * spec.n_forget_entities > spec.n_entities)
        out.push_back("forget set exceeds 25% of the corpus");
    return out;
}

namespace detail {

inline std::string join_indices(const std::vector<std::size_t>& ids) {
    std::string s;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(ids[i]);
    }
    return s;
}

inline std::vector<std::size_t> parse_indices(std::string_view s) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        auto comma = s.find(',', pos);
        if (comma == std::string_view::npos) comma = s.size();
        const std::string item(s.substr(pos, comma - pos));
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size() || item.empty()) throw InvalidSpecError("bad index list entry '" + item + "'");
        out.push_back(static_cast<std::size_t>(v));
        pos = comma + 1;
    }
    return out;
}

} // namespace detail

/// Line-oriented text: three header lines then one space-separated fact per line.
inline std::string serialize_corpus(const FactCorpus& c) {
    std::string s = "#seed=" + std::to_string(c.seed) + "\n";
    s += "#forget=" + detail::join_indices(c.forget_ids) + "\n";
    s += "#neighbors=" + detail::join_indices(c.neighbor_ids) + "\n";
    for (const auto& fact : c.facts) {
        for (std::size_t t = 0; t < fact.size(); ++t) {
            if (t) s += ' ';
            s += c.vocab.token(fact[t]);
        }
        s += '\n';
    }
    return s;
}

inline FactCorpus parse_corpus(const std::string& text) {
    FactCorpus c;
    std::istringstream in(text);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    bool have_seed = false, have_forget = false, have_neighbors = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("#seed=", 0) == 0) {
            c.seed = std::stoull(line.substr(6));
            have_seed = true;
        } else if (line.rfind("#forget=", 0) == 0) {
            c.forget_ids = detail::parse_indices(std::string_view(line).substr(8));
            have_forget = true;
        } else if (line.rfind("#neighbors=", 0) == 0) {
            c.neighbor_ids = detail::parse_indices(std::string_view(line).substr(11));
            have_neighbors = true;
        } else if (line[0] == '#') {
            throw InvalidSpecError("unknown corpus header: " + line);
        } else {
            std::istringstream ls(line);
            std::vector<std::string> toks;
            for (std::string t; ls >> t;) toks.push_back(t);
            if (toks.size() != kPromptLength + 2) throw InvalidSpecError("malformed fact line: " + line);
            rows.push_back(std::move(toks));
        }
    }
    if (!have_seed || !have_forget || !have_neighbors) throw InvalidSpecError("corpus file is missing a header line");

    auto index_of = [](const std::string& tok, char prefix) {
        if (tok.size() < 2 || tok[0] != prefix) throw InvalidSpecError("unexpected token '" + tok + "'");
        return std::stoi(tok.substr(1));
    };
    for (const auto& r : rows) {
        c.n_entities = std::max(c.n_entities, index_of(r[1], 'e') + 1);
        c.n_attributes = std::max(c.n_attributes, index_of(r[2], 'a') + 1);
    }
    c.vocab = make_corpus_vocab(c.n_entities, c.n_attributes);
    for (const auto& r : rows) c.facts.push_back(tokenize(r, c.vocab));

    std::vector<char> in_forget(c.facts.size(), 0);
    for (auto i : c.forget_ids) {
        if (i >= c.facts.size() || in_forget[i]) throw InvalidSpecError("forget index out of range or repeated");
        in_forget[i] = 1;
    }
    for (std::size_t i = 0; i < c.facts.size(); ++i)
        if (!in_forget[i]) c.retain_ids.push_back(i);
    for (auto i : c.neighbor_ids)
        if (i >= c.facts.size() || in_forget[i]) throw InvalidSpecError("neighbor index must refer to a retain fact");
    return c;
}

inline void save_corpus(const FactCorpus& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << serialize_corpus(c);
}

inline FactCorpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open corpus file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_corpus(ss.str());
}

} // namespace ulab
