#include "tqa/text.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <map>
#include <ostream>

#include "tqa/errors.hpp"

namespace tqa {

namespace {

bool is_ascii_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_ascii_punct(unsigned char c) { return c < 128 && std::ispunct(c); }

} // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            out.push_back(word);
            word.clear();
        }
    };
    for (unsigned char c : text) {
        if (is_ascii_space(c)) {
            flush();
        } else if (is_ascii_punct(c)) {
            flush();
            out.emplace_back(1, static_cast<char>(c));
        } else {
            if (c < 128) c = static_cast<unsigned char>(std::tolower(c));
            word.push_back(static_cast<char>(c));
        }
    }
    flush();
    return out;
}

Vocab::Vocab() {
    add("[PAD]");
    add("[UNK]");
    add("[CLS]");
    add("[SEP]");
}

void Vocab::add(std::string token) {
    const int32_t id = static_cast<int32_t>(tokens_.size());
    index_.emplace(token, id);
    tokens_.push_back(std::move(token));
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& token_seqs, size_t min_freq) {
    std::map<std::string, size_t> freq;
    for (const auto& seq : token_seqs) {
        for (const auto& tok : seq) ++freq[tok];
    }
    std::vector<std::pair<std::string, size_t>> order(freq.begin(), freq.end());
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocab v;
    for (auto& [tok, count] : order) {
        if (count < min_freq) continue;
        if (v.index_.count(tok)) continue;
        v.add(tok);
    }
    return v;
}

int32_t Vocab::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int32_t id) const {
    if (id < 0 || static_cast<size_t>(id) >= tokens_.size()) {
        throw DataError("vocab: token id " + std::to_string(id) + " out of range (size " +
                        std::to_string(tokens_.size()) + ")");
    }
    return tokens_[id];
}

std::vector<int32_t> Vocab::encode(const std::vector<std::string>& tokens) const {
    std::vector<int32_t> ids;
    ids.reserve(tokens.size());
    for (const auto& tok : tokens) ids.push_back(id(tok));
    return ids;
}

void Vocab::save(std::ostream& out) const {
    for (const auto& tok : tokens_) out << tok << '\n';
}

Vocab Vocab::load(std::istream& in, const std::string& name) {
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    const std::vector<std::string> specials = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
    if (lines.size() < specials.size()) {
        throw DataError(name + ": vocabulary file has fewer lines than the special tokens");
    }
    for (size_t i = 0; i < specials.size(); ++i) {
        if (lines[i] != specials[i]) {
            throw DataError(name + ": line " + std::to_string(i + 1) + " must be " + specials[i] +
                            ", got '" + lines[i] + "'");
        }
    }
    Vocab v;
    for (size_t i = specials.size(); i < lines.size(); ++i) {
        if (lines[i].empty()) {
            throw DataError(name + ": empty token at line " + std::to_string(i + 1));
        }
        if (v.index_.count(lines[i])) {
            throw DataError(name + ": duplicate token '" + lines[i] + "' at line " +
                            std::to_string(i + 1));
        }
        v.add(lines[i]);
    }
    return v;
}

uint64_t Vocab::digest() const {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](unsigned char byte) {
        h ^= byte;
        h *= 0x100000001b3ull;
    };
    for (const auto& tok : tokens_) {
        for (unsigned char c : tok) mix(c);
        mix('\n');
    }
    return h;
}

} // namespace tqa
