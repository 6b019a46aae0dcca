#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tqa {

// Lowercases ASCII letters, splits on ASCII whitespace, and emits each ASCII
// punctuation byte as its own single-character token. Non-ASCII bytes are
// treated as word characters and pass through unchanged.
std::vector<std::string> tokenize(std::string_view text);

class Vocab {
  public:
    static constexpr int32_t kPad = 0;
    static constexpr int32_t kUnk = 1;
    static constexpr int32_t kCls = 2;
    static constexpr int32_t kSep = 3;

    Vocab();

    // Specials first, then corpus tokens with frequency >= min_freq ordered
    // by (frequency desc, token asc). Token texts that collide with a special
    // are not added twice.
    static Vocab build(const std::vector<std::vector<std::string>>& token_seqs, size_t min_freq);

    int32_t id(std::string_view token) const; // kUnk when unknown
    const std::string& token(int32_t id) const;
    size_t size() const { return tokens_.size(); }

    std::vector<int32_t> encode(const std::vector<std::string>& tokens) const;

    void save(std::ostream& out) const; // one token per line, id order
    static Vocab load(std::istream& in, const std::string& name);

    // FNV-1a 64 over token texts separated by '\n'; pins a checkpoint to the
    // vocabulary it was trained with.
    uint64_t digest() const;

  private:
    void add(std::string token);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int32_t> index_;
};

} // namespace tqa
