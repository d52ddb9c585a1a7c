#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace forge {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

enum class TokenizerMode { whitespace, byte };

struct TokenizerSpec {
  TokenizerMode mode = TokenizerMode::whitespace;
  std::size_t max_sequence_length = 1024;
  std::string begin = "<s>";
  std::string end = "</s>";
  std::string separator = "<sep>";
};

// Frozen vocabulary plus encode/decode. Ids 0..2 are the begin, end and
// separator specials; content tokens start at kFirstContent. Whitespace mode
// splits on ASCII whitespace and decodes with single spaces; byte mode maps
// every byte to its own token and round-trips arbitrary text.
class Tokenizer {
 public:
  static constexpr TokenId kBegin = 0;
  static constexpr TokenId kEnd = 1;
  static constexpr TokenId kSeparator = 2;
  static constexpr TokenId kFirstContent = 3;

  // Byte-mode tokenizer (vocabulary is fixed, nothing to induce).
  explicit Tokenizer(TokenizerSpec spec = {});
  // Whitespace-mode tokenizer over an explicit word list (sorted, deduped).
  Tokenizer(TokenizerSpec spec, std::vector<std::string> words);

  const TokenizerSpec& spec() const noexcept { return spec_; }
  std::size_t size() const noexcept;
  std::size_t content_size() const noexcept { return size() - kFirstContent; }

  // Encodes text; throws TokenizeError on out-of-vocabulary words. Output
  // longer than max_sequence_length is truncated and counted.
  TokenSeq encode(std::string_view text) const;
  // Token count before truncation. Never throws.
  std::size_t count_tokens(std::string_view text) const;
  std::string decode(std::span<const TokenId> tokens) const;
  std::string token_text(TokenId id) const;
  bool contains_word(std::string_view word) const;

  std::size_t truncation_count() const noexcept { return truncations_->load(); }

  nlohmann::json to_json() const;
  static Tokenizer from_json(const nlohmann::json& j);

 private:
  TokenizerSpec spec_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
  std::shared_ptr<std::atomic<std::size_t>> truncations_ =
      std::make_shared<std::atomic<std::size_t>>(0);
};

// Collects words from corpus text, then freezes into a Tokenizer.
class VocabularyBuilder {
 public:
  explicit VocabularyBuilder(TokenizerSpec spec = {}) : spec_(std::move(spec)) {}
  void add_text(std::string_view text);
  Tokenizer freeze() const;

 private:
  TokenizerSpec spec_;
  std::map<std::string, std::size_t, std::less<>> counts_;
};

std::vector<std::string_view> split_whitespace(std::string_view text);
std::string_view trim(std::string_view text);

std::string to_string(TokenizerMode mode);
TokenizerMode tokenizer_mode_from_string(std::string_view s);

}  // namespace forge
