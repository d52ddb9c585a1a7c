#include "forge/tokenizer.hpp"

#include <algorithm>

#include "forge/error.hpp"

namespace forge {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

}  // namespace

std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view trim(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && is_space(text[b])) ++b;
  while (e > b && is_space(text[e - 1])) --e;
  return text.substr(b, e - b);
}

std::string to_string(TokenizerMode mode) {
  return mode == TokenizerMode::byte ? "byte" : "whitespace";
}

TokenizerMode tokenizer_mode_from_string(std::string_view s) {
  if (s == "byte") return TokenizerMode::byte;
  if (s == "whitespace") return TokenizerMode::whitespace;
  throw InvalidArgument("unknown tokenizer mode '" + std::string(s) + "'");
}

Tokenizer::Tokenizer(TokenizerSpec spec) : spec_(std::move(spec)) {
  if (spec_.max_sequence_length == 0)
    throw InvalidArgument("max_sequence_length must be positive");
  spec_.mode = TokenizerMode::byte;
}

Tokenizer::Tokenizer(TokenizerSpec spec, std::vector<std::string> words)
    : spec_(std::move(spec)), words_(std::move(words)) {
  if (spec_.max_sequence_length == 0)
    throw InvalidArgument("max_sequence_length must be positive");
  spec_.mode = TokenizerMode::whitespace;
  std::sort(words_.begin(), words_.end());
  words_.erase(std::unique(words_.begin(), words_.end()), words_.end());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (words_[i].empty() ||
        std::any_of(words_[i].begin(), words_[i].end(), is_space))
      throw InvalidArgument("vocabulary words must be non-empty and contain "
                            "no whitespace");
    index_.emplace(words_[i], static_cast<TokenId>(kFirstContent + i));
  }
}

std::size_t Tokenizer::size() const noexcept {
  return kFirstContent +
         (spec_.mode == TokenizerMode::byte ? 256 : words_.size());
}

std::size_t Tokenizer::count_tokens(std::string_view text) const {
  if (spec_.mode == TokenizerMode::byte) return text.size();
  return split_whitespace(text).size();
}

TokenSeq Tokenizer::encode(std::string_view text) const {
  TokenSeq out;
  if (spec_.mode == TokenizerMode::byte) {
    out.reserve(std::min(text.size(), spec_.max_sequence_length));
    for (unsigned char c : text) out.push_back(kFirstContent + c);
  } else {
    for (auto word : split_whitespace(text)) {
      auto it = index_.find(std::string(word));
      if (it == index_.end())
        throw TokenizeError("word '" + std::string(word) +
                            "' is not in the vocabulary");
      out.push_back(it->second);
    }
  }
  if (out.size() > spec_.max_sequence_length) {
    out.resize(spec_.max_sequence_length);
    truncations_->fetch_add(1);
  }
  return out;
}

std::string Tokenizer::token_text(TokenId id) const {
  switch (id) {
    case kBegin:
      return spec_.begin;
    case kEnd:
      return spec_.end;
    case kSeparator:
      return spec_.separator;
    default:
      break;
  }
  if (id >= size()) throw InvalidArgument("token id out of range");
  if (spec_.mode == TokenizerMode::byte)
    return std::string(1, static_cast<char>(id - kFirstContent));
  return words_[id - kFirstContent];
}

std::string Tokenizer::decode(std::span<const TokenId> tokens) const {
  std::string out;
  for (TokenId id : tokens) {
    if (spec_.mode == TokenizerMode::whitespace && !out.empty()) out += ' ';
    out += token_text(id);
  }
  return out;
}

bool Tokenizer::contains_word(std::string_view word) const {
  if (spec_.mode == TokenizerMode::byte) return true;
  return index_.count(std::string(word)) > 0;
}

nlohmann::json Tokenizer::to_json() const {
  nlohmann::json j;
  j["mode"] = to_string(spec_.mode);
  j["max_sequence_length"] = spec_.max_sequence_length;
  j["specials"] = {spec_.begin, spec_.end, spec_.separator};
  if (spec_.mode == TokenizerMode::whitespace) j["words"] = words_;
  return j;
}

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
  TokenizerSpec spec;
  spec.mode = tokenizer_mode_from_string(j.at("mode").get<std::string>());
  spec.max_sequence_length = j.at("max_sequence_length").get<std::size_t>();
  const auto& sp = j.at("specials");
  spec.begin = sp.at(0).get<std::string>();
  spec.end = sp.at(1).get<std::string>();
  spec.separator = sp.at(2).get<std::string>();
  if (spec.mode == TokenizerMode::byte) return Tokenizer(spec);
  return Tokenizer(spec, j.at("words").get<std::vector<std::string>>());
}

void VocabularyBuilder::add_text(std::string_view text) {
  if (spec_.mode == TokenizerMode::byte) return;
  for (auto word : split_whitespace(text)) {
    auto it = counts_.find(word);
    if (it == counts_.end())
      counts_.emplace(std::string(word), 1);
    else
      ++it->second;
  }
}

Tokenizer VocabularyBuilder::freeze() const {
  if (spec_.mode == TokenizerMode::byte) return Tokenizer(spec_);
  std::vector<std::string> words;
  words.reserve(counts_.size());
  for (const auto& [w, n] : counts_) words.push_back(w);
  return Tokenizer(spec_, std::move(words));
}

}  // namespace forge
