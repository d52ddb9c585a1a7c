#pragma once

#include <string>
#include <string_view>

#include "forge/tokenizer.hpp"

namespace forge {

// A single-placeholder prompt template such as "{response} → instruction:",
// compiled into token prefix/suffix so wrapping works on generated token
// sequences as well as on text.
class PromptWrapper {
 public:
  // Identity wrapper.
  PromptWrapper() = default;
  // `placeholder` includes the braces, e.g. "{response}". In whitespace mode
  // the placeholder must stand alone between whitespace so that wrapping in
  // token space equals encoding the rendered text.
  PromptWrapper(const Tokenizer& tokenizer, std::string_view tmpl,
                std::string_view placeholder);

  TokenSeq apply(const TokenSeq& content) const;
  bool is_identity() const noexcept { return prefix_.empty() && suffix_.empty(); }
  const std::string& text() const noexcept { return text_; }

  // Literal substitution of the single placeholder occurrence.
  static std::string render(std::string_view tmpl, std::string_view placeholder,
                            std::string_view value);

 private:
  std::string text_;
  TokenSeq prefix_;
  TokenSeq suffix_;
  std::size_t max_length_ = 0;
};

}  // namespace forge
