#include "forge/prompt.hpp"

#include <cctype>

#include "forge/error.hpp"

namespace forge {

namespace {

bool space_at(std::string_view s, std::size_t i) {
  return i >= s.size() || std::isspace(static_cast<unsigned char>(s[i]));
}

}  // namespace

PromptWrapper::PromptWrapper(const Tokenizer& tokenizer, std::string_view tmpl,
                             std::string_view placeholder)
    : text_(tmpl), max_length_(tokenizer.spec().max_sequence_length) {
  const auto pos = tmpl.find(placeholder);
  if (pos == std::string_view::npos)
    throw InvalidArgument("template '" + std::string(tmpl) + "' lacks " +
                          std::string(placeholder));
  if (tmpl.find(placeholder, pos + placeholder.size()) != std::string_view::npos)
    throw InvalidArgument("template repeats " + std::string(placeholder));
  const auto before = tmpl.substr(0, pos);
  const auto after = tmpl.substr(pos + placeholder.size());
  if (tokenizer.spec().mode == TokenizerMode::whitespace &&
      ((pos > 0 && !space_at(tmpl, pos - 1)) ||
       !space_at(tmpl, pos + placeholder.size())))
    throw InvalidArgument("placeholder " + std::string(placeholder) +
                          " must be whitespace-delimited in whitespace mode");
  prefix_ = tokenizer.encode(before);
  suffix_ = tokenizer.encode(after);
}

TokenSeq PromptWrapper::apply(const TokenSeq& content) const {
  if (is_identity()) return content;
  TokenSeq out;
  out.reserve(prefix_.size() + content.size() + suffix_.size());
  out.insert(out.end(), prefix_.begin(), prefix_.end());
  out.insert(out.end(), content.begin(), content.end());
  out.insert(out.end(), suffix_.begin(), suffix_.end());
  if (max_length_ && out.size() > max_length_) out.resize(max_length_);
  return out;
}

std::string PromptWrapper::render(std::string_view tmpl, std::string_view placeholder,
                                  std::string_view value) {
  const auto pos = tmpl.find(placeholder);
  if (pos == std::string_view::npos) return std::string(tmpl);
  std::string out(tmpl.substr(0, pos));
  out += value;
  out += tmpl.substr(pos + placeholder.size());
  return out;
}

}  // namespace forge
