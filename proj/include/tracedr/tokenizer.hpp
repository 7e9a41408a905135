#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace tracedr {

class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
    /// Name persisted alongside indexes and checkpoints.
    virtual std::string name() const = 0;
};

/// Splits on whitespace and punctuation (ASCII and common Unicode
/// punctuation blocks), lowercases ASCII, and emits every CJK ideograph,
/// kana or hangul syllable as a token of its own.
class DefaultTokenizer final : public Tokenizer {
public:
    std::vector<std::string> tokenize(std::string_view text) const override;
    std::string name() const override { return "default"; }
};

std::shared_ptr<const Tokenizer> default_tokenizer();

/// Resolves a persisted tokenizer name. Throws InvalidArgument for unknown names.
std::shared_ptr<const Tokenizer> tokenizer_by_name(std::string_view name);

}  // namespace tracedr
