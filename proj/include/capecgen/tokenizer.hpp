#pragma once

#include "capecgen/errors.hpp"

#include <cstddef>
#include <string>
#include <string_view>

namespace capecgen {

enum class TokenizerScheme {
    Whitespace,  // maximal runs of non-whitespace
    Word,        // maximal runs of ASCII letters/digits/underscore
};

inline TokenizerScheme parse_tokenizer_scheme(std::string_view s) {
    if (s == "whitespace") return TokenizerScheme::Whitespace;
    if (s == "word") return TokenizerScheme::Word;
    throw InputError("unknown tokenizer scheme '" + std::string(s) + "'");
}

inline std::string_view to_string(TokenizerScheme s) {
    return s == TokenizerScheme::Whitespace ? "whitespace" : "word";
}

inline std::size_t count_tokens(std::string_view text, TokenizerScheme scheme = TokenizerScheme::Whitespace) {
    auto in_token = [scheme](char c) {
        auto u = static_cast<unsigned char>(c);
        if (scheme == TokenizerScheme::Whitespace) {
            return !(u == ' ' || u == '\t' || u == '\n' || u == '\r' || u == '\f' || u == '\v');
        }
        return (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || (u >= '0' && u <= '9') || u == '_';
    };
    std::size_t count = 0;
    bool inside = false;
    for (char c : text) {
        bool t = in_token(c);
        if (t && !inside) ++count;
        inside = t;
    }
    return count;
}

}  // namespace capecgen
