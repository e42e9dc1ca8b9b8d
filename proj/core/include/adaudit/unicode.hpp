#pragma once

#include <string>
#include <string_view>

namespace adaudit::unicode {

// NFKC, full lowercase, whitespace runs collapsed to one ASCII space,
// trimmed. Invalid UTF-8 sequences become U+FFFD.
std::string normalize_text(std::string_view utf8);

// NFKC + lowercase only.
std::string nfkc_lower(std::string_view utf8);

// Lowercase, decompose, drop nonspacing marks ("Política" -> "politica").
std::string fold_accents(std::string_view utf8);

}  // namespace adaudit::unicode
