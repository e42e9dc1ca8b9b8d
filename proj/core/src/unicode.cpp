#include "adaudit/unicode.hpp"

#include <stdexcept>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

namespace adaudit::unicode {
namespace {

const icu::Normalizer2& nfkc() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFKCInstance(status);
  if (U_FAILURE(status) || n == nullptr) throw std::runtime_error("ICU NFKC unavailable");
  return *n;
}

const icu::Normalizer2& nfd() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFDInstance(status);
  if (U_FAILURE(status) || n == nullptr) throw std::runtime_error("ICU NFD unavailable");
  return *n;
}

icu::UnicodeString normalized(std::string_view utf8, const icu::Normalizer2& form) {
  const auto src = icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString out = form.normalize(src, status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU normalization failed");
  return out;
}

std::string to_utf8(const icu::UnicodeString& s) {
  std::string out;
  s.toUTF8String(out);
  return out;
}

}  // namespace

std::string nfkc_lower(std::string_view utf8) {
  icu::UnicodeString s = normalized(utf8, nfkc());
  s.toLower(icu::Locale::getRoot());
  // Lowercasing can denormalize (e.g. U+0130); renormalize once.
  UErrorCode status = U_ZERO_ERROR;
  if (nfkc().isNormalized(s, status) != true) {
    status = U_ZERO_ERROR;
    s = nfkc().normalize(s, status);
  }
  return to_utf8(s);
}

std::string normalize_text(std::string_view utf8) {
  const auto lowered = icu::UnicodeString::fromUTF8(nfkc_lower(utf8));
  icu::UnicodeString out;
  bool pending_space = false;
  for (int32_t i = 0; i < lowered.length();) {
    const UChar32 c = lowered.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending_space = !out.isEmpty();
      continue;
    }
    if (pending_space) {
      out.append(static_cast<UChar>(' '));
      pending_space = false;
    }
    out.append(c);
  }
  return to_utf8(out);
}

std::string fold_accents(std::string_view utf8) {
  icu::UnicodeString lowered = normalized(utf8, nfkc());
  lowered.toLower(icu::Locale::getRoot());
  UErrorCode status = U_ZERO_ERROR;
  const icu::UnicodeString decomposed = nfd().normalize(lowered, status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU normalization failed");
  icu::UnicodeString out;
  for (int32_t i = 0; i < decomposed.length();) {
    const UChar32 c = decomposed.char32At(i);
    i += U16_LENGTH(c);
    if (u_charType(c) == U_NON_SPACING_MARK) continue;
    out.append(c);
  }
  return to_utf8(out);
}

}  // namespace adaudit::unicode
