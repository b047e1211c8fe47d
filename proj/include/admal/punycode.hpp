#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace admal::punycode {

// RFC 3492 encoding of one label's code points (without the "xn--" prefix).
// Returns nullopt on overflow.
std::optional<std::string> encode(const std::u32string& label);

// Decodes UTF-8; nullopt on invalid sequences, overlongs or surrogates.
std::optional<std::u32string> utf8_decode(std::string_view utf8);

}  // namespace admal::punycode
