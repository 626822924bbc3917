#pragma once

#include <string>
#include <string_view>

namespace grace {

// First 8 bytes of SHA-256(text), lowercase hex.
std::string short_digest(std::string_view text);

}  // namespace grace
