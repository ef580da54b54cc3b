#pragma once

#include <string>
#include <string_view>

namespace kgx {

// Porter (1980) suffix-stripping stemmer for lowercase ASCII words. Words
// with non-ASCII bytes or fewer than three letters are returned unchanged.
std::string porter_stem(std::string_view word);

} // namespace kgx
