#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tek::utf8 {

// Decoded text with a map back to byte offsets. All public offsets in the
// corpus format and the tokenizer are Unicode scalar-value indices, so every
// string that needs offset arithmetic goes through this.
struct Decoded {
    std::vector<uint32_t> codepoints;
    // byte offset of each codepoint plus one trailing entry = byte length
    std::vector<size_t> byte_offsets;

    size_t size() const { return codepoints.size(); }
};

// Decodes UTF-8; invalid sequences decode as U+FFFD one byte at a time.
Decoded decode(const std::string& s);

// Substring by scalar-value range [start, end).
std::string slice(const std::string& s, const Decoded& d, size_t start, size_t end);

size_t length(const std::string& s);

void append(std::string& out, uint32_t cp);

}  // namespace tek::utf8
