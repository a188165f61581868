#include "tek/utf8.hpp"

namespace tek::utf8 {

Decoded decode(const std::string& s) {
    Decoded d;
    d.codepoints.reserve(s.size());
    d.byte_offsets.reserve(s.size() + 1);
    size_t i = 0;
    const size_t n = s.size();
    while (i < n) {
        const unsigned char c = static_cast<unsigned char>(s[i]);
        uint32_t cp = 0xFFFD;
        size_t len = 1;
        if (c < 0x80) {
            cp = c;
        } else if ((c >> 5) == 0x6 && i + 1 < n) {
            cp = static_cast<uint32_t>(c & 0x1F) << 6 |
                 (static_cast<unsigned char>(s[i + 1]) & 0x3F);
            len = 2;
        } else if ((c >> 4) == 0xE && i + 2 < n) {
            cp = static_cast<uint32_t>(c & 0x0F) << 12 |
                 (static_cast<uint32_t>(static_cast<unsigned char>(s[i + 1]) & 0x3F) << 6) |
                 (static_cast<unsigned char>(s[i + 2]) & 0x3F);
            len = 3;
        } else if ((c >> 3) == 0x1E && i + 3 < n) {
            cp = static_cast<uint32_t>(c & 0x07) << 18 |
                 (static_cast<uint32_t>(static_cast<unsigned char>(s[i + 1]) & 0x3F) << 12) |
                 (static_cast<uint32_t>(static_cast<unsigned char>(s[i + 2]) & 0x3F) << 6) |
                 (static_cast<unsigned char>(s[i + 3]) & 0x3F);
            len = 4;
        }
        d.codepoints.push_back(cp);
        d.byte_offsets.push_back(i);
        i += len;
    }
    d.byte_offsets.push_back(n);
    return d;
}

std::string slice(const std::string& s, const Decoded& d, size_t start, size_t end) {
    if (start >= end || start >= d.size()) {
        return "";
    }
    if (end > d.size()) {
        end = d.size();
    }
    return s.substr(d.byte_offsets[start], d.byte_offsets[end] - d.byte_offsets[start]);
}

size_t length(const std::string& s) { return decode(s).size(); }

void append(std::string& out, uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

}  // namespace tek::utf8
