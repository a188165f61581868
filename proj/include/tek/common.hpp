#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tek {

// Single exception type for contract violations and bad inputs. The CLI maps
// it to exit code 1 with the failing stage in the message.
class TekError : public std::runtime_error {
  public:
    explicit TekError(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw TekError(msg); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) {
        fail(msg);
    }
}

// FNV-1a, used for stable config hashes in run manifests.
inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace tek
