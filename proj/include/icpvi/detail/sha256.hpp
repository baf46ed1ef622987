#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include <openssl/evp.h>

#include "icpvi/errors.hpp"

namespace icpvi::detail {

inline std::array<unsigned char, 32> sha256_bytes(std::string_view data) {
    std::array<unsigned char, 32> out{};
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1 || len != out.size()) {
        throw Error("sha256 digest failed");
    }
    return out;
}

inline std::string sha256_hex(std::string_view data) {
    static constexpr char digits[] = "0123456789abcdef";
    const auto bytes = sha256_bytes(data);
    std::string hex;
    hex.reserve(64);
    for (unsigned char b : bytes) {
        hex.push_back(digits[b >> 4]);
        hex.push_back(digits[b & 0x0f]);
    }
    return hex;
}

/// First 8 digest bytes as a big-endian integer. Stable across platforms,
/// unlike std::hash.
inline std::uint64_t sha256_prefix_u64(std::string_view data) {
    const auto bytes = sha256_bytes(data);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | bytes[static_cast<std::size_t>(i)];
    return v;
}

} // namespace icpvi::detail
