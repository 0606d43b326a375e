// SPDX-License-Identifier: Apache-2.0
#include <steward/tools/tools.hpp>

#include <openssl/sha.h>

#include <array>

namespace steward::tools
{

auto sha256_hex(std::string_view bytes) -> std::string
{
    auto digest = std::array<unsigned char, SHA256_DIGEST_LENGTH> {};
    SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest.data());

    constexpr auto hex = std::string_view("0123456789abcdef");
    auto out = std::string {};
    out.reserve(digest.size() * 2);
    for (auto byte: digest)
    {
        out.push_back(hex[byte >> 4]);
        out.push_back(hex[byte & 0x0f]);
    }
    return out;
}

} // namespace steward::tools
