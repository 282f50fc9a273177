#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ebtree {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_bytes(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

/// A SHA-256 output. Always exactly 32 bytes.
struct Digest32 {
    static constexpr std::size_t kSize = 32;
    std::array<std::uint8_t, kSize> bytes{};

    static Digest32 from_bytes(ByteView b);  // throws CodecError unless b.size() == 32
    static Digest32 from_hex(std::string_view hex);
    std::string hex() const;
    ByteView view() const { return {bytes.data(), bytes.size()}; }

    friend auto operator<=>(const Digest32&, const Digest32&) = default;
};

/// Incremental SHA-256 over OpenSSL's EVP interface.
class Sha256 {
  public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(ByteView data);
    Sha256& update(std::uint8_t byte) { return update(ByteView(&byte, 1)); }
    Sha256& update(const Digest32& d) { return update(d.view()); }
    Digest32 finish();

  private:
    void* ctx_;
};

/// One-shot SHA-256. Reuses a thread-local context, safe to call from OpenMP regions.
Digest32 sha256(ByteView data);
Digest32 sha256(std::initializer_list<ByteView> parts);

std::string to_hex(ByteView b);
Bytes from_hex(std::string_view hex);  // lowercase or uppercase accepted; throws CodecError

void put_u32_be(Bytes& out, std::uint32_t v);
void put_u64_be(Bytes& out, std::uint64_t v);
std::uint32_t get_u32_be(const std::uint8_t* p);
std::uint64_t get_u64_be(const std::uint8_t* p);

/// Cryptographically secure random bytes (OpenSSL RAND_bytes).
Bytes random_bytes(std::size_t n);

}  // namespace ebtree
