#include "ebtree/digest.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <stdexcept>

#include "ebtree/errors.hpp"

namespace ebtree {

namespace {

const EVP_MD* sha256_md() {
    // Explicit fetch once; the implicit fetch behind EVP_sha256() is repeated on every init.
    static const EVP_MD* md = [] {
        EVP_MD* fetched = EVP_MD_fetch(nullptr, "SHA256", nullptr);
        if (fetched == nullptr) throw std::runtime_error("SHA256 unavailable in OpenSSL");
        return fetched;
    }();
    return md;
}

struct CtxHolder {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    ~CtxHolder() { EVP_MD_CTX_free(ctx); }
};

EVP_MD_CTX* thread_ctx() {
    thread_local CtxHolder holder;
    return holder.ctx;
}

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

Digest32 Digest32::from_bytes(ByteView b) {
    if (b.size() != kSize) {
        throw CodecError("digest must be 32 bytes, got " + std::to_string(b.size()));
    }
    Digest32 d;
    std::copy(b.begin(), b.end(), d.bytes.begin());
    return d;
}

Digest32 Digest32::from_hex(std::string_view hex) {
    return from_bytes(ebtree::from_hex(hex));
}

std::string Digest32::hex() const { return to_hex(view()); }

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
    auto* ctx = static_cast<EVP_MD_CTX*>(ctx_);
    if (ctx == nullptr || EVP_DigestInit_ex2(ctx, sha256_md(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("EVP_DigestInit_ex2 failed");
    }
}

Sha256::~Sha256() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

Sha256& Sha256::update(ByteView data) {
    EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data.data(), data.size());
    return *this;
}

Digest32 Sha256::finish() {
    Digest32 out;
    unsigned int len = 0;
    EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), out.bytes.data(), &len);
    return out;
}

Digest32 sha256(ByteView data) { return sha256({data}); }

Digest32 sha256(std::initializer_list<ByteView> parts) {
    EVP_MD_CTX* ctx = thread_ctx();
    EVP_DigestInit_ex2(ctx, sha256_md(), nullptr);
    for (const auto& p : parts) EVP_DigestUpdate(ctx, p.data(), p.size());
    Digest32 out;
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, out.bytes.data(), &len);
    return out;
}

std::string to_hex(ByteView b) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s;
    s.resize(b.size() * 2);
    for (std::size_t i = 0; i < b.size(); ++i) {
        s[2 * i] = kDigits[b[i] >> 4];
        s[2 * i + 1] = kDigits[b[i] & 0x0f];
    }
    return s;
}

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) throw CodecError("odd-length hex string");
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = hex_value(hex[2 * i]);
        int lo = hex_value(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw CodecError("invalid hex digit");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

void put_u32_be(Bytes& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void put_u64_be(Bytes& out, std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint32_t get_u32_be(const std::uint8_t* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
           std::uint32_t{p[3]};
}

std::uint64_t get_u64_be(const std::uint8_t* p) {
    return (std::uint64_t{get_u32_be(p)} << 32) | get_u32_be(p + 4);
}

Bytes random_bytes(std::size_t n) {
    Bytes out(n);
    if (n > 0 && RAND_bytes(out.data(), static_cast<int>(n)) != 1) {
        throw std::runtime_error("RAND_bytes failed");
    }
    return out;
}

}  // namespace ebtree
