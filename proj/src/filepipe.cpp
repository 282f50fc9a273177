#include "ebtree/filepipe.hpp"

#include <openssl/evp.h>

#include <memory>
#include "json.hpp"

#include "ebtree/baselines.hpp"
#include "ebtree/errors.hpp"
#include "ebtree/kernels.hpp"

namespace ebtree::filepipe {

namespace {

const EVP_CIPHER* aes_gcm() {
    static const EVP_CIPHER* cipher = [] {
        EVP_CIPHER* c = EVP_CIPHER_fetch(nullptr, "AES-256-GCM", nullptr);
        if (c == nullptr) throw std::runtime_error("AES-256-GCM unavailable in OpenSSL");
        return c;
    }();
    return cipher;
}

using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, decltype(&EVP_CIPHER_CTX_free)>;

CipherCtx new_ctx() {
    CipherCtx ctx(EVP_CIPHER_CTX_new(), &EVP_CIPHER_CTX_free);
    if (!ctx) throw std::runtime_error("EVP_CIPHER_CTX_new failed");
    return ctx;
}

void check_key(ByteView key) {
    if (key.size() != kKeySize) throw ConfigError("encryption key must be 32 bytes");
}

}  // namespace

std::string file_id_hex(const FileId& id) { return to_hex({id.data(), id.size()}); }

FileId file_id_from_hex(std::string_view hex) {
    const Bytes b = from_hex(hex);
    if (b.size() != 16) throw CodecError("file id must be 16 bytes");
    FileId id;
    std::copy(b.begin(), b.end(), id.begin());
    return id;
}

FileId derive_file_id(std::string_view name) {
    const std::string label = "ebtree-file-id:" + std::string(name);
    const Digest32 h = sha256(as_bytes(label));
    FileId id;
    std::copy_n(h.bytes.begin(), id.size(), id.begin());
    return id;
}

std::vector<Bytes> chunk_file(ByteView data, std::size_t block_size) {
    if (block_size == 0) throw ConfigError("block size must be >= 1");
    std::vector<Bytes> blocks;
    blocks.reserve((data.size() + block_size - 1) / block_size);
    for (std::size_t at = 0; at < data.size(); at += block_size) {
        const std::size_t len = std::min(block_size, data.size() - at);
        blocks.emplace_back(data.begin() + at, data.begin() + at + len);
    }
    return blocks;
}

Bytes join_blocks(std::span<const Bytes> blocks) {
    Bytes out;
    for (const auto& b : blocks) out.insert(out.end(), b.begin(), b.end());
    return out;
}

Bytes CipherBlock::serialize() const {
    Bytes out(nonce.begin(), nonce.end());
    out.insert(out.end(), sealed.begin(), sealed.end());
    return out;
}

CipherBlock CipherBlock::parse(ByteView bytes) {
    if (bytes.size() < kNonceSize + kTagSize) throw CodecError("cipher block too short");
    CipherBlock b;
    std::copy_n(bytes.begin(), kNonceSize, b.nonce.begin());
    b.sealed.assign(bytes.begin() + kNonceSize, bytes.end());
    return b;
}

std::array<std::uint8_t, kNonceSize> derive_nonce(const FileId& id, std::uint64_t ordinal,
                                                  std::uint64_t op_counter) {
    Bytes counters;
    put_u64_be(counters, ordinal);
    put_u64_be(counters, op_counter);
    const Digest32 h = sha256({ByteView(id.data(), id.size()), ByteView(counters)});
    std::array<std::uint8_t, kNonceSize> nonce;
    std::copy_n(h.bytes.begin(), kNonceSize, nonce.begin());
    return nonce;
}

CipherBlock encrypt_block(ByteView key, const FileId& id, std::uint64_t ordinal, std::uint64_t op_counter,
                          ByteView plaintext) {
    check_key(key);
    CipherBlock out;
    out.nonce = derive_nonce(id, ordinal, op_counter);
    out.sealed.resize(plaintext.size() + kTagSize);

    auto ctx = new_ctx();
    int len = 0;
    if (EVP_EncryptInit_ex2(ctx.get(), aes_gcm(), key.data(), out.nonce.data(), nullptr) != 1 ||
        EVP_EncryptUpdate(ctx.get(), out.sealed.data(), &len, plaintext.data(), static_cast<int>(plaintext.size())) != 1) {
        throw std::runtime_error("AES-GCM encrypt failed");
    }
    int tail = 0;
    if (EVP_EncryptFinal_ex(ctx.get(), out.sealed.data() + len, &tail) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagSize, out.sealed.data() + plaintext.size()) != 1) {
        throw std::runtime_error("AES-GCM finalize failed");
    }
    return out;
}

Bytes decrypt_block(ByteView key, const CipherBlock& block) {
    check_key(key);
    if (block.sealed.size() < kTagSize) throw IntegrityError("cipher block shorter than its tag");
    const std::size_t ct_len = block.sealed.size() - kTagSize;
    Bytes plain(ct_len);
    Bytes tag(block.sealed.end() - kTagSize, block.sealed.end());

    auto ctx = new_ctx();
    int len = 0;
    if (EVP_DecryptInit_ex2(ctx.get(), aes_gcm(), key.data(), block.nonce.data(), nullptr) != 1 ||
        EVP_DecryptUpdate(ctx.get(), plain.data(), &len, block.sealed.data(), static_cast<int>(ct_len)) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagSize, tag.data()) != 1) {
        throw std::runtime_error("AES-GCM decrypt setup failed");
    }
    int tail = 0;
    if (EVP_DecryptFinal_ex(ctx.get(), plain.data() + len, &tail) != 1) {
        throw IntegrityError("block failed authentication");
    }
    return plain;
}

std::string FileManifest::to_json() const {
    nlohmann::json j = {
        {"block_count", block_count},
        {"block_size", block_size},
        {"commit", commit.hex()},
        {"file_id", file_id_hex(file_id)},
        {"min_degree", min_degree},
        {"op_counter", op_counter},
        {"root_digest", root_digest.hex()},
        {"seed_fingerprint", seed_fingerprint.hex()},
        {"version", version},
    };
    return j.dump();
}

FileManifest FileManifest::from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        FileManifest m;
        m.block_count = j.at("block_count").get<std::uint64_t>();
        m.block_size = j.at("block_size").get<std::uint64_t>();
        m.commit = Digest32::from_hex(j.at("commit").get<std::string>());
        m.file_id = file_id_from_hex(j.at("file_id").get<std::string>());
        m.min_degree = j.at("min_degree").get<std::uint32_t>();
        m.op_counter = j.at("op_counter").get<std::uint64_t>();
        m.root_digest = Digest32::from_hex(j.at("root_digest").get<std::string>());
        m.seed_fingerprint = Digest32::from_hex(j.at("seed_fingerprint").get<std::string>());
        m.version = j.at("version").get<std::uint64_t>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw CodecError(std::string("bad manifest: ") + e.what());
    }
}

Upload build_upload(ByteView file, ByteView key, const authcodec::Seed& seed, const FileId& id,
                    std::size_t block_size, unsigned t, bool parallel) {
    check_key(key);
    const std::vector<Bytes> plain = chunk_file(file, block_size);
    Upload up;
    up.blocks.resize(plain.size());
    const auto count = static_cast<std::ptrdiff_t>(plain.size());
    if (parallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < count; ++i) {
            up.blocks[i] = encrypt_block(key, id, static_cast<std::uint64_t>(i), 0, plain[i]).serialize();
        }
        up.digests = kernels::block_digests(seed, up.blocks);
    } else {
        for (std::ptrdiff_t i = 0; i < count; ++i) {
            up.blocks[i] = encrypt_block(key, id, static_cast<std::uint64_t>(i), 0, plain[i]).serialize();
        }
        up.digests = kernels::serial::block_digests(seed, up.blocks);
    }
    up.manifest.file_id = id;
    up.manifest.block_size = block_size;
    up.manifest.block_count = plain.size();
    up.manifest.seed_fingerprint = seed.fingerprint();
    up.manifest.min_degree = t;
    up.shadow_root = baselines::naive_root_oracle(up.digests, t);
    return up;
}

}  // namespace ebtree::filepipe
