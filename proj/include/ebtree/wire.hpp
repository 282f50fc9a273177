#pragma once

// Newline-delimited canonical JSON messages exchanged by client, TPA and server.
// Byte fields are lowercase hex; objects are dumped with sorted keys and no whitespace.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ebtree/authcodec.hpp"
#include "ebtree/filepipe.hpp"

namespace ebtree::wire {

using Json = nlohmann::json;

namespace type {
inline constexpr const char* kUpload = "UPLOAD";
inline constexpr const char* kInsert = "INSERT";
inline constexpr const char* kDelete = "DELETE";
inline constexpr const char* kUpdate = "UPDATE";
inline constexpr const char* kGet = "GET";
inline constexpr const char* kChallenge = "CHALLENGE";
inline constexpr const char* kProof = "PROOF";
inline constexpr const char* kAck = "ACK";
inline constexpr const char* kErr = "ERR";
inline constexpr const char* kManifest = "MANIFEST";
}  // namespace type

namespace code {
inline constexpr const char* kNotFound = "NOT_FOUND";
inline constexpr const char* kRange = "RANGE";
inline constexpr const char* kConflict = "CONFLICT";
inline constexpr const char* kMalformed = "MALFORMED";
inline constexpr const char* kAuth = "AUTH";
}  // namespace code

using Nonce = std::array<std::uint8_t, 16>;

struct Challenge {
    filepipe::FileId file{};
    std::optional<std::uint64_t> version;  // nullopt = latest
    Nonce nonce{};
    std::uint32_t k = 300;
};

struct ProofBundle {
    filepipe::FileId file{};
    std::uint64_t version = 0;
    Digest32 root_digest;
    std::uint64_t blocks = 0;
    std::vector<authcodec::AuditProof> proofs;
};

struct Ack {
    filepipe::FileId file{};
    std::uint64_t version = 0;
    Digest32 root_digest;
    Digest32 commit;
    std::uint64_t blocks = 0;
};

std::string canonical(const Json& j);

Json to_json(const authcodec::AuditProof& p);
authcodec::AuditProof proof_from_json(const Json& j);

Json to_json(const Challenge& c);
Challenge challenge_from_json(const Json& j);

Json to_json(const ProofBundle& b);
ProofBundle bundle_from_json(const Json& j);

Json to_json(const Ack& a);
Ack ack_from_json(const Json& j);

Json error(const char* code, const std::string& detail);

/// Raised on the client side when the peer answers with ERR.
class ServerError : public std::runtime_error {
  public:
    ServerError(std::string code, const std::string& detail)
        : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

  private:
    std::string code_;
};

/// Throws ServerError when `reply` is an ERR, CodecError when its type is not `expected`.
void expect_type(const Json& reply, const char* expected);

}  // namespace ebtree::wire
