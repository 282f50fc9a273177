#include "ebtree/wire.hpp"

#include "ebtree/errors.hpp"

namespace ebtree::wire {

namespace {

template <typename F>
auto guarded(F&& f) {
    try {
        return f();
    } catch (const Json::exception& e) {
        throw CodecError(std::string("malformed message: ") + e.what());
    }
}

Nonce nonce_from_hex(const std::string& hex) {
    const Bytes b = from_hex(hex);
    if (b.size() != 16) throw CodecError("nonce must be 16 bytes");
    Nonce n;
    std::copy(b.begin(), b.end(), n.begin());
    return n;
}

}  // namespace

std::string canonical(const Json& j) { return j.dump(); }

Json to_json(const authcodec::AuditProof& p) {
    Json path = Json::array();
    for (const auto& e : p.path) path.push_back(Json::array({to_hex(e.prefix), to_hex(e.suffix)}));
    return {{"block", to_hex(p.block)}, {"path", std::move(path)}, {"position", p.position}};
}

authcodec::AuditProof proof_from_json(const Json& j) {
    return guarded([&] {
        authcodec::AuditProof p;
        p.position = j.at("position").get<std::uint64_t>();
        p.block = from_hex(j.at("block").get<std::string>());
        for (const auto& e : j.at("path")) {
            if (!e.is_array() || e.size() != 2) throw CodecError("path entry must be [prefix, suffix]");
            p.path.push_back({from_hex(e[0].get<std::string>()), from_hex(e[1].get<std::string>())});
        }
        return p;
    });
}

Json to_json(const Challenge& c) {
    Json j = {{"type", type::kChallenge},
              {"file", filepipe::file_id_hex(c.file)},
              {"nonce", to_hex({c.nonce.data(), c.nonce.size()})},
              {"k", c.k}};
    j["version"] = c.version ? Json(*c.version) : Json("latest");
    return j;
}

Challenge challenge_from_json(const Json& j) {
    return guarded([&] {
        Challenge c;
        c.file = filepipe::file_id_from_hex(j.at("file").get<std::string>());
        c.nonce = nonce_from_hex(j.at("nonce").get<std::string>());
        c.k = j.at("k").get<std::uint32_t>();
        const auto& v = j.at("version");
        if (v.is_string()) {
            if (v.get<std::string>() != "latest") throw CodecError("version must be a number or \"latest\"");
        } else {
            c.version = v.get<std::uint64_t>();
        }
        return c;
    });
}

Json to_json(const ProofBundle& b) {
    Json proofs = Json::array();
    for (const auto& p : b.proofs) proofs.push_back(to_json(p));
    return {{"type", type::kProof},
            {"file", filepipe::file_id_hex(b.file)},
            {"version", b.version},
            {"root", b.root_digest.hex()},
            {"blocks", b.blocks},
            {"proofs", std::move(proofs)}};
}

ProofBundle bundle_from_json(const Json& j) {
    return guarded([&] {
        ProofBundle b;
        b.file = filepipe::file_id_from_hex(j.at("file").get<std::string>());
        b.version = j.at("version").get<std::uint64_t>();
        b.root_digest = Digest32::from_hex(j.at("root").get<std::string>());
        b.blocks = j.at("blocks").get<std::uint64_t>();
        for (const auto& p : j.at("proofs")) b.proofs.push_back(proof_from_json(p));
        return b;
    });
}

Json to_json(const Ack& a) {
    return {{"type", type::kAck},
            {"file", filepipe::file_id_hex(a.file)},
            {"version", a.version},
            {"root", a.root_digest.hex()},
            {"commit", a.commit.hex()},
            {"blocks", a.blocks}};
}

Ack ack_from_json(const Json& j) {
    return guarded([&] {
        Ack a;
        a.file = filepipe::file_id_from_hex(j.at("file").get<std::string>());
        a.version = j.at("version").get<std::uint64_t>();
        a.root_digest = Digest32::from_hex(j.at("root").get<std::string>());
        a.commit = Digest32::from_hex(j.at("commit").get<std::string>());
        a.blocks = j.at("blocks").get<std::uint64_t>();
        return a;
    });
}

Json error(const char* code, const std::string& detail) {
    return {{"type", type::kErr}, {"code", code}, {"detail", detail}};
}

void expect_type(const Json& reply, const char* expected) {
    const std::string t = reply.is_object() && reply.contains("type") && reply["type"].is_string()
                              ? reply["type"].get<std::string>()
                              : std::string();
    if (t == type::kErr) {
        throw ServerError(reply.value("code", std::string("MALFORMED")), reply.value("detail", std::string()));
    }
    if (t != expected) throw CodecError("expected " + std::string(expected) + " reply, got '" + t + "'");
}

}  // namespace ebtree::wire
