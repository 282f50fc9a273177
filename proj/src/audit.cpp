#include "ebtree/audit.hpp"

#include <fstream>

#include "ebtree/errors.hpp"
#include "ebtree/kernels.hpp"

namespace ebtree::audit {

using wire::Json;

namespace {

constexpr std::uint32_t kMaxChallengeSize = 1u << 20;

Digest32 token_hash(const std::string& token) { return sha256(as_bytes(token)); }

std::filesystem::path meta_path(const std::filesystem::path& dir, const std::string& file_hex) {
    return dir / (file_hex + ".meta");
}

std::optional<std::uint64_t> optional_version(const Json& j) {
    if (!j.contains("version")) return std::nullopt;
    const auto& v = j.at("version");
    if (v.is_string() && v.get<std::string>() == "latest") return std::nullopt;
    return v.get<std::uint64_t>();
}

}  // namespace

std::vector<std::uint64_t> derive_positions(const wire::Nonce& nonce, std::uint32_t k, std::uint64_t n) {
    if (n == 0) throw EmptyFileError("cannot sample positions of an empty file");
    std::vector<std::uint64_t> out;
    out.reserve(k);
    const std::uint8_t tag = authcodec::kPositionTag;
    for (std::uint32_t i = 1; i <= k; ++i) {
        Bytes index;
        put_u32_be(index, i);
        const Digest32 h = sha256({ByteView(&tag, 1), ByteView(nonce.data(), nonce.size()), ByteView(index)});
        unsigned __int128 rem = 0;
        for (std::uint8_t byte : h.bytes) rem = (rem * 256 + byte) % n;
        out.push_back(1 + static_cast<std::uint64_t>(rem));
    }
    return out;
}

StorageServer::StorageServer() = default;

StorageServer::StorageServer(std::filesystem::path data_dir, bool sync) : data_dir_(std::move(data_dir)), sync_(sync) {
    std::filesystem::create_directories(*data_dir_);
}

StorageServer::FileState& StorageServer::file_state(const filepipe::FileId& file) const {
    const std::string hex = filepipe::file_id_hex(file);
    std::lock_guard lock(files_mu_);
    auto it = files_.find(hex);
    if (it != files_.end()) return *it->second;
    if (!data_dir_ || !VersionStore::exists(*data_dir_, hex)) throw NotFoundError("unknown file " + hex);

    auto fs = std::make_unique<FileState>();
    fs->store = VersionStore::open(*data_dir_, hex, false, kDefaultMinDegree, sync_);
    std::ifstream meta(meta_path(*data_dir_, hex));
    if (!meta) throw NotFoundError("missing metadata for file " + hex);
    const Json m = Json::parse(meta);
    fs->token_hash = Digest32::from_hex(m.at("token_sha256").get<std::string>());
    return *files_.emplace(hex, std::move(fs)).first->second;
}

void StorageServer::check_token(const FileState& fs, const std::string& token) const {
    if (token_hash(token) != fs.token_hash) throw AuthError("bad token");
}

VersionStore& StorageServer::store(const filepipe::FileId& file) const { return *file_state(file).store; }

std::uint64_t StorageServer::version_count(const filepipe::FileId& file) const {
    return store(file).records().size();
}

wire::Ack StorageServer::upload(const filepipe::FileId& file, const std::string& token, unsigned t,
                                std::span<const Bytes> blocks, std::span<const Digest32> digests) {
    if (blocks.size() != digests.size()) throw CodecError("blocks and digests differ in length");
    if (t < 2) throw ConfigError("minimum degree must be >= 2");
    const std::string hex = filepipe::file_id_hex(file);

    std::lock_guard lock(files_mu_);
    if (files_.count(hex) != 0 || (data_dir_ && VersionStore::exists(*data_dir_, hex))) {
        throw ConflictError("file " + hex + " already exists");
    }
    auto fs = std::make_unique<FileState>();
    fs->token_hash = token_hash(token);
    if (data_dir_) {
        std::ofstream meta(meta_path(*data_dir_, hex));
        meta << Json{{"t", t}, {"token_sha256", fs->token_hash.hex()}}.dump() << '\n';
        if (!meta) throw std::runtime_error("cannot write file metadata");
        fs->store = VersionStore::open(*data_dir_, hex, true, t, sync_);
    } else {
        fs->store = VersionStore::in_memory(t);
    }
    std::vector<BlockEntry> entries;
    entries.reserve(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) entries.push_back({fs->store->blocks()->put(blocks[i]), digests[i]});
    const Tree tree = Tree::build(fs->store->nodes(), t, entries);
    const VersionRecord r = fs->store->commit(std::nullopt, tree, OpDescriptor::init());
    files_.emplace(hex, std::move(fs));
    return {file, r.version, r.root_digest, r.commit, r.blocks};
}

wire::Ack StorageServer::apply_mutation(const filepipe::FileId& file, const std::string& token,
                                        const std::string& op, std::uint64_t base_version, std::uint64_t rank,
                                        const std::optional<Bytes>& block, const std::optional<Digest32>& digest) {
    FileState& fs = file_state(file);
    check_token(fs, token);
    std::lock_guard lock(fs.mutate_mu);
    const auto head = fs.store->latest();
    if (!head || head->version != base_version) {
        throw ConflictError("base version " + std::to_string(base_version) + " is not the latest");
    }
    const Tree tree = fs.store->load(head->version);
    auto entry = [&] {
        if (!block || !digest) throw CodecError(op + " needs a block and its digest");
        return BlockEntry{fs.store->blocks()->put(*block), *digest};
    };

    VersionRecord r;
    if (op == wire::type::kInsert) {
        if (rank < 1 || rank > tree.size() + 1) throw RangeError("insert rank out of range");
        r = fs.store->commit(head, tree.insert(rank, entry()), OpDescriptor::insert(rank));
    } else if (op == wire::type::kDelete) {
        r = fs.store->commit(head, tree.erase(rank), OpDescriptor::erase(rank));
    } else if (op == wire::type::kUpdate) {
        if (rank < 1 || rank > tree.size()) throw RangeError("update rank out of range");
        r = fs.store->commit(head, tree.update(rank, entry()), OpDescriptor::update(rank));
    } else {
        throw CodecError("unknown mutation " + op);
    }
    return {file, r.version, r.root_digest, r.commit, r.blocks};
}

wire::ProofBundle StorageServer::handle_challenge(const wire::Challenge& c) const {
    if (c.k < 1 || c.k > kMaxChallengeSize) throw CodecError("challenge size out of range");
    const FileState& fs = file_state(c.file);
    const VersionRecord r = c.version ? fs.store->record(*c.version) : fs.store->latest().value();
    const Tree tree = fs.store->load(r.version);
    const auto positions = derive_positions(c.nonce, c.k, tree.size());
    const auto paths = kernels::extract_paths(tree, positions);

    wire::ProofBundle bundle{c.file, r.version, r.root_digest, r.blocks, {}};
    bundle.proofs.reserve(paths.size());
    for (const auto& p : paths) {
        bundle.proofs.push_back({p.position, *fs.store->blocks()->get(p.block.block), p.path});
    }
    return bundle;
}

wire::ProofBundle StorageServer::get(const filepipe::FileId& file, const std::string& token, std::uint64_t rank,
                                     std::optional<std::uint64_t> version) const {
    const FileState& fs = file_state(file);
    check_token(fs, token);
    const VersionRecord r = version ? fs.store->record(*version) : fs.store->latest().value();
    const Tree tree = fs.store->load(r.version);
    const PathProof p = tree.sibling_path(rank);
    return {file, r.version, r.root_digest, r.blocks, {{p.position, *fs.store->blocks()->get(p.block.block), p.path}}};
}

void StorageServer::corrupt_block(const filepipe::FileId& file, std::uint64_t rank, std::size_t byte_index) {
    FileState& fs = file_state(file);
    const BlockEntry e = fs.store->load_latest().get(rank);
    if (auto* mem = dynamic_cast<MemoryBlockStore*>(fs.store->blocks().get())) {
        Bytes payload = *mem->get(e.block);
        if (byte_index >= payload.size()) throw RangeError("byte index outside block");
        payload[byte_index] ^= 0x01;
        mem->tamper(e.block, std::move(payload));
        return;
    }
    rewrite_record_byte(blocks_path(*data_dir_, filepipe::file_id_hex(file)), e.block.id, byte_index);
}

Json StorageServer::handle(const Json& request) {
    try {
        const std::string type = request.at("type").get<std::string>();
        if (type == wire::type::kChallenge) {
            return wire::to_json(handle_challenge(wire::challenge_from_json(request)));
        }
        const auto file = filepipe::file_id_from_hex(request.at("file").get<std::string>());
        const std::string token = request.value("token", std::string());
        if (type == wire::type::kGet) {
            return wire::to_json(get(file, token, request.at("rank").get<std::uint64_t>(), optional_version(request)));
        }
        if (type == wire::type::kUpload) {
            std::vector<Bytes> blocks;
            std::vector<Digest32> digests;
            for (const auto& b : request.at("blocks")) blocks.push_back(from_hex(b.get<std::string>()));
            for (const auto& d : request.at("digests")) digests.push_back(Digest32::from_hex(d.get<std::string>()));
            const unsigned t = request.value("t", kDefaultMinDegree);
            return wire::to_json(upload(file, token, t, blocks, digests));
        }
        if (type == wire::type::kInsert || type == wire::type::kDelete || type == wire::type::kUpdate) {
            std::optional<Bytes> block;
            std::optional<Digest32> digest;
            if (request.contains("block")) block = from_hex(request.at("block").get<std::string>());
            if (request.contains("digest")) digest = Digest32::from_hex(request.at("digest").get<std::string>());
            return wire::to_json(apply_mutation(file, token, type, request.at("base_version").get<std::uint64_t>(),
                                                request.at("rank").get<std::uint64_t>(), block, digest));
        }
        return wire::error(wire::code::kMalformed, "unsupported message type " + type);
    } catch (const NotFoundError& e) {
        return wire::error(wire::code::kNotFound, e.what());
    } catch (const IntegrityError& e) {
        return wire::error(wire::code::kNotFound, std::string("stored data unreadable: ") + e.what());
    } catch (const RangeError& e) {
        return wire::error(wire::code::kRange, e.what());
    } catch (const EmptyFileError& e) {
        return wire::error(wire::code::kRange, e.what());
    } catch (const ConflictError& e) {
        return wire::error(wire::code::kConflict, e.what());
    } catch (const AuthError& e) {
        return wire::error(wire::code::kAuth, e.what());
    } catch (const std::exception& e) {
        return wire::error(wire::code::kMalformed, e.what());
    }
}

Json LocalChannel::request(const Json& message) {
    return Json::parse(server_.handle(Json::parse(wire::canonical(message))).dump());
}

const char* to_string(AuditVerdict::Outcome o) {
    switch (o) {
        case AuditVerdict::Outcome::kPass: return "pass";
        case AuditVerdict::Outcome::kIntegrity: return "integrity";
        case AuditVerdict::Outcome::kVersionMismatch: return "version-mismatch";
        case AuditVerdict::Outcome::kTransport: return "transport";
        case AuditVerdict::Outcome::kServerError: return "server-error";
    }
    return "unknown";
}

void Auditor::accept(const Json& message) {
    try {
        if (message.at("type").get<std::string>() != wire::type::kManifest) throw CodecError("not a MANIFEST message");
        const auto manifest = filepipe::FileManifest::from_json(message.at("manifest").dump());
        const auto seed = authcodec::Seed::from_bytes(from_hex(message.at("seed").get<std::string>()));
        accept(manifest, seed);
    } catch (const Json::exception& e) {
        throw CodecError(std::string("bad MANIFEST message: ") + e.what());
    }
}

void Auditor::accept(const filepipe::FileManifest& manifest, const authcodec::Seed& seed) {
    if (seed.fingerprint() != manifest.seed_fingerprint) throw CodecError("seed does not match manifest fingerprint");
    records_[manifest.file_id] = {manifest, seed};
}

const filepipe::FileManifest& Auditor::manifest(const filepipe::FileId& file) const {
    auto it = records_.find(file);
    if (it == records_.end()) throw NotFoundError("auditor has no manifest for " + filepipe::file_id_hex(file));
    return it->second.manifest;
}

wire::Challenge Auditor::make_challenge(const filepipe::FileId& file, std::uint32_t k) const {
    wire::Challenge c;
    c.file = file;
    c.k = k;
    const Bytes nonce = random_bytes(c.nonce.size());
    std::copy(nonce.begin(), nonce.end(), c.nonce.begin());
    return c;
}

AuditVerdict Auditor::check(const wire::Challenge& challenge, const wire::ProofBundle& bundle) const {
    auto it = records_.find(challenge.file);
    if (it == records_.end()) throw NotFoundError("auditor has no manifest for " + filepipe::file_id_hex(challenge.file));
    const auto& [m, seed] = it->second;

    AuditVerdict v;
    v.k = challenge.k;
    v.version = bundle.version;
    if (bundle.file != challenge.file) {
        v.outcome = AuditVerdict::Outcome::kIntegrity;
        v.detail = "bundle answers a different file";
        return v;
    }
    if (bundle.version != m.version || bundle.root_digest != m.root_digest || bundle.blocks != m.block_count) {
        v.outcome = AuditVerdict::Outcome::kVersionMismatch;
        v.detail = "server reports version " + std::to_string(bundle.version) + " root " + bundle.root_digest.hex() +
                   ", manifest holds version " + std::to_string(m.version) + " root " + m.root_digest.hex();
        return v;
    }
    const auto positions = derive_positions(challenge.nonce, challenge.k, m.block_count);
    if (bundle.proofs.size() != positions.size()) {
        v.outcome = AuditVerdict::Outcome::kIntegrity;
        v.detail = "expected " + std::to_string(positions.size()) + " proofs, got " + std::to_string(bundle.proofs.size());
        v.failed_ranks = positions;
        return v;
    }
    const auto results = kernels::verify_proofs(bundle.proofs, seed, m.root_digest, m.block_count);
    for (std::size_t i = 0; i < results.size(); ++i) {
        const bool rank_ok = bundle.proofs[i].position == positions[i];
        if (results[i].accepted() && rank_ok) continue;
        if (v.failed_ranks.empty()) {
            v.detail = "rank " + std::to_string(positions[i]) + ": " +
                       (rank_ok ? std::string(authcodec::to_string(results[i].verdict)) : std::string("wrong rank"));
        }
        v.failed_ranks.push_back(positions[i]);
    }
    if (!v.failed_ranks.empty()) v.outcome = AuditVerdict::Outcome::kIntegrity;
    return v;
}

AuditVerdict Auditor::run_audit(Channel& channel, const filepipe::FileId& file, std::uint32_t k, int attempts) const {
    const auto& m = manifest(file);
    const wire::Challenge challenge = make_challenge(file, k);
    AuditVerdict v;
    v.k = k;
    v.version = m.version;
    Json reply;
    for (int attempt = 1;; ++attempt) {
        try {
            reply = channel.request(wire::to_json(challenge));
            break;
        } catch (const TransportError& e) {
            if (attempt >= attempts) {
                v.outcome = AuditVerdict::Outcome::kTransport;
                v.detail = e.what();
                return v;
            }
        }
    }
    try {
        wire::expect_type(reply, wire::type::kProof);
        return check(challenge, wire::bundle_from_json(reply));
    } catch (const wire::ServerError& e) {
        v.outcome = AuditVerdict::Outcome::kServerError;
        v.detail = e.what();
    } catch (const CodecError& e) {
        v.outcome = AuditVerdict::Outcome::kIntegrity;
        v.detail = std::string("malformed proof bundle: ") + e.what();
    }
    return v;
}

Client::Client(Channel& channel, Bytes key, authcodec::Seed seed, std::string token)
    : channel_(channel), key_(std::move(key)), seed_(seed), token_(std::move(token)) {
    if (key_.size() != filepipe::kKeySize) throw ConfigError("encryption key must be 32 bytes");
}

const filepipe::FileManifest& Client::upload(ByteView file, const filepipe::FileId& id, std::size_t block_size,
                                             unsigned t) {
    const filepipe::Upload up = filepipe::build_upload(file, key_, seed_, id, block_size, t);
    Json blocks = Json::array();
    Json digests = Json::array();
    for (std::size_t i = 0; i < up.blocks.size(); ++i) {
        blocks.push_back(to_hex(up.blocks[i]));
        digests.push_back(up.digests[i].hex());
    }
    const Json reply = channel_.request({{"type", wire::type::kUpload},
                                         {"file", filepipe::file_id_hex(id)},
                                         {"token", token_},
                                         {"t", t},
                                         {"blocks", std::move(blocks)},
                                         {"digests", std::move(digests)}});
    wire::expect_type(reply, wire::type::kAck);
    const wire::Ack ack = wire::ack_from_json(reply);
    if (ack.root_digest != up.shadow_root || ack.blocks != up.manifest.block_count) {
        throw IntegrityError("server root does not match the local shadow build");
    }
    manifest_ = up.manifest;
    manifest_.version = ack.version;
    manifest_.root_digest = ack.root_digest;
    manifest_.commit = ack.commit;
    return manifest_;
}

const filepipe::FileManifest& Client::insert(std::uint64_t rank, ByteView plaintext) {
    const Bytes p(plaintext.begin(), plaintext.end());
    return mutate(wire::type::kInsert, rank, &p);
}

const filepipe::FileManifest& Client::erase(std::uint64_t rank) { return mutate(wire::type::kDelete, rank, nullptr); }

const filepipe::FileManifest& Client::update(std::uint64_t rank, ByteView plaintext) {
    const Bytes p(plaintext.begin(), plaintext.end());
    return mutate(wire::type::kUpdate, rank, &p);
}

const filepipe::FileManifest& Client::mutate(const char* op, std::uint64_t rank, const Bytes* plaintext) {
    const std::uint64_t counter = manifest_.op_counter + 1;
    Json req = {{"type", op},
                {"file", filepipe::file_id_hex(manifest_.file_id)},
                {"token", token_},
                {"base_version", manifest_.version},
                {"rank", rank}};
    Bytes cipher;
    if (plaintext != nullptr) {
        cipher = filepipe::encrypt_block(key_, manifest_.file_id, rank, counter, *plaintext).serialize();
        req["block"] = to_hex(cipher);
        req["digest"] = authcodec::block_digest(seed_, cipher).hex();
    }
    const Json reply = channel_.request(req);
    wire::expect_type(reply, wire::type::kAck);
    const wire::Ack ack = wire::ack_from_json(reply);

    std::uint64_t expected_blocks = manifest_.block_count;
    if (std::string_view(op) == wire::type::kInsert) ++expected_blocks;
    if (std::string_view(op) == wire::type::kDelete) --expected_blocks;
    if (ack.version != manifest_.version + 1 || ack.blocks != expected_blocks) {
        throw IntegrityError("acknowledgement does not describe the requested mutation");
    }
    if (plaintext != nullptr) {
        // The new root must place exactly our block at `rank`.
        const Json proof_reply = channel_.request({{"type", wire::type::kGet},
                                                   {"file", filepipe::file_id_hex(manifest_.file_id)},
                                                   {"token", token_},
                                                   {"rank", rank},
                                                   {"version", ack.version}});
        wire::expect_type(proof_reply, wire::type::kProof);
        const auto bundle = wire::bundle_from_json(proof_reply);
        if (bundle.proofs.size() != 1 || bundle.proofs[0].block != cipher ||
            !authcodec::verify_proof(bundle.proofs[0], seed_, ack.root_digest, ack.blocks).accepted()) {
            throw IntegrityError("server root does not contain the written block at rank " + std::to_string(rank));
        }
    }
    manifest_.version = ack.version;
    manifest_.root_digest = ack.root_digest;
    manifest_.commit = ack.commit;
    manifest_.block_count = ack.blocks;
    manifest_.op_counter = counter;
    return manifest_;
}

Bytes Client::get(std::uint64_t rank) {
    const Json reply = channel_.request({{"type", wire::type::kGet},
                                         {"file", filepipe::file_id_hex(manifest_.file_id)},
                                         {"token", token_},
                                         {"rank", rank},
                                         {"version", manifest_.version}});
    wire::expect_type(reply, wire::type::kProof);
    const auto bundle = wire::bundle_from_json(reply);
    if (bundle.proofs.size() != 1) throw IntegrityError("GET reply must carry one proof");
    const auto result = authcodec::verify_proof(bundle.proofs[0], seed_, manifest_.root_digest, manifest_.block_count);
    if (!result.accepted() || bundle.proofs[0].position != rank) {
        throw IntegrityError("block " + std::to_string(rank) + " failed verification: " + result.detail);
    }
    return filepipe::decrypt_block(key_, filepipe::CipherBlock::parse(bundle.proofs[0].block));
}

Bytes Client::download() {
    Bytes out;
    for (std::uint64_t r = 1; r <= manifest_.block_count; ++r) {
        const Bytes b = get(r);
        out.insert(out.end(), b.begin(), b.end());
    }
    return out;
}

Json Client::manifest_message() const {
    return {{"type", wire::type::kManifest},
            {"manifest", Json::parse(manifest_.to_json())},
            {"seed", to_hex(seed_.view())}};
}

}  // namespace ebtree::audit
