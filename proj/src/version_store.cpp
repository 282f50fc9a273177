#include "ebtree/version_store.hpp"

#include <charconv>

#include "ebtree/authcodec.hpp"
#include "ebtree/errors.hpp"

namespace ebtree {

std::string OpDescriptor::canonical() const {
    switch (kind) {
        case Kind::kInit: return "init";
        case Kind::kBatch: return "batch";
        case Kind::kInsert: return "insert(" + std::to_string(position) + ")";
        case Kind::kDelete: return "delete(" + std::to_string(position) + ")";
        case Kind::kUpdate: return "update(" + std::to_string(position) + ")";
    }
    return {};
}

OpDescriptor OpDescriptor::parse(std::string_view text) {
    if (text == "init") return init();
    if (text == "batch") return batch();
    const auto open = text.find('(');
    if (open == std::string_view::npos || text.back() != ')') throw CodecError("bad op descriptor");
    const auto name = text.substr(0, open);
    const auto digits = text.substr(open + 1, text.size() - open - 2);
    std::uint64_t p = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), p);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || digits.empty()) {
        throw CodecError("bad op descriptor position");
    }
    if (name == "insert") return insert(p);
    if (name == "delete") return erase(p);
    if (name == "update") return update(p);
    throw CodecError("unknown op descriptor");
}

Digest32 chain_commit(const Digest32& previous, const Digest32& root_digest, const OpDescriptor& op) {
    const std::uint8_t tag = authcodec::kCommitTag;
    const std::string op_bytes = op.canonical();
    return sha256({ByteView(&tag, 1), previous.view(), root_digest.view(), as_bytes(op_bytes)});
}

// u64 version || u64 root || root digest || u32 oplen || op || commit || u64 blocks || u32 t
Bytes encode_version_record(const VersionRecord& r) {
    Bytes out;
    put_u64_be(out, r.version);
    put_u64_be(out, r.root.id);
    out.insert(out.end(), r.root_digest.bytes.begin(), r.root_digest.bytes.end());
    const std::string op = r.op.canonical();
    put_u32_be(out, static_cast<std::uint32_t>(op.size()));
    out.insert(out.end(), op.begin(), op.end());
    out.insert(out.end(), r.commit.bytes.begin(), r.commit.bytes.end());
    put_u64_be(out, r.blocks);
    put_u32_be(out, r.min_degree);
    return out;
}

VersionRecord decode_version_record(ByteView b) {
    if (b.size() < 8 + 8 + 32 + 4) throw CodecError("truncated version record");
    VersionRecord r;
    std::size_t at = 0;
    r.version = get_u64_be(b.data());
    r.root = NodeRef{get_u64_be(b.data() + 8)};
    r.root_digest = Digest32::from_bytes(b.subspan(16, 32));
    at = 48;
    const std::size_t oplen = get_u32_be(b.data() + at);
    at += 4;
    if (b.size() != at + oplen + 32 + 8 + 4) throw CodecError("version record length mismatch");
    r.op = OpDescriptor::parse(std::string_view(reinterpret_cast<const char*>(b.data() + at), oplen));
    at += oplen;
    r.commit = Digest32::from_bytes(b.subspan(at, 32));
    at += 32;
    r.blocks = get_u64_be(b.data() + at);
    r.min_degree = get_u32_be(b.data() + at + 8);
    return r;
}

ChainCheck verify_chain(std::span<const VersionRecord> log) {
    Digest32 prev{};
    for (std::size_t i = 0; i < log.size(); ++i) {
        const auto& r = log[i];
        if (r.version != i) {
            return {false, i, "version " + std::to_string(i) + " missing (found " + std::to_string(r.version) + ")"};
        }
        if (chain_commit(prev, r.root_digest, r.op) != r.commit) {
            return {false, i, "commit mismatch at version " + std::to_string(i)};
        }
        prev = r.commit;
    }
    return {};
}

std::filesystem::path nodes_path(const std::filesystem::path& dir, const std::string& file_id) {
    return dir / (file_id + ".nodes");
}
std::filesystem::path blocks_path(const std::filesystem::path& dir, const std::string& file_id) {
    return dir / (file_id + ".blocks");
}
std::filesystem::path versions_path(const std::filesystem::path& dir, const std::string& file_id) {
    return dir / (file_id + ".versions");
}

LogNodeStore::LogNodeStore(std::filesystem::path path, AppendLog::Mode mode, bool sync)
    : log_(std::move(path), mode, sync) {}

NodeRef LogNodeStore::put(const Node& node) {
    const std::uint64_t at = log_.append(encode_node_record(node));
    auto cached = std::make_shared<const Node>(node);
    std::unique_lock lock(mu_);
    cache_.emplace(at, std::move(cached));
    return NodeRef{at};
}

std::shared_ptr<const Node> LogNodeStore::get(NodeRef ref) const {
    count_read();
    {
        std::shared_lock lock(mu_);
        auto it = cache_.find(ref.id);
        if (it != cache_.end()) return it->second;
    }
    auto node = std::make_shared<const Node>(decode_node_record(log_.read(ref.id)));
    std::unique_lock lock(mu_);
    return cache_.emplace(ref.id, std::move(node)).first->second;
}

std::uint64_t LogNodeStore::node_count() const { return log_.offsets().size(); }

void LogNodeStore::drop_cache() {
    std::unique_lock lock(mu_);
    cache_.clear();
}

LogBlockStore::LogBlockStore(std::filesystem::path path, AppendLog::Mode mode, bool sync)
    : log_(std::move(path), mode, sync) {}

BlockRef LogBlockStore::put(ByteView payload) { return BlockRef{log_.append(payload)}; }

std::shared_ptr<const Bytes> LogBlockStore::get(BlockRef ref) const {
    return std::make_shared<const Bytes>(log_.read(ref.id));
}

std::uint64_t LogBlockStore::block_count() const { return log_.offsets().size(); }

std::unique_ptr<VersionStore> VersionStore::in_memory(unsigned t) {
    std::unique_ptr<VersionStore> s(new VersionStore());
    s->nodes_ = std::make_shared<MemoryNodeStore>();
    s->blocks_ = std::make_shared<MemoryBlockStore>();
    s->t_ = t;
    return s;
}

bool VersionStore::exists(const std::filesystem::path& dir, const std::string& file_id) {
    return std::filesystem::exists(ebtree::versions_path(dir, file_id));
}

std::unique_ptr<VersionStore> VersionStore::open(const std::filesystem::path& dir, const std::string& file_id,
                                                 bool create, unsigned t, bool sync, bool read_only) {
    if (!create && !exists(dir, file_id)) throw NotFoundError("no stored file " + file_id);
    if (create) std::filesystem::create_directories(dir);
    if (create && read_only) throw ConfigError("cannot create a read-only store");
    const auto mode = read_only ? AppendLog::Mode::kReadOnly : AppendLog::Mode::kReadWrite;
    std::unique_ptr<VersionStore> s(new VersionStore());
    // Version log first: a reader racing a live writer then never sees a record whose
    // nodes lie past the end it snapshotted for the node log.
    s->versions_path_ = ebtree::versions_path(dir, file_id);
    s->version_log_ = std::make_unique<AppendLog>(*s->versions_path_, mode, sync);
    s->nodes_ = std::make_shared<LogNodeStore>(nodes_path(dir, file_id), mode, sync);
    s->blocks_ = std::make_shared<LogBlockStore>(blocks_path(dir, file_id), mode, sync);
    s->t_ = t;
    for (auto off : s->version_log_->offsets()) {
        s->records_.push_back(decode_version_record(s->version_log_->read(off)));
    }
    if (!s->records_.empty()) s->t_ = s->records_.front().min_degree;
    return s;
}

std::optional<VersionRecord> VersionStore::latest() const {
    std::shared_lock lock(mu_);
    if (records_.empty()) return std::nullopt;
    return records_.back();
}

std::vector<VersionRecord> VersionStore::records() const {
    std::shared_lock lock(mu_);
    return records_;
}

VersionRecord VersionStore::record(std::uint64_t version) const {
    std::shared_lock lock(mu_);
    if (version >= records_.size()) throw NotFoundError("no version " + std::to_string(version));
    return records_[version];
}

VersionRecord VersionStore::commit(const std::optional<VersionRecord>& prev, const Tree& tree,
                                   const OpDescriptor& op) {
    std::lock_guard commit_lock(commit_mu_);
    const auto head = latest();
    if (prev.has_value() != head.has_value() || (prev && prev->version != head->version)) {
        throw ConflictError("stale base version");
    }
    VersionRecord r;
    r.version = head ? head->version + 1 : 0;
    r.root = tree.root();
    r.root_digest = tree.root_digest();
    r.op = op;
    r.commit = chain_commit(head ? head->commit : Digest32{}, r.root_digest, op);
    r.blocks = tree.size();
    r.min_degree = tree.min_degree();

    nodes_->flush();
    blocks_->flush();
    if (version_log_) {
        version_log_->append(encode_version_record(r));
        version_log_->flush();
    } else {
        std::unique_lock lock(mu_);
        stored_.push_back(r);
    }
    std::unique_lock lock(mu_);
    records_.push_back(r);
    return r;
}

Tree VersionStore::load(std::uint64_t version) const {
    const VersionRecord r = record(version);
    return Tree::open(nodes_, r.min_degree, r.root);
}

Tree VersionStore::load_latest() const {
    const auto head = latest();
    if (!head) throw NotFoundError("no committed version");
    return load(head->version);
}

ChainCheck VersionStore::verify_chain() const {
    std::vector<VersionRecord> log;
    if (version_log_) {
        AppendLog reader(*versions_path_, AppendLog::Mode::kReadOnly, false);
        for (auto off : reader.offsets()) {
            try {
                log.push_back(decode_version_record(reader.read(off)));
            } catch (const std::exception& e) {
                return {false, log.size(), std::string("unreadable version record: ") + e.what()};
            }
        }
    } else {
        std::shared_lock lock(mu_);
        log = stored_;
    }
    return ebtree::verify_chain(log);
}

namespace {

// Recomputes a subtree from its leaves and holds every stored derived field and the
// occupancy rules to the recomputed values. Throws IntegrityError on the first mismatch.
class DeepCheck {
  public:
    DeepCheck(const NodeStore& store, unsigned t) : store_(store), t_(t) {}

    struct Sum {
        Digest32 digest;
        std::uint64_t total = 0;
        std::size_t count = 0;
    };

    Sum visit(NodeRef ref, unsigned depth, bool is_root) {
        const auto node = store_.get(ref);
        const std::size_t n = node->count();
        if (node->blocks.size() != n) fail("block refs and digests differ in length");
        if (n > 2 * t_ - 1) fail("node over capacity");
        if (!is_root && n < t_ - 1) fail("node under minimum occupancy");
        Bytes bytes;
        std::uint64_t total = n;
        if (node->leaf) {
            if (!node->children.empty() || !node->sizes.empty()) fail("leaf with children");
            if (leaf_depth_ && *leaf_depth_ != depth) fail("leaves at different depths");
            leaf_depth_ = depth;
            authcodec::append_leaf(bytes, node->digests);
        } else {
            if (n == 0) fail("empty internal node");
            if (node->children.size() != n + 1 || node->sizes.size() != n + 1 || node->child_digests.size() != n + 1 ||
                node->child_counts.size() != n + 1) {
                fail("child arrays of wrong length");
            }
            std::vector<Digest32> digests;
            std::vector<std::uint64_t> sizes;
            for (std::size_t i = 0; i <= n; ++i) {
                const Sum c = visit(node->children[i], depth + 1, false);
                if (c.digest != node->child_digests[i]) fail("stored child digest differs");
                if (c.total != node->sizes[i]) fail("stored child size differs");
                if (c.count != node->child_counts[i]) fail("stored child count differs");
                digests.push_back(c.digest);
                sizes.push_back(c.total);
                total += c.total;
            }
            authcodec::append_internal(bytes, digests, sizes, node->digests);
        }
        const Digest32 digest = sha256(bytes);
        if (digest != node->digest) fail("stored node digest differs");
        if (total != node->total) fail("stored node total differs");
        return {digest, total, n};
    }

  private:
    [[noreturn]] static void fail(const std::string& why) { throw IntegrityError(why); }

    const NodeStore& store_;
    unsigned t_;
    std::optional<unsigned> leaf_depth_;
};

}  // namespace

bool VersionStore::verify_version(std::uint64_t version) const {
    const VersionRecord r = record(version);
    try {
        if (auto* log_nodes = dynamic_cast<LogNodeStore*>(nodes_.get())) log_nodes->drop_cache();
        if (r.min_degree != t_ || r.min_degree < 2) return false;
        const auto sum = DeepCheck(*nodes_, r.min_degree).visit(r.root, 0, true);
        return sum.digest == r.root_digest && sum.total == r.blocks;
    } catch (const std::exception&) {
        return false;
    }
}

void VersionStore::tamper_record(std::uint64_t k, const VersionRecord& r) {
    std::unique_lock lock(mu_);
    if (k >= stored_.size()) throw NotFoundError("no stored record " + std::to_string(k));
    stored_[k] = r;
}

void VersionStore::drop_record(std::uint64_t k) {
    std::unique_lock lock(mu_);
    if (k >= stored_.size()) throw NotFoundError("no stored record " + std::to_string(k));
    stored_.erase(stored_.begin() + static_cast<std::ptrdiff_t>(k));
}

}  // namespace ebtree
