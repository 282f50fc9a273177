#include "ebtree/bench_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <random>

#include "ebtree/audit.hpp"
#include "ebtree/baselines.hpp"
#include "ebtree/errors.hpp"
#include "ebtree/kernels.hpp"

namespace ebtree::bench {

namespace {

using Clock = std::chrono::steady_clock;

// Deterministic synthetic payload so that 1 GB workloads need not be held in memory.
Bytes payload(std::uint64_t index, std::size_t size) {
    Bytes out(size);
    Bytes tag;
    put_u64_be(tag, index);
    const Digest32 fill = sha256(ByteView(tag));
    for (std::size_t i = 0; i < size; ++i) out[i] = fill.bytes[i % Digest32::kSize] ^ static_cast<std::uint8_t>(i >> 5);
    return out;
}

std::vector<Digest32> payload_digests(const authcodec::Seed& seed, std::uint64_t n, std::size_t size) {
    std::vector<Digest32> out(n);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        out[i] = authcodec::block_digest(seed, payload(static_cast<std::uint64_t>(i), size));
    }
    return out;
}

template <class Fn>
Stats time_trials(const Config& cfg, Fn&& fn) {
    std::vector<double> samples;
    for (unsigned i = 0; i < cfg.warmup + cfg.trials; ++i) {
        const auto start = Clock::now();
        fn(i);
        const double ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
        if (i >= cfg.warmup) samples.push_back(ms);
    }
    return summarize(std::move(samples));
}

struct Workload {
    std::uint64_t n;
    std::size_t block_size;
    authcodec::Seed seed;
    std::vector<Digest32> digests;
    std::vector<std::uint64_t> ranks;  // one random rank per trial
    Digest32 fresh;                    // replacement digest for update/insert
    Bytes fresh_block;
};

void run_ebtree(const Config& cfg, const Workload& w, std::vector<Row>& rows) {
    auto store = std::make_shared<MemoryNodeStore>();
    std::vector<BlockEntry> entries(w.n);
    for (std::uint64_t i = 0; i < w.n; ++i) entries[i] = {BlockRef{i + 1}, w.digests[i]};
    const BlockEntry fresh{BlockRef{w.n + 1}, w.fresh};

    std::optional<Tree> tree;
    auto emit = [&](const std::string& metric, const Stats& s) {
        rows.push_back({metric, "ebtree", w.n, w.block_size, cfg.t, s.mean_ms, s.p95_ms, s.stddev_ms, cfg.trials});
    };
    auto wants = [&](const char* m) { return std::find(cfg.metrics.begin(), cfg.metrics.end(), m) != cfg.metrics.end(); };

    const Stats creation = time_trials(cfg, [&](unsigned) { tree = Tree::build(store, cfg.t, entries); });
    if (wants("creation")) emit("creation", creation);
    const Tree& base = *tree;

    if (wants("retrieval")) {
        emit("retrieval", time_trials(cfg, [&](unsigned i) {
                 const std::uint64_t r = w.ranks[i % w.ranks.size()];
                 const PathProof p = base.sibling_path(r);
                 const authcodec::AuditProof proof{p.position, payload(r - 1, w.block_size), p.path};
                 if (!authcodec::verify_proof(proof, w.seed, base.root_digest(), w.n).accepted()) {
                     throw IntegrityError("bench retrieval proof rejected");
                 }
             }));
    }
    if (wants("update")) {
        emit("update", time_trials(cfg, [&](unsigned i) { (void)base.update(w.ranks[i % w.ranks.size()], fresh); }));
    }
    if (wants("insert")) {
        emit("insert", time_trials(cfg, [&](unsigned i) { (void)base.insert(w.ranks[i % w.ranks.size()], fresh); }));
    }
    if (wants("delete")) {
        emit("delete", time_trials(cfg, [&](unsigned i) { (void)base.erase(w.ranks[i % w.ranks.size()]); }));
    }
    if (wants("audit")) {
        std::mt19937_64 rng(7);
        emit("audit", time_trials(cfg, [&](unsigned) {
                 wire::Nonce nonce;
                 for (auto& b : nonce) b = static_cast<std::uint8_t>(rng());
                 const auto positions = audit::derive_positions(nonce, cfg.audit_k, w.n);
                 const auto paths = kernels::extract_paths(base, positions);
                 std::vector<authcodec::AuditProof> proofs(paths.size());
#pragma omp parallel for schedule(static)
                 for (std::size_t j = 0; j < paths.size(); ++j) {
                     proofs[j] = {paths[j].position, payload(paths[j].position - 1, w.block_size), paths[j].path};
                 }
                 for (const auto& v : kernels::verify_proofs(proofs, w.seed, base.root_digest(), w.n)) {
                     if (!v.accepted()) throw IntegrityError("bench audit proof rejected");
                 }
             }));
    }
}

void run_mht(const Config& cfg, const Workload& w, unsigned arity, std::vector<Row>& rows) {
    const std::string impl = arity == 2 ? "mht" : "mht8";
    auto emit = [&](const std::string& metric, const Stats& s) {
        rows.push_back({metric, impl, w.n, w.block_size, 0, s.mean_ms, s.p95_ms, s.stddev_ms, cfg.trials});
    };
    auto wants = [&](const char* m) { return std::find(cfg.metrics.begin(), cfg.metrics.end(), m) != cfg.metrics.end(); };

    std::optional<baselines::MerkleTree> mht;
    const Stats creation = time_trials(cfg, [&](unsigned) { mht.emplace(w.digests, arity); });
    if (wants("creation")) emit("creation", creation);

    auto prove_and_check = [&](std::uint64_t rank) {
        const auto proof = mht->prove(rank - 1);
        const Digest32 leaf = authcodec::block_digest(w.seed, payload(rank - 1, w.block_size));
        if (!baselines::MerkleTree::verify(proof, leaf, mht->root(), arity)) {
            throw IntegrityError("bench MHT proof rejected");
        }
    };
    if (wants("retrieval")) {
        emit("retrieval", time_trials(cfg, [&](unsigned i) { prove_and_check(w.ranks[i % w.ranks.size()]); }));
    }
    if (wants("update")) {
        // Path recompute, restored afterwards so every trial sees the same tree.
        emit("update", time_trials(cfg, [&](unsigned i) {
                 const std::uint64_t r = w.ranks[i % w.ranks.size()];
                 mht->update(r - 1, w.fresh);
                 mht->update(r - 1, w.digests[r - 1]);
             }));
    }
    // The MHT is static: insert and delete rebuild over the edited leaf sequence.
    if (wants("insert")) {
        emit("insert", time_trials(cfg, [&](unsigned i) {
                 std::vector<Digest32> leaves(w.digests);
                 leaves.insert(leaves.begin() + static_cast<std::ptrdiff_t>(w.ranks[i % w.ranks.size()] - 1), w.fresh);
                 baselines::MerkleTree rebuilt(leaves, arity);
             }));
    }
    if (wants("delete")) {
        emit("delete", time_trials(cfg, [&](unsigned i) {
                 std::vector<Digest32> leaves(w.digests);
                 leaves.erase(leaves.begin() + static_cast<std::ptrdiff_t>(w.ranks[i % w.ranks.size()] - 1));
                 baselines::MerkleTree rebuilt(leaves, arity);
             }));
    }
    if (wants("audit")) {
        std::mt19937_64 rng(7);
        emit("audit", time_trials(cfg, [&](unsigned) {
                 wire::Nonce nonce;
                 for (auto& b : nonce) b = static_cast<std::uint8_t>(rng());
                 const auto positions = audit::derive_positions(nonce, cfg.audit_k, w.n);
                 for (std::uint64_t r : positions) prove_and_check(r);
             }));
    }
}

}  // namespace

Stats summarize(std::vector<double> samples) {
    Stats s;
    if (samples.empty()) return s;
    double sum = 0;
    for (double x : samples) sum += x;
    s.mean_ms = sum / static_cast<double>(samples.size());
    double sq = 0;
    for (double x : samples) sq += (x - s.mean_ms) * (x - s.mean_ms);
    s.stddev_ms = samples.size() > 1 ? std::sqrt(sq / static_cast<double>(samples.size() - 1)) : 0.0;
    std::sort(samples.begin(), samples.end());
    const auto idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(samples.size()))) - 1;
    s.p95_ms = samples[std::min(idx, samples.size() - 1)];
    return s;
}

std::uint64_t parse_size(const std::string& text, std::uint64_t block_size) {
    if (block_size == 0) throw ConfigError("block size must be positive");
    std::size_t used = 0;
    std::uint64_t value = 0;
    try {
        value = std::stoull(text, &used);
    } catch (const std::exception&) {
        throw ConfigError("bad size '" + text + "'");
    }
    std::string unit = text.substr(used);
    std::transform(unit.begin(), unit.end(), unit.begin(), [](unsigned char c) { return std::tolower(c); });
    if (unit == "blocks" || unit == "blk") return value;
    std::uint64_t scale = 1;
    if (unit == "kb" || unit == "k") scale = 1ull << 10;
    else if (unit == "mb" || unit == "m") scale = 1ull << 20;
    else if (unit == "gb" || unit == "g") scale = 1ull << 30;
    else if (!unit.empty() && unit != "b") throw ConfigError("bad size unit in '" + text + "'");
    const std::uint64_t bytes = value * scale;
    const std::uint64_t n = (bytes + block_size - 1) / block_size;
    if (n == 0) throw ConfigError("size '" + text + "' holds no blocks");
    return n;
}

std::vector<Row> run(const Config& cfg, std::ostream* progress) {
    if (cfg.trials == 0) throw ConfigError("need at least one trial");
    std::vector<Row> rows;
    for (std::uint64_t n : cfg.block_counts) {
        if (n == 0) throw ConfigError("block count must be positive");
        Workload w{n, cfg.block_size, authcodec::Seed::generate(), {}, {}, {}, {}};
        w.digests = payload_digests(w.seed, n, cfg.block_size);
        std::mt19937_64 rng(n);
        std::uniform_int_distribution<std::uint64_t> pick(1, n);
        for (unsigned i = 0; i < cfg.warmup + cfg.trials; ++i) w.ranks.push_back(pick(rng));
        w.fresh_block = payload(n, cfg.block_size);
        w.fresh = authcodec::block_digest(w.seed, w.fresh_block);

        for (const auto& impl : cfg.impls) {
            if (progress != nullptr) *progress << "bench " << impl << " N=" << n << '\n';
            if (impl == "ebtree") run_ebtree(cfg, w, rows);
            else if (impl == "mht") run_mht(cfg, w, 2, rows);
            else if (impl == "mht8") run_mht(cfg, w, 8, rows);
            else throw ConfigError("unknown implementation '" + impl + "'");
        }
    }
    return rows;
}

void write_csv(std::ostream& out, const std::vector<Row>& rows) {
    out << kCsvHeader << '\n';
    const auto flags = out.flags();
    out << std::fixed << std::setprecision(4);
    for (const auto& r : rows) {
        out << r.metric << ',' << r.impl << ',' << r.blocks << ',' << r.block_size << ',' << r.t << ',' << r.mean_ms
            << ',' << r.p95_ms << ',' << r.trials << '\n';
    }
    out.flags(flags);
}

}  // namespace ebtree::bench
