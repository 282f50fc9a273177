#include <sys/stat.h>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ebtree/audit.hpp"
#include "ebtree/baselines.hpp"
#include "ebtree/bench_harness.hpp"
#include "ebtree/errors.hpp"
#include "ebtree/net.hpp"

namespace fs = std::filesystem;
using namespace ebtree;
using wire::Json;

namespace {

enum Exit { kOk = 0, kVerifyFail = 1, kUsage = 2, kTransport = 3, kServer = 4 };

struct Options {
    std::string addr;
    std::string data_dir;
    std::string token;
    std::string seed_file;
    std::string key_file;
    bool json = false;
};

struct Paths {
    fs::path client, server, tpa;
};

Paths paths_of(const Options& o) {
    const fs::path root(o.data_dir);
    return {root / "client", root / "server", root / "tpa"};
}

Bytes read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& p, ByteView data, bool secret = false) {
    fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
    {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + p.string());
        out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
        if (!out) throw ConfigError("cannot write " + p.string());
    }
    if (secret) ::chmod(p.c_str(), 0600);
}

std::string name_of(const std::string& file) { return fs::path(file).filename().string(); }

fs::path key_path(const Options& o, const std::string& name) {
    return o.key_file.empty() ? paths_of(o).client / (name + ".key") : fs::path(o.key_file);
}
fs::path seed_path(const Options& o, const std::string& name) {
    return o.seed_file.empty() ? paths_of(o).client / (name + ".seed") : fs::path(o.seed_file);
}
fs::path token_path(const Options& o, const std::string& name) { return paths_of(o).client / (name + ".token"); }
fs::path manifest_path(const Options& o, const std::string& name) {
    return paths_of(o).client / (name + ".manifest.json");
}
fs::path tpa_path(const Options& o, const filepipe::FileId& id) {
    return paths_of(o).tpa / (filepipe::file_id_hex(id) + ".json");
}

// Secret material: reuse the file if present, otherwise generate and persist it.
Bytes load_or_create(const fs::path& p, std::size_t size) {
    if (fs::exists(p)) {
        Bytes b = read_file(p);
        if (b.size() != size) throw ConfigError(p.string() + " must hold exactly " + std::to_string(size) + " bytes");
        return b;
    }
    Bytes b = random_bytes(size);
    write_file(p, b, true);
    return b;
}

std::string token_for(const Options& o, const std::string& name, bool create) {
    if (!o.token.empty()) return o.token;
    if (const char* env = std::getenv("EBTREE_TOKEN"); env != nullptr && *env != '\0') return env;
    const fs::path p = token_path(o, name);
    if (fs::exists(p)) {
        const Bytes b = read_file(p);
        return std::string(b.begin(), b.end());
    }
    if (!create) throw ConfigError("no token for " + name + "; pass --token");
    const std::string t = to_hex(random_bytes(16));
    write_file(p, as_bytes(t), true);
    return t;
}

struct Session {
    std::string name;
    net::TcpChannel channel;
    audit::Client client;

    Session(const Options& o, const std::string& file, bool fresh)
        : name(name_of(file)),
          channel(o.addr.empty() ? net::default_address() : net::parse_address(o.addr)),
          client(channel, load_or_create(key_path(o, name), filepipe::kKeySize),
                 authcodec::Seed::from_bytes(load_or_create(seed_path(o, name), 32)), token_for(o, name, fresh)) {
        if (!fresh) {
            const fs::path mp = manifest_path(o, name);
            if (!fs::exists(mp)) throw ConfigError("no manifest for " + name + "; upload it first");
            const Bytes text = read_file(mp);
            client.set_manifest(filepipe::FileManifest::from_json(std::string(text.begin(), text.end())));
        }
    }

    // Persist the refreshed manifest and hand it to the TPA.
    void publish(const Options& o) {
        write_file(manifest_path(o, name), as_bytes(client.manifest().to_json()));
        write_file(tpa_path(o, client.manifest().file_id), as_bytes(wire::canonical(client.manifest_message())));
    }
};

void report(const Options& o, const Json& j, const std::string& text) {
    if (o.json) std::cout << wire::canonical(j) << '\n';
    else std::cout << text << '\n';
}

Json manifest_json(const filepipe::FileManifest& m) { return Json::parse(m.to_json()); }

std::string summary(const std::string& what, const filepipe::FileManifest& m) {
    std::ostringstream s;
    s << what << " version=" << m.version << " blocks=" << m.block_count << " root=" << m.root_digest.hex();
    return s.str();
}

std::unique_ptr<VersionStore> open_server_store(const Options& o, const std::string& file) {
    return VersionStore::open(paths_of(o).server, filepipe::file_id_hex(filepipe::derive_file_id(name_of(file))),
                              false, kDefaultMinDegree, false, true);
}

int cmd_serve(const Options& o, bool nosync) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    audit::StorageServer server(paths_of(o).server, !nosync);
    net::TcpServer tcp(server, o.addr.empty() ? net::default_address() : net::parse_address(o.addr));
    tcp.start();
    std::cout << "listening on port " << tcp.port() << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    tcp.stop();
    return kOk;
}

int cmd_upload(const Options& o, const std::string& file, std::size_t block_size, unsigned t) {
    const Bytes data = read_file(file);
    Session s(o, file, true);
    s.client.upload(data, filepipe::derive_file_id(s.name), block_size, t);
    s.publish(o);
    report(o, {{"manifest", manifest_json(s.client.manifest())}, {"name", s.name}},
           summary("uploaded " + s.name, s.client.manifest()));
    return kOk;
}

int cmd_get(const Options& o, const std::string& file, std::uint64_t rank, const std::string& out) {
    Session s(o, file, false);
    const Bytes block = s.client.get(rank);
    if (out.empty()) {
        std::cout.write(reinterpret_cast<const char*>(block.data()), static_cast<std::streamsize>(block.size()));
    } else {
        write_file(out, block);
    }
    return kOk;
}

int cmd_mutate(const Options& o, const std::string& op, const std::string& file, std::uint64_t rank,
               const std::string& block_file) {
    Session s(o, file, false);
    if (op == "insert") s.client.insert(rank, read_file(block_file));
    else if (op == "update") s.client.update(rank, read_file(block_file));
    else s.client.erase(rank);
    s.publish(o);
    report(o, {{"manifest", manifest_json(s.client.manifest())}, {"op", op}, {"rank", rank}},
           summary(op + " " + std::to_string(rank), s.client.manifest()));
    return kOk;
}

int cmd_audit(const Options& o, const std::string& file, std::uint32_t k) {
    const auto id = filepipe::derive_file_id(name_of(file));
    const fs::path p = tpa_path(o, id);
    if (!fs::exists(p)) throw ConfigError("the auditor holds no manifest for " + name_of(file));
    const Bytes text = read_file(p);
    audit::Auditor tpa;
    tpa.accept(Json::parse(std::string(text.begin(), text.end())));
    net::TcpChannel channel(o.addr.empty() ? net::default_address() : net::parse_address(o.addr));
    const auto v = tpa.run_audit(channel, id, k);

    std::ostringstream line;
    line << (v.passed() ? "PASS" : "FAIL") << " k=" << v.k << " version=" << v.version;
    if (!v.passed()) {
        line << " reason=" << audit::to_string(v.outcome);
        if (!v.failed_ranks.empty()) {
            line << " failed_ranks=";
            for (std::size_t i = 0; i < v.failed_ranks.size(); ++i) line << (i ? "," : "") << v.failed_ranks[i];
        }
        if (!v.detail.empty()) line << " detail=\"" << v.detail << '"';
    }
    report(o,
           {{"verdict", v.passed() ? "PASS" : "FAIL"},
            {"outcome", audit::to_string(v.outcome)},
            {"k", v.k},
            {"version", v.version},
            {"failed_ranks", v.failed_ranks},
            {"detail", v.detail}},
           line.str());
    switch (v.outcome) {
        case audit::AuditVerdict::Outcome::kPass: return kOk;
        case audit::AuditVerdict::Outcome::kTransport: return kTransport;
        case audit::AuditVerdict::Outcome::kServerError: return kServer;
        default: return kVerifyFail;
    }
}

int cmd_versions(const Options& o, const std::string& file) {
    const auto store = open_server_store(o, file);
    Json rows = Json::array();
    std::ostringstream text;
    for (const auto& r : store->records()) {
        rows.push_back({{"version", r.version},
                        {"op", r.op.canonical()},
                        {"blocks", r.blocks},
                        {"root", r.root_digest.hex()},
                        {"commit", r.commit.hex()}});
        text << r.version << ' ' << r.op.canonical() << " blocks=" << r.blocks << " root=" << r.root_digest.hex()
             << " commit=" << r.commit.hex() << '\n';
    }
    std::string t = text.str();
    if (!t.empty()) t.pop_back();
    report(o, {{"versions", rows}}, t);
    return kOk;
}

int cmd_verify_chain(const Options& o, const std::string& file, bool deep) {
    ChainCheck check;
    std::uint64_t count = 0;
    std::vector<std::uint64_t> bad_versions;
    try {
        const auto store = open_server_store(o, file);
        check = store->verify_chain();
        count = store->records().size();
        if (check.ok && deep) {
            for (std::uint64_t v = 0; v < count; ++v) {
                if (!store->verify_version(v)) bad_versions.push_back(v);
            }
        }
    } catch (const IntegrityError& e) {
        check.ok = false;
        check.detail = e.what();
    }
    const bool ok = check.ok && bad_versions.empty();
    std::ostringstream line;
    line << (ok ? "OK" : "FAIL") << " versions=" << count;
    if (!check.ok) {
        if (check.first_bad) line << " first_bad=" << *check.first_bad;
        line << " detail=\"" << check.detail << '"';
    }
    for (auto v : bad_versions) line << " bad_version=" << v;
    report(o, {{"ok", ok}, {"versions", count}, {"detail", check.detail}, {"bad_versions", bad_versions}},
           line.str());
    return ok ? kOk : kVerifyFail;
}

int cmd_bench(const Options& o, bench::Config cfg, const std::string& impl, const std::vector<std::string>& sizes) {
    if (!impl.empty() && impl != "all") cfg.impls = {impl};
    for (const auto& s : sizes) cfg.block_counts.push_back(bench::parse_size(s, cfg.block_size));
    const auto rows = bench::run(cfg, &std::cerr);
    if (o.json) {
        Json out = Json::array();
        for (const auto& r : rows) {
            out.push_back({{"metric", r.metric}, {"impl", r.impl}, {"blocks", r.blocks}, {"block_size", r.block_size},
                           {"t", r.t}, {"mean_ms", r.mean_ms}, {"p95_ms", r.p95_ms}, {"stddev_ms", r.stddev_ms},
                           {"trials", r.trials}});
        }
        std::cout << wire::canonical(out) << '\n';
    } else {
        bench::write_csv(std::cout, rows);
    }
    return kOk;
}

int cmd_demo(const Options& o, std::int64_t lo, std::int64_t hi) {
    const auto steps = baselines::key_exhaustion_demo(lo, hi);
    report(o, {{"lo", lo}, {"hi", hi}, {"steps", steps}}, std::to_string(steps));
    return kOk;
}

int cmd_corrupt(const Options& o, const std::string& file, std::uint64_t rank, std::size_t byte_index) {
    const std::string hex = filepipe::file_id_hex(filepipe::derive_file_id(name_of(file)));
    BlockRef ref;
    {
        const auto store = open_server_store(o, file);
        ref = store->load_latest().get(rank).block;
    }
    rewrite_record_byte(blocks_path(paths_of(o).server, hex), ref.id, byte_index);
    report(o, {{"corrupted", rank}}, "corrupted block at rank " + std::to_string(rank));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rank-addressed authenticated B-tree storage with third-party auditing"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--addr", o.addr, "server address host:port (env EBTREE_ADDR, default 127.0.0.1:7474)");
    app.add_option("--data-dir", o.data_dir, "state directory")->envname("EBTREE_DATA_DIR")->default_val("./data");
    app.add_option("--token", o.token, "bearer token for mutations and reads");
    app.add_option("--seed-file", o.seed_file, "32-byte digest seed (default <data-dir>/client/NAME.seed)");
    app.add_option("--key-file", o.key_file, "32-byte AES key (default <data-dir>/client/NAME.key)");
    app.add_flag("--json", o.json, "machine-readable output");

    std::string file, block_file, out, impl;
    std::uint64_t rank = 0;
    std::uint32_t k = audit::kDefaultChallengeSize;
    std::size_t block_size = filepipe::kDefaultBlockSize;
    std::size_t byte_index = 0;
    unsigned t = kDefaultMinDegree;
    bool nosync = false, deep = false;
    std::int64_t lo = 0, hi = 0;
    std::vector<std::string> sizes;
    bench::Config bcfg;

    auto* serve = app.add_subcommand("serve", "run the storage server");
    serve->add_flag("--no-sync", nosync, "skip fdatasync on commit");

    auto* upload = app.add_subcommand("upload", "encrypt, digest and upload a file as version 0");
    upload->add_option("FILE", file)->required()->check(CLI::ExistingFile);
    upload->add_option("--block-size", block_size)->check(CLI::PositiveNumber);
    upload->add_option("-t", t, "minimum degree")->check(CLI::Range(2u, 1024u));

    auto* get = app.add_subcommand("get", "fetch, verify and decrypt one block");
    get->add_option("FILE", file)->required();
    get->add_option("RANK", rank)->required();
    get->add_option("-o,--output", out, "write the block here instead of stdout");

    auto* insert = app.add_subcommand("insert", "insert a block before RANK");
    auto* update = app.add_subcommand("update", "replace the block at RANK");
    for (auto* sub : {insert, update}) {
        sub->add_option("FILE", file)->required();
        sub->add_option("RANK", rank)->required();
        sub->add_option("BLOCKFILE", block_file)->required()->check(CLI::ExistingFile);
    }
    auto* del = app.add_subcommand("delete", "remove the block at RANK");
    del->add_option("FILE", file)->required();
    del->add_option("RANK", rank)->required();

    auto* aud = app.add_subcommand("audit", "challenge the server as the third-party auditor");
    aud->add_option("FILE", file)->required();
    aud->add_option("-k", k, "challenged blocks")->check(CLI::Range(1u, 1u << 20));

    auto* versions = app.add_subcommand("versions", "list committed versions (server-side)");
    versions->add_option("FILE", file)->required();

    auto* chain = app.add_subcommand("verify-chain", "check the version commit chain (server-side)");
    chain->add_option("FILE", file)->required();
    chain->add_flag("--deep", deep, "also rehash every historical version");

    auto* bench_cmd = app.add_subcommand("bench", "timing sweep, CSV on stdout");
    bench_cmd->add_option("--impl", impl, "ebtree, mht, mht8 or all")->check(CLI::IsMember({"ebtree", "mht", "mht8", "all"}));
    bench_cmd->add_option("--sizes", sizes, "e.g. 64MB,1GB or 656blocks")->delimiter(',')->default_str("64MB");
    bench_cmd->add_option("--block-size", bcfg.block_size)->check(CLI::PositiveNumber);
    bench_cmd->add_option("-t", bcfg.t)->check(CLI::Range(2u, 1024u));
    bench_cmd->add_option("--trials", bcfg.trials)->check(CLI::PositiveNumber);
    bench_cmd->add_option("--warmup", bcfg.warmup);
    bench_cmd->add_option("-k", bcfg.audit_k)->check(CLI::Range(1u, 1u << 20));

    auto* demo = app.add_subcommand("demo-exhaustion", "keyed B-tree gap exhaustion step count");
    demo->add_option("LO", lo)->required();
    demo->add_option("HI", hi)->required();

    auto* corrupt = app.add_subcommand("corrupt-block", "test hook: flip a stored byte out of band");
    corrupt->group("");
    corrupt->add_option("FILE", file)->required();
    corrupt->add_option("RANK", rank)->required();
    corrupt->add_option("--byte", byte_index);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }
    if (sizes.empty()) sizes = {"64MB"};

    try {
        if (*serve) return cmd_serve(o, nosync);
        if (*upload) return cmd_upload(o, file, block_size, t);
        if (*get) return cmd_get(o, file, rank, out);
        if (*insert) return cmd_mutate(o, "insert", file, rank, block_file);
        if (*update) return cmd_mutate(o, "update", file, rank, block_file);
        if (*del) return cmd_mutate(o, "delete", file, rank, "");
        if (*aud) return cmd_audit(o, file, k);
        if (*versions) return cmd_versions(o, file);
        if (*chain) return cmd_verify_chain(o, file, deep);
        if (*bench_cmd) return cmd_bench(o, bcfg, impl, sizes);
        if (*demo) return cmd_demo(o, lo, hi);
        if (*corrupt) return cmd_corrupt(o, file, rank, byte_index);
    } catch (const TransportError& e) {
        std::cerr << "transport error: " << e.what() << '\n';
        return kTransport;
    } catch (const wire::ServerError& e) {
        std::cerr << "server error: " << e.what() << '\n';
        return kServer;
    } catch (const IntegrityError& e) {
        std::cerr << "verification failed: " << e.what() << '\n';
        return kVerifyFail;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n' << app.help() << '\n';
        return kUsage;
    } catch (const NotFoundError& e) {
        std::cerr << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kVerifyFail;
    }
    return kUsage;
}
