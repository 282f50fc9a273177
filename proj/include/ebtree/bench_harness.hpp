#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "ebtree/tree.hpp"

namespace ebtree::bench {

inline constexpr const char* kCsvHeader = "metric,impl,blocks,block_size,t,mean_ms,p95_ms,trials";

struct Row {
    std::string metric;  // creation, retrieval, update, insert, delete, audit
    std::string impl;    // ebtree, mht, mht8
    std::uint64_t blocks = 0;
    std::uint64_t block_size = 0;
    unsigned t = 0;  // 0 for MHT rows
    double mean_ms = 0;
    double p95_ms = 0;
    double stddev_ms = 0;
    unsigned trials = 0;
};

struct Config {
    std::vector<std::string> impls{"ebtree", "mht", "mht8"};
    std::vector<std::uint64_t> block_counts;
    std::uint64_t block_size = 16384;
    unsigned t = kDefaultMinDegree;
    unsigned trials = 10;
    unsigned warmup = 2;
    std::uint32_t audit_k = 300;
    std::vector<std::string> metrics{"creation", "retrieval", "update", "insert", "delete", "audit"};
};

/// "64MB", "1GB", "512KB", "4096" (bytes) or "656blocks". Returns a block count.
std::uint64_t parse_size(const std::string& text, std::uint64_t block_size);

/// Runs every (size, impl, metric) combination of the config.
std::vector<Row> run(const Config& cfg, std::ostream* progress = nullptr);

void write_csv(std::ostream& out, const std::vector<Row>& rows);

struct Stats {
    double mean_ms = 0;
    double p95_ms = 0;
    double stddev_ms = 0;
};
Stats summarize(std::vector<double> samples_ms);

}  // namespace ebtree::bench
