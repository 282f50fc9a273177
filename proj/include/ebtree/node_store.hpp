#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <shared_mutex>
#include <vector>

#include "ebtree/node.hpp"

namespace ebtree {

/// Append-only map NodeRef -> immutable node. One writer, any number of readers.
class NodeStore {
  public:
    virtual ~NodeStore() = default;

    virtual NodeRef put(const Node& node) = 0;
    virtual NodeRef put(Node&& node) { return put(static_cast<const Node&>(node)); }
    virtual std::shared_ptr<const Node> get(NodeRef ref) const = 0;  // throws NotFoundError
    virtual std::uint64_t node_count() const = 0;
    virtual void flush() {}

    /// Number of get() calls served; used to check per-operation visit bounds.
    std::uint64_t reads() const { return reads_.load(std::memory_order_relaxed); }

  protected:
    void count_read() const { reads_.fetch_add(1, std::memory_order_relaxed); }

  private:
    mutable std::atomic<std::uint64_t> reads_{0};
};

/// Append-only map BlockRef -> payload bytes.
class BlockStore {
  public:
    virtual ~BlockStore() = default;

    virtual BlockRef put(ByteView payload) = 0;
    virtual std::shared_ptr<const Bytes> get(BlockRef ref) const = 0;  // throws NotFoundError
    virtual std::uint64_t block_count() const = 0;
    virtual void flush() {}
};

class MemoryNodeStore final : public NodeStore {
  public:
    NodeRef put(const Node& node) override;
    NodeRef put(Node&& node) override;
    std::shared_ptr<const Node> get(NodeRef ref) const override;
    std::uint64_t node_count() const override;

  private:
    mutable std::shared_mutex mu_;
    std::vector<std::shared_ptr<const Node>> nodes_;
};

class MemoryBlockStore final : public BlockStore {
  public:
    BlockRef put(ByteView payload) override;
    std::shared_ptr<const Bytes> get(BlockRef ref) const override;
    std::uint64_t block_count() const override;

    /// Test hook: overwrite a stored payload out of band, as a misbehaving server would.
    void tamper(BlockRef ref, Bytes payload);

  private:
    mutable std::shared_mutex mu_;
    std::vector<std::shared_ptr<const Bytes>> blocks_;
};

/// Storage encoding of a full node record (all fields, including storage-only ones).
Bytes encode_node_record(const Node& node);
Node decode_node_record(ByteView bytes);  // throws CodecError

}  // namespace ebtree
