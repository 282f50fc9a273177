#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <vector>

#include "ebtree/digest.hpp"

namespace ebtree {

/// Append-only file of framed records: u32_be(length) || payload || u32_be(crc32(payload)).
/// The file starts with an 8-byte magic, so no record ever lives at offset 0 and a record's
/// offset can serve directly as a non-null id.
///
/// Opening for write truncates a torn trailing record; read-only opens just ignore it.
class AppendLog {
  public:
    enum class Mode { kReadOnly, kReadWrite };

    AppendLog(std::filesystem::path path, Mode mode, bool sync = true);
    ~AppendLog();
    AppendLog(const AppendLog&) = delete;
    AppendLog& operator=(const AppendLog&) = delete;

    std::uint64_t append(ByteView payload);
    Bytes read(std::uint64_t offset) const;  // NotFoundError / IntegrityError
    void flush();

    /// Offsets of every complete record, in file order.
    std::vector<std::uint64_t> offsets() const;
    std::uint64_t end() const;
    const std::filesystem::path& path() const { return path_; }

    static constexpr std::uint64_t kMagicSize = 8;

  private:
    std::filesystem::path path_;
    int fd_ = -1;
    bool sync_;
    mutable std::mutex mu_;
    std::uint64_t end_ = kMagicSize;
    std::vector<std::uint64_t> offsets_;
    bool dirty_ = false;
};

/// Test hook: flips one payload byte of the record at `offset` and rewrites its CRC so the
/// framing stays valid, the way a server quietly rewriting its own storage would.
void rewrite_record_byte(const std::filesystem::path& log, std::uint64_t offset, std::size_t byte_index);

}  // namespace ebtree
