#include "ebtree/append_log.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <cstring>
#include <string>

#include "ebtree/errors.hpp"

namespace ebtree {

namespace {

constexpr char kMagic[AppendLog::kMagicSize] = {'E', 'B', 'T', 'L', 'O', 'G', '1', '\n'};

std::uint32_t crc_of(ByteView b) {
    return static_cast<std::uint32_t>(crc32(0L, b.data(), static_cast<uInt>(b.size())));
}

std::runtime_error sys_error(const std::string& what) {
    return std::runtime_error(what + ": " + std::strerror(errno));
}

void pread_all(int fd, std::uint8_t* buf, std::size_t n, std::uint64_t at) {
    while (n > 0) {
        ssize_t r = ::pread(fd, buf, n, static_cast<off_t>(at));
        if (r < 0) {
            if (errno == EINTR) continue;
            throw sys_error("pread");
        }
        if (r == 0) throw NotFoundError("read past end of log");
        buf += r;
        n -= static_cast<std::size_t>(r);
        at += static_cast<std::uint64_t>(r);
    }
}

void pwrite_all(int fd, const std::uint8_t* buf, std::size_t n, std::uint64_t at) {
    while (n > 0) {
        ssize_t w = ::pwrite(fd, buf, n, static_cast<off_t>(at));
        if (w < 0) {
            if (errno == EINTR) continue;
            throw sys_error("pwrite");
        }
        buf += w;
        n -= static_cast<std::size_t>(w);
        at += static_cast<std::uint64_t>(w);
    }
}

}  // namespace

AppendLog::AppendLog(std::filesystem::path path, Mode mode, bool sync) : path_(std::move(path)), sync_(sync) {
    const int flags = mode == Mode::kReadWrite ? (O_RDWR | O_CREAT) : O_RDONLY;
    fd_ = ::open(path_.c_str(), flags | O_CLOEXEC, 0644);
    if (fd_ < 0) {
        if (errno == ENOENT) throw NotFoundError("no such log: " + path_.string());
        throw sys_error("open " + path_.string());
    }
    struct stat st{};
    if (::fstat(fd_, &st) != 0) throw sys_error("fstat");
    const auto size = static_cast<std::uint64_t>(st.st_size);
    if (size == 0 && mode == Mode::kReadWrite) {
        pwrite_all(fd_, reinterpret_cast<const std::uint8_t*>(kMagic), kMagicSize, 0);
        end_ = kMagicSize;
        return;
    }
    char magic[kMagicSize] = {};
    if (size < kMagicSize) throw IntegrityError("log too short: " + path_.string());
    pread_all(fd_, reinterpret_cast<std::uint8_t*>(magic), kMagicSize, 0);
    if (std::memcmp(magic, kMagic, kMagicSize) != 0) throw IntegrityError("bad log magic: " + path_.string());

    std::uint64_t at = kMagicSize;
    while (at + 4 <= size) {
        std::uint8_t len_be[4];
        pread_all(fd_, len_be, 4, at);
        const std::uint64_t len = get_u32_be(len_be);
        if (at + 8 + len > size) break;  // torn tail
        offsets_.push_back(at);
        at += 8 + len;
    }
    end_ = at;
    if (mode == Mode::kReadWrite && end_ != size) {
        if (::ftruncate(fd_, static_cast<off_t>(end_)) != 0) throw sys_error("ftruncate");
    }
}

AppendLog::~AppendLog() {
    if (fd_ >= 0) ::close(fd_);
}

std::uint64_t AppendLog::append(ByteView payload) {
    Bytes frame;
    frame.reserve(payload.size() + 8);
    put_u32_be(frame, static_cast<std::uint32_t>(payload.size()));
    frame.insert(frame.end(), payload.begin(), payload.end());
    put_u32_be(frame, crc_of(payload));

    std::lock_guard lock(mu_);
    const std::uint64_t at = end_;
    pwrite_all(fd_, frame.data(), frame.size(), at);
    end_ += frame.size();
    offsets_.push_back(at);
    dirty_ = true;
    return at;
}

Bytes AppendLog::read(std::uint64_t offset) const {
    std::uint64_t limit;
    {
        std::lock_guard lock(mu_);
        limit = end_;
    }
    if (offset < kMagicSize || offset + 8 > limit) {
        throw NotFoundError("no record at offset " + std::to_string(offset) + " in " + path_.string());
    }
    std::uint8_t len_be[4];
    pread_all(fd_, len_be, 4, offset);
    const std::uint64_t len = get_u32_be(len_be);
    if (offset + 8 + len > limit) throw NotFoundError("record overruns log end in " + path_.string());
    Bytes payload(len + 4);
    pread_all(fd_, payload.data(), payload.size(), offset + 4);
    const std::uint32_t stored = get_u32_be(payload.data() + len);
    payload.resize(len);
    if (stored != crc_of(payload)) {
        throw IntegrityError("CRC mismatch at offset " + std::to_string(offset) + " in " + path_.string());
    }
    return payload;
}

void AppendLog::flush() {
    std::lock_guard lock(mu_);
    if (dirty_ && sync_ && ::fdatasync(fd_) != 0) throw sys_error("fdatasync");
    dirty_ = false;
}

std::vector<std::uint64_t> AppendLog::offsets() const {
    std::lock_guard lock(mu_);
    return offsets_;
}

std::uint64_t AppendLog::end() const {
    std::lock_guard lock(mu_);
    return end_;
}

void rewrite_record_byte(const std::filesystem::path& log, std::uint64_t offset, std::size_t byte_index) {
    AppendLog reader(log, AppendLog::Mode::kReadOnly, false);
    Bytes payload = reader.read(offset);
    if (byte_index >= payload.size()) throw RangeError("byte index outside record payload");
    payload[byte_index] ^= 0x01;
    const int fd = ::open(log.c_str(), O_RDWR | O_CLOEXEC);
    if (fd < 0) throw sys_error("open " + log.string());
    Bytes crc;
    put_u32_be(crc, crc_of(payload));
    pwrite_all(fd, payload.data() + byte_index, 1, offset + 4 + byte_index);
    pwrite_all(fd, crc.data(), crc.size(), offset + 4 + payload.size());
    ::close(fd);
}

}  // namespace ebtree
