#include <bit>
#include <cstring>
#include <limits>
#include <string>
#include <unordered_set>

#include "common/errors.hpp"
#include "fed/federation.hpp"

namespace fedsilo::fed {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'L', '1'};
constexpr char kHelloMagic[4] = {'F', 'S', 'H', '1'};

static_assert(sizeof(double) == 8, "wire format assumes 64-bit doubles");

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

// Sequential reader that reports the byte offset of the first missing or
// malformed field.
class Reader {
  public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const { return offset_; }

    void require(std::size_t n, const char* what) const {
        if (offset_ + n > bytes_.size())
            throw CodecError(std::string("truncated message: missing ") + what, offset_);
    }

    std::uint8_t u8(const char* what) {
        require(1, what);
        return bytes_[offset_++];
    }

    std::uint16_t u16(const char* what) {
        require(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(bytes_[offset_] |
                                                     (std::uint16_t(bytes_[offset_ + 1]) << 8));
        offset_ += 2;
        return v;
    }

    std::uint32_t u32(const char* what) {
        require(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[offset_ + i]) << (8 * i);
        offset_ += 4;
        return v;
    }

    std::uint64_t u64(const char* what) {
        require(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes_[offset_ + i]) << (8 * i);
        offset_ += 8;
        return v;
    }

    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

    std::string text(std::size_t n, const char* what) {
        require(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + offset_), n);
        offset_ += n;
        return s;
    }

    std::size_t remaining() const { return bytes_.size() - offset_; }

  private:
    std::span<const std::uint8_t> bytes_;
    std::size_t offset_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_message(const RoundMessage& message) {
    std::vector<std::uint8_t> out;
    std::size_t payload_doubles = message.payload.total_len();
    out.reserve(25 + message.payload.segments.size() * 16 + payload_doubles * 8);

    for (char c : kMagic) out.push_back(static_cast<std::uint8_t>(c));
    put_u8(out, static_cast<std::uint8_t>(message.direction));
    put_u32(out, message.round);
    put_u32(out, message.client_id);
    put_u64(out, message.n_k);

    const auto& segments = message.payload.segments;
    if (segments.size() > 0xFFFFFFFFull)
        throw CodecError("too many segments to encode", out.size());
    put_u32(out, static_cast<std::uint32_t>(segments.size()));

    std::unordered_set<std::string> seen;
    for (const auto& segment : segments) {
        if (!seen.insert(segment.name).second)
            throw CodecError("duplicate segment name '" + segment.name + "'", out.size());
        if (segment.name.size() > 0xFFFF)
            throw CodecError("segment name longer than 65535 bytes", out.size());
        put_u16(out, static_cast<std::uint16_t>(segment.name.size()));
        for (char c : segment.name) out.push_back(static_cast<std::uint8_t>(c));
        if (segment.tensor.rank() > 0xFF)
            throw CodecError("segment rank exceeds 255", out.size());
        put_u8(out, static_cast<std::uint8_t>(segment.tensor.rank()));
        for (std::size_t dim : segment.tensor.shape) {
            if (dim > 0xFFFFFFFFull)
                throw CodecError("segment dimension exceeds 32 bits", out.size());
            put_u32(out, static_cast<std::uint32_t>(dim));
        }
        for (double v : segment.tensor.data) put_f64(out, v);
    }
    return out;
}

RoundMessage decode_message(std::span<const std::uint8_t> bytes) {
    Reader in(bytes);
    in.require(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CodecError("bad magic", 0);
    in.text(4, "magic");

    RoundMessage message;
    std::size_t direction_at = in.offset();
    std::uint8_t direction = in.u8("direction");
    if (direction > 1) throw CodecError("unknown direction byte", direction_at);
    message.direction = static_cast<MessageDirection>(direction);
    message.round = in.u32("round");
    message.client_id = in.u32("client id");
    message.n_k = in.u64("sample count");

    std::uint32_t segment_count = in.u32("segment count");
    std::unordered_set<std::string> seen;
    for (std::uint32_t s = 0; s < segment_count; ++s) {
        std::uint16_t name_len = in.u16("segment name length");
        std::size_t name_at = in.offset();
        std::string name = in.text(name_len, "segment name");
        if (!seen.insert(name).second)
            throw CodecError("duplicate segment name '" + name + "'", name_at);

        std::uint8_t rank = in.u8("segment rank");
        std::vector<std::size_t> shape(rank);
        std::size_t count = 1;
        for (std::uint8_t d = 0; d < rank; ++d) {
            shape[d] = in.u32("segment dimension");
            if (shape[d] != 0 && count > std::numeric_limits<std::size_t>::max() / shape[d])
                throw CodecError("segment element count overflows", in.offset());
            count *= shape[d];
        }
        // Validate the advertised element count against the bytes actually
        // present before allocating storage for it.
        if (count > in.remaining() / 8)
            throw CodecError("truncated message: missing segment data", in.offset());
        std::vector<double> data(count);
        for (std::size_t i = 0; i < count; ++i) data[i] = in.f64("segment data");
        message.payload.push(std::move(name), num::Tensor(std::move(shape), std::move(data)));
    }
    if (in.remaining() != 0)
        throw CodecError("trailing bytes after message", in.offset());
    return message;
}

std::vector<std::uint8_t> encode_hello(std::uint32_t client_id, std::uint64_t hash) {
    std::vector<std::uint8_t> out;
    out.reserve(16);
    for (char c : kHelloMagic) out.push_back(static_cast<std::uint8_t>(c));
    put_u32(out, client_id);
    put_u64(out, hash);
    return out;
}

Hello decode_hello(std::span<const std::uint8_t> bytes, std::uint64_t expected_hash) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kHelloMagic, 4) != 0)
        throw CodecError("bad hello magic", 0);
    if (bytes.size() != 16) throw CodecError("hello frame must be 16 bytes", bytes.size());
    Reader in(bytes);
    in.text(4, "magic");
    Hello hello;
    hello.client_id = in.u32("client id");
    hello.config_hash = in.u64("config hash");
    if (hello.config_hash != expected_hash)
        throw ConfigError("client " + std::to_string(hello.client_id) +
                          " connected with a mismatched configuration hash");
    return hello;
}

} // namespace fedsilo::fed
