#pragma once

// Modbus/TCP framing and the PDU shapes used by the testbed (functions 3, 5, 6).
// All multi-byte fields are big-endian, as on the wire.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gridghost::modbus {

inline constexpr std::size_t kMbapSize = 7;
inline constexpr std::size_t kMaxPayload = 252;
inline constexpr std::uint16_t kMaxReadCount = 125;

inline constexpr std::uint8_t kReadHoldingRegisters = 0x03;
inline constexpr std::uint8_t kWriteSingleCoil = 0x05;
inline constexpr std::uint8_t kWriteSingleRegister = 0x06;
inline constexpr std::uint8_t kExceptionBit = 0x80;

inline constexpr std::uint16_t kCoilOn = 0xFF00;
inline constexpr std::uint16_t kCoilOff = 0x0000;

// Exception codes
inline constexpr std::uint8_t kIllegalFunction = 0x01;
inline constexpr std::uint8_t kIllegalDataAddress = 0x02;
inline constexpr std::uint8_t kIllegalDataValue = 0x03;
inline constexpr std::uint8_t kServerDeviceFailure = 0x04;
inline constexpr std::uint8_t kGatewayTargetFailed = 0x0B;

using Bytes = std::vector<std::uint8_t>;

class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FramingError : public std::runtime_error {
 public:
  FramingError(std::size_t offset, const std::string& what)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class ClassifyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed PDU payload for the function it claims to be.
class PduError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MbapHeader {
  std::uint16_t tid = 0;
  std::uint16_t protocol_id = 0;
  std::uint16_t length = 2;  // unit id + function + payload
  std::uint8_t unit_id = 0;

  bool operator==(const MbapHeader&) const = default;
};

struct Frame {
  MbapHeader header;
  std::uint8_t function = 0;
  Bytes payload;

  bool is_exception() const noexcept { return (function & kExceptionBit) != 0; }
  std::size_t wire_size() const noexcept { return kMbapSize + 1 + payload.size(); }
  bool operator==(const Frame&) const = default;
};

inline std::uint16_t read_u16(std::span<const std::uint8_t> bytes, std::size_t at) {
  return static_cast<std::uint16_t>((bytes[at] << 8) | bytes[at + 1]);
}

inline void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void write_u16(std::span<std::uint8_t> bytes, std::size_t at, std::uint16_t v) {
  bytes[at] = static_cast<std::uint8_t>(v >> 8);
  bytes[at + 1] = static_cast<std::uint8_t>(v & 0xFF);
}

/// Builds a frame with a consistent length field.
inline Frame make_frame(std::uint16_t tid, std::uint8_t unit, std::uint8_t function, Bytes payload) {
  if (payload.size() > kMaxPayload) {
    throw EncodeError("payload of " + std::to_string(payload.size()) + " bytes exceeds 252");
  }
  Frame f;
  f.header.tid = tid;
  f.header.unit_id = unit;
  f.header.length = static_cast<std::uint16_t>(2 + payload.size());
  f.function = function;
  f.payload = std::move(payload);
  return f;
}

inline Bytes encode_frame(const Frame& frame) {
  if (frame.payload.size() > kMaxPayload) {
    throw EncodeError("payload of " + std::to_string(frame.payload.size()) + " bytes exceeds 252");
  }
  if (frame.header.protocol_id != 0) {
    throw EncodeError("protocol id must be 0");
  }
  if (frame.header.length != 2 + frame.payload.size()) {
    throw EncodeError("length field " + std::to_string(frame.header.length) +
                      " does not match payload of " + std::to_string(frame.payload.size()) + " bytes");
  }
  Bytes out;
  out.reserve(frame.wire_size());
  put_u16(out, frame.header.tid);
  put_u16(out, frame.header.protocol_id);
  put_u16(out, frame.header.length);
  out.push_back(frame.header.unit_id);
  out.push_back(frame.function);
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

struct DecodeResult {
  std::vector<Frame> frames;
  Bytes remainder;
};

namespace detail {

// Returns the frame size starting at `start`, or 0 if more bytes are needed.
inline std::size_t frame_extent(std::span<const std::uint8_t> buf, std::size_t start, std::size_t base_offset) {
  const std::size_t avail = buf.size() - start;
  if (avail >= 4 && read_u16(buf, start + 2) != 0) {
    throw FramingError(base_offset + start + 2, "non-zero protocol id");
  }
  if (avail < 6) return 0;
  const std::uint16_t length = read_u16(buf, start + 4);
  if (length < 2 || length > kMaxPayload + 2) {
    throw FramingError(base_offset + start + 4, "inconsistent length field " + std::to_string(length));
  }
  const std::size_t total = 6 + static_cast<std::size_t>(length);
  return avail >= total ? total : 0;
}

inline Frame parse_one(std::span<const std::uint8_t> bytes) {
  Frame f;
  f.header.tid = read_u16(bytes, 0);
  f.header.protocol_id = read_u16(bytes, 2);
  f.header.length = read_u16(bytes, 4);
  f.header.unit_id = bytes[6];
  f.function = bytes[7];
  f.payload.assign(bytes.begin() + 8, bytes.end());
  return f;
}

}  // namespace detail

/// Consumes every complete MBAP frame in `buffer`; a trailing partial frame is
/// returned untouched as the remainder.
inline DecodeResult decode_stream(std::span<const std::uint8_t> buffer) {
  DecodeResult result;
  std::size_t pos = 0;
  while (pos < buffer.size()) {
    const std::size_t n = detail::frame_extent(buffer, pos, 0);
    if (n == 0) break;
    result.frames.push_back(detail::parse_one(buffer.subspan(pos, n)));
    pos += n;
  }
  result.remainder.assign(buffer.begin() + static_cast<std::ptrdiff_t>(pos), buffer.end());
  return result;
}

/// Incremental reassembly over a TCP byte stream. A framing error stops
/// parsing: frames before it are still returned, `error()` reports it with an
/// offset relative to the start of the stream, and the unparsed bytes stay in
/// `pending()`.
class StreamDecoder {
 public:
  std::vector<Frame> feed(std::span<const std::uint8_t> chunk) {
    buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
    std::vector<Frame> out;
    if (error_) return out;
    std::size_t pos = 0;
    try {
      while (pos < buffer_.size()) {
        const std::size_t n = detail::frame_extent(buffer_, pos, consumed_);
        if (n == 0) break;
        out.push_back(detail::parse_one(std::span<const std::uint8_t>(buffer_).subspan(pos, n)));
        pos += n;
      }
    } catch (const FramingError& e) {
      error_ = e;
    }
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(pos));
    consumed_ += pos;
    return out;
  }

  const std::optional<FramingError>& error() const noexcept { return error_; }
  const Bytes& pending() const noexcept { return buffer_; }
  Bytes take_pending() { return std::exchange(buffer_, {}); }
  std::size_t consumed() const noexcept { return consumed_; }

 private:
  Bytes buffer_;
  std::size_t consumed_ = 0;
  std::optional<FramingError> error_;
};

// ---------------------------------------------------------------------------
// PDU shapes

enum class Direction { master_to_slave, slave_to_master };

enum class MessageKind {
  read_request,
  read_response,
  write_coil_request,
  write_coil_response,
  exception,
  other,
};

inline const char* to_string(MessageKind k) {
  switch (k) {
    case MessageKind::read_request: return "read-request";
    case MessageKind::read_response: return "read-response";
    case MessageKind::write_coil_request: return "write-coil-request";
    case MessageKind::write_coil_response: return "write-coil-response";
    case MessageKind::exception: return "exception";
    case MessageKind::other: return "other";
  }
  return "other";
}

struct ReadRequest {
  std::uint16_t start_address = 0;
  std::uint16_t word_count = 1;
  bool operator==(const ReadRequest&) const = default;
};

struct ReadResponse {
  std::vector<std::uint16_t> values;
  std::uint8_t byte_count() const noexcept { return static_cast<std::uint8_t>(values.size() * 2); }
  bool operator==(const ReadResponse&) const = default;
};

struct WriteSingleCoil {
  std::uint16_t coil_address = 0;
  std::uint16_t value = kCoilOff;
  bool on() const noexcept { return value == kCoilOn; }
  bool operator==(const WriteSingleCoil&) const = default;
};

struct WriteSingleRegister {
  std::uint16_t address = 0;
  std::uint16_t value = 0;
  bool operator==(const WriteSingleRegister&) const = default;
};

inline bool looks_like_read_request(std::span<const std::uint8_t> p) { return p.size() == 4; }

inline bool looks_like_read_response(std::span<const std::uint8_t> p) {
  return !p.empty() && p[0] % 2 == 0 && p.size() == 1u + p[0];
}

/// `direction` is required to tell a write-coil request from its echo.
inline MessageKind classify(const Frame& frame, std::optional<Direction> direction = std::nullopt) {
  if (frame.is_exception()) return MessageKind::exception;
  switch (frame.function) {
    case kReadHoldingRegisters: {
      const bool req = looks_like_read_request(frame.payload);
      const bool resp = looks_like_read_response(frame.payload);
      if (!direction) {
        if (req && !resp) return MessageKind::read_request;
        if (resp && !req) return MessageKind::read_response;
        if (!req && !resp) return MessageKind::other;
        throw ClassifyError("function 3 payload shape is ambiguous without direction");
      }
      if (*direction == Direction::master_to_slave) return req ? MessageKind::read_request : MessageKind::other;
      return resp ? MessageKind::read_response : MessageKind::other;
    }
    case kWriteSingleCoil: {
      if (frame.payload.size() != 4) return MessageKind::other;
      if (!direction) throw ClassifyError("write-coil request and response are identical without direction");
      return *direction == Direction::master_to_slave ? MessageKind::write_coil_request
                                                      : MessageKind::write_coil_response;
    }
    default:
      return MessageKind::other;
  }
}

inline Bytes encode(const ReadRequest& r) {
  Bytes p;
  put_u16(p, r.start_address);
  put_u16(p, r.word_count);
  return p;
}

inline Bytes encode(const ReadResponse& r) {
  if (r.values.size() > kMaxReadCount) throw EncodeError("read response carries more than 125 registers");
  Bytes p;
  p.push_back(r.byte_count());
  for (auto v : r.values) put_u16(p, v);
  return p;
}

inline Bytes encode(const WriteSingleCoil& w) {
  Bytes p;
  put_u16(p, w.coil_address);
  put_u16(p, w.value);
  return p;
}

inline Bytes encode(const WriteSingleRegister& w) {
  Bytes p;
  put_u16(p, w.address);
  put_u16(p, w.value);
  return p;
}

inline ReadRequest parse_read_request(std::span<const std::uint8_t> payload) {
  if (payload.size() != 4) throw PduError("read request payload must be 4 bytes");
  ReadRequest r{read_u16(payload, 0), read_u16(payload, 2)};
  if (r.word_count < 1 || r.word_count > kMaxReadCount) {
    throw PduError("read word count " + std::to_string(r.word_count) + " outside 1..125");
  }
  return r;
}

inline ReadResponse parse_read_response(std::span<const std::uint8_t> payload) {
  if (!looks_like_read_response(payload)) throw PduError("read response byte count does not match payload");
  ReadResponse r;
  for (std::size_t i = 1; i + 1 < payload.size(); i += 2) r.values.push_back(read_u16(payload, i));
  return r;
}

inline WriteSingleCoil parse_write_coil(std::span<const std::uint8_t> payload) {
  if (payload.size() != 4) throw PduError("write coil payload must be 4 bytes");
  WriteSingleCoil w{read_u16(payload, 0), read_u16(payload, 2)};
  if (w.value != kCoilOn && w.value != kCoilOff) throw PduError("write coil value must be 0xFF00 or 0x0000");
  return w;
}

inline WriteSingleRegister parse_write_register(std::span<const std::uint8_t> payload) {
  if (payload.size() != 4) throw PduError("write register payload must be 4 bytes");
  return {read_u16(payload, 0), read_u16(payload, 2)};
}

inline Frame make_read_request(std::uint16_t tid, std::uint8_t unit, std::uint16_t start, std::uint16_t count) {
  return make_frame(tid, unit, kReadHoldingRegisters, encode(ReadRequest{start, count}));
}

inline Frame make_read_response(std::uint16_t tid, std::uint8_t unit, std::vector<std::uint16_t> values) {
  return make_frame(tid, unit, kReadHoldingRegisters, encode(ReadResponse{std::move(values)}));
}

inline Frame make_write_coil(std::uint16_t tid, std::uint8_t unit, std::uint16_t address, bool on) {
  return make_frame(tid, unit, kWriteSingleCoil, encode(WriteSingleCoil{address, on ? kCoilOn : kCoilOff}));
}

inline Frame make_write_register(std::uint16_t tid, std::uint8_t unit, std::uint16_t address, std::uint16_t value) {
  return make_frame(tid, unit, kWriteSingleRegister, encode(WriteSingleRegister{address, value}));
}

inline Frame make_exception(std::uint16_t tid, std::uint8_t unit, std::uint8_t function, std::uint8_t code) {
  return make_frame(tid, unit, static_cast<std::uint8_t>(function | kExceptionBit), Bytes{code});
}

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xF]);
  }
  return s;
}

inline Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw std::invalid_argument("bad hex digit");
  };
  if (hex.size() % 2 != 0) throw std::invalid_argument("odd-length hex string");
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    out.push_back(static_cast<std::uint8_t>(nibble(hex[i]) << 4 | nibble(hex[i + 1])));
  }
  return out;
}

}  // namespace gridghost::modbus
