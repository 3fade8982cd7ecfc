#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "matmon/tmn.hpp"
#include "matmon/units.hpp"

namespace matmon::wire {

inline constexpr int kProtocolVersion = 1;

/// Frames larger than this never carry a valid message; the splitter rejects
/// the stream once a line exceeds it.
inline constexpr std::size_t kMaxFrameBytes = 64 * 1024;

/// First message on every connection. A hello sent by the concentrator in
/// reply announces the epoch period in `epoch_period_ms` and the session
/// origin in `session_origin_ms`.
struct HelloMessage {
  int protocol_version = kProtocolVersion;
  CompartmentId unit_id = 0;
  std::optional<GeoPoint> location;
  std::string registry_hash;
  std::optional<std::int64_t> epoch_period_ms;
  std::optional<std::int64_t> session_origin_ms;

  bool operator==(const HelloMessage&) const = default;
};

struct ReportMessage {
  CompartmentId unit_id = 0;
  Epoch epoch = 0;
  std::int64_t timestamp_ms = 0;
  std::map<ClassId, int> counts;
  std::optional<std::map<ClassId, std::vector<double>>> confidences;

  bool operator==(const ReportMessage&) const = default;
};

enum class AckStatus { accepted, late, duplicate };

const char* ack_status_name(AckStatus status) noexcept;

struct AckMessage {
  Epoch epoch = 0;
  AckStatus status = AckStatus::accepted;

  bool operator==(const AckMessage&) const = default;
};

using Message = std::variant<HelloMessage, ReportMessage, AckMessage>;

/// One LF-terminated line of UTF-8 JSON with lexicographically sorted keys,
/// so encodings are byte-deterministic.
std::string encode(const HelloMessage& msg);
std::string encode(const AckMessage& msg);

/// Empty counts are only encodable when `empty_ok` is set; a present count
/// must be >= 1 either way.
std::string encode(const ReportMessage& msg, bool empty_ok = false);

std::string encode(const Message& msg, bool empty_ok = false);

/// Parses one frame (line content without the trailing LF). Unknown "type",
/// missing or extra fields, and bad value shapes are rejected; a hello whose
/// version differs from ours raises version_mismatch.
Message decode(std::string_view line);

/// Reassembles LF-delimited frames from an arbitrarily chunked byte stream.
class FrameSplitter {
 public:
  /// Appends complete frames (without LF) to `out`; raises malformed_frame
  /// once the pending line exceeds kMaxFrameBytes.
  void feed(std::string_view bytes, std::vector<std::string>& out);

  bool has_partial() const { return !buffer_.empty(); }

 private:
  std::string buffer_;
};

}  // namespace matmon::wire
