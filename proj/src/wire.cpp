#include "matmon/wire.hpp"

#include <charconv>
#include <cmath>
#include <string>

#include <json.hpp>

#include "matmon/error.hpp"

namespace matmon::wire {

using nlohmann::json;

const char* ack_status_name(AckStatus status) noexcept {
  switch (status) {
    case AckStatus::accepted:
      return "accepted";
    case AckStatus::late:
      return "late";
    case AckStatus::duplicate:
      return "duplicate";
  }
  return "accepted";
}

namespace {

std::string finish(json j) {
  std::string line = j.dump();
  if (line.size() + 1 > kMaxFrameBytes) {
    fail(Errc::malformed_frame, "encoded frame exceeds " + std::to_string(kMaxFrameBytes) + " bytes");
  }
  line.push_back('\n');
  return line;
}

json counts_to_json(const std::map<ClassId, int>& counts, bool empty_ok) {
  if (counts.empty() && !empty_ok) {
    fail(Errc::invalid_message, "report carries no detections");
  }
  json j = json::object();
  for (const auto& [cls, count] : counts) {
    if (count < 1) {
      fail(Errc::invalid_message, "count for class " + std::to_string(cls) + " must be >= 1");
    }
    j[std::to_string(cls)] = count;
  }
  return j;
}

int parse_id_key(const std::string& key) {
  int id = 0;
  auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), id);
  if (ec != std::errc{} || ptr != key.data() + key.size()) {
    fail(Errc::invalid_message, "key '" + key + "' is not a decimal id");
  }
  return id;
}

/// `fields` maps every legal key to whether it is required.
void check_fields(const json& j, const std::map<std::string, bool>& fields) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (fields.count(key) == 0) fail(Errc::invalid_message, "unexpected field '" + key + "'");
  }
  for (const auto& [key, required] : fields) {
    if (required && !j.contains(key)) fail(Errc::invalid_message, "missing field '" + key + "'");
  }
}

std::int64_t get_int(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer()) fail(Errc::invalid_message, std::string("field '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

std::string get_str(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_string()) fail(Errc::invalid_message, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

Message decode_hello(const json& j) {
  check_fields(j, {{"type", true},
                   {"v", true},
                   {"unit", true},
                   {"reg_hash", true},
                   {"loc", false},
                   {"epoch", false},
                   {"ts_ms", false}});
  HelloMessage msg;
  msg.protocol_version = static_cast<int>(get_int(j, "v"));
  if (msg.protocol_version != kProtocolVersion) {
    fail(Errc::version_mismatch, "peer speaks version " + std::to_string(msg.protocol_version) +
                                     ", this build speaks " + std::to_string(kProtocolVersion));
  }
  msg.unit_id = static_cast<CompartmentId>(get_int(j, "unit"));
  msg.registry_hash = get_str(j, "reg_hash");
  if (j.contains("loc")) {
    const auto& loc = j.at("loc");
    if (!loc.is_object()) fail(Errc::invalid_message, "field 'loc' must be an object");
    check_fields(loc, {{"lat", true}, {"lon", true}});
    if (!loc.at("lat").is_number() || !loc.at("lon").is_number()) {
      fail(Errc::invalid_message, "location coordinates must be numbers");
    }
    msg.location = GeoPoint{loc.at("lat").get<double>(), loc.at("lon").get<double>()};
  }
  if (j.contains("epoch")) msg.epoch_period_ms = get_int(j, "epoch");
  if (j.contains("ts_ms")) msg.session_origin_ms = get_int(j, "ts_ms");
  return msg;
}

Message decode_report(const json& j) {
  check_fields(j, {{"type", true},
                   {"unit", true},
                   {"epoch", true},
                   {"ts_ms", true},
                   {"counts", true},
                   {"conf", false}});
  ReportMessage msg;
  msg.unit_id = static_cast<CompartmentId>(get_int(j, "unit"));
  msg.epoch = get_int(j, "epoch");
  if (msg.epoch < 0) fail(Errc::invalid_message, "epoch must be >= 0");
  msg.timestamp_ms = get_int(j, "ts_ms");
  const auto& counts = j.at("counts");
  if (!counts.is_object()) fail(Errc::invalid_message, "field 'counts' must be an object");
  for (const auto& [key, value] : counts.items()) {
    if (!value.is_number_integer()) fail(Errc::invalid_message, "counts values must be integers");
    const int count = value.get<int>();
    if (count < 1) fail(Errc::invalid_message, "count for class " + key + " must be >= 1");
    const ClassId cls = parse_id_key(key);
    if (!msg.counts.emplace(cls, count).second) {
      fail(Errc::invalid_message, "class " + key + " appears twice in counts");
    }
  }
  if (j.contains("conf")) {
    const auto& conf = j.at("conf");
    if (!conf.is_object()) fail(Errc::invalid_message, "field 'conf' must be an object");
    std::map<ClassId, std::vector<double>> scores;
    for (const auto& [key, value] : conf.items()) {
      if (!value.is_array()) fail(Errc::invalid_message, "conf values must be arrays");
      std::vector<double> vs;
      for (const auto& s : value) {
        if (!s.is_number()) fail(Errc::invalid_message, "confidence scores must be numbers");
        const double d = s.get<double>();
        if (!(d >= 0.0 && d <= 1.0)) fail(Errc::invalid_message, "confidence scores must lie in [0, 1]");
        vs.push_back(d);
      }
      scores.emplace(parse_id_key(key), std::move(vs));
    }
    msg.confidences = std::move(scores);
  }
  return msg;
}

Message decode_ack(const json& j) {
  check_fields(j, {{"type", true}, {"epoch", true}, {"status", true}});
  AckMessage msg;
  msg.epoch = get_int(j, "epoch");
  const std::string status = get_str(j, "status");
  if (status == "accepted") {
    msg.status = AckStatus::accepted;
  } else if (status == "late") {
    msg.status = AckStatus::late;
  } else if (status == "duplicate") {
    msg.status = AckStatus::duplicate;
  } else {
    fail(Errc::invalid_message, "unknown ack status '" + status + "'");
  }
  return msg;
}

}  // namespace

std::string encode(const HelloMessage& msg) {
  json j;
  j["type"] = "hello";
  j["v"] = msg.protocol_version;
  j["unit"] = msg.unit_id;
  j["reg_hash"] = msg.registry_hash;
  if (msg.location) {
    j["loc"] = json{{"lat", msg.location->lat}, {"lon", msg.location->lon}};
  }
  if (msg.epoch_period_ms) j["epoch"] = *msg.epoch_period_ms;
  if (msg.session_origin_ms) j["ts_ms"] = *msg.session_origin_ms;
  return finish(std::move(j));
}

std::string encode(const AckMessage& msg) {
  json j;
  j["type"] = "ack";
  j["epoch"] = msg.epoch;
  j["status"] = ack_status_name(msg.status);
  return finish(std::move(j));
}

std::string encode(const ReportMessage& msg, bool empty_ok) {
  json j;
  j["type"] = "report";
  j["unit"] = msg.unit_id;
  if (msg.epoch < 0) fail(Errc::invalid_message, "epoch must be >= 0");
  j["epoch"] = msg.epoch;
  j["ts_ms"] = msg.timestamp_ms;
  j["counts"] = counts_to_json(msg.counts, empty_ok);
  if (msg.confidences) {
    json conf = json::object();
    for (const auto& [cls, scores] : *msg.confidences) {
      for (double s : scores) {
        if (!(s >= 0.0 && s <= 1.0)) {
          fail(Errc::invalid_message, "confidence scores must lie in [0, 1]");
        }
      }
      conf[std::to_string(cls)] = scores;
    }
    j["conf"] = std::move(conf);
  }
  return finish(std::move(j));
}

std::string encode(const Message& msg, bool empty_ok) {
  if (const auto* hello = std::get_if<HelloMessage>(&msg)) return encode(*hello);
  if (const auto* report = std::get_if<ReportMessage>(&msg)) return encode(*report, empty_ok);
  return encode(std::get<AckMessage>(msg));
}

Message decode(std::string_view line) {
  if (line.size() > kMaxFrameBytes) {
    fail(Errc::malformed_frame, "frame exceeds " + std::to_string(kMaxFrameBytes) + " bytes");
  }
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    fail(Errc::malformed_frame, "frame is not a JSON object");
  }
  if (!j.contains("type")) fail(Errc::invalid_message, "missing field 'type'");
  const std::string type = get_str(j, "type");
  if (type == "hello") return decode_hello(j);
  if (type == "report") return decode_report(j);
  if (type == "ack") return decode_ack(j);
  fail(Errc::unknown_type, "unknown message type '" + type + "'");
}

void FrameSplitter::feed(std::string_view bytes, std::vector<std::string>& out) {
  buffer_.append(bytes);
  std::size_t start = 0;
  for (;;) {
    const std::size_t nl = buffer_.find('\n', start);
    if (nl == std::string::npos) break;
    if (nl - start > kMaxFrameBytes) {
      buffer_.clear();
      fail(Errc::malformed_frame, "frame exceeds " + std::to_string(kMaxFrameBytes) + " bytes");
    }
    out.emplace_back(buffer_.substr(start, nl - start));
    start = nl + 1;
  }
  buffer_.erase(0, start);
  if (buffer_.size() > kMaxFrameBytes) {
    buffer_.clear();
    fail(Errc::malformed_frame, "unterminated frame exceeds " + std::to_string(kMaxFrameBytes) + " bytes");
  }
}

}  // namespace matmon::wire
