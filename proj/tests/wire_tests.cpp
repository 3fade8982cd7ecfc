#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "matmon/wire.hpp"
#include "support.hpp"

using namespace matmon;
using namespace matmon::wire;
using namespace testsupport;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ReportMessage sample_report() {
  ReportMessage msg;
  msg.unit_id = 1;
  msg.epoch = 0;
  msg.timestamp_ms = 0;
  msg.counts = {{2, 1}, {3, 1}};
  return msg;
}

}  // namespace

TEST_CASE("report encoding matches the golden frame byte for byte") {
  const std::string golden = read_file(source_dir() + "/tests/data/golden_report_frame.ndjson");
  CHECK(encode(sample_report()) == golden);
  CHECK(golden.back() == '\n');
  CHECK(golden.find(' ') == std::string::npos);  // compact form, no padding
}

TEST_CASE("encodings are single sorted-key JSON lines") {
  const std::string ack = encode(AckMessage{5, AckStatus::late});
  CHECK(ack == "{\"epoch\":5,\"status\":\"late\",\"type\":\"ack\"}\n");

  HelloMessage hello;
  hello.unit_id = 2;
  hello.registry_hash = "00ff00ff00ff00ff";
  CHECK(encode(hello) ==
        "{\"reg_hash\":\"00ff00ff00ff00ff\",\"type\":\"hello\",\"unit\":2,\"v\":1}\n");
}

TEST_CASE("ack status names cover the full enum") {
  CHECK(std::string(ack_status_name(AckStatus::accepted)) == "accepted");
  CHECK(std::string(ack_status_name(AckStatus::late)) == "late");
  CHECK(std::string(ack_status_name(AckStatus::duplicate)) == "duplicate");
}

TEST_CASE("hello round-trips with and without optional fields") {
  HelloMessage bare;
  bare.unit_id = 3;
  bare.registry_hash = "deadbeefdeadbeef";
  const std::string line = encode(bare);
  const Message decoded = decode(std::string_view(line).substr(0, line.size() - 1));
  REQUIRE(std::holds_alternative<HelloMessage>(decoded));
  CHECK(std::get<HelloMessage>(decoded) == bare);

  HelloMessage full = bare;
  full.location = GeoPoint{48.2, 16.37};
  full.epoch_period_ms = 250;
  full.session_origin_ms = 1726000000000;
  const std::string line2 = encode(full);
  const Message decoded2 = decode(std::string_view(line2).substr(0, line2.size() - 1));
  REQUIRE(std::holds_alternative<HelloMessage>(decoded2));
  CHECK(std::get<HelloMessage>(decoded2) == full);
}

TEST_CASE("report round-trips including confidence scores") {
  ReportMessage msg = sample_report();
  msg.epoch = 17;
  msg.timestamp_ms = 99999;
  msg.confidences = {{2, {0.5, 0.75}}, {3, {1.0}}};
  const std::string line = encode(msg);
  const Message decoded = decode(std::string_view(line).substr(0, line.size() - 1));
  REQUIRE(std::holds_alternative<ReportMessage>(decoded));
  CHECK(std::get<ReportMessage>(decoded) == msg);
}

TEST_CASE("ack round-trips for every status") {
  for (AckStatus st : {AckStatus::accepted, AckStatus::late, AckStatus::duplicate}) {
    const AckMessage msg{42, st};
    const std::string line = encode(msg);
    const Message decoded = decode(std::string_view(line).substr(0, line.size() - 1));
    REQUIRE(std::holds_alternative<AckMessage>(decoded));
    CHECK(std::get<AckMessage>(decoded) == msg);
  }
}

TEST_CASE("empty counts need explicit permission to encode but always decode") {
  ReportMessage empty;
  empty.unit_id = 1;
  CHECK(error_code_of([&] { encode(empty); }) == Errc::invalid_message);
  const std::string line = encode(empty, /*empty_ok=*/true);
  const Message decoded = decode(std::string_view(line).substr(0, line.size() - 1));
  REQUIRE(std::holds_alternative<ReportMessage>(decoded));
  CHECK(std::get<ReportMessage>(decoded).counts.empty());
}

TEST_CASE("encode rejects non-positive counts, bad epochs, and bad scores") {
  ReportMessage msg = sample_report();
  msg.counts[4] = 0;
  CHECK(error_code_of([&] { encode(msg); }) == Errc::invalid_message);

  ReportMessage negative_epoch = sample_report();
  negative_epoch.epoch = -1;
  CHECK(error_code_of([&] { encode(negative_epoch); }) == Errc::invalid_message);

  ReportMessage bad_conf = sample_report();
  bad_conf.confidences = std::map<ClassId, std::vector<double>>{{2, std::vector<double>{1.5}}};
  CHECK(error_code_of([&] { encode(bad_conf); }) == Errc::invalid_message);
}

TEST_CASE("decode classifies malformed input precisely") {
  auto code = [](std::string_view line) { return error_code_of([&] { decode(line); }); };

  CHECK(code("not json at all") == Errc::malformed_frame);
  CHECK(code("[1,2,3]") == Errc::malformed_frame);
  CHECK(code("") == Errc::malformed_frame);
  CHECK(code("{\"unit\":1}") == Errc::invalid_message);  // missing type
  CHECK(code("{\"type\":\"telemetry\"}") == Errc::unknown_type);
  CHECK(code("{\"type\":7}") == Errc::invalid_message);

  // Hello with a foreign protocol version.
  CHECK(code("{\"reg_hash\":\"x\",\"type\":\"hello\",\"unit\":1,\"v\":2}") ==
        Errc::version_mismatch);
  // Hello missing its registry hash.
  CHECK(code("{\"type\":\"hello\",\"unit\":1,\"v\":1}") == Errc::invalid_message);
  // Hello with a half-specified location.
  CHECK(code("{\"loc\":{\"lat\":1.0},\"reg_hash\":\"x\",\"type\":\"hello\",\"unit\":1,\"v\":1}") ==
        Errc::invalid_message);

  // Unknown field (reports carry no version field).
  CHECK(code("{\"counts\":{\"2\":1},\"epoch\":0,\"ts_ms\":0,\"type\":\"report\",\"unit\":1,"
             "\"v\":1}") == Errc::invalid_message);
  // Negative epoch.
  CHECK(code("{\"counts\":{\"2\":1},\"epoch\":-1,\"ts_ms\":0,\"type\":\"report\",\"unit\":1}") ==
        Errc::invalid_message);
  // Missing counts.
  CHECK(code("{\"epoch\":0,\"ts_ms\":0,\"type\":\"report\",\"unit\":1}") == Errc::invalid_message);
  // Zero count.
  CHECK(code("{\"counts\":{\"2\":0},\"epoch\":0,\"ts_ms\":0,\"type\":\"report\",\"unit\":1}") ==
        Errc::invalid_message);
  // Non-integer count.
  CHECK(code("{\"counts\":{\"2\":1.5},\"epoch\":0,\"ts_ms\":0,\"type\":\"report\",\"unit\":1}") ==
        Errc::invalid_message);
  // Non-numeric class key.
  CHECK(code("{\"counts\":{\"x\":1},\"epoch\":0,\"ts_ms\":0,\"type\":\"report\",\"unit\":1}") ==
        Errc::invalid_message);
  // Two spellings of the same class id.
  CHECK(code("{\"counts\":{\"02\":1,\"2\":1},\"epoch\":0,\"ts_ms\":0,\"type\":\"report\","
             "\"unit\":1}") == Errc::invalid_message);
  // Confidence score outside [0, 1].
  CHECK(code("{\"conf\":{\"2\":[2.0]},\"counts\":{\"2\":1},\"epoch\":0,\"ts_ms\":0,"
             "\"type\":\"report\",\"unit\":1}") == Errc::invalid_message);
  // Confidence list not an array.
  CHECK(code("{\"conf\":{\"2\":0.5},\"counts\":{\"2\":1},\"epoch\":0,\"ts_ms\":0,"
             "\"type\":\"report\",\"unit\":1}") == Errc::invalid_message);

  // Unknown ack status.
  CHECK(code("{\"epoch\":1,\"status\":\"maybe\",\"type\":\"ack\"}") == Errc::invalid_message);
  // Extra field on an ack.
  CHECK(code("{\"epoch\":1,\"extra\":1,\"status\":\"late\",\"type\":\"ack\"}") ==
        Errc::invalid_message);
}

TEST_CASE("oversized frames are rejected on both paths") {
  ReportMessage huge;
  huge.unit_id = 1;
  for (int cls = 1; static_cast<std::size_t>(cls) < kMaxFrameBytes / 10; ++cls) {
    huge.counts[100000 + cls] = 1;
  }
  CHECK(error_code_of([&] { encode(huge); }) == Errc::malformed_frame);

  const std::string long_line(kMaxFrameBytes + 1, 'a');
  CHECK(error_code_of([&] { decode(long_line); }) == Errc::malformed_frame);
}

TEST_CASE("frame splitter reassembles frames across arbitrary chunking") {
  const std::string a = encode(sample_report());
  const std::string b = encode(AckMessage{3, AckStatus::accepted});

  SUBCASE("two frames plus a partial in one feed") {
    FrameSplitter splitter;
    std::vector<std::string> out;
    splitter.feed(a + b + "{\"partial", out);
    REQUIRE(out.size() == 2);
    CHECK(out[0] + "\n" == a);
    CHECK(out[1] + "\n" == b);
    CHECK(splitter.has_partial());
    splitter.feed("\":1}\n", out);
    REQUIRE(out.size() == 3);
    CHECK(out[2] == "{\"partial\":1}");
    CHECK(!splitter.has_partial());
  }

  SUBCASE("byte-at-a-time delivery yields the same frames") {
    FrameSplitter splitter;
    std::vector<std::string> out;
    const std::string stream = a + b;
    for (char c : stream) splitter.feed(std::string_view(&c, 1), out);
    REQUIRE(out.size() == 2);
    CHECK(out[0] + "\n" == a);
    CHECK(out[1] + "\n" == b);
    CHECK(!splitter.has_partial());
  }

  SUBCASE("an unterminated line past the frame cap poisons the stream") {
    FrameSplitter splitter;
    std::vector<std::string> out;
    const std::string flood(kMaxFrameBytes + 1, 'x');
    CHECK(error_code_of([&] { splitter.feed(flood, out); }) == Errc::malformed_frame);
    CHECK(!splitter.has_partial());  // buffer dropped, stream can continue
    splitter.feed(b, out);
    REQUIRE(out.size() == 1);
    CHECK(out[0] + "\n" == b);
  }

  SUBCASE("a terminated line past the frame cap is rejected too") {
    FrameSplitter splitter;
    std::vector<std::string> out;
    const std::string flood = std::string(kMaxFrameBytes + 1, 'x') + "\n";
    CHECK(error_code_of([&] { splitter.feed(flood, out); }) == Errc::malformed_frame);
  }

  SUBCASE("blank lines surface as empty frames for the caller to reject") {
    FrameSplitter splitter;
    std::vector<std::string> out;
    splitter.feed("\n", out);
    REQUIRE(out.size() == 1);
    CHECK(out[0].empty());
    CHECK(error_code_of([&] { decode(out[0]); }) == Errc::malformed_frame);
  }
}

TEST_CASE("random reports survive an encode/decode round trip") {
  Rng rng(123456789);
  for (int round = 0; round < 150; ++round) {
    ReportMessage msg;
    msg.unit_id = rand_int(rng, 1, 500);
    msg.epoch = rand_int(rng, 0, 1000000);
    msg.timestamp_ms = rand_int(rng, 0, 2000000000);
    const int n_classes = rand_int(rng, 0, 6);
    while (static_cast<int>(msg.counts.size()) < n_classes) {
      msg.counts[rand_int(rng, 1, 9999)] = rand_int(rng, 1, 50);
    }
    if (rand_int(rng, 0, 3) == 0 && !msg.counts.empty()) {
      std::map<ClassId, std::vector<double>> conf;
      for (const auto& [cls, count] : msg.counts) {
        std::vector<double> scores;
        for (int i = 0; i < count && i < 4; ++i) {
          scores.push_back(rand_int(rng, 0, 1000) / 1000.0);
        }
        conf[cls] = std::move(scores);
      }
      msg.confidences = std::move(conf);
    }

    const std::string line = encode(msg, /*empty_ok=*/true);
    REQUIRE(line.back() == '\n');
    const Message decoded = decode(std::string_view(line).substr(0, line.size() - 1));
    REQUIRE(std::holds_alternative<ReportMessage>(decoded));
    REQUIRE(std::get<ReportMessage>(decoded) == msg);

    // Determinism: encoding the decoded message reproduces the bytes.
    REQUIRE(encode(std::get<ReportMessage>(decoded), true) == line);
  }
}
