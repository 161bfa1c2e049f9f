#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bwc::wire {

// Line-delimited JSON spoken between the core and out-of-process engines.
// One request object per line; one response per line with the same id.

enum class Op { transcribe, force_align, score_frames };

std::string_view to_string(Op op);
Op parse_op(std::string_view s);

struct Request {
  std::int64_t id = 0;
  Op op = Op::transcribe;
  std::string audio_path;
  double start_s = 0.0;
  double end_s = 0.0;
  std::optional<std::string> transcript;
  std::optional<std::vector<std::vector<double>>> features;

  friend bool operator==(const Request&, const Request&) = default;
};

struct Word {
  std::string w;
  double s = 0.0;
  double e = 0.0;
  friend bool operator==(const Word&, const Word&) = default;
};

struct Response {
  std::int64_t id = 0;
  bool ok = false;
  std::optional<std::string> text;
  std::optional<std::vector<Word>> words;
  std::optional<double> score;
  std::optional<std::string> error;

  friend bool operator==(const Response&, const Response&) = default;
};

/// Compact single-line JSON, keys in fixed order, optional fields omitted.
std::string encode(const Request& r);
std::string encode(const Response& r);

/// Throws ParseError on malformed JSON and ValidationError on schema
/// violations (missing or mistyped keys, unknown op).
Request decode_request(std::string_view line);
Response decode_response(std::string_view line);

/// Schema check without throwing; `why` receives the first violation.
bool is_valid_response(std::string_view line, std::string* why = nullptr);

}  // namespace bwc::wire
