#include "bwc/wire.hpp"

#include <json.hpp>

#include "bwc/errors.hpp"

namespace bwc::wire {

using ordered = nlohmann::ordered_json;

std::string_view to_string(Op op) {
  switch (op) {
    case Op::transcribe: return "transcribe";
    case Op::force_align: return "force_align";
    case Op::score_frames: return "score_frames";
  }
  return "transcribe";
}

Op parse_op(std::string_view s) {
  if (s == "transcribe") return Op::transcribe;
  if (s == "force_align") return Op::force_align;
  if (s == "score_frames") return Op::score_frames;
  throw ValidationError("unknown op '" + std::string(s) + "'");
}

std::string encode(const Request& r) {
  ordered j;
  j["id"] = r.id;
  j["op"] = to_string(r.op);
  j["audio_path"] = r.audio_path;
  j["start_s"] = r.start_s;
  j["end_s"] = r.end_s;
  if (r.transcript) j["transcript"] = *r.transcript;
  if (r.features) j["features"] = *r.features;
  return j.dump();
}

std::string encode(const Response& r) {
  ordered j;
  j["id"] = r.id;
  j["ok"] = r.ok;
  if (r.text) j["text"] = *r.text;
  if (r.words) {
    auto arr = ordered::array();
    for (const auto& w : *r.words) {
      ordered jw;
      jw["w"] = w.w;
      jw["s"] = w.s;
      jw["e"] = w.e;
      arr.push_back(std::move(jw));
    }
    j["words"] = std::move(arr);
  }
  if (r.score) j["score"] = *r.score;
  if (r.error) j["error"] = *r.error;
  return j.dump();
}

namespace {

ordered parse_object(std::string_view line) {
  ordered j;
  try {
    j = ordered::parse(line);
  } catch (const ordered::parse_error& e) {
    throw ParseError(std::string("malformed protocol line: ") + e.what(), 0);
  }
  if (!j.is_object()) throw ValidationError("protocol message must be a JSON object");
  return j;
}

const ordered& require(const ordered& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("missing key '") + key + "'");
  return *it;
}

std::int64_t require_id(const ordered& j) {
  const auto& v = require(j, "id");
  if (!v.is_number_integer()) throw ValidationError("'id' must be an integer");
  return v.get<std::int64_t>();
}

double require_number(const ordered& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_number()) throw ValidationError(std::string("'") + key + "' must be a number");
  return v.get<double>();
}

std::string require_string(const ordered& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string()) throw ValidationError(std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

Request decode_request(std::string_view line) {
  const auto j = parse_object(line);
  Request r;
  r.id = require_id(j);
  r.op = parse_op(require_string(j, "op"));
  r.audio_path = require_string(j, "audio_path");
  r.start_s = require_number(j, "start_s");
  r.end_s = require_number(j, "end_s");
  if (j.contains("transcript")) r.transcript = require_string(j, "transcript");
  if (j.contains("features")) {
    const auto& f = j.at("features");
    if (!f.is_array()) throw ValidationError("'features' must be an array of arrays");
    std::vector<std::vector<double>> rows;
    for (const auto& row : f) {
      if (!row.is_array()) throw ValidationError("'features' must be an array of arrays");
      std::vector<double> values;
      for (const auto& v : row) {
        if (!v.is_number()) throw ValidationError("'features' entries must be numbers");
        values.push_back(v.get<double>());
      }
      rows.push_back(std::move(values));
    }
    r.features = std::move(rows);
  }
  return r;
}

Response decode_response(std::string_view line) {
  const auto j = parse_object(line);
  Response r;
  r.id = require_id(j);
  const auto& ok = require(j, "ok");
  if (!ok.is_boolean()) throw ValidationError("'ok' must be a boolean");
  r.ok = ok.get<bool>();
  if (j.contains("text")) r.text = require_string(j, "text");
  if (j.contains("words")) {
    const auto& arr = j.at("words");
    if (!arr.is_array()) throw ValidationError("'words' must be an array");
    std::vector<Word> words;
    for (const auto& jw : arr) {
      if (!jw.is_object()) throw ValidationError("'words' entries must be objects");
      words.push_back({require_string(jw, "w"), require_number(jw, "s"), require_number(jw, "e")});
    }
    r.words = std::move(words);
  }
  if (j.contains("score")) r.score = require_number(j, "score");
  if (j.contains("error")) r.error = require_string(j, "error");
  return r;
}

bool is_valid_response(std::string_view line, std::string* why) {
  try {
    decode_response(line);
    return true;
  } catch (const std::exception& e) {
    if (why) *why = e.what();
    return false;
  }
}

}  // namespace bwc::wire
