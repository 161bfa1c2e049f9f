#include <doctest.h>

#include "bwc/errors.hpp"
#include "bwc/wire.hpp"

using namespace bwc;
using namespace bwc::wire;

TEST_CASE("request round trip") {
  Request r;
  r.id = 12;
  r.op = Op::force_align;
  r.audio_path = "stops/a.wav";
  r.start_s = 1.25;
  r.end_s = 3.5;
  r.transcript = "step out of the car";
  CHECK(decode_request(encode(r)) == r);
  r.op = Op::score_frames;
  r.transcript.reset();
  r.features = std::vector<std::vector<double>>{{1.0, -2.5}, {0.0, 3.0}};
  CHECK(decode_request(encode(r)) == r);
}

TEST_CASE("encoding has a fixed key order") {
  Request r;
  r.id = 1;
  r.audio_path = "a.wav";
  r.start_s = 0.5;
  r.end_s = 1.0;
  CHECK(encode(r) == R"({"id":1,"op":"transcribe","audio_path":"a.wav","start_s":0.5,"end_s":1.0})");
}

TEST_CASE("response round trip") {
  Response ok;
  ok.id = 4;
  ok.ok = true;
  ok.words = std::vector<Word>{{"hi", 0.0, 0.25}, {"there", 0.25, 0.5}};
  CHECK(decode_response(encode(ok)) == ok);
  Response bad;
  bad.id = 5;
  bad.error = "alignment_failure";
  CHECK(decode_response(encode(bad)) == bad);
}

TEST_CASE("invalid messages") {
  CHECK_THROWS_AS(decode_response("not json"), ParseError);
  CHECK_THROWS_AS(decode_response("[1,2]"), ValidationError);
  CHECK_THROWS_AS(decode_response(R"({"ok":true})"), ValidationError);
  CHECK_THROWS_AS(decode_response(R"({"id":1.5,"ok":true})"), ValidationError);
  CHECK_THROWS_AS(decode_response(R"({"id":1,"ok":"yes"})"), ValidationError);
  CHECK_THROWS_AS(decode_response(R"({"id":1,"ok":true,"words":[{"w":"a","s":0}]})"), ValidationError);
  CHECK_THROWS_AS(decode_request(R"({"id":1,"op":"dance","audio_path":"a","start_s":0,"end_s":1})"), ValidationError);
  std::string why;
  CHECK_FALSE(is_valid_response(R"({"id":1,"ok":true,"score":"high"})", &why));
  CHECK(why.find("score") != std::string::npos);
  CHECK(is_valid_response(R"({"id":1,"ok":true,"score":0.5})"));
}
