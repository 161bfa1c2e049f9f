// Scripted engine backend for subprocess tests. Speaks the line protocol on
// stdin/stdout. Flags:
//   --sleep-ms N     delay every response
//   --crash-after N  exit without answering request N+1
//   --bad-score      score_frames answers 2.0
//   --garbage        answer every request with a non-JSON line
//   --fail           answer ok:false with error "alignment_failure"
//   --stale          send a response with a stale id before the real one

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include "bwc/errors.hpp"
#include "bwc/textnorm.hpp"
#include "bwc/wire.hpp"

using namespace bwc;

int main(int argc, char** argv) {
  long sleep_ms = 0, crash_after = -1;
  bool bad_score = false, garbage = false, fail = false, stale = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--sleep-ms" && i + 1 < argc) sleep_ms = std::atol(argv[++i]);
    else if (a == "--crash-after" && i + 1 < argc) crash_after = std::atol(argv[++i]);
    else if (a == "--bad-score") bad_score = true;
    else if (a == "--garbage") garbage = true;
    else if (a == "--fail") fail = true;
    else if (a == "--stale") stale = true;
  }
  std::string line;
  long served = 0;
  while (std::getline(std::cin, line)) {
    if (crash_after >= 0 && served >= crash_after) return 3;
    ++served;
    if (sleep_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms));
    if (garbage) {
      std::cout << "this is not json" << std::endl;
      continue;
    }
    wire::Response resp;
    try {
      const auto req = wire::decode_request(line);
      resp.id = req.id;
      if (stale) {
        wire::Response old;
        old.id = req.id - 1000;
        old.ok = true;
        old.text = "stale";
        std::cout << wire::encode(old) << '\n';
      }
      if (fail) {
        resp.ok = false;
        resp.error = "alignment_failure";
      } else if (req.op == wire::Op::transcribe) {
        resp.ok = true;
        resp.text = "fake words for " + std::to_string(static_cast<long>(req.start_s * 1000)) + " ms";
      } else if (req.op == wire::Op::force_align) {
        const auto tokens = normalize(req.transcript.value_or("")).tokens;
        if (tokens.empty()) {
          resp.ok = false;
          resp.error = "precondition";
        } else {
          resp.ok = true;
          std::vector<wire::Word> words;
          const double step = (req.end_s - req.start_s) / double(tokens.size());
          for (std::size_t k = 0; k < tokens.size(); ++k) {
            // Round to whole milliseconds so spans stay inside the segment.
            const double s = std::round((req.start_s + step * double(k)) * 1000.0) / 1000.0;
            const double e = std::round((req.start_s + step * double(k + 1)) * 1000.0) / 1000.0;
            words.push_back({tokens[k], s, e});
          }
          resp.words = words;
        }
      } else {
        resp.ok = true;
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& row : req.features.value_or(std::vector<std::vector<double>>{})) {
          for (double v : row) sum += v, ++n;
        }
        resp.score = bad_score ? 2.0 : (n > 0 && sum / double(n) > -10.0 ? 0.75 : 0.25);
      }
    } catch (const ParseError&) {
      resp.id = 0;
      resp.ok = false;
      resp.error = "parse";
    } catch (const Error& e) {
      resp.id = 0;
      resp.ok = false;
      resp.error = e.kind();
    }
    std::cout << wire::encode(resp) << std::endl;
  }
  return 0;
}
