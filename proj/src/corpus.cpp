#include "bwc/corpus.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bwc/errors.hpp"
#include "bwc/rng.hpp"

namespace bwc {

using nlohmann::json;

Segment Segment::from_seconds(double start_s, double end_s) {
  if (!std::isfinite(start_s) || !std::isfinite(end_s)) {
    throw ValidationError("segment bounds must be finite");
  }
  return from_millis(std::llround(start_s * 1000.0), std::llround(end_s * 1000.0));
}

Segment Segment::from_millis(std::int64_t start_ms, std::int64_t end_ms) {
  if (start_ms < 0) {
    throw ValidationError("segment start " + std::to_string(start_ms) + " ms is negative");
  }
  if (end_ms <= start_ms) {
    throw ValidationError("segment end " + std::to_string(end_ms) + " ms is not after start " +
                          std::to_string(start_ms) + " ms");
  }
  return Segment(start_ms, end_ms);
}

std::int64_t Segment::overlap_ms(const Segment& other) const noexcept {
  const auto lo = std::max(start_ms_, other.start_ms_);
  const auto hi = std::min(end_ms_, other.end_ms_);
  return hi > lo ? hi - lo : 0;
}

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<std::string_view, E>, N>& table,
             const char* what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  throw ValidationError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::array<std::pair<std::string_view, SpeakerRole>, 5> kRoles{{
    {"primary_officer", SpeakerRole::primary_officer},
    {"secondary_officer", SpeakerRole::secondary_officer},
    {"community_member", SpeakerRole::community_member},
    {"dispatch", SpeakerRole::dispatch},
    {"unknown", SpeakerRole::unknown},
}};
constexpr std::array<std::pair<std::string_view, Race>, 5> kRaces{{
    {"black", Race::black},
    {"white", Race::white},
    {"hispanic", Race::hispanic},
    {"other", Race::other},
    {"unknown", Race::unknown},
}};
constexpr std::array<std::pair<std::string_view, Gender>, 3> kGenders{{
    {"male", Gender::male},
    {"female", Gender::female},
    {"unknown", Gender::unknown},
}};

template <typename E, std::size_t N>
std::string_view enum_name(E v, const std::array<std::pair<std::string_view, E>, N>& table) {
  for (const auto& [name, value] : table) {
    if (value == v) return name;
  }
  return "unknown";
}

void sort_unique(std::vector<std::string>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

bool intersects(const std::vector<std::string>& a, const std::set<std::string>& b) {
  return std::any_of(a.begin(), a.end(), [&](const std::string& x) { return b.count(x) > 0; });
}

// Sort key: raw start when present, else aligned start, else after everything.
double utterance_order_key(const Utterance& u) {
  if (u.raw_start_s) return static_cast<double>(*u.raw_start_s);
  if (u.segment) return u.segment->start();
  return std::numeric_limits<double>::infinity();
}

}  // namespace

std::string_view to_string(SpeakerRole r) { return enum_name(r, kRoles); }
std::string_view to_string(Race r) { return enum_name(r, kRaces); }
std::string_view to_string(Gender g) { return enum_name(g, kGenders); }
SpeakerRole parse_role(std::string_view s) { return parse_enum(s, kRoles, "speaker_role"); }
Race parse_race(std::string_view s) { return parse_enum(s, kRaces, "race"); }
Gender parse_gender(std::string_view s) { return parse_enum(s, kGenders, "gender"); }

const StopRecord* Manifest::find(std::string_view stop_id) const {
  for (const auto& s : stops) {
    if (s.stop_id == stop_id) return &s;
  }
  return nullptr;
}

std::size_t Manifest::utterance_count() const {
  std::size_t n = 0;
  for (const auto& s : stops) n += s.utterances.size();
  return n;
}

void normalize_and_validate(StopRecord& stop) {
  const auto fail = [&](const std::string& field, const std::string& why) {
    throw ValidationError("stop '" + stop.stop_id + "' field '" + field + "': " + why);
  };
  if (stop.stop_id.empty()) fail("stop_id", "empty");
  sort_unique(stop.primary_officer_ids);
  sort_unique(stop.all_officer_ids);
  for (const auto& id : stop.primary_officer_ids) {
    if (!std::binary_search(stop.all_officer_ids.begin(), stop.all_officer_ids.end(), id)) {
      fail("primary_officer_ids", "officer '" + id + "' missing from all_officer_ids");
    }
  }
  std::set<std::string> seen;
  for (const auto& u : stop.utterances) {
    if (u.id.empty()) fail("utterances.id", "empty utterance id");
    if (!seen.insert(u.id).second) fail("utterances.id", "duplicate utterance id '" + u.id + "'");
    if (u.raw_text.empty()) fail("utterances.raw_text", "utterance '" + u.id + "' has empty text");
    if (u.raw_end_s && !u.raw_start_s) {
      fail("utterances.raw_start_s", "utterance '" + u.id + "' has raw_end_s without raw_start_s");
    }
  }
  std::stable_sort(stop.utterances.begin(), stop.utterances.end(),
                   [](const Utterance& a, const Utterance& b) {
                     return utterance_order_key(a) < utterance_order_key(b);
                   });
}

void validate(const Manifest& manifest) {
  std::set<std::string> ids;
  for (const auto& s : manifest.stops) {
    if (!ids.insert(s.stop_id).second) {
      throw ValidationError("duplicate stop_id '" + s.stop_id + "'");
    }
  }
}

namespace {

std::optional<std::int64_t> optional_int(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_number_integer()) throw ValidationError(std::string("'") + key + "' must be an integer or null");
  return v.get<std::int64_t>();
}

std::optional<double> optional_number(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_number()) throw ValidationError(std::string("'") + key + "' must be a number or null");
  return v.get<double>();
}

json optional_json(const std::optional<std::int64_t>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

StopRecord parse_stop_line(std::string_view line) {
  const json j = json::parse(line);
  if (!j.is_object()) throw ValidationError("stop record must be a JSON object");
  StopRecord stop;
  stop.stop_id = j.at("stop_id").get<std::string>();
  try {
    stop.audio_path = j.at("audio_path").get<std::string>();
    stop.primary_officer_ids = j.at("primary_officer_ids").get<std::vector<std::string>>();
    stop.all_officer_ids = j.at("all_officer_ids").get<std::vector<std::string>>();
    stop.driver_race = parse_race(j.at("driver_race").get<std::string>());
    stop.driver_gender = parse_gender(j.at("driver_gender").get<std::string>());
    stop.officer_race = parse_race(j.at("officer_race").get<std::string>());
    stop.officer_gender = parse_gender(j.at("officer_gender").get<std::string>());
    for (const auto& ju : j.at("utterances")) {
      Utterance u;
      u.id = ju.at("id").get<std::string>();
      try {
        u.speaker_role = parse_role(ju.at("speaker_role").get<std::string>());
        u.raw_text = ju.at("raw_text").get<std::string>();
        u.raw_start_s = optional_int(ju, "raw_start_s");
        u.raw_end_s = optional_int(ju, "raw_end_s");
        const auto start = optional_number(ju, "start_s");
        const auto end = optional_number(ju, "end_s");
        if (start.has_value() != end.has_value()) {
          throw ValidationError("start_s and end_s must both be set or both be null");
        }
        if (start) u.segment = Segment::from_seconds(*start, *end);
      } catch (const std::exception& e) {
        throw ValidationError("utterance '" + u.id + "': " + e.what());
      }
      stop.utterances.push_back(std::move(u));
    }
  } catch (const std::exception& e) {
    throw ValidationError("stop '" + stop.stop_id + "': " + e.what());
  }
  normalize_and_validate(stop);
  return stop;
}

std::string format_stop_line(const StopRecord& stop) {
  json utts = json::array();
  for (const auto& u : stop.utterances) {
    utts.push_back(json{
        {"id", u.id},
        {"speaker_role", to_string(u.speaker_role)},
        {"raw_text", u.raw_text},
        {"raw_start_s", optional_json(u.raw_start_s)},
        {"raw_end_s", optional_json(u.raw_end_s)},
        {"start_s", u.segment ? json(u.segment->start()) : json(nullptr)},
        {"end_s", u.segment ? json(u.segment->end()) : json(nullptr)},
    });
  }
  const json j{
      {"stop_id", stop.stop_id},
      {"audio_path", stop.audio_path},
      {"primary_officer_ids", stop.primary_officer_ids},
      {"all_officer_ids", stop.all_officer_ids},
      {"driver_race", to_string(stop.driver_race)},
      {"driver_gender", to_string(stop.driver_gender)},
      {"officer_race", to_string(stop.officer_race)},
      {"officer_gender", to_string(stop.officer_gender)},
      {"utterances", std::move(utts)},
  };
  return j.dump();
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  Manifest m;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.stops.push_back(parse_stop_line(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what(), line_no);
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  validate(m);
  return m;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  for (const auto& s : manifest.stops) out << format_stop_line(s) << '\n';
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

SplitResult partition_splits(const Manifest& manifest, const SplitConfig& config) {
  validate(manifest);
  const std::size_t n = manifest.stops.size();
  Rng rng(derive_seed(config.seed, "split"));

  // How many stops each officer appears in; test prefers low-load officers
  // so that fewer stops end up withheld.
  std::map<std::string, std::size_t> officer_load;
  for (const auto& s : manifest.stops) {
    for (const auto& o : s.all_officer_ids) ++officer_load[o];
  }
  const auto load_of = [&](const StopRecord& s) {
    std::size_t total = 0;
    for (const auto& o : s.all_officer_ids) total += officer_load[o];
    return total;
  };

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return load_of(manifest.stops[a]) < load_of(manifest.stops[b]);
  });

  enum class Bucket { train, validation, test, withheld };
  std::vector<Bucket> bucket(n, Bucket::train);
  std::set<std::string> test_officers;

  if (config.test_stops > 0) {
    const bool balance = config.balance_test_race;
    if (balance && config.test_stops % 2 != 0) {
      throw InfeasibleError("race-balanced test split needs an even stop count, got " +
                            std::to_string(config.test_stops));
    }
    const std::size_t half = config.test_stops / 2;
    std::size_t black = 0, white = 0, picked = 0;
    for (std::size_t idx : order) {
      const auto& s = manifest.stops[idx];
      if (s.driver_race != Race::black && s.driver_race != Race::white) continue;
      if (s.utterances.size() >= config.max_test_utterances) continue;
      if (intersects(s.all_officer_ids, test_officers)) continue;
      if (balance) {
        auto& count = s.driver_race == Race::black ? black : white;
        if (count >= half) continue;
        ++count;
      } else if (picked >= config.test_stops) {
        break;
      }
      ++picked;
      bucket[idx] = Bucket::test;
      test_officers.insert(s.all_officer_ids.begin(), s.all_officer_ids.end());
      if (picked == config.test_stops) break;
    }
    if (picked < config.test_stops) {
      throw InfeasibleError("cannot build test split of " + std::to_string(config.test_stops) +
                            " stops: achievable black=" + std::to_string(black) +
                            " white=" + std::to_string(white) + " total=" + std::to_string(picked));
    }
  }

  std::vector<std::size_t> remaining;
  for (std::size_t idx : order) {
    if (bucket[idx] == Bucket::test) continue;
    if (intersects(manifest.stops[idx].all_officer_ids, test_officers)) {
      bucket[idx] = Bucket::withheld;
    } else {
      remaining.push_back(idx);
    }
  }

  if (config.validation_stops > 0) {
    std::map<std::string, std::size_t> primary_load;
    for (std::size_t idx : remaining) {
      for (const auto& o : manifest.stops[idx].primary_officer_ids) ++primary_load[o];
    }
    const auto primary_load_of = [&](std::size_t idx) {
      std::size_t total = 0;
      for (const auto& o : manifest.stops[idx].primary_officer_ids) total += primary_load[o];
      return total;
    };
    std::vector<std::size_t> val_order = remaining;
    rng.shuffle(val_order);
    std::stable_sort(val_order.begin(), val_order.end(), [&](std::size_t a, std::size_t b) {
      return primary_load_of(a) < primary_load_of(b);
    });
    if (val_order.size() < config.validation_stops) {
      throw InfeasibleError("cannot build validation split of " +
                            std::to_string(config.validation_stops) + " stops: only " +
                            std::to_string(val_order.size()) + " stops remain after test withholding");
    }
    std::set<std::string> val_primary;
    for (std::size_t k = 0; k < config.validation_stops; ++k) {
      const auto idx = val_order[k];
      bucket[idx] = Bucket::validation;
      const auto& ids = manifest.stops[idx].primary_officer_ids;
      val_primary.insert(ids.begin(), ids.end());
    }
    for (std::size_t idx : remaining) {
      if (bucket[idx] == Bucket::train &&
          intersects(manifest.stops[idx].primary_officer_ids, val_primary)) {
        bucket[idx] = Bucket::withheld;
      }
    }
  }

  SplitResult out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = manifest.stops[i];
    switch (bucket[i]) {
      case Bucket::train: out.train.stops.push_back(s); break;
      case Bucket::validation: out.validation.stops.push_back(s); break;
      case Bucket::test: out.test.stops.push_back(s); break;
      case Bucket::withheld: out.withheld.stops.push_back(s); break;
    }
  }
  return out;
}

}  // namespace bwc
