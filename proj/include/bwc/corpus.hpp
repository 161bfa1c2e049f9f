#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bwc {

/// A half-open time span inside one stop's audio, held at millisecond
/// precision so durations and comparisons are exact.
class Segment {
 public:
  /// Rounds both ends to the nearest millisecond. Throws ValidationError
  /// unless 0 <= start < end.
  static Segment from_seconds(double start_s, double end_s);
  static Segment from_millis(std::int64_t start_ms, std::int64_t end_ms);

  std::int64_t start_ms() const noexcept { return start_ms_; }
  std::int64_t end_ms() const noexcept { return end_ms_; }
  std::int64_t duration_ms() const noexcept { return end_ms_ - start_ms_; }
  double start() const noexcept { return static_cast<double>(start_ms_) / 1000.0; }
  double end() const noexcept { return static_cast<double>(end_ms_) / 1000.0; }
  double duration() const noexcept { return static_cast<double>(duration_ms()) / 1000.0; }
  double midpoint() const noexcept { return 0.5 * (start() + end()); }

  /// Length of the intersection in milliseconds (0 when disjoint).
  std::int64_t overlap_ms(const Segment& other) const noexcept;
  bool contains(const Segment& other) const noexcept {
    return start_ms_ <= other.start_ms_ && other.end_ms_ <= end_ms_;
  }

  friend bool operator==(const Segment&, const Segment&) = default;
  friend auto operator<=>(const Segment&, const Segment&) = default;

 private:
  Segment(std::int64_t s, std::int64_t e) : start_ms_(s), end_ms_(e) {}
  std::int64_t start_ms_ = 0;
  std::int64_t end_ms_ = 1;
};

enum class SpeakerRole { primary_officer, secondary_officer, community_member, dispatch, unknown };
enum class Race { black, white, hispanic, other, unknown };
enum class Gender { male, female, unknown };

std::string_view to_string(SpeakerRole r);
std::string_view to_string(Race r);
std::string_view to_string(Gender g);
SpeakerRole parse_role(std::string_view s);
Race parse_race(std::string_view s);
Gender parse_gender(std::string_view s);

struct Utterance {
  std::string id;
  SpeakerRole speaker_role = SpeakerRole::unknown;
  std::string raw_text;
  std::optional<Segment> segment;
  std::optional<std::int64_t> raw_start_s;
  std::optional<std::int64_t> raw_end_s;

  bool has_raw_marks() const noexcept { return raw_start_s.has_value(); }
  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct StopRecord {
  std::string stop_id;
  std::string audio_path;
  std::vector<std::string> primary_officer_ids;  // sorted, unique
  std::vector<std::string> all_officer_ids;      // sorted, unique
  Race driver_race = Race::unknown;
  Gender driver_gender = Gender::unknown;
  Race officer_race = Race::unknown;
  Gender officer_gender = Gender::unknown;
  std::vector<Utterance> utterances;

  friend bool operator==(const StopRecord&, const StopRecord&) = default;
};

struct Manifest {
  static constexpr int kSchemaVersion = 1;
  int schema_version = kSchemaVersion;
  std::vector<StopRecord> stops;

  const StopRecord* find(std::string_view stop_id) const;
  std::size_t utterance_count() const;
  friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// Sorts officer id sets and utterances, then checks every record
/// invariant. Throws ValidationError naming the stop and field at fault.
void normalize_and_validate(StopRecord& stop);
void validate(const Manifest& manifest);

StopRecord parse_stop_line(std::string_view line);
std::string format_stop_line(const StopRecord& stop);

/// One stop per line. Parse failures carry the 1-based line number.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct SplitConfig {
  std::size_t test_stops = 20;
  std::size_t validation_stops = 8;
  /// Test stops must have strictly fewer utterances than this.
  std::size_t max_test_utterances = 60;
  /// Test split must be exactly half black-driver, half white-driver stops.
  bool balance_test_race = true;
  std::uint64_t seed = 0;
};

struct SplitResult {
  Manifest train;
  Manifest validation;
  Manifest test;
  Manifest withheld;
};

/// Test stops use pairwise-disjoint officers; any other stop involving a
/// test officer is withheld. Validation primary officers never appear as
/// train primary officers. Deterministic in (manifest, config).
SplitResult partition_splits(const Manifest& manifest, const SplitConfig& config);

}  // namespace bwc
