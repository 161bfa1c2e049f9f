#include "bwc/filter.hpp"

#include "bwc/errors.hpp"

namespace bwc {

std::string_view to_string(CriterionId c) {
  static constexpr std::array<std::string_view, 4> names{"c1", "c2", "c3", "c4"};
  return names[static_cast<std::size_t>(c)];
}

CriterionId parse_criterion(std::string_view s) {
  if (s == "c1") return CriterionId::c1;
  if (s == "c2") return CriterionId::c2;
  if (s == "c3") return CriterionId::c3;
  if (s == "c4") return CriterionId::c4;
  throw ValidationError("unknown filter criterion '" + std::string(s) + "' (expected c1..c4)");
}

void FilterCriterion::validate() const {
  if (!(min_duration_s > 0 && max_duration_s > 0 && wer_cap > 0 && no_subs_cap > 0 && strict_wer_cap > 0)) {
    throw ValidationError("filter parameters must be positive");
  }
  if (no_subs_cap > wer_cap) throw ValidationError("no-subs cap must not exceed the WER cap");
  if (strict_wer_cap > wer_cap) throw ValidationError("c4 WER cap must not exceed the WER cap");
  if (min_duration_s > max_duration_s) throw ValidationError("duration bounds are inverted");
}

FilterCriterion make_criterion(CriterionId id) {
  FilterCriterion c;
  c.id = id;
  return c;
}

bool passes(const FilterCriterion& c, double duration_s, const UtteranceScores& scores) {
  const bool duration_ok = duration_s >= c.min_duration_s && duration_s <= c.max_duration_s;
  if (c.id == CriterionId::c1) return duration_ok;
  if (!scores.min_wer) throw PreconditionError("utterance has no min_wer score");
  if (c.id == CriterionId::c3 && !scores.min_no_subs) {
    throw PreconditionError("utterance has no min_no_subs score");
  }
  if (!duration_ok) return false;
  const double w = *scores.min_wer;
  switch (c.id) {
    case CriterionId::c2: return w <= c.wer_cap;
    case CriterionId::c3: return *scores.min_no_subs < c.no_subs_cap && w < c.wer_cap;
    // Strict so that kept(c4) stays inside kept(c3) at the 0.10 boundary.
    case CriterionId::c4: return w < c.strict_wer_cap;
    case CriterionId::c1: break;
  }
  return duration_ok;
}

FilterResult filter_manifest(const Manifest& aligned, const ScoreTable& scores,
                             const FilterCriterion& criterion) {
  criterion.validate();
  FilterResult out;
  out.stats.applied = criterion.id;
  std::array<FilterCriterion, 4> all;
  for (std::size_t k = 0; k < 4; ++k) {
    all[k] = criterion;
    all[k].id = static_cast<CriterionId>(k);
  }
  for (const auto& stop : aligned.stops) {
    StopRecord kept = stop, dropped = stop;
    kept.utterances.clear();
    dropped.utterances.clear();
    for (const auto& u : stop.utterances) {
      ++out.stats.input_utterances;
      bool keep = false;
      if (u.segment) {
        const auto it = scores.find({stop.stop_id, u.id});
        const UtteranceScores s = it == scores.end() ? UtteranceScores{} : it->second;
        const double d = u.segment->duration();
        for (std::size_t k = 0; k < 4; ++k) {
          if (passes(all[k], d, s)) {
            ++out.stats.kept[k];
            out.stats.kept_hours[k] += d / 3600.0;
          }
        }
        keep = passes(criterion, d, s);
      }
      (keep ? kept : dropped).utterances.push_back(u);
    }
    out.kept.stops.push_back(std::move(kept));
    out.dropped.stops.push_back(std::move(dropped));
  }
  return out;
}

}  // namespace bwc
