#include "bwc/tune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "bwc/rng.hpp"

namespace bwc {

namespace {

constexpr double kLengthScale = 0.2;
constexpr double kNoise = 1e-4;
constexpr std::size_t kRandomCandidates = 2000;
constexpr std::size_t kLocalCandidates = 1000;

double radical_inverse(std::size_t index, std::size_t base) {
  double result = 0.0, f = 1.0 / double(base);
  while (index > 0) {
    result += f * double(index % base);
    index /= base;
    f /= double(base);
  }
  return result;
}

constexpr std::size_t kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

class Gp {
 public:
  Gp(const std::vector<std::vector<double>>& x, const std::vector<double>& y) : x_(x) {
    const std::size_t n = y.size();
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= double(n);
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / double(n));
    mean_ = mean;
    scale_ = sd > 1e-12 ? sd : 1.0;
    Eigen::VectorXd ys(n);
    for (std::size_t i = 0; i < n; ++i) ys(i) = (y[i] - mean_) / scale_;
    Eigen::MatrixXd k(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) k(i, j) = kernel(x_[i], x_[j]) + (i == j ? kNoise : 0.0);
    }
    llt_.compute(k);
    alpha_ = llt_.solve(ys);
    best_ = ys.minCoeff();
  }

  /// Expected improvement below the best standardized observation.
  double expected_improvement(const std::vector<double>& p) const {
    const std::size_t n = x_.size();
    Eigen::VectorXd ks(n);
    for (std::size_t i = 0; i < n; ++i) ks(i) = kernel(p, x_[i]);
    const double mu = ks.dot(alpha_);
    const Eigen::VectorXd v = llt_.matrixL().solve(ks);
    const double var = std::max(1.0 - v.squaredNorm(), 1e-12);
    const double s = std::sqrt(var);
    const double imp = best_ - mu;
    const double z = imp / s;
    return imp * normal_cdf(z) + s * normal_pdf(z);
  }

 private:
  static double kernel(const std::vector<double>& a, const std::vector<double>& b) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) d2 += (a[k] - b[k]) * (a[k] - b[k]);
    return std::exp(-0.5 * d2 / (kLengthScale * kLengthScale));
  }

  std::vector<std::vector<double>> x_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double mean_ = 0.0, scale_ = 1.0, best_ = 0.0;
};

}  // namespace

std::string_view to_string(TuneMode m) { return m == TuneMode::gp_ei ? "gp_ei" : "random"; }

TuneMode parse_tune_mode(std::string_view s) {
  if (s == "gp_ei") return TuneMode::gp_ei;
  if (s == "random") return TuneMode::random;
  throw ValidationError("unknown tune mode '" + std::string(s) + "' (expected gp_ei or random)");
}

TuneSpec TuneSpec::detector_defaults() {
  TuneSpec s;
  s.lower = {0.0, 0.0, 0.25};
  s.upper = {1.0, 1.0, 2.0};
  return s;
}

void TuneSpec::validate() const {
  if (lower.empty() || lower.size() != upper.size()) throw ValidationError("tune bounds must be non-empty and paired");
  if (lower.size() > std::size(kPrimes)) throw ValidationError("too many tune dimensions");
  for (std::size_t k = 0; k < lower.size(); ++k) {
    if (!(upper[k] > lower[k])) throw ValidationError("tune bound " + std::to_string(k) + " is empty or inverted");
  }
  if (init_samples < 1) throw ValidationError("init_samples must be at least 1");
  if (budget < init_samples) throw ValidationError("budget must be at least init_samples");
}

ObjectiveError::ObjectiveError(std::vector<double> point, const std::string& message)
    : Error("objective",
            [&] {
              std::string s = "objective failed at (";
              for (std::size_t k = 0; k < point.size(); ++k) {
                if (k) s += ", ";
                s += std::to_string(point[k]);
              }
              return s + "): " + message;
            }()),
      point_(std::move(point)) {}

TuneResult optimize(const Objective& objective, const TuneSpec& spec) {
  spec.validate();
  const std::size_t dim = spec.lower.size();
  Rng rng(derive_seed(spec.seed, "tune"));

  const auto to_box = [&](const std::vector<double>& u) {
    std::vector<double> p(dim);
    for (std::size_t k = 0; k < dim; ++k) p[k] = spec.lower[k] + u[k] * (spec.upper[k] - spec.lower[k]);
    return p;
  };

  TuneResult result;
  std::vector<std::vector<double>> unit;
  std::vector<double> costs;
  const auto evaluate = [&](const std::vector<double>& u) {
    auto p = to_box(u);
    double c = 0.0;
    try {
      c = objective(p);
    } catch (const std::exception& e) {
      throw ObjectiveError(p, e.what());
    }
    if (!std::isfinite(c)) throw ObjectiveError(p, "non-finite cost");
    result.trace.push_back({p, c, result.trace.size()});
    unit.push_back(u);
    costs.push_back(c);
  };

  if (spec.mode == TuneMode::random) {
    for (std::size_t i = 0; i < spec.budget; ++i) {
      std::vector<double> u(dim);
      for (auto& v : u) v = rng.uniform();
      evaluate(u);
    }
  } else {
    std::vector<double> shift(dim);
    for (auto& v : shift) v = rng.uniform();
    for (std::size_t i = 0; i < spec.init_samples; ++i) {
      std::vector<double> u(dim);
      for (std::size_t k = 0; k < dim; ++k) {
        u[k] = std::fmod(radical_inverse(i + 1, kPrimes[k]) + shift[k], 1.0);
      }
      evaluate(u);
    }
    while (result.trace.size() < spec.budget) {
      const Gp gp(unit, costs);
      const std::size_t best_i = static_cast<std::size_t>(std::min_element(costs.begin(), costs.end()) - costs.begin());
      std::vector<double> pick;
      double pick_ei = -1.0;
      const auto consider = [&](std::vector<double> u) {
        const double ei = gp.expected_improvement(u);
        if (ei > pick_ei) {
          pick_ei = ei;
          pick = std::move(u);
        }
      };
      for (std::size_t c = 0; c < kRandomCandidates; ++c) {
        std::vector<double> u(dim);
        for (auto& v : u) v = rng.uniform();
        consider(std::move(u));
      }
      // Local candidates around the incumbent at a few radii.
      for (std::size_t c = 0; c < kLocalCandidates; ++c) {
        const double radius = c % 3 == 0 ? 0.1 : (c % 3 == 1 ? 0.03 : 0.01);
        std::vector<double> u = unit[best_i];
        for (auto& v : u) v = std::clamp(v + radius * rng.normal(), 0.0, 1.0);
        consider(std::move(u));
      }
      // Compass search on EI from the best candidate; GP calls are cheap
      // next to objective calls.
      for (double step = 0.05; step >= 0.002; step *= 0.5) {
        for (bool moved = true; moved;) {
          moved = false;
          for (std::size_t k = 0; k < dim; ++k) {
            for (const double dir : {-1.0, 1.0}) {
              auto u = pick;
              u[k] = std::clamp(u[k] + dir * step, 0.0, 1.0);
              const double ei = gp.expected_improvement(u);
              if (ei > pick_ei) {
                pick_ei = ei;
                pick = std::move(u);
                moved = true;
              }
            }
          }
        }
      }
      evaluate(pick);
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.trace.size(); ++i) {
    if (result.trace[i].cost < result.trace[best].cost) best = i;
  }
  result.best = result.trace[best].point;
  result.best_cost = result.trace[best].cost;
  return result;
}

DetectorThresholds thresholds_from_point(std::span<const double> point) {
  if (point.size() != 3) throw PreconditionError("detector thresholds need 3 coordinates");
  DetectorThresholds th{point[0], point[1], point[2]};
  th.t_vad = std::clamp(th.t_vad, 0.0, 1.0);
  th.t_officer = std::clamp(th.t_officer, 0.0, 1.0);
  th.t_smooth = std::clamp(th.t_smooth, 0.25, 2.0);
  return th;
}

double mean_detection_wer(std::span<const ValidationStop> stops, Transcriber& transcriber,
                          const DetectorThresholds& th) {
  double total = 0.0;
  std::size_t used = 0;
  for (const auto& vs : stops) {
    if (officer_references(*vs.stop).empty()) continue;
    const auto detected = gate_and_merge(vs.scores, th);
    std::vector<Segment> segs;
    segs.reserve(detected.size());
    for (const auto& d : detected) segs.push_back(d.segment);
    total += evaluate_detection(segs, *vs.stop, vs.audio, transcriber).score.value;
    ++used;
  }
  if (used == 0) throw PreconditionError("no validation stop has primary-officer reference speech");
  return total / double(used);
}

TunedDetector tune_detector(std::span<const ValidationStop> stops, Transcriber& transcriber, const TuneSpec& spec) {
  if (stops.empty()) throw PreconditionError("validation set is empty");
  if (spec.lower.size() != 3) throw ValidationError("detector tuning needs a 3-dimensional box");
  const bool any = std::any_of(stops.begin(), stops.end(),
                               [](const ValidationStop& v) { return !officer_references(*v.stop).empty(); });
  if (!any) throw PreconditionError("no validation stop has primary-officer reference speech");
  TunedDetector out;
  out.result = optimize(
      [&](std::span<const double> p) { return mean_detection_wer(stops, transcriber, thresholds_from_point(p)); },
      spec);
  out.thresholds = thresholds_from_point(out.result.best);
  out.cost = out.result.best_cost;
  return out;
}

}  // namespace bwc
