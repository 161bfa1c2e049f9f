#include "bwc/scorer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bwc/errors.hpp"
#include "bwc/kernels.hpp"
#include "bwc/rng.hpp"

namespace bwc {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

LinearChunkScorer::LinearChunkScorer(std::string name)
    : weights(kPooledFeatures, 0.0),
      feature_mean(kPooledFeatures, 0.0),
      feature_scale(kPooledFeatures, 1.0),
      desc_{std::move(name), EngineKind::frame_scorer, Transport::in_process_mock} {}

double LinearChunkScorer::score_pooled(std::span<const float> pooled) const {
  if (pooled.size() != weights.size()) {
    throw EngineError(EngineFailure::shape_mismatch, desc_.name,
                      "expected " + std::to_string(weights.size()) + " pooled features, got " +
                          std::to_string(pooled.size()));
  }
  double z = bias;
  for (std::size_t k = 0; k < pooled.size(); ++k) {
    z += weights[k] * ((double(pooled[k]) - feature_mean[k]) / feature_scale[k]);
  }
  return sigmoid(z);
}

double LinearChunkScorer::score_frames(const MelFeatures& features, const ChunkContext&) {
  check_shape(desc_, features, input_bins());
  if (features.frames == 0) {
    throw EngineError(EngineFailure::shape_mismatch, desc_.name, "no frames");
  }
  return score_pooled(pool_mean_std(features));
}

std::string LinearChunkScorer::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = "reference_linear";
  j["features"] = {{"type", "mel_mean_std"},
                   {"bins", MelConfig::kBins},
                   {"window_ms", 25},
                   {"hop_ms", 10},
                   {"chunk_ms", 250}};
  j["weights"] = weights;
  j["bias"] = bias;
  j["feature_mean"] = feature_mean;
  j["feature_scale"] = feature_scale;
  return j.dump(2) + "\n";
}

LinearChunkScorer LinearChunkScorer::from_json(const std::string& text, std::string name) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scorer weights: ") + e.what(), 0);
  }
  LinearChunkScorer s(std::move(name));
  try {
    if (j.at("kind").get<std::string>() != "reference_linear") throw ValidationError("scorer kind must be reference_linear");
    if (j.at("features").at("bins").get<std::size_t>() != MelConfig::kBins) {
      throw ValidationError("scorer was trained on a different mel layout");
    }
    s.weights = j.at("weights").get<std::vector<double>>();
    s.bias = j.at("bias").get<double>();
    s.feature_mean = j.at("feature_mean").get<std::vector<double>>();
    s.feature_scale = j.at("feature_scale").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scorer weights: ") + e.what());
  }
  if (s.weights.size() != kPooledFeatures || s.feature_mean.size() != kPooledFeatures ||
      s.feature_scale.size() != kPooledFeatures) {
    throw ValidationError("scorer weights: expected " + std::to_string(kPooledFeatures) + " entries per array");
  }
  for (double v : s.feature_scale) {
    if (!(v > 0)) throw ValidationError("scorer weights: feature_scale must be positive");
  }
  return s;
}

void LinearChunkScorer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json();
}

LinearChunkScorer LinearChunkScorer::load(const std::filesystem::path& path, std::string name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str(), std::move(name));
}

LinearChunkScorer train_chunk_scorer(std::span<const std::vector<float>> pooled, std::span<const int> labels,
                                     const TrainConfig& config, TrainReport* report) {
  if (pooled.size() != labels.size()) throw PreconditionError("feature and label counts differ");
  std::size_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw PreconditionError("labels must be 0 or 1");
    pos += static_cast<std::size_t>(y);
  }
  if (pos == 0 || pos == labels.size()) throw PreconditionError("training set has a single class");
  const std::size_t n = pooled.size();
  const std::size_t d = kPooledFeatures;
  for (const auto& row : pooled) {
    if (row.size() != d) throw PreconditionError("pooled feature vector has the wrong length");
  }

  LinearChunkScorer s;
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (const auto& row : pooled) {
    for (std::size_t k = 0; k < d; ++k) mean[k] += row[k];
  }
  for (auto& m : mean) m /= double(n);
  for (const auto& row : pooled) {
    for (std::size_t k = 0; k < d; ++k) {
      const double c = row[k] - mean[k];
      var[k] += c * c;
    }
  }
  for (std::size_t k = 0; k < d; ++k) {
    const double sd = std::sqrt(var[k] / double(n));
    s.feature_mean[k] = mean[k];
    s.feature_scale[k] = sd > 1e-6 ? sd : 1.0;
  }

  // Row-major standardized design, float for the dispatched kernels.
  std::vector<float> x(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      x[i * d + k] = static_cast<float>((pooled[i][k] - s.feature_mean[k]) / s.feature_scale[k]);
    }
  }

  Rng rng(derive_seed(config.seed, "scorer-init"));
  std::vector<float> w(d);
  for (auto& v : w) v = static_cast<float>(0.01 * rng.normal());
  double b = 0.0;

  const auto& kt = simd::active_kernels();
  std::vector<float> z(n), grad(d);
  double prev_loss = 0.0;
  std::size_t epoch = 0;
  double loss = 0.0;
  for (; epoch < config.max_epochs; ++epoch) {
    kt.mat_vec(x.data(), n, d, w.data(), z.data());
    loss = 0.0;
    double gb = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
      const double zi = double(z[i]) + b;
      loss += softplus(zi) - labels[i] * zi;
      const auto r = static_cast<float>(sigmoid(zi) - labels[i]);
      gb += r;
      kt.axpy(r, x.data() + i * d, grad.data(), d);
    }
    loss /= double(n);
    const auto step = static_cast<float>(-config.learning_rate / double(n));
    kt.axpy(step, grad.data(), w.data(), d);
    b -= config.learning_rate * gb / double(n);
    if (epoch > 0 && std::abs(prev_loss - loss) <= config.relative_tolerance * std::max(prev_loss, 1e-300)) {
      ++epoch;
      break;
    }
    prev_loss = loss;
  }
  s.weights.assign(w.begin(), w.end());
  s.bias = b;
  if (report) {
    report->epochs = epoch;
    report->final_loss = loss;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = s.score_pooled(pooled[i]);
      correct += static_cast<std::size_t>((p > 0.5) == (labels[i] == 1));
    }
    report->training_accuracy = double(correct) / double(n);
  }
  return s;
}

}  // namespace bwc
