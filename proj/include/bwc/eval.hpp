#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bwc/corpus.hpp"

namespace bwc {

struct EvalRow {
  std::string stop_id;
  std::string utterance_id;
  double wer = 0.0;
  SpeakerRole role = SpeakerRole::unknown;
  Race race = Race::unknown;
  Gender gender = Gender::unknown;
};

/// CSV with header `stop_id,utt_id,wer,role,race,gender`, or JSONL with the
/// same keys. Format is chosen by the `.csv` extension.
std::vector<EvalRow> load_eval_rows(const std::filesystem::path& path);
void save_eval_rows_jsonl(std::span<const EvalRow> rows, const std::filesystem::path& path);

enum class GroupField { role, race, gender };

struct GroupStat {
  std::vector<std::string> key;
  std::size_t count = 0;
  double mean_wer = 0.0;
};

/// Mean per-utterance WER for each combination of the grouping fields,
/// ordered by key.
std::vector<GroupStat> subgroup_table(std::span<const EvalRow> rows, std::span<const GroupField> grouping);
std::string format_subgroup_table(std::span<const GroupStat> table, std::span<const GroupField> grouping);

/// Fixed-effect design for the random-intercept model. Columns:
/// intercept, role_officer, race_black, gender_female.
struct MixedModelData {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::size_t> group;  // row -> stop index
  std::size_t groups = 0;
  std::size_t excluded_rows = 0;
  static const std::vector<std::string>& column_names();
};

/// Dummy codes rows: primary/secondary officer = 1, community member = 0;
/// black = 1, white = 0; female = 1, male = 0. Rows with any other level
/// are excluded and counted.
MixedModelData build_design(std::span<const EvalRow> rows);

struct GlsFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd xtvx;  // X' V^-1 X in residual-variance units
  double sigma2 = 0.0;   // residual variance estimate
  double reml = 0.0;     // profiled restricted log-likelihood (up to a constant)
};

/// GLS at variance ratio lambda = sigma2_stop / sigma2_res. lambda = 0
/// gives ordinary least squares.
GlsFit gls_at(const MixedModelData& data, double lambda);

struct RegressionResult {
  std::map<std::string, double> coefficients;
  std::map<std::string, double> standard_errors;
  std::map<std::string, double> z_values;
  std::map<std::string, bool> significant;
  double sigma2_stop = 0.0;
  double sigma2_residual = 0.0;
  double lambda = 0.0;
  double reml = 0.0;
  std::size_t rows = 0;
  std::size_t stops = 0;
  std::size_t excluded_rows = 0;
};

struct MixedEffectsOptions {
  double log_lambda_min = -10.0;
  double log_lambda_max = 10.0;
  std::size_t grid_points = 201;
  double relative_tolerance = 1e-6;
  /// Skip the search and fit at this lambda.
  std::optional<double> fixed_lambda;
};

/// Random-intercept REML fit by profiling over log lambda: coarse grid,
/// then golden-section refinement. Throws PreconditionError with fewer
/// than 2 stops, a rank-deficient design, or zero residual variance.
RegressionResult fit_mixed_effects(std::span<const EvalRow> rows, const MixedEffectsOptions& options = {});
RegressionResult fit_mixed_effects(const MixedModelData& data, const MixedEffectsOptions& options = {});

std::string regression_json(const RegressionResult& r);
std::string format_regression_table(const RegressionResult& r);

}  // namespace bwc
