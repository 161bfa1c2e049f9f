#include "bwc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "bwc/errors.hpp"
#include "bwc/textnorm.hpp"

namespace bwc {

namespace {

constexpr double kZCritical = 1.959963984540054;  // two-sided 5%

std::string field_value(const EvalRow& r, GroupField f) {
  switch (f) {
    case GroupField::role: return std::string(to_string(r.role));
    case GroupField::race: return std::string(to_string(r.race));
    case GroupField::gender: return std::string(to_string(r.gender));
  }
  return {};
}

std::string_view field_name(GroupField f) {
  switch (f) {
    case GroupField::role: return "role";
    case GroupField::race: return "race";
    case GroupField::gender: return "gender";
  }
  return {};
}

EvalRow row_from_fields(const std::string& stop, const std::string& utt, double wer, std::string_view role,
                        std::string_view race, std::string_view gender) {
  if (!(wer >= 0.0) || !std::isfinite(wer)) throw ValidationError("wer must be a finite non-negative number");
  return {stop, utt, wer, parse_role(role), parse_race(race), parse_gender(gender)};
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

struct GroupSums {
  std::size_t n = 0;
  Eigen::VectorXd sx;
  double sy = 0.0;
};

std::vector<GroupSums> group_sums(const MixedModelData& d) {
  std::vector<GroupSums> g(d.groups);
  for (auto& s : g) s.sx = Eigen::VectorXd::Zero(d.x.cols());
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    auto& s = g[d.group[static_cast<std::size_t>(i)]];
    ++s.n;
    s.sx += d.x.row(i).transpose();
    s.sy += d.y(i);
  }
  return g;
}

GlsFit gls_with(const MixedModelData& d, const std::vector<GroupSums>& sums, const Eigen::MatrixXd& xtx,
                const Eigen::VectorXd& xty, double lambda) {
  const auto n = static_cast<double>(d.x.rows());
  const auto p = static_cast<double>(d.x.cols());
  Eigen::MatrixXd a = xtx;
  Eigen::VectorXd b = xty;
  double logdet_v = 0.0;
  std::vector<double> c(sums.size());
  for (std::size_t j = 0; j < sums.size(); ++j) {
    const double nj = double(sums[j].n);
    c[j] = lambda / (1.0 + nj * lambda);
    a.noalias() -= c[j] * sums[j].sx * sums[j].sx.transpose();
    b.noalias() -= c[j] * sums[j].sy * sums[j].sx;
    logdet_v += std::log1p(nj * lambda);
  }
  GlsFit fit;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  fit.beta = ldlt.solve(b);
  fit.xtvx = a;
  const Eigen::VectorXd r = d.y - d.x * fit.beta;
  std::vector<double> rsum(sums.size(), 0.0);
  for (Eigen::Index i = 0; i < r.size(); ++i) rsum[d.group[static_cast<std::size_t>(i)]] += r(i);
  double q = r.squaredNorm();
  for (std::size_t j = 0; j < sums.size(); ++j) q -= c[j] * rsum[j] * rsum[j];
  fit.sigma2 = q / (n - p);
  double logdet_a = 0.0;
  for (Eigen::Index k = 0; k < ldlt.vectorD().size(); ++k) logdet_a += std::log(ldlt.vectorD()(k));
  fit.reml = -0.5 * ((n - p) * std::log(fit.sigma2) + logdet_v + logdet_a);
  return fit;
}

}  // namespace

std::vector<EvalRow> load_eval_rows(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<EvalRow> rows;
  std::string line;
  long lineno = 0;
  if (path.extension() == ".csv") {
    if (!std::getline(in, line)) return rows;
    ++lineno;
    const auto header = split_csv(line);
    const std::vector<std::string> expected{"stop_id", "utt_id", "wer", "role", "race", "gender"};
    if (header != expected) throw ParseError(path.string() + ": header must be stop_id,utt_id,wer,role,race,gender", 1);
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r") continue;
      const auto f = split_csv(line);
      if (f.size() != 6) throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 6 fields", lineno);
      double w = 0.0;
      try {
        std::size_t used = 0;
        w = std::stod(f[2], &used);
        if (used != f[2].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad wer '" + f[2] + "'", lineno);
      }
      rows.push_back(row_from_fields(f[0], f[1], w, f[3], f[4], f[5]));
    }
    return rows;
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what(), lineno);
    }
    try {
      rows.push_back(row_from_fields(j.at("stop_id").get<std::string>(), j.at("utt_id").get<std::string>(),
                                     j.at("wer").get<double>(), j.at("role").get<std::string>(),
                                     j.at("race").get<std::string>(), j.at("gender").get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

void save_eval_rows_jsonl(std::span<const EvalRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["stop_id"] = r.stop_id;
    j["utt_id"] = r.utterance_id;
    j["wer"] = r.wer;
    j["role"] = to_string(r.role);
    j["race"] = to_string(r.race);
    j["gender"] = to_string(r.gender);
    out << j.dump() << '\n';
  }
}

std::vector<GroupStat> subgroup_table(std::span<const EvalRow> rows, std::span<const GroupField> grouping) {
  std::map<std::vector<std::string>, std::pair<std::size_t, double>> acc;
  for (const auto& r : rows) {
    std::vector<std::string> key;
    for (auto f : grouping) key.push_back(field_value(r, f));
    auto& slot = acc[key];
    ++slot.first;
    slot.second += r.wer;
  }
  std::vector<GroupStat> out;
  for (const auto& [key, v] : acc) out.push_back({key, v.first, v.second / double(v.first)});
  return out;
}

std::string format_subgroup_table(std::span<const GroupStat> table, std::span<const GroupField> grouping) {
  std::ostringstream os;
  std::string head;
  for (auto f : grouping) head += (head.empty() ? "" : " x ") + std::string(field_name(f));
  os << "WER by " << (head.empty() ? std::string("all") : head) << '\n';
  for (const auto& g : table) {
    std::string k;
    for (const auto& part : g.key) k += (k.empty() ? "" : "/") + part;
    if (k.empty()) k = "all";
    os << "  " << std::left << std::setw(36) << k << std::right << std::fixed << std::setprecision(2)
       << std::setw(7) << 100.0 * g.mean_wer << "  [" << g.count << "]\n";
  }
  return os.str();
}

const std::vector<std::string>& MixedModelData::column_names() {
  static const std::vector<std::string> names{"intercept", "role_officer", "race_black", "gender_female"};
  return names;
}

MixedModelData build_design(std::span<const EvalRow> rows) {
  MixedModelData d;
  std::vector<std::array<double, 4>> kept;
  std::vector<double> ys;
  std::map<std::string, std::size_t> stop_index;
  for (const auto& r : rows) {
    double role = 0, race = 0, gender = 0;
    if (r.role == SpeakerRole::primary_officer || r.role == SpeakerRole::secondary_officer) {
      role = 1;
    } else if (r.role != SpeakerRole::community_member) {
      ++d.excluded_rows;
      continue;
    }
    if (r.race == Race::black) {
      race = 1;
    } else if (r.race != Race::white) {
      ++d.excluded_rows;
      continue;
    }
    if (r.gender == Gender::female) {
      gender = 1;
    } else if (r.gender != Gender::male) {
      ++d.excluded_rows;
      continue;
    }
    kept.push_back({1.0, role, race, gender});
    ys.push_back(r.wer);
    const auto it = stop_index.try_emplace(r.stop_id, stop_index.size()).first;
    d.group.push_back(it->second);
  }
  d.groups = stop_index.size();
  d.x.resize(static_cast<Eigen::Index>(kept.size()), 4);
  d.y.resize(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    for (int k = 0; k < 4; ++k) d.x(static_cast<Eigen::Index>(i), k) = kept[i][static_cast<std::size_t>(k)];
    d.y(static_cast<Eigen::Index>(i)) = ys[i];
  }
  return d;
}

GlsFit gls_at(const MixedModelData& data, double lambda) {
  if (lambda < 0) throw PreconditionError("variance ratio must be non-negative");
  const auto sums = group_sums(data);
  return gls_with(data, sums, data.x.transpose() * data.x, data.x.transpose() * data.y, lambda);
}

RegressionResult fit_mixed_effects(std::span<const EvalRow> rows, const MixedEffectsOptions& options) {
  return fit_mixed_effects(build_design(rows), options);
}

RegressionResult fit_mixed_effects(const MixedModelData& data, const MixedEffectsOptions& options) {
  if (data.groups < 2) throw PreconditionError("mixed-effects fit needs at least 2 stops");
  const auto p = data.x.cols();
  if (data.x.rows() <= p) throw PreconditionError("mixed-effects fit needs more rows than coefficients");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(data.x);
  if (qr.rank() < p) throw PreconditionError("design matrix is rank deficient");

  const auto sums = group_sums(data);
  const Eigen::MatrixXd xtx = data.x.transpose() * data.x;
  const Eigen::VectorXd xty = data.x.transpose() * data.y;
  const auto at = [&](double t) { return gls_with(data, sums, xtx, xty, std::exp(t)); };

  double lambda = 0.0;
  if (options.fixed_lambda) {
    lambda = *options.fixed_lambda;
  } else {
    const double lo = options.log_lambda_min, hi = options.log_lambda_max;
    const std::size_t m = std::max<std::size_t>(options.grid_points, 3);
    std::size_t best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
      const double t = lo + (hi - lo) * double(i) / double(m - 1);
      const double v = at(t).reml;
      if (v > best_v) {
        best_v = v;
        best = i;
      }
    }
    const double step = (hi - lo) / double(m - 1);
    double a = std::max(lo, lo + step * (double(best) - 1.0));
    double b = std::min(hi, lo + step * (double(best) + 1.0));
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = at(c).reml, fd = at(d).reml;
    while (b - a > options.relative_tolerance * std::max(1.0, std::abs(a) + std::abs(b))) {
      if (fc > fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - inv_phi * (b - a);
        fc = at(c).reml;
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + inv_phi * (b - a);
        fd = at(d).reml;
      }
    }
    double t = 0.5 * (a + b);
    double v = at(t).reml;
    const double grid_t = lo + step * double(best);
    if (best_v > v) {
      t = grid_t;
      v = best_v;
    }
    lambda = std::exp(t);
  }

  const auto fit = gls_at(data, lambda);
  if (!(fit.sigma2 > 1e-14)) throw PreconditionError("residual variance is zero; nothing to model");
  const Eigen::MatrixXd cov = fit.sigma2 * fit.xtvx.inverse();

  RegressionResult r;
  r.lambda = lambda;
  r.reml = fit.reml;
  r.sigma2_residual = fit.sigma2;
  r.sigma2_stop = lambda * fit.sigma2;
  r.rows = static_cast<std::size_t>(data.x.rows());
  r.stops = data.groups;
  r.excluded_rows = data.excluded_rows;
  const auto& names = MixedModelData::column_names();
  for (Eigen::Index k = 0; k < p; ++k) {
    const auto& name = names[static_cast<std::size_t>(k)];
    const double se = std::sqrt(std::max(cov(k, k), 0.0));
    r.coefficients[name] = fit.beta(k);
    r.standard_errors[name] = se;
    r.z_values[name] = se > 0 ? fit.beta(k) / se : 0.0;
    r.significant[name] = std::abs(r.z_values[name]) > kZCritical;
  }
  return r;
}

std::string regression_json(const RegressionResult& r) {
  nlohmann::ordered_json j;
  j["estimator"] = "random-intercept REML, profiled over log variance ratio";
  j["significance_test"] = "two-sided normal approximation, alpha 0.05";
  nlohmann::ordered_json coef;
  for (const auto& name : MixedModelData::column_names()) {
    coef[name] = {{"estimate", r.coefficients.at(name)},
                  {"std_error", r.standard_errors.at(name)},
                  {"z", r.z_values.at(name)},
                  {"significant", r.significant.at(name)}};
  }
  j["coefficients"] = coef;
  j["sigma2_stop"] = r.sigma2_stop;
  j["sigma2_residual"] = r.sigma2_residual;
  j["lambda"] = r.lambda;
  j["reml"] = r.reml;
  j["rows"] = r.rows;
  j["stops"] = r.stops;
  j["excluded_rows"] = r.excluded_rows;
  return j.dump(2);
}

std::string format_regression_table(const RegressionResult& r) {
  std::ostringstream os;
  os << "Mixed effects regression (stop as random intercept; REML; * = |z| > 1.96)\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& name : MixedModelData::column_names()) {
    os << "  " << std::left << std::setw(16) << name << std::right << std::setw(10) << r.coefficients.at(name)
       << (r.significant.at(name) ? "*" : " ") << "  (se " << r.standard_errors.at(name) << ")\n";
  }
  os << "  sigma2_stop " << r.sigma2_stop << "  sigma2_residual " << r.sigma2_residual << '\n';
  os << "  rows " << r.rows << "  stops " << r.stops << "  excluded " << r.excluded_rows << '\n';
  return os.str();
}

}  // namespace bwc
