#ifndef INCLUDE_SRGP_DATA_HPP_
#define INCLUDE_SRGP_DATA_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "srgp/batch_reference.hpp"

namespace srgp {

struct Dataset {
  MatrixXd x;
  VectorXd y;
  std::vector<std::string> feature_names;
  std::string target_name = "y";
  // File path or generator description.
  std::string provenance;

  Index size() const { return y.size(); }
  Index input_dim() const { return x.cols(); }

  void validate() const {
    if (y.size() < 1) {
      throw DataError("dataset is empty");
    }
    if (x.rows() != y.size()) {
      throw DataError(details::concat("dataset has ", x.rows(), " input rows but ",
                                      y.size(), " targets"));
    }
    if (static_cast<Index>(feature_names.size()) != x.cols()) {
      throw DataError("dataset feature name count does not match columns");
    }
    if (!x.allFinite() || !y.allFinite()) {
      throw DataError("dataset contains non-finite values");
    }
  }

  Dataset rows(Index begin, Index count) const {
    SRGP_REQUIRE(begin >= 0 && count >= 0 && begin + count <= size(),
                 "row range [", begin, ", ", begin + count, ") out of bounds");
    Dataset out = *this;
    out.x = x.middleRows(begin, count);
    out.y = y.segment(begin, count);
    return out;
  }
};

inline std::vector<std::string> default_feature_names(Index d) {
  std::vector<std::string> names;
  for (Index j = 0; j < d; ++j) {
    names.push_back("x" + std::to_string(j));
  }
  return names;
}

namespace details {

inline std::vector<std::string> split_line(const std::string &line,
                                           char delimiter) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delimiter)) {
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == delimiter) {
    cells.emplace_back();
  }
  return cells;
}

inline std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) {
    return "";
  }
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_cell(const std::string &raw, Index row, Index col,
                         const std::string &path) {
  const std::string cell = trim(raw);
  std::size_t used = 0;
  double value = std::numeric_limits<double>::quiet_NaN();
  try {
    value = std::stod(cell, &used);
  } catch (const std::exception &) {
    used = 0;
  }
  if (cell.empty() || used != cell.size() || !std::isfinite(value)) {
    throw DataError(concat(path, ": row ", row, ", column ", col,
                           ": not a finite number: '", cell, "'"));
  }
  return value;
}

} // namespace details

/*
 * Delimiter-separated text with one header row.  The target column is named
 * by `target` (default: last column); every other column is an input.  Row
 * and column numbers in diagnostics are 1-based and count the header as row 1.
 */
inline Dataset read_csv(const std::string &path, const std::string &target = "",
                        char delimiter = ',') {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open data file '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError(path + ": missing header row");
  }
  std::vector<std::string> header = details::split_line(line, delimiter);
  for (auto &h : header) {
    h = details::trim(h);
  }
  const Index cols = static_cast<Index>(header.size());
  if (cols < 2) {
    throw DataError(path + ": need at least one input and one target column");
  }
  Index target_col = cols - 1;
  if (!target.empty()) {
    target_col = -1;
    for (Index j = 0; j < cols; ++j) {
      if (header[static_cast<std::size_t>(j)] == target) {
        target_col = j;
      }
    }
    if (target_col < 0) {
      throw DataError(path + ": no column named '" + target + "'");
    }
  }

  std::vector<std::vector<double>> rows;
  Index row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (details::trim(line).empty()) {
      continue;
    }
    const auto cells = details::split_line(line, delimiter);
    if (static_cast<Index>(cells.size()) != cols) {
      throw DataError(details::concat(path, ": row ", row, " has ", cells.size(),
                                      " cells, header has ", cols));
    }
    std::vector<double> values(cells.size());
    for (Index j = 0; j < cols; ++j) {
      values[static_cast<std::size_t>(j)] =
          details::parse_cell(cells[static_cast<std::size_t>(j)], row, j + 1, path);
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) {
    throw DataError(path + ": no data rows");
  }

  Dataset ds;
  const Index n = static_cast<Index>(rows.size());
  ds.x = MatrixXd(n, cols - 1);
  ds.y = VectorXd(n);
  for (Index j = 0; j < cols; ++j) {
    if (j == target_col) {
      ds.target_name = header[static_cast<std::size_t>(j)];
    } else {
      ds.feature_names.push_back(header[static_cast<std::size_t>(j)]);
    }
  }
  for (Index i = 0; i < n; ++i) {
    const auto &r = rows[static_cast<std::size_t>(i)];
    Index c = 0;
    for (Index j = 0; j < cols; ++j) {
      if (j == target_col) {
        ds.y(i) = r[static_cast<std::size_t>(j)];
      } else {
        ds.x(i, c++) = r[static_cast<std::size_t>(j)];
      }
    }
  }
  ds.provenance = path;
  return ds;
}

// Inputs only (no target column); every column must be numeric.
inline MatrixXd read_inputs_csv(const std::string &path, char delimiter = ',') {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open input file '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError(path + ": missing header row");
  }
  const Index cols = static_cast<Index>(details::split_line(line, delimiter).size());
  std::vector<double> values;
  Index row = 1;
  Index n = 0;
  while (std::getline(in, line)) {
    ++row;
    if (details::trim(line).empty()) {
      continue;
    }
    const auto cells = details::split_line(line, delimiter);
    if (static_cast<Index>(cells.size()) != cols) {
      throw DataError(details::concat(path, ": row ", row, " has ", cells.size(),
                                      " cells, header has ", cols));
    }
    for (Index j = 0; j < cols; ++j) {
      values.push_back(
          details::parse_cell(cells[static_cast<std::size_t>(j)], row, j + 1, path));
    }
    ++n;
  }
  if (n == 0) {
    throw DataError(path + ": no data rows");
  }
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>(values.data(), n, cols);
}

inline void write_csv(const std::string &path, const Dataset &ds,
                      char delimiter = ',') {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write '" + path + "'");
  }
  out << std::setprecision(17);
  for (const auto &name : ds.feature_names) {
    out << name << delimiter;
  }
  out << ds.target_name << '\n';
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.input_dim(); ++j) {
      out << ds.x(i, j) << delimiter;
    }
    out << ds.y(i) << '\n';
  }
}

/*
 * Per-column affine standardization of inputs and target.  Disabled
 * instances are the identity.
 */
struct Standardizer {
  bool enabled = false;
  VectorXd x_mean;
  VectorXd x_scale;
  double y_mean = 0.0;
  double y_scale = 1.0;

  static Standardizer identity(Index d) {
    Standardizer s;
    s.x_mean = VectorXd::Zero(d);
    s.x_scale = VectorXd::Ones(d);
    return s;
  }

  static Standardizer fit(const MatrixXd &x, const VectorXd &y) {
    Standardizer s;
    s.enabled = true;
    const double n = static_cast<double>(y.size());
    s.x_mean = x.colwise().mean().transpose();
    s.x_scale = ((x.rowwise() - s.x_mean.transpose()).colwise().squaredNorm() / n)
                    .cwiseSqrt()
                    .transpose();
    for (Index j = 0; j < s.x_scale.size(); ++j) {
      if (!(s.x_scale(j) > 0.0)) {
        s.x_scale(j) = 1.0;
      }
    }
    s.y_mean = y.mean();
    s.y_scale = std::sqrt((y.array() - s.y_mean).square().sum() / n);
    if (!(s.y_scale > 0.0)) {
      s.y_scale = 1.0;
    }
    return s;
  }

  MatrixXd apply_x(const MatrixXd &x) const {
    SRGP_REQUIRE(x.cols() == x_mean.size(), "standardizer expects ",
                 x_mean.size(), " columns, got ", x.cols());
    return ((x.rowwise() - x_mean.transpose()).array().rowwise() /
            x_scale.transpose().array())
        .matrix();
  }
  VectorXd apply_y(const VectorXd &y) const {
    return ((y.array() - y_mean) / y_scale).matrix();
  }
  VectorXd restore_mean(const VectorXd &mean) const {
    return (mean.array() * y_scale + y_mean).matrix();
  }
  VectorXd restore_variance(const VectorXd &var) const {
    return var * (y_scale * y_scale);
  }
};

inline VectorXd standard_normal(std::mt19937_64 &rng, Index n) {
  std::normal_distribution<double> z;
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) {
    v(i) = z(rng);
  }
  return v;
}

inline MatrixXd uniform_inputs(std::mt19937_64 &rng, Index n, Index d) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixXd x(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) {
      x(i, j) = u(rng);
    }
  }
  return x;
}

struct GpDataConfig {
  Index n = 1000;
  Index input_dim = 1;
  double sigma0 = 1.0;
  double lengthscale = 0.1;
  double sigma_n = 0.1;
  // Sample through an inducing set instead of a dense N x N Cholesky.
  bool sparse_mode = false;
  Index num_generating_points = 400;
  Index dense_limit = kDefaultDenseLimit;
};

/*
 * Inputs uniform on [0,1]^D, targets a draw from GP(0, k) plus N(0, sigma_n^2)
 * noise.  Sparse mode draws u ~ N(0, K_RR) on a random generating set and
 * then f | u exactly in its marginals, f_i = (K_XR K_RR^-1 u)_i + sqrt(d_i) e_i.
 */
inline Dataset generate_gp_data(std::uint64_t seed, const GpDataConfig &cfg) {
  SRGP_REQUIRE(cfg.n >= 1 && cfg.input_dim >= 1, "generate_gp_data needs N, D >= 1");
  SRGP_REQUIRE(cfg.sigma0 > 0.0 && cfg.lengthscale > 0.0 && cfg.sigma_n >= 0.0,
               "generate_gp_data needs positive kernel parameters");
  if (!cfg.sparse_mode && cfg.n > cfg.dense_limit) {
    throw ContractViolation(details::concat(
        "dense GP sampling refused for N=", cfg.n, " (limit ", cfg.dense_limit,
        "); use sparse mode"));
  }
  std::mt19937_64 rng(seed);
  const Index d = cfg.input_dim;
  Dataset ds;
  ds.x = uniform_inputs(rng, cfg.n, d);
  const VectorXd ls = VectorXd::Constant(d, cfg.lengthscale);

  VectorXd f;
  if (!cfg.sparse_mode) {
    const Hyperparameters h = Hyperparameters::from_values(
        cfg.sigma0, ls, std::max(cfg.sigma_n, 1e-3), ds.x.topRows(1));
    const Cholesky chol = robust_cholesky(kernel_matrix(ds.x, ds.x, h), "K_XX");
    f = chol.matrix_l() * standard_normal(rng, cfg.n);
  } else {
    const Index m = cfg.num_generating_points;
    SRGP_REQUIRE(m >= 1, "sparse sampling needs generating points");
    const MatrixXd r = uniform_inputs(rng, m, d);
    const Hyperparameters h = Hyperparameters::from_values(
        cfg.sigma0, ls, std::max(cfg.sigma_n, 1e-3), r, 0.0);
    const InducingPrior prior = inducing_prior(h);
    const VectorXd u = prior.chol.matrix_l() * standard_normal(rng, m);
    const MatrixXd k_xr = kernel_matrix(ds.x, r, h);
    const MatrixXd white = prior.chol.solve_lower(k_xr.transpose());
    const VectorXd resid =
        (kernel_diag(ds.x, h) - white.colwise().squaredNorm().transpose())
            .cwiseMax(0.0);
    f = k_xr * prior.chol.solve(u) +
        resid.cwiseSqrt().cwiseProduct(standard_normal(rng, cfg.n));
  }
  ds.y = f + cfg.sigma_n * standard_normal(rng, cfg.n);
  ds.feature_names = default_feature_names(d);
  std::ostringstream tag;
  tag << "gp(seed=" << seed << ",n=" << cfg.n << ",d=" << d
      << ",sigma0=" << cfg.sigma0 << ",l=" << cfg.lengthscale
      << ",sigma_n=" << cfg.sigma_n << (cfg.sparse_mode ? ",sparse" : "") << ")";
  ds.provenance = tag.str();
  return ds;
}

struct CstrConfig {
  double cb1 = 24.9;
  double cb2 = 0.1;
  double k1 = 1.0;
  double k2 = 1.0;
  double w2 = 0.1;
  double w1_max = 4.0;
  double hold_min = 5.0;
  double hold_max = 20.0;
  double sample_period = 0.2;
  Index substeps = 10;
  double h0 = 10.0;
  double cb0 = 20.0;
  double noise_std = 0.1;
  // Overrides the random step input when set (>= 0).
  double constant_w1 = -1.0;
};

struct CstrTrajectory {
  VectorXd t;
  VectorXd h;
  VectorXd cb;
  VectorXd w1;
  VectorXd y;
};

namespace details {

struct CstrDerivative {
  double dh;
  double dcb;
};

inline CstrDerivative cstr_rhs(double h, double cb, double w1,
                               const CstrConfig &c) {
  const double inflow = w1 + c.w2;
  const double reaction = c.k1 * cb / ((1.0 + c.k2 * cb) * (1.0 + c.k2 * cb));
  return {inflow - 0.2 * std::sqrt(h),
          (c.cb1 - cb) * w1 / h + (c.cb2 - cb) * c.w2 / h - reaction};
}

// One RK4 step of length dt; returns false if the level left (0, inf).
inline bool cstr_rk4(double &h, double &cb, double w1, double dt,
                     const CstrConfig &c) {
  auto ok = [](double v) { return v > 0.0 && std::isfinite(v); };
  const CstrDerivative a = cstr_rhs(h, cb, w1, c);
  const double h2 = h + 0.5 * dt * a.dh;
  if (!ok(h2)) return false;
  const CstrDerivative b = cstr_rhs(h2, cb + 0.5 * dt * a.dcb, w1, c);
  const double h3 = h + 0.5 * dt * b.dh;
  if (!ok(h3)) return false;
  const CstrDerivative e = cstr_rhs(h3, cb + 0.5 * dt * b.dcb, w1, c);
  const double h4 = h + dt * e.dh;
  if (!ok(h4)) return false;
  const CstrDerivative f = cstr_rhs(h4, cb + dt * e.dcb, w1, c);
  const double hn = h + dt / 6.0 * (a.dh + 2.0 * b.dh + 2.0 * e.dh + f.dh);
  const double cn = cb + dt / 6.0 * (a.dcb + 2.0 * b.dcb + 2.0 * e.dcb + f.dcb);
  if (!ok(hn) || !std::isfinite(cn)) return false;
  h = hn;
  cb = cn;
  return true;
}

} // namespace details

/*
 * Two-state tank reactor driven by a random-step feed w1, sampled every
 * sample_period seconds with fixed-step RK4 in between.  A step that would
 * drive the level non-positive is retried with progressively halved
 * substeps before giving up.
 */
inline CstrTrajectory integrate_cstr(std::uint64_t seed, double duration,
                                     const CstrConfig &c = {}) {
  SRGP_REQUIRE(duration > 0.0, "CSTR duration must be positive");
  SRGP_REQUIRE(c.h0 > 0.0, "CSTR initial level must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> height(0.0, c.w1_max);
  std::uniform_real_distribution<double> hold(c.hold_min, c.hold_max);
  std::normal_distribution<double> noise(0.0, c.noise_std);

  const Index n = static_cast<Index>(std::floor(duration / c.sample_period)) + 1;
  CstrTrajectory tr;
  tr.t = VectorXd(n);
  tr.h = VectorXd(n);
  tr.cb = VectorXd(n);
  tr.w1 = VectorXd(n);
  tr.y = VectorXd(n);

  double h = c.h0;
  double cb = c.cb0;
  double w1 = c.constant_w1 >= 0.0 ? c.constant_w1 : height(rng);
  double next_switch = c.constant_w1 >= 0.0 ? std::numeric_limits<double>::infinity()
                                            : hold(rng);
  for (Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * c.sample_period;
    while (t >= next_switch) {
      w1 = height(rng);
      next_switch += hold(rng);
    }
    tr.t(i) = t;
    tr.h(i) = h;
    tr.cb(i) = cb;
    tr.w1(i) = w1;
    tr.y(i) = cb + (c.noise_std > 0.0 ? noise(rng) : 0.0);
    if (i + 1 == n) {
      break;
    }
    bool done = false;
    for (Index refine = 0; refine < 6 && !done; ++refine) {
      const Index steps = c.substeps << refine;
      const double dt = c.sample_period / static_cast<double>(steps);
      double hh = h;
      double cc = cb;
      done = true;
      for (Index s = 0; s < steps && done; ++s) {
        done = details::cstr_rk4(hh, cc, w1, dt, c);
      }
      if (done) {
        h = hh;
        cb = cc;
      }
    }
    if (!done) {
      throw NumericalError(details::concat(
          "CSTR tank level became non-positive near t=", t, " s"));
    }
  }
  return tr;
}

/*
 * Lagged regression rows x_t = [y_{t-1}..y_{t-p}, w_t..w_{t-p}], target y_t.
 */
inline Dataset simulate_cstr(std::uint64_t seed, double duration, Index lag,
                             const CstrConfig &c = {}) {
  SRGP_REQUIRE(lag >= 1, "CSTR lag must be >= 1");
  const CstrTrajectory tr = integrate_cstr(seed, duration, c);
  const Index n = tr.y.size() - lag;
  if (n < 1) {
    throw ContractViolation("CSTR duration too short for the requested lag");
  }
  Dataset ds;
  ds.x = MatrixXd(n, 2 * lag + 1);
  ds.y = VectorXd(n);
  for (Index i = 0; i < n; ++i) {
    const Index t = i + lag;
    for (Index j = 1; j <= lag; ++j) {
      ds.x(i, j - 1) = tr.y(t - j);
    }
    for (Index j = 0; j <= lag; ++j) {
      ds.x(i, lag + j) = tr.w1(t - j);
    }
    ds.y(i) = tr.y(t);
  }
  for (Index j = 1; j <= lag; ++j) {
    ds.feature_names.push_back("y_lag" + std::to_string(j));
  }
  for (Index j = 0; j <= lag; ++j) {
    ds.feature_names.push_back("w_lag" + std::to_string(j));
  }
  ds.target_name = "y";
  std::ostringstream tag;
  tag << "cstr(seed=" << seed << ",duration=" << duration << ",lag=" << lag
      << ",noise=" << c.noise_std << ")";
  ds.provenance = tag.str();
  return ds;
}

// M distinct training rows, drawn without replacement.
inline MatrixXd random_inducing_subset(const MatrixXd &x, Index m,
                                       std::mt19937_64 &rng) {
  SRGP_REQUIRE(m >= 1 && m <= x.rows(), "cannot draw ", m,
               " inducing inputs from ", x.rows(), " rows");
  std::vector<Index> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  MatrixXd r(m, x.cols());
  for (Index i = 0; i < m; ++i) {
    r.row(i) = x.row(idx[static_cast<std::size_t>(i)]);
  }
  return r;
}

} // namespace srgp

#endif
