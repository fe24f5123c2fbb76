#ifndef INCLUDE_SRGP_CHECKPOINT_HPP_
#define INCLUDE_SRGP_CHECKPOINT_HPP_

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "srgp/data.hpp"
#include "srgp/optimizer.hpp"

namespace srgp {

/*
 * Self-describing key/value container.  On disk:
 *
 *   SRGPCKPT <version>
 *   endian little|big
 *   entry <name> f64|i64|bytes <rows> <cols>
 *   ...
 *   end
 *   <payload: every entry in header order, arrays row-major>
 */
class Archive {
public:
  static constexpr int kVersion = 1;

  void put(const std::string &name, const MatrixXd &m) {
    Entry e{name, "f64", m.rows(), m.cols(), {}, {}, {}};
    e.f64.resize(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        e.f64[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
      }
    }
    add(std::move(e));
  }
  void put(const std::string &name, const VectorXd &v) {
    put(name, MatrixXd(v));
  }
  void put(const std::string &name, double value) {
    add({name, "f64", 1, 1, {value}, {}, {}});
  }
  void put_int(const std::string &name, std::int64_t value) {
    add({name, "i64", 1, 1, {}, {value}, {}});
  }
  void put_ints(const std::string &name, const std::vector<std::int64_t> &v) {
    add({name, "i64", static_cast<Index>(v.size()), 1, {}, v, {}});
  }
  void put_string(const std::string &name, const std::string &s) {
    add({name, "bytes", static_cast<Index>(s.size()), 1, {}, {}, s});
  }

  bool has(const std::string &name) const { return find(name) != nullptr; }

  MatrixXd matrix(const std::string &name) const {
    const Entry &e = get(name, "f64");
    MatrixXd m(e.rows, e.cols);
    for (Index i = 0; i < e.rows; ++i) {
      for (Index j = 0; j < e.cols; ++j) {
        m(i, j) = e.f64[static_cast<std::size_t>(i * e.cols + j)];
      }
    }
    return m;
  }
  VectorXd vector(const std::string &name) const {
    const MatrixXd m = matrix(name);
    if (m.cols() != 1 && m.size() != 0) {
      throw DataError("checkpoint entry '" + name + "' is not a column vector");
    }
    return m.reshaped();
  }
  double scalar(const std::string &name) const {
    const Entry &e = get(name, "f64");
    require_scalar(e);
    return e.f64[0];
  }
  std::int64_t integer(const std::string &name) const {
    const Entry &e = get(name, "i64");
    require_scalar(e);
    return e.i64[0];
  }
  std::vector<std::int64_t> integers(const std::string &name) const {
    return get(name, "i64").i64;
  }
  std::string string(const std::string &name) const {
    return get(name, "bytes").bytes;
  }

  void save(const std::string &path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw DataError("cannot write checkpoint '" + path + "'");
    }
    out << "SRGPCKPT " << kVersion << '\n';
    out << "endian " << (std::endian::native == std::endian::little ? "little" : "big")
        << '\n';
    for (const Entry &e : entries_) {
      out << "entry " << e.name << ' ' << e.type << ' ' << e.rows << ' ' << e.cols
          << '\n';
    }
    out << "end\n";
    for (const Entry &e : entries_) {
      if (e.type == "f64") {
        out.write(reinterpret_cast<const char *>(e.f64.data()),
                  static_cast<std::streamsize>(e.f64.size() * sizeof(double)));
      } else if (e.type == "i64") {
        out.write(reinterpret_cast<const char *>(e.i64.data()),
                  static_cast<std::streamsize>(e.i64.size() * sizeof(std::int64_t)));
      } else {
        out.write(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
      }
    }
    if (!out) {
      throw DataError("failed while writing checkpoint '" + path + "'");
    }
  }

  static Archive load(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      throw DataError("cannot open checkpoint '" + path + "'");
    }
    std::string line;
    std::getline(in, line);
    {
      std::istringstream ss(line);
      std::string magic;
      int version = 0;
      ss >> magic >> version;
      if (magic != "SRGPCKPT") {
        throw DataError(path + ": not a checkpoint file");
      }
      if (version != kVersion) {
        throw DataError(details::concat(path, ": unsupported checkpoint version ",
                                        version));
      }
    }
    std::getline(in, line);
    bool swap = false;
    {
      std::istringstream ss(line);
      std::string key, order;
      ss >> key >> order;
      if (key != "endian" || (order != "little" && order != "big")) {
        throw DataError(path + ": missing endianness tag");
      }
      swap = (order == "little") != (std::endian::native == std::endian::little);
    }
    Archive ar;
    while (std::getline(in, line) && line != "end") {
      std::istringstream ss(line);
      std::string key;
      Entry e;
      ss >> key >> e.name >> e.type >> e.rows >> e.cols;
      if (key != "entry" || !ss || e.rows < 0 || e.cols < 0 ||
          (e.type != "f64" && e.type != "i64" && e.type != "bytes")) {
        throw DataError(path + ": malformed header line '" + line + "'");
      }
      ar.entries_.push_back(std::move(e));
    }
    if (line != "end") {
      throw DataError(path + ": truncated header");
    }
    for (Entry &e : ar.entries_) {
      const std::size_t count = static_cast<std::size_t>(e.rows * e.cols);
      if (e.type == "f64") {
        e.f64.resize(count);
        read_words(in, e.f64.data(), count, swap, path);
      } else if (e.type == "i64") {
        e.i64.resize(count);
        read_words(in, e.i64.data(), count, swap, path);
      } else {
        e.bytes.resize(static_cast<std::size_t>(e.rows));
        in.read(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
        if (!in) {
          throw DataError(path + ": truncated payload in '" + e.name + "'");
        }
      }
    }
    return ar;
  }

private:
  struct Entry {
    std::string name;
    std::string type;
    Index rows = 0;
    Index cols = 0;
    std::vector<double> f64;
    std::vector<std::int64_t> i64;
    std::string bytes;
  };

  template <typename T>
  static void read_words(std::istream &in, T *data, std::size_t count, bool swap,
                         const std::string &path) {
    in.read(reinterpret_cast<char *>(data),
            static_cast<std::streamsize>(count * sizeof(T)));
    if (!in) {
      throw DataError(path + ": truncated payload");
    }
    if (swap) {
      for (std::size_t i = 0; i < count; ++i) {
        auto *bytes = reinterpret_cast<unsigned char *>(data + i);
        std::reverse(bytes, bytes + sizeof(T));
      }
    }
  }

  static void require_scalar(const Entry &e) {
    if (e.rows != 1 || e.cols != 1) {
      throw DataError("checkpoint entry '" + e.name + "' is not a scalar");
    }
  }

  void add(Entry e) {
    if (e.name.empty() || e.name.find_first_of(" \t\n") != std::string::npos) {
      throw ContractViolation("invalid archive entry name '" + e.name + "'");
    }
    if (has(e.name)) {
      throw ContractViolation("duplicate archive entry '" + e.name + "'");
    }
    entries_.push_back(std::move(e));
  }

  const Entry *find(const std::string &name) const {
    for (const Entry &e : entries_) {
      if (e.name == name) {
        return &e;
      }
    }
    return nullptr;
  }

  const Entry &get(const std::string &name, const std::string &type) const {
    const Entry *e = find(name);
    if (!e) {
      throw DataError("checkpoint has no entry '" + name + "'");
    }
    if (e->type != type) {
      throw DataError("checkpoint entry '" + name + "' has type " + e->type +
                      ", expected " + type);
    }
    return *e;
  }

  std::vector<Entry> entries_;
};

struct Checkpoint {
  ModelSpec spec;
  TrainConfig config;
  // fit.theta is the current hyper-parameter vector.
  FitState fit;
  PosteriorState posterior;
  Standardizer standardizer;
  std::vector<TraceRecord> trace_tail;

  static constexpr std::size_t kTraceTail = 100;
};

namespace details {

inline void put_posterior(Archive &ar, const std::string &prefix,
                          const PosteriorState &s) {
  ar.put(prefix + ".eta", s.eta);
  ar.put(prefix + ".lambda", s.lambda);
  ar.put(prefix + ".sigma", s.sigma);
  ar.put(prefix + ".logdet_lambda", s.logdet_lambda);
  ar.put(prefix + ".psi", s.psi);
  ar.put_int(prefix + ".k", s.k);
  ar.put_int(prefix + ".num_observations", s.num_observations);
  ar.put_string(prefix + ".parametrization", parametrization_name(s.parametrization));
}

inline PosteriorState get_posterior(const Archive &ar, const std::string &prefix) {
  PosteriorState s;
  s.eta = ar.vector(prefix + ".eta");
  s.lambda = ar.matrix(prefix + ".lambda");
  s.sigma = ar.matrix(prefix + ".sigma");
  s.logdet_lambda = ar.scalar(prefix + ".logdet_lambda");
  s.psi = ar.scalar(prefix + ".psi");
  s.k = ar.integer(prefix + ".k");
  s.num_observations = ar.integer(prefix + ".num_observations");
  const std::string p = ar.string(prefix + ".parametrization");
  if (p == parametrization_name(Parametrization::kTransformed)) {
    s.parametrization = Parametrization::kTransformed;
  } else if (p == parametrization_name(Parametrization::kStandard)) {
    s.parametrization = Parametrization::kStandard;
  } else {
    throw DataError("unknown parametrization '" + p + "' in checkpoint");
  }
  return s;
}

inline void put_gradient(Archive &ar, const GradientState &g) {
  const Index p = g.size();
  const Index m = p > 0 ? g.d_eta[0].size() : 0;
  MatrixXd d_eta(p, m);
  MatrixXd d_lambda(p * m, m);
  for (Index i = 0; i < p; ++i) {
    d_eta.row(i) = g.d_eta[static_cast<std::size_t>(i)].transpose();
    d_lambda.middleRows(i * m, m) = g.d_lambda[static_cast<std::size_t>(i)];
  }
  ar.put("gradient.d_eta", d_eta);
  ar.put("gradient.d_lambda", d_lambda);
  ar.put("gradient.d_psi", g.d_psi);
  ar.put("gradient.last_increment", g.last_increment);
  ar.put_int("gradient.k", g.k);
}

inline GradientState get_gradient(const Archive &ar) {
  GradientState g;
  const MatrixXd d_eta = ar.matrix("gradient.d_eta");
  const MatrixXd d_lambda = ar.matrix("gradient.d_lambda");
  const Index p = d_eta.rows();
  const Index m = d_eta.cols();
  if (d_lambda.rows() != p * m || d_lambda.cols() != m) {
    throw DataError("checkpoint gradient state has inconsistent shapes");
  }
  for (Index i = 0; i < p; ++i) {
    g.d_eta.push_back(d_eta.row(i).transpose());
    g.d_lambda.push_back(d_lambda.middleRows(i * m, m));
  }
  g.d_psi = ar.vector("gradient.d_psi");
  g.last_increment = ar.vector("gradient.last_increment");
  g.k = ar.integer("gradient.k");
  return g;
}

inline std::string history_name(HistoryMode mode) {
  return mode == HistoryMode::kPropagate ? "propagate" : "ignore_history";
}

inline HistoryMode parse_history(const std::string &s) {
  if (s == "propagate") return HistoryMode::kPropagate;
  if (s == "ignore_history") return HistoryMode::kIgnoreHistory;
  throw DataError("unknown history mode '" + s + "'");
}

} // namespace details

inline void save_checkpoint(const std::string &path, const Checkpoint &ck) {
  Archive ar;
  const Hyperparameters &h = ck.fit.theta;
  ar.put_int("theta.input_dim", h.input_dim());
  ar.put_int("theta.num_inducing", h.num_inducing());
  ar.put("theta.vector", h.to_vector());

  ar.put_string("spec.variant", variant_name(ck.spec.variant));
  ar.put("spec.alpha", ck.spec.alpha);

  ar.put_int("config.batch_size", ck.config.batch_size);
  ar.put("config.learning_rate", ck.config.learning_rate);
  ar.put_int("config.shuffle", ck.config.shuffle ? 1 : 0);
  ar.put_int("config.seed", static_cast<std::int64_t>(ck.config.seed));
  ar.put("config.psi_tolerance", ck.config.psi_tolerance);
  ar.put_int("config.carry_posterior", ck.config.carry_posterior ? 1 : 0);
  ar.put_string("config.history", details::history_name(ck.config.history));
  ar.put_int("config.dense_inducing_derivatives",
             ck.config.gradient.dense_inducing_derivatives ? 1 : 0);
  ar.put_ints("config.active", std::vector<std::int64_t>(ck.config.gradient.active.begin(),
                                                         ck.config.gradient.active.end()));

  const AdamState &a = ck.fit.adam;
  ar.put("adam.first_moment", a.first_moment);
  ar.put("adam.second_moment", a.second_moment);
  ar.put_int("adam.step_count", a.step_count);
  ar.put("adam.learning_rate", a.learning_rate);
  ar.put("adam.beta1", a.beta1);
  ar.put("adam.beta2", a.beta2);
  ar.put("adam.epsilon", a.epsilon);

  std::ostringstream rng;
  rng << ck.fit.rng;
  ar.put_string("rng.mt19937_64", rng.str());
  ar.put_int("fit.epochs_completed", ck.fit.epochs_completed);
  ar.put_int("fit.gradient_steps", ck.fit.gradient_steps);
  ar.put_int("fit.has_carried_state",
             ck.fit.posterior && ck.fit.gradient ? 1 : 0);
  if (ck.fit.posterior && ck.fit.gradient) {
    details::put_posterior(ar, "carried", *ck.fit.posterior);
    details::put_gradient(ar, *ck.fit.gradient);
  }

  details::put_posterior(ar, "posterior", ck.posterior);

  const Standardizer &s = ck.standardizer;
  ar.put_int("standardizer.enabled", s.enabled ? 1 : 0);
  ar.put("standardizer.x_mean", s.x_mean);
  ar.put("standardizer.x_scale", s.x_scale);
  ar.put("standardizer.y_mean", s.y_mean);
  ar.put("standardizer.y_scale", s.y_scale);

  const std::size_t tail = std::min(ck.trace_tail.size(), Checkpoint::kTraceTail);
  MatrixXd trace(static_cast<Index>(tail), 5);
  for (std::size_t i = 0; i < tail; ++i) {
    const TraceRecord &r = ck.trace_tail[ck.trace_tail.size() - tail + i];
    trace.row(static_cast<Index>(i)) << static_cast<double>(r.epoch),
        static_cast<double>(r.batch), r.psi_k, r.grad_norm, r.wall_ms;
  }
  ar.put("trace.tail", trace);
  ar.save(path);
}

inline Checkpoint load_checkpoint(const std::string &path) {
  const Archive ar = Archive::load(path);
  Checkpoint ck;
  const Index d = ar.integer("theta.input_dim");
  const Index m = ar.integer("theta.num_inducing");
  if (d < 1 || m < 1) {
    throw DataError(path + ": invalid model dimensions");
  }
  ck.fit.theta = Hyperparameters::from_vector(ar.vector("theta.vector"), d, m);

  ck.spec.variant = parse_variant(ar.string("spec.variant"));
  ck.spec.alpha = ar.scalar("spec.alpha");
  ck.spec.validate();

  ck.config.batch_size = ar.integer("config.batch_size");
  ck.config.learning_rate = ar.scalar("config.learning_rate");
  ck.config.shuffle = ar.integer("config.shuffle") != 0;
  ck.config.seed = static_cast<std::uint64_t>(ar.integer("config.seed"));
  ck.config.psi_tolerance = ar.scalar("config.psi_tolerance");
  ck.config.carry_posterior = ar.integer("config.carry_posterior") != 0;
  ck.config.history = details::parse_history(ar.string("config.history"));
  ck.config.gradient.dense_inducing_derivatives =
      ar.integer("config.dense_inducing_derivatives") != 0;
  for (std::int64_t i : ar.integers("config.active")) {
    ck.config.gradient.active.push_back(static_cast<Index>(i));
  }

  AdamState &a = ck.fit.adam;
  a.first_moment = ar.vector("adam.first_moment");
  a.second_moment = ar.vector("adam.second_moment");
  a.step_count = ar.integer("adam.step_count");
  a.learning_rate = ar.scalar("adam.learning_rate");
  a.beta1 = ar.scalar("adam.beta1");
  a.beta2 = ar.scalar("adam.beta2");
  a.epsilon = ar.scalar("adam.epsilon");

  std::istringstream rng(ar.string("rng.mt19937_64"));
  rng >> ck.fit.rng;
  if (!rng) {
    throw DataError(path + ": corrupt RNG state");
  }
  ck.fit.epochs_completed = ar.integer("fit.epochs_completed");
  ck.fit.gradient_steps = ar.integer("fit.gradient_steps");
  if (ar.integer("fit.has_carried_state") != 0) {
    ck.fit.posterior = details::get_posterior(ar, "carried");
    ck.fit.gradient = details::get_gradient(ar);
  }

  ck.posterior = details::get_posterior(ar, "posterior");

  ck.standardizer.enabled = ar.integer("standardizer.enabled") != 0;
  ck.standardizer.x_mean = ar.vector("standardizer.x_mean");
  ck.standardizer.x_scale = ar.vector("standardizer.x_scale");
  ck.standardizer.y_mean = ar.scalar("standardizer.y_mean");
  ck.standardizer.y_scale = ar.scalar("standardizer.y_scale");

  const MatrixXd trace = ar.matrix("trace.tail");
  for (Index i = 0; i < trace.rows(); ++i) {
    TraceRecord r;
    r.epoch = static_cast<Index>(trace(i, 0));
    r.batch = static_cast<Index>(trace(i, 1));
    r.psi_k = trace(i, 2);
    r.grad_norm = trace(i, 3);
    r.wall_ms = trace(i, 4);
    ck.trace_tail.push_back(r);
  }
  return ck;
}

} // namespace srgp

#endif
