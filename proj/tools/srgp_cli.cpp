// Command line front end: train, predict, evaluate, stream, validate-gradients
// and simulate.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "srgp/srgp.hpp"

namespace {

using namespace srgp;
using nlohmann::json;

enum ExitCode {
  kOk = 0,
  kUsage = 2,
  kData = 3,
  kNumerical = 4,
  kTolerance = 5,
};

struct DataFlags {
  std::string path;
  std::string target;
  char delimiter = ',';
};

void add_data_flags(CLI::App *cmd, DataFlags &f, bool required = true) {
  auto *opt = cmd->add_option("--data", f.path, "delimited data file with a header row");
  if (required) {
    opt->required();
  }
  cmd->add_option("--target", f.target, "target column name (default: last column)");
  cmd->add_option("--delimiter", f.delimiter, "field delimiter");
}

Dataset load(const DataFlags &f) {
  Dataset ds = read_csv(f.path, f.target, f.delimiter);
  ds.validate();
  return ds;
}

std::unique_ptr<std::ostream> open_output(const std::string &path,
                                          std::ios::openmode mode = std::ios::out) {
  if (path.empty() || path == "-") {
    return nullptr;
  }
  auto out = std::make_unique<std::ofstream>(path, mode);
  if (!*out) {
    throw DataError("cannot write '" + path + "'");
  }
  return out;
}

json trace_json(const TraceRecord &r) {
  return {{"epoch", r.epoch},
          {"batch", r.batch},
          {"psi_k", r.psi_k},
          {"grad_norm", r.grad_norm},
          {"wall_ms", r.wall_ms}};
}

// ---------------------------------------------------------------- train

struct TrainFlags {
  DataFlags data;
  std::string model = "vfe";
  double alpha = 0.5;
  Index num_inducing = 20;
  Index batch_size = 100;
  Index epochs = 10;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::string checkpoint_out;
  std::string trace_out;
  std::string resume;
  bool standardize = false;
  bool shuffle = false;
  bool carry_posterior = false;
  bool ignore_history = false;
  double psi_tolerance = 0.0;
  double sigma0 = 1.0;
  double lengthscale = 1.0;
  double sigma_n = 0.3;
};

int run_train(const TrainFlags &f) {
  const Dataset ds = load(f.data);
  Checkpoint ck;
  if (!f.resume.empty()) {
    ck = load_checkpoint(f.resume);
    SRGP_REQUIRE(ck.fit.theta.input_dim() == ds.input_dim(), "checkpoint expects ",
                 ck.fit.theta.input_dim(), " input columns, data has ",
                 ds.input_dim());
  } else {
    ck.spec.variant = parse_variant(f.model);
    ck.spec.alpha = ck.spec.variant == Variant::kPEP ? f.alpha : 1.0;
    ck.spec.validate();
    ck.config.batch_size = f.batch_size;
    ck.config.learning_rate = f.lr;
    ck.config.shuffle = f.shuffle;
    ck.config.seed = f.seed;
    ck.config.psi_tolerance = f.psi_tolerance;
    ck.config.carry_posterior = f.carry_posterior;
    ck.config.history =
        f.ignore_history ? HistoryMode::kIgnoreHistory : HistoryMode::kPropagate;
    ck.standardizer = f.standardize ? Standardizer::fit(ds.x, ds.y)
                                    : Standardizer::identity(ds.input_dim());
    const MatrixXd x = ck.standardizer.apply_x(ds.x);
    std::mt19937_64 init_rng(f.seed ^ 0x5eedULL);
    const MatrixXd r = random_inducing_subset(x, f.num_inducing, init_rng);
    const Hyperparameters theta0 = Hyperparameters::from_values(
        f.sigma0, VectorXd::Constant(ds.input_dim(), f.lengthscale), f.sigma_n, r);
    ck.fit = FitState::start(theta0, ck.config);
  }
  ck.config.epochs = f.epochs;
  ck.config.validate();

  const MatrixXd x = ck.standardizer.apply_x(ds.x);
  const VectorXd y = ck.standardizer.apply_y(ds.y);
  auto trace_file = open_output(f.trace_out, std::ios::out | std::ios::app);
  const TraceSink sink = [&](const TraceRecord &r) {
    if (trace_file) {
      *trace_file << trace_json(r).dump() << '\n';
    }
  };
  const FitResult res = srgp_fit(x, y, ck.spec, ck.config, ck.fit, sink);
  ck.posterior = res.posterior;
  ck.trace_tail = res.trace;
  if (!f.checkpoint_out.empty()) {
    save_checkpoint(f.checkpoint_out, ck);
  }
  const Hyperparameters &h = res.theta;
  json summary = {{"model", ck.spec.name()},
                  {"epochs_completed", ck.fit.epochs_completed},
                  {"gradient_steps", ck.fit.gradient_steps},
                  {"psi", res.posterior.psi},
                  {"sigma0", h.sigma0()},
                  {"sigma_n", h.sigma_n()},
                  {"converged", res.converged}};
  const VectorXd ls = h.lengthscales();
  summary["lengthscales"] = std::vector<double>(ls.data(), ls.data() + ls.size());
  std::cout << summary.dump() << std::endl;
  return kOk;
}

// ---------------------------------------------------------------- predict

struct Prediction {
  VectorXd mean;
  VectorXd variance;
};

Prediction predict_raw(const Checkpoint &ck, const MatrixXd &x_raw, bool with_noise) {
  const MatrixXd x = ck.standardizer.apply_x(x_raw);
  const MarginalPrediction p =
      predict_marginal(ck.posterior, x, ck.fit.theta, ck.spec, with_noise);
  return {ck.standardizer.restore_mean(p.mean),
          ck.standardizer.restore_variance(p.variance)};
}

int run_predict(const std::string &checkpoint, const std::string &inputs,
                char delimiter, bool with_noise, const std::string &output) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const MatrixXd x = read_inputs_csv(inputs, delimiter);
  SRGP_REQUIRE(x.cols() == ck.fit.theta.input_dim(), "model expects ",
               ck.fit.theta.input_dim(), " input columns, got ", x.cols());
  const Prediction p = predict_raw(ck, x, with_noise);
  auto file = open_output(output);
  std::ostream &out = file ? *file : std::cout;
  out.precision(17);
  out << "mean,variance,lower95,upper95\n";
  for (Index i = 0; i < x.rows(); ++i) {
    const double half = 1.96 * std::sqrt(p.variance(i));
    out << p.mean(i) << ',' << p.variance(i) << ',' << p.mean(i) - half << ','
        << p.mean(i) + half << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------- evaluate

int run_evaluate(const std::string &checkpoint, const DataFlags &data) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Dataset ds = load(data);
  SRGP_REQUIRE(ds.input_dim() == ck.fit.theta.input_dim(), "model expects ",
               ck.fit.theta.input_dim(), " input columns, data has ", ds.input_dim());
  const Prediction p = predict_raw(ck, ds.x, true);
  const json out = {{"n", ds.size()},
                    {"rmse", rmse(ds.y, p.mean)},
                    {"coverage95", coverage(ds.y, p.mean, p.variance)}};
  std::cout << out.dump() << std::endl;
  return kOk;
}

// ---------------------------------------------------------------- stream

// Absorb new data into the posterior at the checkpoint's hyper-parameters.
int run_stream(const std::string &checkpoint, const DataFlags &data,
               Index batch_size, const std::string &checkpoint_out) {
  Checkpoint ck = load_checkpoint(checkpoint);
  const Dataset ds = load(data);
  SRGP_REQUIRE(batch_size >= 1, "batch size must be >= 1");
  SRGP_REQUIRE(ds.input_dim() == ck.fit.theta.input_dim(), "model expects ",
               ck.fit.theta.input_dim(), " input columns, data has ", ds.input_dim());
  const MatrixXd x = ck.standardizer.apply_x(ds.x);
  const VectorXd y = ck.standardizer.apply_y(ds.y);
  const InducingPrior prior = inducing_prior(ck.fit.theta);
  for (Index begin = 0; begin < y.size(); begin += batch_size) {
    const Index count = std::min(batch_size, y.size() - begin);
    const UpdateResult up = update(ck.posterior, make_batch(x, y, begin, count),
                                   ck.fit.theta, ck.spec, prior, ck.posterior.k);
    ck.posterior = up.state;
    std::cout << json{{"k", ck.posterior.k},
                      {"observations", ck.posterior.num_observations},
                      {"psi_k", up.innovation.psi_increment},
                      {"psi", ck.posterior.psi}}
                     .dump()
              << '\n';
  }
  save_checkpoint(checkpoint_out.empty() ? checkpoint : checkpoint_out, ck);
  return kOk;
}

// ---------------------------------------------------------------- validate

int run_validate(const std::string &model, double alpha, std::uint64_t seed,
                 double tolerance) {
  const Index n = 60, d = 2, m = 7, k = 3;
  ModelSpec spec;
  spec.variant = parse_variant(model);
  spec.alpha = spec.variant == Variant::kPEP ? alpha : 1.0;
  spec.validate();
  GpDataConfig cfg;
  cfg.n = n;
  cfg.input_dim = d;
  cfg.lengthscale = 0.3;
  const Dataset ds = generate_gp_data(seed, cfg);
  std::mt19937_64 rng(seed + 1);
  const MatrixXd r = uniform_inputs(rng, m, d);
  const Hyperparameters h =
      Hyperparameters::from_values(0.9, VectorXd::Constant(d, 0.35), 0.2, r);
  const GradientCheck gc = check_gradients(ds.x, ds.y, h, spec, n / k, tolerance);
  json out = {{"model", spec.name()},
              {"n", n},
              {"d", d},
              {"m", m},
              {"batches", k},
              {"recursive_bound", gc.recursive_bound},
              {"batch_bound", gc.batch_bound},
              {"max_relative_error", gc.max_error},
              {"tolerance", tolerance},
              {"passed", gc.passed(tolerance)}};
  std::cout << out.dump(2) << std::endl;
  return gc.passed(tolerance) ? kOk : kTolerance;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Streaming sparse GP regression with recursive gradient propagation"};
  app.require_subcommand(1);

  TrainFlags train;
  auto *train_cmd = app.add_subcommand("train", "fit hyper-parameters and posterior");
  add_data_flags(train_cmd, train.data);
  train_cmd->add_option("--model", train.model, "sor|dtc|fitc|vfe|pep")
      ->check(CLI::IsMember({"sor", "dtc", "fitc", "vfe", "pep"}, CLI::ignore_case));
  train_cmd->add_option("--alpha", train.alpha, "PEP alpha in (0, 1]");
  train_cmd->add_option("--num-inducing", train.num_inducing, "number of inducing inputs")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch-size", train.batch_size, "mini-batch size")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--epochs", train.epochs, "passes over the data")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--lr", train.lr, "ADAM learning rate")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--seed", train.seed, "seed for initialization and shuffling");
  train_cmd->add_option("--checkpoint-out", train.checkpoint_out, "checkpoint to write")
      ->required();
  train_cmd->add_option("--trace-out", train.trace_out, "append JSON lines trace here");
  train_cmd->add_option("--resume", train.resume, "continue from this checkpoint");
  train_cmd->add_flag("--standardize", train.standardize, "standardize inputs and target");
  train_cmd->add_flag("--shuffle", train.shuffle, "reshuffle rows every epoch");
  train_cmd->add_flag("--carry-posterior", train.carry_posterior,
                      "keep the posterior across epochs");
  train_cmd->add_flag("--ignore-history", train.ignore_history,
                      "drop earlier mini-batches from the gradient");
  train_cmd->add_option("--psi-tolerance", train.psi_tolerance,
                        "stop when the epoch bound changes by less than this fraction");
  train_cmd->add_option("--init-sigma0", train.sigma0, "initial kernel amplitude")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--init-lengthscale", train.lengthscale, "initial lengthscale")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--init-sigma-n", train.sigma_n, "initial noise level")
      ->check(CLI::PositiveNumber);

  std::string pred_ckpt, pred_inputs, pred_out;
  char pred_delim = ',';
  bool with_noise = false;
  auto *predict_cmd = app.add_subcommand("predict", "predictive mean and variance");
  predict_cmd->add_option("--checkpoint", pred_ckpt)->required();
  predict_cmd->add_option("--inputs", pred_inputs, "input columns with a header row")
      ->required();
  predict_cmd->add_option("--delimiter", pred_delim);
  predict_cmd->add_flag("--with-noise", with_noise, "include observation noise");
  predict_cmd->add_option("--output", pred_out, "CSV output (default stdout)");

  std::string eval_ckpt;
  DataFlags eval_data;
  auto *eval_cmd = app.add_subcommand("evaluate", "RMSE and 95% coverage on labelled data");
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
  add_data_flags(eval_cmd, eval_data);

  std::string stream_ckpt, stream_out;
  DataFlags stream_data;
  Index stream_batch = 100;
  auto *stream_cmd =
      app.add_subcommand("stream", "absorb new data at fixed hyper-parameters");
  stream_cmd->add_option("--checkpoint", stream_ckpt)->required();
  add_data_flags(stream_cmd, stream_data);
  stream_cmd->add_option("--batch-size", stream_batch)->check(CLI::PositiveNumber);
  stream_cmd->add_option("--checkpoint-out", stream_out,
                         "output checkpoint (default: overwrite input)");

  std::string val_model = "vfe";
  double val_alpha = 0.5;
  std::uint64_t val_seed = 1;
  double val_tol = 1e-4;
  auto *validate_cmd = app.add_subcommand(
      "validate-gradients", "recursive gradient vs finite differences of the batch bound");
  validate_cmd->add_option("--model", val_model)
      ->check(CLI::IsMember({"sor", "dtc", "fitc", "vfe", "pep"}, CLI::ignore_case));
  validate_cmd->add_option("--alpha", val_alpha);
  validate_cmd->add_option("--seed", val_seed);
  validate_cmd->add_option("--tolerance", val_tol);

  auto *simulate_cmd = app.add_subcommand("simulate", "write synthetic data sets");
  simulate_cmd->require_subcommand(1);
  GpDataConfig gp_cfg;
  std::uint64_t sim_seed = 0;
  std::string sim_out;
  auto *sim_gp = simulate_cmd->add_subcommand("gp", "draw from a GP prior plus noise");
  sim_gp->add_option("--n", gp_cfg.n)->check(CLI::PositiveNumber);
  sim_gp->add_option("--dim", gp_cfg.input_dim)->check(CLI::PositiveNumber);
  sim_gp->add_option("--sigma0", gp_cfg.sigma0)->check(CLI::PositiveNumber);
  sim_gp->add_option("--lengthscale", gp_cfg.lengthscale)->check(CLI::PositiveNumber);
  sim_gp->add_option("--sigma-n", gp_cfg.sigma_n)->check(CLI::NonNegativeNumber);
  sim_gp->add_flag("--sparse", gp_cfg.sparse_mode, "sample through a generating set");
  sim_gp->add_option("--generating-points", gp_cfg.num_generating_points)
      ->check(CLI::PositiveNumber);
  sim_gp->add_option("--seed", sim_seed);
  sim_gp->add_option("--out", sim_out)->required();
  Index test_n = 0;
  std::string test_out;
  sim_gp->add_option("--test-n", test_n, "extra rows from the same draw for testing")
      ->check(CLI::NonNegativeNumber);
  sim_gp->add_option("--test-out", test_out, "file for the --test-n held-out rows");

  CstrConfig cstr_cfg;
  double duration = 2000.0;
  Index lag = 2;
  auto *sim_cstr = simulate_cmd->add_subcommand("cstr", "tank reactor time series");
  sim_cstr->add_option("--duration", duration, "seconds")->check(CLI::PositiveNumber);
  sim_cstr->add_option("--lag", lag)->check(CLI::PositiveNumber);
  sim_cstr->add_option("--noise", cstr_cfg.noise_std)->check(CLI::NonNegativeNumber);
  sim_cstr->add_option("--seed", sim_seed);
  sim_cstr->add_option("--out", sim_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) {
      return run_train(train);
    }
    if (*predict_cmd) {
      return run_predict(pred_ckpt, pred_inputs, pred_delim, with_noise, pred_out);
    }
    if (*eval_cmd) {
      return run_evaluate(eval_ckpt, eval_data);
    }
    if (*stream_cmd) {
      return run_stream(stream_ckpt, stream_data, stream_batch, stream_out);
    }
    if (*validate_cmd) {
      return run_validate(val_model, val_alpha, val_seed, val_tol);
    }
    if (*sim_gp) {
      SRGP_REQUIRE((test_n > 0) == !test_out.empty(),
                   "--test-n and --test-out go together");
      const Index n_train = gp_cfg.n;
      gp_cfg.n += test_n;
      const Dataset all = generate_gp_data(sim_seed, gp_cfg);
      write_csv(sim_out, all.rows(0, n_train));
      if (test_n > 0) {
        write_csv(test_out, all.rows(n_train, test_n));
      }
      return kOk;
    }
    if (*sim_cstr) {
      write_csv(sim_out, simulate_cstr(sim_seed, duration, lag, cstr_cfg));
      return kOk;
    }
  } catch (const DataError &e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError &e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const ContractViolation &e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
