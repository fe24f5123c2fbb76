#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace srgp {
namespace {

namespace fs = std::filesystem;

std::string temp_path(const std::string &name) {
  return (fs::temp_directory_path() / ("srgp_ckpt_" + name)).string();
}

TEST(Archive, RoundTripsAllTypes) {
  const std::string path = temp_path("archive.bin");
  MatrixXd m(2, 3);
  m << 1.0, 2.5, -3.0, 1e-300, 4.0, 0.1;
  Archive ar;
  ar.put("m", m);
  ar.put("v", VectorXd::LinSpaced(4, 0.0, 1.0).eval());
  ar.put("s", 0.1 + 0.2);
  ar.put_int("i", -42);
  ar.put_ints("is", {1, 2, 3});
  ar.put_string("str", std::string("with spaces\nand newline"));
  ar.put("empty", MatrixXd(0, 5));
  ar.save(path);
  const Archive back = Archive::load(path);
  EXPECT_EQ(back.matrix("m"), m);
  EXPECT_EQ(back.vector("v"), VectorXd::LinSpaced(4, 0.0, 1.0));
  EXPECT_EQ(back.scalar("s"), 0.1 + 0.2);
  EXPECT_EQ(back.integer("i"), -42);
  EXPECT_EQ(back.integers("is"), (std::vector<std::int64_t>{1, 2, 3}));
  EXPECT_EQ(back.string("str"), "with spaces\nand newline");
  EXPECT_EQ(back.matrix("empty").rows(), 0);
  EXPECT_THROW(back.scalar("missing"), DataError);
  EXPECT_THROW(back.integer("s"), DataError);
  std::remove(path.c_str());
}

TEST(Archive, HeaderIsSelfDescribing) {
  const std::string path = temp_path("header.bin");
  Archive ar;
  ar.put("theta", VectorXd::Ones(3).eval());
  ar.save(path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "SRGPCKPT 1");
  std::getline(in, line);
  EXPECT_TRUE(line == "endian little" || line == "endian big");
  std::getline(in, line);
  EXPECT_EQ(line, "entry theta f64 3 1");
  std::getline(in, line);
  EXPECT_EQ(line, "end");
  std::remove(path.c_str());
}

TEST(Archive, RejectsCorruptFiles) {
  const std::string path = temp_path("corrupt.bin");
  std::ofstream(path) << "NOTACKPT 1\n";
  EXPECT_THROW(Archive::load(path), DataError);
  std::ofstream(path) << "SRGPCKPT 99\nendian little\nend\n";
  EXPECT_THROW(Archive::load(path), DataError);
  std::ofstream(path) << "SRGPCKPT 1\nendian little\nentry x f64 10 1\nend\nshort";
  EXPECT_THROW(Archive::load(path), DataError);
  EXPECT_THROW(Archive::load(temp_path("does_not_exist")), DataError);
  std::remove(path.c_str());
}

TEST(Archive, RejectsDuplicateNames) {
  Archive ar;
  ar.put("a", 1.0);
  EXPECT_THROW(ar.put("a", 2.0), ContractViolation);
  EXPECT_THROW(ar.put("has space", 2.0), ContractViolation);
}

Checkpoint checkpoint_from(const FitState &st, const TrainConfig &cfg,
                           const ModelSpec &spec, const FitResult &r) {
  Checkpoint ck;
  ck.spec = spec;
  ck.config = cfg;
  ck.fit = st;
  ck.posterior = r.posterior;
  ck.standardizer = Standardizer::identity(st.theta.input_dim());
  ck.trace_tail = r.trace;
  return ck;
}

// Training E1 + E2 epochs straight through equals training E1, saving,
// loading and training E2 more, bit for bit.
void expect_bit_exact_resume(bool carry_posterior) {
  const auto inst = testing::random_instance(3, 90, 2, 5);
  const ModelSpec spec = ModelSpec::pep(0.5);
  TrainConfig cfg;
  cfg.batch_size = 20;
  cfg.learning_rate = 0.01;
  cfg.shuffle = true;
  cfg.seed = 123;
  cfg.carry_posterior = carry_posterior;

  cfg.epochs = 5;
  FitState straight = FitState::start(inst.h, cfg);
  const FitResult full = srgp_fit(inst.x, inst.y, spec, cfg, straight);

  cfg.epochs = 2;
  FitState first = FitState::start(inst.h, cfg);
  const FitResult part = srgp_fit(inst.x, inst.y, spec, cfg, first);
  const std::string path = temp_path(carry_posterior ? "resume_carry" : "resume");
  save_checkpoint(path, checkpoint_from(first, cfg, spec, part));

  Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.fit.epochs_completed, 2);
  ck.config.epochs = 3;
  const FitResult rest = srgp_fit(inst.x, inst.y, ck.spec, ck.config, ck.fit);

  EXPECT_EQ(rest.theta.to_vector(), full.theta.to_vector());
  EXPECT_EQ(ck.fit.adam.first_moment, straight.adam.first_moment);
  EXPECT_EQ(ck.fit.adam.second_moment, straight.adam.second_moment);
  EXPECT_EQ(ck.fit.adam.step_count, straight.adam.step_count);
  EXPECT_EQ(rest.posterior.eta, full.posterior.eta);
  EXPECT_EQ(rest.posterior.psi, full.posterior.psi);
  ASSERT_EQ(rest.trace.size(), 15u);
  for (std::size_t i = 0; i < rest.trace.size(); ++i) {
    const TraceRecord &a = rest.trace[i];
    const TraceRecord &b = full.trace[full.trace.size() - 15 + i];
    EXPECT_EQ(a.epoch, b.epoch);
    EXPECT_EQ(a.batch, b.batch);
    EXPECT_EQ(a.psi_k, b.psi_k);
    EXPECT_EQ(a.grad_norm, b.grad_norm);
  }
  std::remove(path.c_str());
}

TEST(Checkpoint, BitExactResume) { expect_bit_exact_resume(false); }

TEST(Checkpoint, BitExactResumeWithCarriedPosterior) { expect_bit_exact_resume(true); }

TEST(Checkpoint, PreservesModelAndStandardizer) {
  const auto inst = testing::random_instance(4, 30, 3, 4);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 10;
  cfg.history = HistoryMode::kIgnoreHistory;
  cfg.gradient.active = {0, 2};
  FitState st = FitState::start(inst.h, cfg);
  const FitResult r = srgp_fit(inst.x, inst.y, ModelSpec::fitc(), cfg, st);
  Checkpoint ck = checkpoint_from(st, cfg, ModelSpec::fitc(), r);
  ck.standardizer = Standardizer::fit(inst.x, inst.y);
  const std::string path = temp_path("model");
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.spec.variant, Variant::kFITC);
  EXPECT_EQ(back.config.history, HistoryMode::kIgnoreHistory);
  EXPECT_EQ(back.config.gradient.active, (std::vector<Index>{0, 2}));
  EXPECT_EQ(back.fit.theta.to_vector(), st.theta.to_vector());
  EXPECT_EQ(back.posterior.lambda, r.posterior.lambda);
  EXPECT_EQ(back.posterior.parametrization, Parametrization::kTransformed);
  EXPECT_EQ(back.standardizer.x_mean, ck.standardizer.x_mean);
  EXPECT_EQ(back.standardizer.y_scale, ck.standardizer.y_scale);
  EXPECT_TRUE(back.standardizer.enabled);
  ASSERT_EQ(back.trace_tail.size(), 3u);
  EXPECT_EQ(back.trace_tail.back().psi_k, r.trace.back().psi_k);
  std::remove(path.c_str());
}

} // namespace
} // namespace srgp
