#include <gtest/gtest.h>

#include "test_support.hpp"

namespace srgp {
namespace {

using testing::random_instance;

TEST(Kernel, UnitDistanceValue) {
  const Hyperparameters h = Hyperparameters::from_values(
      1.5, VectorXd::Constant(1, 0.7), 0.1, MatrixXd::Zero(1, 1));
  MatrixXd a(1, 1), b(1, 1);
  a << 0.2;
  b << 0.9;
  // One lengthscale apart: sigma0^2 exp(-1/2).
  EXPECT_NEAR(kernel_matrix(a, b, h)(0, 0), 2.25 * std::exp(-0.5), 1e-15);
  EXPECT_NEAR(se_ard(a.row(0), b.row(0), h), 2.25 * std::exp(-0.5), 1e-15);
}

TEST(Kernel, ArdScalesEachDimension) {
  VectorXd ls(2);
  ls << 0.5, 2.0;
  const Hyperparameters h =
      Hyperparameters::from_values(1.0, ls, 0.1, MatrixXd::Zero(1, 2));
  MatrixXd a(1, 2), b(1, 2);
  a << 0.0, 0.0;
  b << 0.5, 2.0;
  EXPECT_NEAR(kernel_matrix(a, b, h)(0, 0), std::exp(-1.0), 1e-15);
}

TEST(Kernel, SymmetricWithConstantDiagonal) {
  const auto inst = random_instance(3, 40, 3, 5);
  const MatrixXd k = kernel_matrix(inst.x, inst.x, inst.h);
  EXPECT_LT((k - k.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  for (Index i = 0; i < k.rows(); ++i) {
    EXPECT_NEAR(k(i, i), inst.h.sigma0_sq(), 1e-14);
  }
  EXPECT_TRUE(kernel_diag(inst.x, inst.h)
                  .isApprox(VectorXd::Constant(40, inst.h.sigma0_sq())));
}

TEST(Kernel, GramMatrixIsPositiveSemiDefinite) {
  const auto inst = random_instance(4, 60, 2, 5);
  const MatrixXd k = kernel_matrix(inst.x, inst.x, inst.h);
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(k);
  EXPECT_GT(eig.eigenvalues().minCoeff(), -1e-10 * eig.eigenvalues().maxCoeff());
}

TEST(Kernel, BoundedByAmplitude) {
  const auto inst = random_instance(5, 30, 2, 4);
  const MatrixXd k = kernel_matrix(inst.x, inst.h.inducing_inputs, inst.h);
  EXPECT_GE(k.minCoeff(), 0.0);
  EXPECT_LE(k.maxCoeff(), inst.h.sigma0_sq() * (1.0 + 1e-14));
}

// Every parameter class against central differences of kernel_matrix.
TEST(KernelGradient, MatchesFiniteDifferences) {
  const auto inst = random_instance(6, 12, 3, 4);
  const Hyperparameters &h = inst.h;
  const MatrixXd &r = h.inducing_inputs;
  const VectorXd theta = h.to_vector();
  for (Index i = 0; i < h.size(); ++i) {
    const ParameterRef ref = parameter_ref(i, h.input_dim(), h.num_inducing());
    const double step = 1e-6 * std::max(1.0, std::abs(theta(i)));
    VectorXd up = theta, down = theta;
    up(i) += step;
    down(i) -= step;
    const Hyperparameters hu = h.with_vector(up), hd = h.with_vector(down);

    const MatrixXd fd_xr = (kernel_matrix(inst.x, hu.inducing_inputs, hu) -
                            kernel_matrix(inst.x, hd.inducing_inputs, hd)) /
                           (2.0 * step);
    const MatrixXd an_xr = kernel_matrix_grad(inst.x, r, h, ref, {false, true});
    EXPECT_LT((fd_xr - an_xr).cwiseAbs().maxCoeff(), 1e-7) << ref.name();

    const MatrixXd fd_rr = (kernel_matrix(hu.inducing_inputs, hu.inducing_inputs, hu) -
                            kernel_matrix(hd.inducing_inputs, hd.inducing_inputs, hd)) /
                           (2.0 * step);
    const MatrixXd an_rr = kernel_matrix_grad(r, r, h, i, {true, true});
    EXPECT_LT((fd_rr - an_rr).cwiseAbs().maxCoeff(), 1e-7) << ref.name();

    const VectorXd fd_diag =
        (kernel_diag(inst.x, hu) - kernel_diag(inst.x, hd)) / (2.0 * step);
    EXPECT_LT((fd_diag - kernel_diag_grad(inst.x.rows(), h, ref)).cwiseAbs().maxCoeff(),
              1e-7)
        << ref.name();
  }
}

TEST(KernelGradient, InducingCoordinateTouchesOnlyItsRowAndColumn) {
  const auto inst = random_instance(7, 10, 2, 5);
  const Hyperparameters &h = inst.h;
  const ParameterRef ref{ParameterKind::kInducing, 1, 2};
  const MatrixXd g = kernel_matrix_grad(h.inducing_inputs, h.inducing_inputs, h,
                                        ref, {true, true});
  for (Index i = 0; i < g.rows(); ++i) {
    for (Index j = 0; j < g.cols(); ++j) {
      if (i != 2 && j != 2) {
        EXPECT_EQ(g(i, j), 0.0);
      }
    }
  }
  // The diagonal entry k(r, r) = sigma0^2 does not move.
  EXPECT_EQ(g(2, 2), 0.0);
}

TEST(KernelGradient, InducingDerivativeNeedsInducingSide) {
  const auto inst = random_instance(8, 5, 1, 3);
  const ParameterRef ref{ParameterKind::kInducing, 0, 0};
  EXPECT_THROW(kernel_matrix_grad(inst.x, inst.x, inst.h, ref), ContractViolation);
}

TEST(Hyperparameters, FlatLayoutRoundTrip) {
  const auto inst = random_instance(9, 5, 3, 4);
  const VectorXd theta = inst.h.to_vector();
  EXPECT_EQ(theta.size(), 3 + 2 + 4 * 3);
  EXPECT_EQ(theta(0), inst.h.log_sigma0);
  EXPECT_EQ(theta(4), inst.h.log_sigma_n);
  EXPECT_EQ(theta(5 + 3 * 2 + 1), inst.h.inducing_inputs(2, 1));
  const Hyperparameters back = inst.h.with_vector(theta);
  EXPECT_EQ(back.to_vector(), theta);
  for (Index i = 0; i < theta.size(); ++i) {
    EXPECT_EQ(flat_index(parameter_ref(i, 3, 4), 3), i);
  }
}

TEST(Hyperparameters, RejectsInvalidValues) {
  const MatrixXd r = MatrixXd::Zero(1, 1);
  EXPECT_THROW(Hyperparameters::from_values(0.0, VectorXd::Ones(1), 0.1, r),
               ContractViolation);
  EXPECT_THROW(Hyperparameters::from_values(1.0, VectorXd::Zero(1), 0.1, r),
               ContractViolation);
  MatrixXd dup(2, 1);
  dup << 0.3, 0.3;
  EXPECT_THROW(Hyperparameters::from_values(1.0, VectorXd::Ones(1), 0.1, dup),
               ContractViolation);
  EXPECT_THROW(Hyperparameters::from_values(1.0, VectorXd::Ones(2), 0.1, r),
               ContractViolation);
}

} // namespace
} // namespace srgp
