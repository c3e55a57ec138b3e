#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

// Central-finite-difference checks of every analytic gradient against the
// loss values themselves (float64, step 1e-5, relative error < 1e-4).

#include "cfdtm/objectives.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cfdtm;

namespace {

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-4;

// Entries below the finite-difference resolution (about eps * |loss| / step)
// count as zero; the floor keeps the relative comparison meaningful there.
double noise_floor(const std::function<double()>& value) {
    return std::max(1e-6, 1e-6 * std::abs(value()));
}

void check_matrix_grads(Eigen::MatrixXd& param, const Eigen::MatrixXd& analytic,
                        const std::function<double()>& value) {
    REQUIRE(analytic.rows() == param.rows());
    REQUIRE(analytic.cols() == param.cols());
    const double floor = noise_floor(value);
    for (int r = 0; r < param.rows(); ++r) {
        for (int c = 0; c < param.cols(); ++c) {
            const double numeric = oracles::central_diff(&param(r, c), kStep, value);
            CHECK(oracles::rel_error(analytic(r, c), numeric, floor) < kTol);
        }
    }
}

void check_vector_grads(Eigen::VectorXd& param, const Eigen::VectorXd& analytic,
                        const std::function<double()>& value) {
    const double floor = noise_floor(value);
    for (int r = 0; r < param.size(); ++r) {
        const double numeric = oracles::central_diff(&param(r), kStep, value);
        CHECK(oracles::rel_error(analytic(r), numeric, floor) < kTol);
    }
}

std::vector<Eigen::MatrixXd> zero_like(const std::vector<Eigen::MatrixXd>& phi) {
    std::vector<Eigen::MatrixXd> out;
    for (const auto& m : phi) out.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
    return out;
}

}  // namespace

TEST_CASE("positive_loss gradients vs finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto inst = fixtures::make_tiny_instance(1000 + seed, 3, 3, 4, 6, 4, 2, false);
        auto grad = zero_like(inst.phi);
        positive_loss(inst.phi, inst.cfg, &grad);
        auto value = [&]() { return positive_loss(inst.phi, inst.cfg); };
        for (std::size_t t = 0; t < inst.phi.size(); ++t) {
            check_matrix_grads(inst.phi[t], grad[t], value);
        }
    }
}

TEST_CASE("negative_loss gradients vs finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto inst = fixtures::make_tiny_instance(2000 + seed, 2, 4, 5, 6, 4, 2, false);
        auto grad = zero_like(inst.phi);
        negative_loss(inst.phi, inst.cfg, &grad);
        auto value = [&]() { return negative_loss(inst.phi, inst.cfg); };
        for (std::size_t t = 0; t < inst.phi.size(); ++t) {
            check_matrix_grads(inst.phi[t], grad[t], value);
        }
    }
}

TEST_CASE("uwe_loss gradients vs finite differences, phi and W") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto inst = fixtures::make_tiny_instance(3000 + seed, 3, 3, 4, 8, 4, 2, false);
        auto grad_phi = zero_like(inst.phi);
        Eigen::MatrixXd grad_W = Eigen::MatrixXd::Zero(inst.W.rows(), inst.W.cols());
        uwe_loss(inst.phi, inst.W, inst.uw_sets, inst.cfg, &grad_phi, &grad_W);
        auto value = [&]() { return uwe_loss(inst.phi, inst.W, inst.uw_sets, inst.cfg); };
        for (std::size_t t = 0; t < inst.phi.size(); ++t) {
            check_matrix_grads(inst.phi[t], grad_phi[t], value);
        }
        check_matrix_grads(inst.W, grad_W, value);
    }
}

TEST_CASE("tm_loss gradients vs finite differences for every parameter") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto inst = fixtures::make_tiny_instance(4000 + seed, 2, 3, 4, 8, 5, 3,
                                                 /*random_eps=*/true);
        ModelGrads grads;
        grads.resize_like(inst.view());
        tm_loss(inst.batch, inst.view(), inst.eps, &grads);
        auto value = [&]() { return tm_loss(inst.batch, inst.view(), inst.eps); };

        for (std::size_t t = 0; t < inst.phi.size(); ++t) {
            check_matrix_grads(inst.phi[t], grads.topics[t], value);
        }
        check_matrix_grads(inst.W, grads.word, value);
        check_matrix_grads(inst.encoder.w1, grads.encoder.w1, value);
        check_matrix_grads(inst.encoder.w2, grads.encoder.w2, value);
        check_matrix_grads(inst.encoder.wmu, grads.encoder.wmu, value);
        check_matrix_grads(inst.encoder.wlv, grads.encoder.wlv, value);
        check_vector_grads(inst.encoder.b1, grads.encoder.b1, value);
        check_vector_grads(inst.encoder.b2, grads.encoder.b2, value);
        check_vector_grads(inst.encoder.bmu, grads.encoder.bmu, value);
        check_vector_grads(inst.encoder.blv, grads.encoder.blv, value);
    }
}

TEST_CASE("overall_loss gradients vs finite differences") {
    auto inst = fixtures::make_tiny_instance(5000, 3, 3, 4, 8, 5, 4, true);
    ModelGrads grads;
    grads.resize_like(inst.view());
    overall_loss(inst.batch, inst.view(), inst.cfg, inst.uw_sets, inst.eps, &grads);
    auto value = [&]() {
        return overall_loss(inst.batch, inst.view(), inst.cfg, inst.uw_sets, inst.eps).total();
    };
    for (std::size_t t = 0; t < inst.phi.size(); ++t) {
        check_matrix_grads(inst.phi[t], grads.topics[t], value);
    }
    check_matrix_grads(inst.W, grads.word, value);
    check_matrix_grads(inst.encoder.w1, grads.encoder.w1, value);
    check_vector_grads(inst.encoder.blv, grads.encoder.blv, value);
}

TEST_CASE("gradient of encode with count normalization") {
    auto inst = fixtures::make_tiny_instance(6000, 2, 3, 4, 6, 4, 2, true);
    auto view = inst.view();
    view.normalize_counts = true;
    ModelGrads grads;
    grads.resize_like(view);
    tm_loss(inst.batch, view, inst.eps, &grads);
    auto value = [&]() { return tm_loss(inst.batch, view, inst.eps); };
    check_matrix_grads(inst.encoder.w1, grads.encoder.w1, value);
    check_vector_grads(inst.encoder.b1, grads.encoder.b1, value);
}
