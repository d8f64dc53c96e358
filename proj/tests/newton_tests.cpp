#include "eitaa/newton.hpp"

#include "eitaa/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace eitaa;

namespace {

// Scalar identity model F(sigma) = sigma.
ModelFn identity_model() {
    return [](const Eigen::VectorXd& sigma, Eigen::VectorXd* f, Eigen::MatrixXd* j) {
        if (f) *f = sigma;
        if (j) *j = Eigen::MatrixXd::Identity(sigma.size(), sigma.size());
    };
}

// Affine model F(sigma) = A sigma + c with a fixed well-conditioned A.
ModelFn affine_model(const Eigen::MatrixXd& a, const Eigen::VectorXd& c) {
    return [a, c](const Eigen::VectorXd& sigma, Eigen::VectorXd* f, Eigen::MatrixXd* j) {
        if (f) *f = a * sigma + c;
        if (j) *j = a;
    };
}

} // namespace

TEST_CASE("gn_step matches the closed form for the identity model") {
    // F = I: step solves (I + mu I) d = -(sigma - v) - mu (sigma - z), so the
    // updated point is (v + mu z) / (1 + mu) regardless of the start.
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 4;
        Eigen::VectorXd sigma(n), z(n), v(n);
        for (int i = 0; i < n; ++i) {
            sigma[i] = rng.uniform(0.5, 2.0);
            z[i] = rng.uniform(0.5, 2.0);
            v[i] = rng.uniform(0.5, 2.0);
        }
        const double mu = rng.uniform(0.1, 5.0);
        const Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(n, n);
        const Eigen::VectorXd d = gn_step(sigma, z, jac, sigma - v, mu);
        const Eigen::VectorXd expected = (v + mu * z) / (1.0 + mu);
        CHECK((sigma + d - expected).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("gauss_newton_solve fixed point of the identity model") {
    const Eigen::VectorXd v = Eigen::VectorXd::Constant(3, 1.7);
    GnConfig config;
    config.mu = 0.5;
    config.iters = 60;
    // z = v makes sigma = v stationary; iterating converges there.
    const auto trace = gauss_newton_solve(Eigen::VectorXd::Ones(3), v, v, identity_model(), config);
    CHECK((trace.back() - v).norm() < 1e-10);
}

TEST_CASE("m = 0 acceleration equals plain Gauss-Newton bitwise") {
    Rng rng(9);
    const int n = 5;
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = rng.normal() * 0.2 + (i == j ? 1.0 : 0.0);
    Eigen::VectorXd c(n), v(n), z(n);
    for (int i = 0; i < n; ++i) {
        c[i] = rng.normal();
        v[i] = rng.normal();
        z[i] = rng.uniform(0.5, 1.5);
    }
    const ModelFn model = affine_model(a, c);

    GnConfig config;
    config.iters = 6;
    config.m = 0;
    const auto plain = gauss_newton_solve(Eigen::VectorXd::Ones(n), z, v, model, config);
    const auto accel = gauss_newton_aa(Eigen::VectorXd::Ones(n), z, v, model, config);
    REQUIRE(plain.size() == accel.size());
    for (std::size_t k = 0; k < plain.size(); ++k)
        CHECK((plain[k] - accel[k]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("affine model: accelerated run reaches the regularized optimum") {
    // For affine F the damped (beta = 1) iteration is itself affine, so the
    // optimum (A^T A + mu I)^{-1} (A^T (v - c) + mu z) is reachable exactly.
    Rng rng(21);
    const int n = 4;
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = rng.normal() * 0.3 + (i == j ? 1.0 : 0.0);
    Eigen::VectorXd c(n), v(n), z(n);
    for (int i = 0; i < n; ++i) {
        c[i] = rng.normal();
        v[i] = rng.normal();
        z[i] = rng.uniform(0.5, 1.5);
    }
    const double mu = 0.7;
    const Eigen::VectorXd opt =
        (a.transpose() * a + mu * Eigen::MatrixXd::Identity(n, n))
            .ldlt()
            .solve(a.transpose() * (v - c) + mu * z);

    GnConfig config;
    config.mu = mu;
    config.iters = 30;
    config.m = 3;
    const auto trace = gauss_newton_aa(Eigen::VectorXd::Ones(n), z, v, affine_model(a, c), config);
    CHECK((trace.back() - opt).norm() < 1e-10);

    config.m = 0;
    const auto plain = gauss_newton_solve(Eigen::VectorXd::Ones(n), z, v, affine_model(a, c), config);
    CHECK((plain.back() - opt).norm() < 1e-10);
}

TEST_CASE("benchmark system f and its Jacobian agree with finite differences") {
    const Eigen::Vector2d x(0.3, 1.2);
    const Eigen::Matrix2d jac = example331_jacobian(x);
    const double h = 1e-7;
    for (int j = 0; j < 2; ++j) {
        Eigen::Vector2d plus = x, minus = x;
        plus[j] += h;
        minus[j] -= h;
        const Eigen::Vector2d fd = (example331_f(plus) - example331_f(minus)) / (2.0 * h);
        CHECK((jac.col(j) - fd).norm() < 1e-5 * (1.0 + fd.norm()));
    }
}

TEST_CASE("benchmark system root oracle") {
    // With x1 x2 = 1e-4, the second equation reduces to the scalar problem
    // exp(-1e-4 / x2) + exp(-x2) = 1.0001; solve it by bisection, then verify
    // the pair is a root of the full system.
    auto h = [](double x2) { return std::exp(-1e-4 / x2) + std::exp(-x2) - 1.0001; };
    double lo = 5.0, hi = 15.0;
    REQUIRE(h(lo) * h(hi) < 0.0);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (h(lo) * h(mid) <= 0.0 ? hi : lo) = mid;
    }
    const double x2 = 0.5 * (lo + hi);
    const Eigen::Vector2d root(1e-4 / x2, x2);
    CHECK(example331_f(root).norm() < 1e-8);
    CHECK(root[1] == doctest::Approx(9.106).epsilon(1e-3));
}

TEST_CASE("Gauss-Newton-AA (m = 2) finds the benchmark root from (1,1)") {
    RootAaOptions options;
    options.m = 2;
    const RootAaTrace trace =
        gauss_newton_aa_root(example331_f, example331_jacobian, Eigen::Vector2d(1.0, 1.0), options);
    CHECK(trace.converged);
    CHECK(trace.f_norms.back() < 1e-8);
    CHECK(static_cast<int>(trace.xs.size()) <= options.max_iters + 1);
}

TEST_CASE("Newton-AA converges for at least one history depth from (1,1)") {
    bool any = false;
    for (int m : {1, 2, 5, 10, 15}) {
        RootAaOptions options;
        options.m = m;
        any = any || newton_aa(example331_f, example331_jacobian, Eigen::Vector2d(1.0, 1.0), options).converged;
    }
    CHECK(any);
}

TEST_CASE("root solvers agree on a regular quadratic system") {
    // f(x) = (x1^2 - 2, x1 + x2 - 3): root (sqrt 2, 3 - sqrt 2), Jacobian
    // nonsingular there, so both step rules converge to the same point.
    auto f = [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        Eigen::VectorXd out(2);
        out << x[0] * x[0] - 2.0, x[0] + x[1] - 3.0;
        return out;
    };
    auto jac = [](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
        Eigen::MatrixXd out(2, 2);
        out << 2.0 * x[0], 0.0, 1.0, 1.0;
        return out;
    };
    RootAaOptions options;
    options.m = 1;
    Eigen::VectorXd x0(2);
    x0 << 2.0, 2.0;
    const RootAaTrace naa = newton_aa(f, jac, x0, options);
    const RootAaTrace gnaa = gauss_newton_aa_root(f, jac, x0, options);
    REQUIRE(naa.converged);
    REQUIRE(gnaa.converged);
    const Eigen::Vector2d root(std::sqrt(2.0), 3.0 - std::sqrt(2.0));
    CHECK((naa.xs.back() - root).norm() < 1e-7);
    CHECK((gnaa.xs.back() - root).norm() < 1e-7);
}

TEST_CASE("benchmark grid runs both methods and emits well-formed CSV") {
    const std::vector<Eigen::Vector2d> x0s = {{1.0, 1.0}};
    const std::vector<int> ms = {1, 2};
    RootAaOptions options;
    options.max_iters = 20;
    const auto runs = newton_aa_benchmark(x0s, ms, options);
    REQUIRE(runs.size() == 4); // 2 methods x 1 start x 2 depths
    int naa = 0, gnaa = 0;
    for (const auto& run : runs) {
        if (run.method == "NAA") ++naa;
        if (run.method == "GNAA") ++gnaa;
        CHECK(run.trace.f_norms.size() == run.trace.xs.size());
    }
    CHECK(naa == 2);
    CHECK(gnaa == 2);

    const std::string csv = benchmark_to_csv(runs);
    std::istringstream lines(csv);
    std::string line;
    REQUIRE(std::getline(lines, line));
    CHECK(line == "method,m,x0_id,iter,f_norm");
    std::size_t rows = 0;
    while (std::getline(lines, line)) ++rows;
    std::size_t expected = 0;
    for (const auto& run : runs) expected += run.trace.f_norms.size();
    CHECK(rows == expected);
}

TEST_CASE("LM baseline decreases the data misfit on an affine model") {
    Rng rng(33);
    const int n = 6;
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = rng.normal() * 0.4 + (i == j ? 1.0 : 0.0);
    Eigen::VectorXd c(n), v(n);
    for (int i = 0; i < n; ++i) {
        c[i] = rng.normal();
        v[i] = rng.normal();
    }
    const ModelFn model = affine_model(a, c);

    LmConfig config;
    config.iters = 15;
    const auto trace = gn_lm_baseline(Eigen::VectorXd::Zero(n), v, model, config);
    auto misfit = [&](const Eigen::VectorXd& sigma) {
        Eigen::VectorXd f;
        model(sigma, &f, nullptr);
        return (f - v).squaredNorm();
    };
    CHECK(misfit(trace.back()) < misfit(trace.front()));
    // affine problem: LM should essentially solve it
    CHECK(misfit(trace.back()) < 1e-10);
}

TEST_CASE("config validation rejects bad hyperparameters") {
    GnConfig config;
    config.beta = 0.0;
    CHECK_THROWS(config.validate());
    config.beta = 1.0;
    config.iters = 0;
    CHECK_THROWS(config.validate());
}
