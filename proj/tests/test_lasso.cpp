#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "doctest.h"

#include "ispw/csv.hpp"
#include "ispw/lasso.hpp"
#include "ispw/simulation.hpp"
#include "oracles.hpp"

using namespace ispw;
using namespace ispw_test;

TEST_CASE("ISPW lasso on the table1 data at lambda 0.1") {
    const auto ds = table1();
    LassoConfig cfg;
    cfg.lambda = 0.1;
    const auto fit = weighted_lasso_fit(ds, ispw_weights(ds), cfg);
    CHECK(fit.converged);
    CHECK(fit.beta(1) == 0.0);
    CHECK(std::abs(fit.beta(0) - 4.91) < 0.05);
    CHECK(std::abs(fit.beta(2) + 0.02) < 0.05);
    CHECK(std::abs(fit.beta(3) - 0.71) < 0.05);
    CHECK(selection_pattern(fit, ds.covariate_names()) == std::vector<std::string>{"intercept", "age", "sex"});
}

TEST_CASE("ISPW lasso on the table1 data at lambda 0.05") {
    const auto ds = table1();
    LassoConfig cfg;
    cfg.lambda = 0.05;
    const auto fit = weighted_lasso_fit(ds, ispw_weights(ds), cfg);
    CHECK(fit.beta(1) == 0.0);
    CHECK(std::abs(fit.beta(0) - 5.36) < 0.05);
    CHECK(std::abs(fit.beta(2) + 0.03) < 0.05);
    CHECK(std::abs(fit.beta(3) - 0.87) < 0.05);
}

TEST_CASE("large lambda with every coefficient penalized gives zero") {
    const auto ds = table1();
    LassoConfig cfg;
    cfg.penalize_intercept = true;
    const auto w = ispw_weights(ds);
    cfg.lambda = 1.01 * lambda_max(ds, w, cfg);
    const auto fit = weighted_lasso_fit(ds, w, cfg);
    CHECK(fit.beta.cwiseAbs().maxCoeff() == 0.0);
    CHECK(selection_pattern(fit, ds.covariate_names()).empty());
    cfg.lambda = 0.95 * lambda_max(ds, w, cfg);
    CHECK(weighted_lasso_fit(ds, w, cfg).beta.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("lambda_max zeroes every penalized coefficient with a free intercept") {
    const auto ds = table1();
    LassoConfig cfg;
    const auto w = ispw_weights(ds);
    cfg.lambda = 1.0001 * lambda_max(ds, w, cfg);
    const auto fit = weighted_lasso_fit(ds, w, cfg);
    CHECK(fit.beta.tail(3).cwiseAbs().maxCoeff() == 0.0);
    CHECK(fit.beta(0) != 0.0);
}

TEST_CASE("coordinate descent matches the proximal-gradient oracle on the table1 data") {
    const auto ds = table1();
    const auto w = ispw_weights(ds);
    for (bool standardize : {true, false}) {
        for (bool pen_int : {false, true}) {
            LassoConfig cfg;
            cfg.lambda = 0.1;
            cfg.standardize = standardize;
            cfg.penalize_intercept = pen_int;
            const auto fit = weighted_lasso_fit(ds, w, cfg);
            const auto p = make_problem(ds, w, cfg);
            const auto oracle = proximal_oracle(p, 400000);
            CHECK(p.value(fit.beta) <= p.value(oracle) + 1e-4);
            CHECK(fit.objective == doctest::Approx(p.value(fit.beta)).epsilon(1e-10));
        }
    }
}

TEST_CASE("coordinate descent matches the oracle on random datasets") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> lam(0.005, 0.3);
    std::uniform_int_distribution<int> nn(8, 20), qq(2, 4);
    for (int rep = 0; rep < 50; ++rep) {
        const auto ds = random_dataset(rng, static_cast<std::size_t>(nn(rng)), static_cast<std::size_t>(qq(rng)));
        const auto w = ispw_weights(ds);
        LassoConfig cfg;
        cfg.lambda = lam(rng);
        cfg.standardize = rep % 2 == 0;
        cfg.penalize_intercept = rep % 3 == 0;
        cfg.loss_scale = rep % 4 == 0 ? LossScale::TotalSubjects : LossScale::HalfWeightSum;
        const auto fit = weighted_lasso_fit(ds, w, cfg);
        const auto p = make_problem(ds, w, cfg);
        const auto oracle = proximal_oracle(p, 50000);
        CHECK(std::abs(p.value(fit.beta) - p.value(oracle)) < 1e-4);
        CHECK(p.value(fit.beta) <= p.value(oracle) + 1e-9);
    }
}

TEST_CASE("lambda 0 equals the normal-equation solve") {
    std::mt19937_64 rng(99);
    for (int rep = 0; rep < 50; ++rep) {
        const auto ds = random_dataset(rng, 20, 4);
        const auto w = ispw_weights(ds);
        LassoConfig cfg;
        cfg.lambda = 0.0;
        const auto fit = weighted_lasso_fit(ds, w, cfg);
        const auto tls = tian_fit(ds, w, Link::Log, TianEstimator::TransformedLeastSquares);
        const auto ne = normal_equations_oracle(ds, w, Link::Log);
        for (std::size_t j = 0; j < ne.size(); ++j) {
            CHECK(std::abs(fit.beta(static_cast<Eigen::Index>(j)) - ne[j]) < 1e-6);
            CHECK(std::abs(tls.beta(static_cast<Eigen::Index>(j)) - ne[j]) < 1e-8);
        }
    }
}

TEST_CASE("sweep objectives never increase") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        const auto ds = random_dataset(rng, 20, 4);
        LassoConfig cfg;
        cfg.lambda = 0.05;
        cfg.record_trace = true;
        cfg.standardize = rep % 2 == 0;
        const auto fit = weighted_lasso_fit(ds, ispw_weights(ds), cfg);
        for (std::size_t k = 1; k < fit.sweep_objectives.size(); ++k) {
            CHECK(fit.sweep_objectives[k] <= fit.sweep_objectives[k - 1] + 1e-12);
        }
    }
}

TEST_CASE("objective at the fit is no worse than zero or the unpenalized fit") {
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 20; ++rep) {
        const auto ds = random_dataset(rng, 20, 4);
        const auto w = ispw_weights(ds);
        LassoConfig cfg;
        cfg.lambda = 0.08;
        const auto fit = weighted_lasso_fit(ds, w, cfg);
        const auto tls = tian_fit(ds, w, Link::Log, TianEstimator::TransformedLeastSquares);
        CHECK(fit.objective <= lasso_objective(ds, w, cfg, Eigen::VectorXd::Zero(4)) + 1e-12);
        CHECK(fit.objective <= lasso_objective(ds, w, cfg, tls.beta) + 1e-12);
    }
}

TEST_CASE("weight and lambda scaling invariance") {
    std::mt19937_64 rng(8);
    const auto ds = random_dataset(rng, 20, 4);
    const auto w = ispw_weights(ds);
    const double c = 3.7;
    std::vector<double> scaled = w.weights;
    for (auto& v : scaled) v *= c;
    const auto ws = make_weights(scaled);

    LassoConfig cfg;
    cfg.lambda = 0.05;
    cfg.standardize = false;
    cfg.loss_scale = LossScale::TotalSubjects;
    const auto a = weighted_lasso_fit(ds, w, cfg);
    cfg.lambda *= c;
    const auto b = weighted_lasso_fit(ds, ws, cfg);
    CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() < 1e-8);

    // The half-weight-sum loss is invariant to weight scale on its own.
    LassoConfig h;
    h.lambda = 0.05;
    const auto d = weighted_lasso_fit(ds, w, h);
    const auto e = weighted_lasso_fit(ds, ws, h);
    CHECK((d.beta - e.beta).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("warm-started path agrees with cold starts") {
    const auto ds = table1();
    const auto w = ispw_weights(ds);
    LassoConfig cfg;
    const auto path = lasso_path(ds, w, cfg, cfg.lambda_grid);
    for (std::size_t g = 0; g < path.size(); g += 7) {
        cfg.lambda = cfg.lambda_grid[g];
        const auto cold = weighted_lasso_fit(ds, w, cfg);
        CHECK((cold.beta - path[g].beta).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("Tian on the table1 data") {
    const auto ds = table1();
    const auto fit = tian_fit(ds, censoring_weights(ds), Link::Log);
    CHECK(fit.converged);
    const double expected[] = {6.52, 0.37, -0.04, 0.37};
    for (int j = 0; j < 4; ++j) CHECK(std::abs(fit.beta(j) - expected[j]) < 0.01);
    CHECK(selection_pattern(fit, ds.covariate_names()).size() == 4);
}

TEST_CASE("Tian intercept-only with unit weights") {
    std::vector<SurvivalRecord> recs = {{"a", 2.0, true, {1.0}}, {"b", 3.0, false, {1.0}},
                                        {"c", 5.0, true, {1.0}}, {"d", 7.0, true, {1.0}}};
    RestrictOptions o;
    o.has_intercept = true;
    const auto ds = restrict(recs, 10.0, o);
    const auto w = make_weights({1.0, 0.0, 1.0, 1.0});
    const double mean_log = (std::log(2.0) + std::log(5.0) + std::log(7.0)) / 3.0;
    CHECK(tian_fit(ds, w, Link::Log, TianEstimator::TransformedLeastSquares).beta(0) == doctest::Approx(mean_log));
    CHECK(tian_fit(ds, w, Link::Identity).beta(0) == doctest::Approx(14.0 / 3.0));
    // Under the log link the estimating equation matches the mean of Y on the log scale.
    CHECK(tian_fit(ds, w, Link::Log).beta(0) == doctest::Approx(std::log(14.0 / 3.0)));
}

TEST_CASE("Tian residual orthogonality and normal-equation oracle") {
    std::mt19937_64 rng(30);
    for (int rep = 0; rep < 20; ++rep) {
        const auto ds = random_dataset(rng, 30, 4);
        const auto w = censoring_weights(ds);
        const Eigen::MatrixXd x = ds.design();
        const Eigen::VectorXd y = ds.times();
        const Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w.weights.data(), 30);

        const auto tls = tian_fit(ds, w, Link::Log, TianEstimator::TransformedLeastSquares);
        const Eigen::VectorXd r = y.array().log().matrix() - x * tls.beta;
        CHECK((x.transpose() * wv.cwiseProduct(r)).cwiseAbs().maxCoeff() < 1e-8);
        const auto ne = normal_equations_oracle(ds, w, Link::Log);
        for (int j = 0; j < 4; ++j) CHECK(std::abs(tls.beta(j) - ne[static_cast<std::size_t>(j)]) < 1e-8);

        const auto ee = tian_fit(ds, w, Link::Log);
        const Eigen::VectorXd u = x.transpose() * wv.cwiseProduct(y - (x * ee.beta).array().exp().matrix());
        CHECK(u.cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, wv.dot(y)));

        const auto id = tian_fit(ds, w, Link::Identity);
        const auto ne_id = normal_equations_oracle(ds, w, Link::Identity);
        for (int j = 0; j < 4; ++j) CHECK(std::abs(id.beta(j) - ne_id[static_cast<std::size_t>(j)]) < 1e-8);
    }
}

TEST_CASE("Tian rejects a singular design") {
    std::vector<SurvivalRecord> recs = {{"a", 2.0, true, {1.0, 2.0}}, {"b", 3.0, true, {1.0, 2.0}},
                                        {"c", 5.0, false, {1.0, 1.0}}};
    RestrictOptions o;
    o.has_intercept = true;
    const auto ds = restrict(recs, 10.0, o);
    try {
        tian_fit(ds, ispw_weights(ds), Link::Log);
        FAIL("expected SingularDesign");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SingularDesign);
    }
}

TEST_CASE("cross-validation on the table1 data") {
    const auto ds = table1();
    LassoConfig cfg;
    cfg.cv_folds = 3;
    const auto cv = cv_select_lambda(ds, ispw_weights(ds), cfg);
    CHECK(std::find(cv.lambda_grid.begin(), cv.lambda_grid.end(), cv.chosen_lambda) != cv.lambda_grid.end());
    CHECK(cv.chosen_lambda >= 0.03);
    CHECK(cv.chosen_lambda <= 0.07);
    CHECK(cv.fit_at_chosen.lambda == cv.chosen_lambda);
}

TEST_CASE("cross-validation edge cases") {
    const auto ds = table1();
    const auto w = ispw_weights(ds);
    LassoConfig cfg;
    cfg.cv_folds = 3;
    cfg.lambda_grid = {0.07};
    CHECK(cv_select_lambda(ds, w, cfg).chosen_lambda == 0.07);

    // Every grid point above lambda_max gives the same intercept-only fit: ties go to the largest.
    cfg.lambda_grid = {5.0, 6.0, 7.0};
    CHECK(cv_select_lambda(ds, w, cfg).chosen_lambda == 7.0);

    cfg.cv_folds = 7;
    try {
        cv_select_lambda(ds, w, cfg);
        FAIL("expected TooFewEvents");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TooFewEvents);
    }
}

TEST_CASE("cross-validation error tracks leave-one-out on simulated data") {
    auto spec = standard_scenario(1, 200, 77);
    const auto ds = generate_scenario(spec);
    LassoConfig cfg;
    cfg.lambda_grid = {0.2, 0.1, 0.02};
    const auto cv = cv_select_lambda(ds, ispw_weights(ds), cfg);

    const Eigen::MatrixXd x = ds.design();
    std::vector<double> num(3, 0.0);
    double den = 0.0;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        if (!ds[i].event) continue;
        std::vector<std::size_t> rows;
        for (std::size_t k = 0; k < ds.n(); ++k) {
            if (k != i) rows.push_back(k);
        }
        const auto train = ds.select_rows(rows);
        const auto curve = km_estimate(train);
        const auto tw = ispw_weights(train, curve);
        double s = km_eval(curve, ds[i].time);
        if (!(s > 0.0)) continue;
        den += 1.0 / s;
        for (std::size_t g = 0; g < 3; ++g) {
            LassoConfig c = cfg;
            c.lambda = cfg.lambda_grid[g];
            const auto fit = weighted_lasso_fit(train, tw, c);
            const double e = std::log(ds[i].time) - x.row(static_cast<Eigen::Index>(i)).dot(fit.beta);
            num[g] += e * e / s;
        }
    }
    for (std::size_t g = 0; g < 3; ++g) {
        const double loo = num[g] / den;
        CHECK(std::abs(cv.mean_cv_error[g] - loo) / loo < 0.15);
    }
}

TEST_CASE("link and loss-scale parsing") {
    CHECK(parse_link("log") == Link::Log);
    CHECK(parse_link("identity") == Link::Identity);
    CHECK_THROWS_AS(parse_link("logit"), Error);
    CHECK(parse_loss_scale(to_string(LossScale::TotalSubjects)) == LossScale::TotalSubjects);
    LassoConfig bad;
    bad.tol = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}
