#include <doctest.h>

#include <cmath>

#include "deepccg/ccg.hpp"
#include "deepccg/errors.hpp"
#include "deepccg/rng.hpp"

using namespace deepccg;

namespace {

PosteriorSet worked_case_posteriors(double prior_a = 1e12) {
    // class 0: four points with sample mean 0; class 1: one point at 2.
    const std::vector<std::pair<Vec, int>> conditioning = {
        {{-1.0}, 0}, {{1.0}, 0}, {{-2.0}, 0}, {{2.0}, 0}, {{2.0}, 1}};
    return fit_posteriors(conditioning, prior_a);
}

std::vector<std::pair<Vec, int>> random_conditioning(Rng& rng, std::size_t dim,
                                                     std::size_t num_classes) {
    std::vector<std::pair<Vec, int>> out;
    for (std::size_t c = 0; c < num_classes; ++c) {
        const std::size_t count = 1 + uniform_index(rng, 5);
        Vec center(dim);
        for (auto& v : center) v = 2.0 * normal01(rng);
        for (std::size_t i = 0; i < count; ++i) {
            Vec z = center;
            for (auto& v : z) v += 0.5 * normal01(rng);
            out.emplace_back(std::move(z), static_cast<int>(c));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("fit_posteriors: sample-mean limit, prior fallback, finite-a agreement") {
    SUBCASE("two points in the improper-prior limit") {
        const PosteriorSet post = fit_posteriors({{{1.0}, 7}, {{3.0}, 7}}, 1e12);
        const ClassPosterior cp = post.at(7, 1);
        CHECK(cp.count == 2);
        CHECK(cp.mean[0] == doctest::Approx(2.0).epsilon(1e-9));
        CHECK(cp.variance_scale() == doctest::Approx(0.5).epsilon(1e-9));
    }
    SUBCASE("unseen class served by the prior") {
        const PosteriorSet post = fit_posteriors({}, 1e6);
        const ClassPosterior cp = post.at(3, 2);
        CHECK(cp.count == 0);
        CHECK(cp.mean == Vec{0.0, 0.0});
        CHECK(cp.variance_scale() == doctest::Approx(1e6));
    }
    SUBCASE("prior_a = 1e6 within 1e-3 relative of the closed form") {
        Rng rng(41);
        Vec z0{0.3, -1.2}, z1{1.1, 0.4}, z2{-0.5, 0.9};
        const PosteriorSet post = fit_posteriors({{z0, 0}, {z1, 0}, {z2, 0}}, 1e6);
        const ClassPosterior cp = post.at(0, 2);
        for (std::size_t k = 0; k < 2; ++k) {
            const double sample_mean = (z0[k] + z1[k] + z2[k]) / 3.0;
            CHECK(std::abs(cp.mean[k] - sample_mean) / std::abs(sample_mean) < 1e-3);
        }
        CHECK(std::abs(cp.variance_scale() - 1.0 / 3.0) / (1.0 / 3.0) < 1e-3);
    }
    SUBCASE("mixed dimensions rejected") {
        CHECK_THROWS_AS(fit_posteriors({{{1.0}, 0}, {{1.0, 2.0}, 0}}, 1e6), ShapeError);
    }
}

TEST_CASE("log_predictive: symmetry, degenerate softmax, worked value") {
    SUBCASE("identical classes split the mass") {
        const PosteriorSet post =
            fit_posteriors({{{1.0, 1.0}, 0}, {{1.0, 1.0}, 1}}, 1e6);
        const auto logp = log_predictive(post, {0.2, -0.4}, {0, 1});
        CHECK(logp.at(0) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
        CHECK(logp.at(1) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    }
    SUBCASE("single allowed class has probability one") {
        const PosteriorSet post = fit_posteriors({{{1.0}, 0}}, 1e6);
        const auto logp = log_predictive(post, {5.0}, {0});
        CHECK(logp.at(0) == doctest::Approx(0.0).epsilon(1e-14));
    }
    SUBCASE("worked one-dimensional case") {
        const auto logp = log_predictive(worked_case_posteriors(), {1.0}, {0, 1});
        CHECK(std::exp(logp.at(0)) == doctest::Approx(0.5212).epsilon(0.002));
    }
    SUBCASE("empty allowed set") {
        const PosteriorSet post = fit_posteriors({{{1.0}, 0}}, 1e6);
        CHECK_THROWS_AS(log_predictive(post, {1.0}, {}), ContractViolation);
    }
}

TEST_CASE("log_predictive invariants: normalization and shift equivariance") {
    Rng rng(59);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t dim = 1 + uniform_index(rng, 4);
        const std::size_t num_classes = 2 + uniform_index(rng, 4);
        auto conditioning = random_conditioning(rng, dim, num_classes);
        const PosteriorSet post = fit_posteriors(conditioning, 1e6);
        Vec z(dim);
        for (auto& v : z) v = 2.0 * normal01(rng);
        std::vector<int> allowed;
        for (std::size_t c = 0; c < num_classes; ++c) allowed.push_back(static_cast<int>(c));

        const auto logp = log_predictive(post, z, allowed);
        double total = 0.0;
        for (const auto& [c, lp] : logp) total += std::exp(lp);
        CHECK(std::abs(total - 1.0) <= 1e-12);

        // translate z and every posterior mean by the same vector (counts
        // fixed); the model only sees differences z - mean_c
        Vec t(dim);
        for (auto& v : t) v = normal01(rng);
        std::map<int, ClassPosterior> translated = post.all();
        for (auto& [c, cp] : translated)
            for (std::size_t k = 0; k < dim; ++k) cp.mean[k] += t[k];
        const PosteriorSet post_shift(std::move(translated), post.prior_a(), post.dim());
        Vec z_shift = z;
        for (std::size_t k = 0; k < dim; ++k) z_shift[k] += t[k];
        const auto logp_shift = log_predictive(post_shift, z_shift, allowed);
        for (const auto& [c, lp] : logp)
            CHECK(std::abs(lp - logp_shift.at(c)) <= 1e-10);
    }
}

TEST_CASE("Monte Carlo oracle agrees with the closed form") {
    SUBCASE("symmetric two-class case") {
        const PosteriorSet post =
            fit_posteriors({{{-1.0}, 0}, {{1.0}, 1}}, 1e6);
        const auto mc = predictive_oracle_mc(post, {0.0}, {0, 1}, 20000, 5);
        CHECK(std::abs(mc.at(0).prob - 0.5) <= 3.0 * mc.at(0).stderr);
    }
    SUBCASE("single allowed class is exactly one") {
        const PosteriorSet post = fit_posteriors({{{1.0}, 0}}, 1e6);
        const auto mc = predictive_oracle_mc(post, {0.3}, {0}, 10000, 6);
        CHECK(mc.at(0).prob == 1.0);
    }
    SUBCASE("worked case within 0.002 at 1e5 samples") {
        const PosteriorSet post = worked_case_posteriors();
        const auto closed = std::exp(log_predictive(post, {1.0}, {0, 1}).at(0));
        const auto mc = predictive_oracle_mc(post, {1.0}, {0, 1}, 100000, 7);
        CHECK(std::abs(closed - mc.at(0).prob) <= 0.002);
    }
    SUBCASE("sample floor enforced") {
        const PosteriorSet post = fit_posteriors({{{1.0}, 0}}, 1e6);
        CHECK_THROWS_AS(predictive_oracle_mc(post, {0.3}, {0}, 100, 6), ContractViolation);
    }
}

TEST_CASE("loss_and_grad: degenerate cases and analytic gradient") {
    SUBCASE("single-class task has zero loss and gradient") {
        const PosteriorSet post = fit_posteriors({{{1.0, 0.0}, 4}}, 1e6);
        const auto report = loss_and_grad(post, {{Vec{3.0, 1.0}, 4, {4}}});
        CHECK(report.total_loss == doctest::Approx(0.0).epsilon(1e-14));
        CHECK(report.per_example_dLdz[0] == Vec{0.0, 0.0});
    }
    SUBCASE("equidistant two-class point") {
        // symmetric about the origin so the finite-prior shrinkage keeps
        // the two means exactly mirrored
        const PosteriorSet post = fit_posteriors({{{-1.0}, 0}, {{1.0}, 1}}, 1e6);
        const auto report = loss_and_grad(post, {{Vec{0.0}, 0, {0, 1}}});
        CHECK(report.per_example_logp[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
        // descending -logp moves z toward the true class mean at -1
        CHECK(report.per_example_dLdz[0][0] > 0.0);
    }
    SUBCASE("worked case loss value") {
        const auto report =
            loss_and_grad(worked_case_posteriors(), {{Vec{1.0}, 0, {0, 1}}});
        CHECK(report.total_loss == doctest::Approx(0.6516).epsilon(1e-3));
    }
    SUBCASE("label outside task classes") {
        const PosteriorSet post = fit_posteriors({{{0.0}, 0}}, 1e6);
        CHECK_THROWS_AS(loss_and_grad(post, {{Vec{1.0}, 2, {0, 1}}}), ContractViolation);
    }
    SUBCASE("matches finite differences in z") {
        Rng rng(71);
        double worst = 0.0;
        const double h = 1e-6;
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t dim = 1 + uniform_index(rng, 4);
            const std::size_t num_classes = 2 + uniform_index(rng, 4);
            const PosteriorSet post =
                fit_posteriors(random_conditioning(rng, dim, num_classes), 1e6);
            std::vector<int> allowed;
            for (std::size_t c = 0; c < num_classes; ++c) allowed.push_back(static_cast<int>(c));
            const int label = static_cast<int>(uniform_index(rng, num_classes));
            Vec z(dim);
            for (auto& v : z) v = 2.0 * normal01(rng);

            const auto report = loss_and_grad(post, {{z, label, allowed}});
            for (std::size_t k = 0; k < dim; ++k) {
                Vec hi = z, lo = z;
                hi[k] += h;
                lo[k] -= h;
                const double fd = (log_predictive(post, hi, allowed).at(label) -
                                   log_predictive(post, lo, allowed).at(label)) /
                                  (2.0 * h);
                const double analytic = -report.per_example_dLdz[0][k];
                worst = std::max(worst,
                                 std::abs(analytic - fd) / std::max(1.0, std::abs(analytic)));
            }
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("predict: argmax and tie breaking") {
    SUBCASE("query at a class mean with equal counts") {
        const PosteriorSet post =
            fit_posteriors({{{0.0, 0.0}, 0}, {{4.0, 0.0}, 1}}, 1e6);
        CHECK(predict(post, {4.0, 0.0}, {0, 1}) == 1);
        CHECK(predict(post, {0.0, 0.0}, {0, 1}) == 0);
    }
    SUBCASE("exact tie goes to the smaller label") {
        const PosteriorSet post =
            fit_posteriors({{{-1.0}, 2}, {{1.0}, 5}}, 1e6);
        CHECK(predict(post, {0.0}, {2, 5}) == 2);
    }
    SUBCASE("worked case prefers class 0") {
        CHECK(predict(worked_case_posteriors(), {1.0}, {0, 1}) == 0);
    }
}
