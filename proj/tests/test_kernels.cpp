#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "tvhr/kernels.hpp"
#include "tvhr/rng.hpp"

using namespace tvhr;

TEST_SUITE_BEGIN("kernels");

namespace {

std::vector<double> random_vec(std::size_t n, RngStream& rng, double lo = -30.0,
                               double hi = 30.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.runif(lo, hi);
    return v;
}

// awkward lengths around the 4-lane width
const std::size_t kLengths[] = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 33, 1000, 1021};

}  // namespace

TEST_CASE("backend report") {
    CHECK(kernels::backend_available(kernels::Backend::scalar));
    CHECK(kernels::resolve_backend("scalar") == kernels::Backend::scalar);
    CHECK_THROWS(kernels::resolve_backend("nonsense"));
}

TEST_CASE("active backend equivalence on reductions") {
    RngStream rng(42, 0);
    for (std::size_t n : kLengths) {
        const auto a = random_vec(n, rng);
        const auto b = random_vec(n, rng);
        const double s_ref = kernels::scalar::sum(a);
        const double d_ref = kernels::scalar::dot(a, b);
        const double q_ref = kernels::scalar::sumsq_centered(a, 1.25);
        const double s = kernels::sum(a);
        const double d = kernels::dot(a, b);
        const double q = kernels::sumsq_centered(a, 1.25);
        const double tol = 1e-12 * (1.0 + static_cast<double>(n));
        CHECK(std::fabs(s - s_ref) <= tol * (1.0 + std::fabs(s_ref)));
        CHECK(std::fabs(d - d_ref) <= tol * (1.0 + std::fabs(d_ref)));
        CHECK(std::fabs(q - q_ref) <= tol * (1.0 + std::fabs(q_ref)));
        CHECK(kernels::count_greater(a, 0.0) == kernels::scalar::count_greater(a, 0.0));
    }
}

TEST_CASE("affine and exponential maps match the scalar reference") {
    RngStream rng(43, 0);
    for (std::size_t n : kLengths) {
        const auto a = random_vec(n, rng, -3.0, 3.0);
        const auto b = random_vec(n, rng, -3.0, 3.0);
        std::vector<double> out(n), ref(n);

        kernels::affine(a, b, 0.7, out);
        kernels::scalar::affine(a, b, 0.7, ref);
        for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-15));

        kernels::vexp(a, out);
        kernels::scalar::vexp(a, ref);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::fabs(out[i] - ref[i]) <= 1e-14 * ref[i]);
        }

        kernels::affine_exp(a, b, -0.4, out);
        kernels::scalar::affine_exp(a, b, -0.4, ref);
        for (std::size_t i = 0; i < n; ++i)
            CHECK(std::fabs(out[i] - ref[i]) <= 2e-14 * ref[i]);
    }
}

TEST_CASE("vexp handles the saturation edges") {
    const std::vector<double> x = {-1000.0, -745.0, -708.3, -60.0, 0.0,
                                   1.0,     60.0,   709.0,  710.0, 1000.0};
    std::vector<double> out(x.size());
    kernels::vexp(x, out);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double ref = std::exp(x[i]);
        if (std::isinf(ref)) {
            CHECK(std::isinf(out[i]));
        } else if (ref < 1e-300) {
            CHECK(out[i] <= 1e-300);  // denormal range may flush to zero
        } else {
            CHECK(std::fabs(out[i] - ref) <= 1e-13 * ref);
        }
    }
}

TEST_CASE("argmin_update tracks the running minimum with index tie-breaks") {
    RngStream rng(44, 0);
    for (std::size_t n : kLengths) {
        if (n == 0) continue;
        std::vector<double> best(n, std::numeric_limits<double>::infinity());
        std::vector<double> best_ref(best);
        std::vector<std::int32_t> idx(n, 0), idx_ref(n, 0);
        for (std::int32_t t = 1; t <= 5; ++t) {
            auto vals = random_vec(n, rng, -2.0, 2.0);
            if (t == 3) vals = random_vec(n, rng, -2.0, 2.0);
            kernels::argmin_update(vals, best, idx, t);
            kernels::scalar::argmin_update(vals, best_ref, idx_ref, t);
        }
        CHECK(best == best_ref);
        CHECK(idx == idx_ref);
    }
}

TEST_CASE("argmin ties keep the earlier index") {
    std::vector<double> best(3, std::numeric_limits<double>::infinity());
    std::vector<std::int32_t> idx(3, 0);
    const std::vector<double> v1 = {1.0, 2.0, 3.0};
    const std::vector<double> v2 = {1.0, 1.0, 4.0};  // tie in lane 0
    kernels::argmin_update(v1, best, idx, 1);
    kernels::argmin_update(v2, best, idx, 2);
    CHECK(idx[0] == 1);  // tie stays with the first index
    CHECK(idx[1] == 2);
    CHECK(idx[2] == 1);
}

TEST_CASE("add_less_indicator counts wins and honours the tie flag") {
    RngStream rng(45, 0);
    for (std::size_t n : kLengths) {
        if (n == 0) continue;
        auto a = random_vec(n, rng);
        auto b = random_vec(n, rng);
        if (n > 2) b[1] = a[1];  // force a tie lane
        std::vector<std::int32_t> acc(n, 0), acc_ref(n, 0);
        kernels::add_less_indicator(a, b, false, acc);
        kernels::scalar::add_less_indicator(a, b, false, acc_ref);
        CHECK(acc == acc_ref);
        kernels::add_less_indicator(a, b, true, acc);
        kernels::scalar::add_less_indicator(a, b, true, acc_ref);
        CHECK(acc == acc_ref);
        if (n > 2) {
            // the tie lane differs exactly by the tie flag
            std::vector<std::int32_t> strict(n, 0), weak(n, 0);
            kernels::add_less_indicator(a, b, false, strict);
            kernels::add_less_indicator(a, b, true, weak);
            CHECK(weak[1] == strict[1] + 1);
        }
    }
}

#if defined(__x86_64__)
TEST_CASE("explicit backend switch produces consistent results") {
    if (!kernels::backend_available(kernels::Backend::avx2)) return;
    RngStream rng(46, 0);
    const auto a = random_vec(1003, rng, -5.0, 5.0);
    std::vector<double> out_scalar(a.size()), out_avx(a.size());
    const auto saved = kernels::active_backend();
    kernels::set_backend(kernels::Backend::scalar);
    kernels::vexp(a, out_scalar);
    kernels::set_backend(kernels::Backend::avx2);
    kernels::vexp(a, out_avx);
    kernels::set_backend(saved);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(std::fabs(out_avx[i] - out_scalar[i]) <= 1e-14 * out_scalar[i]);
}
#endif

TEST_SUITE_END();
