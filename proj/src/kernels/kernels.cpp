#include "tvhr/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace tvhr::kernels {

namespace scalar {

double sum(std::span<const double> x) {
    double acc = 0.0;
    for (double v : x) acc += v;
    return acc;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double sumsq_centered(std::span<const double> x, double center) {
    double acc = 0.0;
    for (double v : x) {
        const double d = v - center;
        acc += d * d;
    }
    return acc;
}

std::size_t count_greater(std::span<const double> x, double threshold) {
    std::size_t n = 0;
    for (double v : x) n += (v > threshold) ? 1 : 0;
    return n;
}

void affine(std::span<const double> a, std::span<const double> b, double scale,
            std::span<double> out) {
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + scale * b[i];
}

void vexp(std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::exp(x[i]);
}

void affine_exp(std::span<const double> a, std::span<const double> b,
                double scale, std::span<double> out) {
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = std::exp(a[i] + scale * b[i]);
}

void argmin_update(std::span<const double> vals, std::span<double> best_val,
                   std::span<std::int32_t> best_idx, std::int32_t idx) {
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (vals[i] < best_val[i]) {
            best_val[i] = vals[i];
            best_idx[i] = idx;
        }
    }
}

void add_less_indicator(std::span<const double> challenger,
                        std::span<const double> incumbent,
                        bool challenger_wins_ties,
                        std::span<std::int32_t> acc) {
    if (challenger_wins_ties) {
        for (std::size_t i = 0; i < challenger.size(); ++i)
            acc[i] += (challenger[i] <= incumbent[i]) ? 1 : 0;
    } else {
        for (std::size_t i = 0; i < challenger.size(); ++i)
            acc[i] += (challenger[i] < incumbent[i]) ? 1 : 0;
    }
}

}  // namespace scalar

namespace {

bool cpu_has_avx2() {
#if defined(TVHR_HAVE_AVX2) && defined(__GNUC__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend initial_backend() {
    Backend widest = cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
    if (const char* env = std::getenv("TVHR_KERNELS")) {
        const std::string s(env);
        if (s == "scalar") return Backend::scalar;
        if (s == "avx2" && cpu_has_avx2()) return Backend::avx2;
        // "auto" or anything unusable falls through to the widest available
    }
    return widest;
}

std::atomic<Backend> g_backend{initial_backend()};

}  // namespace

const char* backend_name(Backend b) {
    return b == Backend::avx2 ? "avx2" : "scalar";
}

bool backend_available(Backend b) {
    if (b == Backend::scalar) return true;
    return cpu_has_avx2();
}

Backend active_backend() { return g_backend.load(std::memory_order_relaxed); }

void set_backend(Backend b) {
    if (!backend_available(b))
        throw std::runtime_error(std::string("kernel backend not available: ") +
                                 backend_name(b));
    g_backend.store(b, std::memory_order_relaxed);
}

Backend resolve_backend(const std::string& name) {
    if (name == "scalar") return Backend::scalar;
    if (name == "avx2") {
        if (!backend_available(Backend::avx2))
            throw std::runtime_error("kernel backend not available: avx2");
        return Backend::avx2;
    }
    if (name == "auto" || name.empty())
        return backend_available(Backend::avx2) ? Backend::avx2
                                                : Backend::scalar;
    throw std::runtime_error("unknown kernel backend: " + name);
}

#if defined(TVHR_HAVE_AVX2)
#define TVHR_DISPATCH(fn, ...)                                 \
    (active_backend() == Backend::avx2 ? avx2::fn(__VA_ARGS__) \
                                       : scalar::fn(__VA_ARGS__))
#else
#define TVHR_DISPATCH(fn, ...) scalar::fn(__VA_ARGS__)
#endif

double sum(std::span<const double> x) { return TVHR_DISPATCH(sum, x); }

double dot(std::span<const double> a, std::span<const double> b) {
    return TVHR_DISPATCH(dot, a, b);
}

double sumsq_centered(std::span<const double> x, double center) {
    return TVHR_DISPATCH(sumsq_centered, x, center);
}

std::size_t count_greater(std::span<const double> x, double threshold) {
    return TVHR_DISPATCH(count_greater, x, threshold);
}

void affine(std::span<const double> a, std::span<const double> b, double scale,
            std::span<double> out) {
    TVHR_DISPATCH(affine, a, b, scale, out);
}

void vexp(std::span<const double> x, std::span<double> out) {
    TVHR_DISPATCH(vexp, x, out);
}

void affine_exp(std::span<const double> a, std::span<const double> b,
                double scale, std::span<double> out) {
    TVHR_DISPATCH(affine_exp, a, b, scale, out);
}

void argmin_update(std::span<const double> vals, std::span<double> best_val,
                   std::span<std::int32_t> best_idx, std::int32_t idx) {
    TVHR_DISPATCH(argmin_update, vals, best_val, best_idx, idx);
}

void add_less_indicator(std::span<const double> challenger,
                        std::span<const double> incumbent,
                        bool challenger_wins_ties,
                        std::span<std::int32_t> acc) {
    TVHR_DISPATCH(add_less_indicator, challenger, incumbent,
                  challenger_wins_ties, acc);
}

#undef TVHR_DISPATCH

}  // namespace tvhr::kernels
