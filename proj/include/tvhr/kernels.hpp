#ifndef TVHR_KERNELS_HPP
#define TVHR_KERNELS_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

// Data-parallel inner loops used by the draw post-processing and the chain
// diagnostics: reductions over retained MCMC draws, elementwise hazard-ratio
// maps, and rank/argmin tallies. Every operation has a scalar reference
// implementation and (on x86-64) an AVX2 variant; the active variant is picked
// at runtime and the two are equivalence-tested against each other.
//
// Contract: inputs are finite doubles (model invariants guarantee this for
// retained draws). vexp/affine_exp saturate to 0 / +inf outside the double
// exponential range instead of producing denormals.

namespace tvhr::kernels {

enum class Backend { scalar, avx2 };

const char* backend_name(Backend b);

// True if the running CPU (and this build) can execute the given backend.
bool backend_available(Backend b);

// Active backend; defaults to the widest available one, overridable through
// set_backend() or the TVHR_KERNELS environment variable (scalar|avx2|auto).
Backend active_backend();
void set_backend(Backend b);

// Parse "scalar" / "avx2" / "auto" (auto = widest available).
Backend resolve_backend(const std::string& name);

// --- reductions ---------------------------------------------------------

double sum(std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);

// sum of (x[i] - center)^2
double sumsq_centered(std::span<const double> x, double center);

// number of elements strictly greater than the threshold
std::size_t count_greater(std::span<const double> x, double threshold);

// --- elementwise maps ----------------------------------------------------

// out[i] = a[i] + scale * b[i]
void affine(std::span<const double> a, std::span<const double> b, double scale,
            std::span<double> out);

// out[i] = exp(x[i])
void vexp(std::span<const double> x, std::span<double> out);

// out[i] = exp(a[i] + scale * b[i])
void affine_exp(std::span<const double> a, std::span<const double> b,
                double scale, std::span<double> out);

// --- rank / argmin tallies ------------------------------------------------

// Running elementwise argmin: where vals[i] < best_val[i], set
// best_val[i] = vals[i] and best_idx[i] = idx. Strict comparison, so feeding
// candidates in ascending idx order breaks exact ties toward the lower index.
void argmin_update(std::span<const double> vals, std::span<double> best_val,
                   std::span<std::int32_t> best_idx, std::int32_t idx);

// acc[i] += (challenger[i] < incumbent[i]), with ties counting for the
// challenger when challenger_wins_ties is set. Used to tally per-draw ranks.
void add_less_indicator(std::span<const double> challenger,
                        std::span<const double> incumbent,
                        bool challenger_wins_ties,
                        std::span<std::int32_t> acc);

// Scalar reference implementations, callable directly (the equivalence tests
// compare these against whatever backend is active).
namespace scalar {
double sum(std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);
double sumsq_centered(std::span<const double> x, double center);
std::size_t count_greater(std::span<const double> x, double threshold);
void affine(std::span<const double> a, std::span<const double> b, double scale,
            std::span<double> out);
void vexp(std::span<const double> x, std::span<double> out);
void affine_exp(std::span<const double> a, std::span<const double> b,
                double scale, std::span<double> out);
void argmin_update(std::span<const double> vals, std::span<double> best_val,
                   std::span<std::int32_t> best_idx, std::int32_t idx);
void add_less_indicator(std::span<const double> challenger,
                        std::span<const double> incumbent,
                        bool challenger_wins_ties,
                        std::span<std::int32_t> acc);
}  // namespace scalar

#if defined(TVHR_HAVE_AVX2)
namespace avx2 {
double sum(std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);
double sumsq_centered(std::span<const double> x, double center);
std::size_t count_greater(std::span<const double> x, double threshold);
void affine(std::span<const double> a, std::span<const double> b, double scale,
            std::span<double> out);
void vexp(std::span<const double> x, std::span<double> out);
void affine_exp(std::span<const double> a, std::span<const double> b,
                double scale, std::span<double> out);
void argmin_update(std::span<const double> vals, std::span<double> best_val,
                   std::span<std::int32_t> best_idx, std::int32_t idx);
void add_less_indicator(std::span<const double> challenger,
                        std::span<const double> incumbent,
                        bool challenger_wins_ties,
                        std::span<std::int32_t> acc);
}  // namespace avx2
#endif

}  // namespace tvhr::kernels

#endif
