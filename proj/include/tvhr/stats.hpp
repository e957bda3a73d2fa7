#ifndef TVHR_STATS_HPP
#define TVHR_STATS_HPP

#include <span>
#include <vector>

namespace tvhr {

struct Summary {
    double mean = 0;
    double sd = 0;
    double median = 0;
    double lo95 = 0;  // 2.5% quantile
    double hi95 = 0;  // 97.5% quantile
    std::size_t n = 0;
};

// Mean/sd via the kernel reductions, quantiles by sorting a copy.
Summary summarize(std::span<const double> draws);

// Linear-interpolation quantile (R type 7) on an already sorted vector.
double quantile_sorted(std::span<const double> sorted, double p);

double mean(std::span<const double> x);
double variance(std::span<const double> x);  // sample variance, n-1

// Standard normal quantile function (Wichura's PPND16 / AS 241).
double normal_quantile(double p);

// Standard normal CDF.
double normal_cdf(double x);

// Regularized incomplete gamma functions P(a,x), Q(a,x) = 1 - P(a,x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Upper tail of the chi-square distribution with df degrees of freedom.
double chisq_sf(double x, double df);

// Average ranks (1-based, ties get the mean of their positions).
std::vector<double> average_ranks(std::span<const double> x);

}  // namespace tvhr

#endif
