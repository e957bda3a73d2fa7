#ifndef TVHR_TESTS_ORACLES_HPP
#define TVHR_TESTS_ORACLES_HPP

// Independent reference implementations used as oracles. Everything here works
// record by record on (start, stop] risk sets with explicit covariate vectors,
// deliberately avoiding the per-arm counting shortcut the library uses, so the
// two routes only agree if both are right.

#include <Eigen/Dense>
#include <vector>

#include "tvhr/rng.hpp"
#include "tvhr/study_data.hpp"

namespace oracle {

struct Record {
    double start = 0.0;  // risk begins strictly after this time
    double stop = 0.0;   // under observation up to and including this time
    int event = 0;
    std::vector<double> z;  // fixed covariates
};

// Efron partial log-likelihood, score and information by direct summation
// over risk sets at each distinct event time.
void efron_derivs(const std::vector<Record>& data, const Eigen::VectorXd& beta,
                  double& loglik, Eigen::VectorXd& grad, Eigen::MatrixXd& info);

double efron_loglik(const std::vector<Record>& data, const Eigen::VectorXd& beta);

// Newton maximisation of the record-based partial likelihood; covariance is
// the inverse information at the maximum.
Eigen::VectorXd newton_fit(const std::vector<Record>& data, Eigen::MatrixXd* cov);

// Golden-section maximisation of the one-covariate Efron partial likelihood
// over [-15, 15], refined to ~1e-9.
double cox_1d_mle(const std::vector<Record>& data);

// Counting-process expansion of a study: one record per subject and
// at-risk interval, split at every distinct event time, with covariates
// (arm indicators, arm indicators x log(interval end)).
std::vector<Record> expand_tvhr(const tvhr::StudyDataset& study);

// Plain records (start = 0) with arm-indicator covariates only.
std::vector<Record> ph_records(const tvhr::StudyDataset& study);

// Simulation with hazard lambda0 * exp((b1 + b2 log t) x) for the treated arm
// and lambda0 for control; exponential censoring at rate censor_rate, capped
// at admin_censor years. Treatments are labelled 1 (control) and 2.
tvhr::StudyDataset simulate_tvhr_study(tvhr::RngStream& rng, int n_per_arm,
                                       double lambda0, double b1, double b2,
                                       double censor_rate, double admin_censor,
                                       const std::string& id = "sim");

// Small random two-arm dataset with mixed censoring and occasional ties;
// regenerates until every arm has an event and, when require_two_event_times,
// at least two distinct event times exist.
tvhr::StudyDataset random_small_study(tvhr::RngStream& rng, int max_n,
                                      bool allow_ties, bool require_two_event_times,
                                      const std::string& id = "rnd");

// Random multi-arm dataset (2 or 3 arms) for the joint-fit equivalence checks.
tvhr::StudyDataset random_multiarm_study(tvhr::RngStream& rng, int max_n, int arms,
                                         const std::string& id = "rnd");

// Product-limit survival recomputed directly from sorted copies.
std::vector<std::pair<double, double>> km_brute_force(
    const tvhr::StudyDataset& study, int treatment);

}  // namespace oracle

#endif
