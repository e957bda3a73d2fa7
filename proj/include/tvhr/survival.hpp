#ifndef TVHR_SURVIVAL_HPP
#define TVHR_SURVIVAL_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "tvhr/study_data.hpp"

namespace tvhr {

enum class CoxModel { proportional, tvhr };
enum class Ties { efron, breslow };

const char* cox_model_name(CoxModel m);

// Product-limit estimate for one arm; values at the distinct event times.
struct KMCurve {
    int treatment = 0;
    std::vector<double> event_times;  // ascending
    std::vector<double> survival;     // step value at each event time
    std::vector<int> at_risk;         // risk-set size just before each event time
    std::vector<int> events;          // deaths at each event time
};

std::vector<KMCurve> km_estimate(const StudyDataset& study);

// Maximum-partial-likelihood fit over all study arms jointly. Coefficients are
// laid out per contrast (arm k vs the study reference), one term for the
// proportional model and (effect, effect x log-time) pairs for the
// time-varying model. The covariance is the inverse observed information.
struct CoxFit {
    CoxModel model = CoxModel::proportional;
    Ties ties = Ties::efron;
    int reference_treatment = 0;
    std::vector<int> contrast_treatments;  // treatment index per contrast
    std::vector<std::string> term_names;
    Eigen::VectorXd coefficients;
    Eigen::MatrixXd covariance;
    double log_partial_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
    int n_records = 0;
    int n_events = 0;
    double max_time = 0.0;

    int n_contrasts() const { return static_cast<int>(contrast_treatments.size()); }
    int terms_per_contrast() const { return model == CoxModel::tvhr ? 2 : 1; }
};

// Joint fit across every arm of the study (k-1 contrasts against arms[0]).
CoxFit fit_cox(const StudyDataset& study, CoxModel model, Ties ties = Ties::efron);

// Two-arm contrast: log hazard ratio of `treatment` relative to `control`.
CoxFit fit_cox_pair(const StudyDataset& study, int treatment, int control,
                    CoxModel model, Ties ties = Ties::efron);

// Hazard ratio at time t (years) with a delta-method CI; time-varying fits
// use exp(b1 + b2 log t), proportional fits are flat in t.
struct HrEstimate {
    double time = 0.0;
    double log_hr = 0.0;
    double se = 0.0;
    double hr = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

HrEstimate hr_at_time(const CoxFit& fit, double t, int contrast = 1);

// Score test of a treatment x log(time) trend in the Schoenfeld residuals of a
// proportional-hazards fit, per covariate and globally.
struct PHTestResult {
    struct Test {
        std::string name;
        double chisq = 0.0;
        int df = 0;
        double p = 1.0;
    };
    std::vector<Test> per_covariate;
    Test global;
    // one row per death: event time + scaled residual per covariate
    std::vector<double> residual_times;
    Eigen::MatrixXd scaled_residuals;
};

PHTestResult schoenfeld_test(const StudyDataset& study, const CoxFit& fit);

}  // namespace tvhr

#endif
