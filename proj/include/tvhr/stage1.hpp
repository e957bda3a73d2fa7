#ifndef TVHR_STAGE1_HPP
#define TVHR_STAGE1_HPP

#include <string>
#include <vector>

#include "tvhr/network.hpp"
#include "tvhr/pairwise.hpp"
#include "tvhr/study_data.hpp"
#include "tvhr/survival.hpp"

namespace tvhr {

// One study's joint Cox fit in the stage-1 to stage-2 handoff.
struct Stage1StudyFit {
    std::string study;
    std::vector<int> arm_treatments;  // t[i,k]
    int n = 0;
    int events = 0;
    double max_time = 0.0;
    Eigen::VectorXd coefficients;  // per-contrast blocks
    Eigen::MatrixXd covariance;    // joint
    double log_partial_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct Stage1Result {
    CoxModel model = CoxModel::proportional;
    Ties ties = Ties::efron;
    std::vector<std::string> treatments;  // label of index t at [t-1]
    std::vector<Stage1StudyFit> studies;
    std::vector<std::string> skipped;  // studies dropped under skip_failed
};

// Joint per-study fits across the network (runs studies concurrently; results
// are ordered and deterministic). With skip_failed, failing studies are
// recorded and dropped as long as the remaining network stays connected.
Stage1Result stage1_fit_all(const EvidenceNetwork& net, CoxModel model,
                            Ties ties = Ties::efron, bool skip_failed = false);

// Stable JSON serialisation of the handoff (fixed key order).
void write_stage1_json(const Stage1Result& result, const std::string& path);
Stage1Result read_stage1_json(const std::string& path);

// Pairwise view: every study must have exactly two arms.
std::vector<PairwiseEstimate> to_pairwise_estimates(const Stage1Result& result);

// Network view: one stacked contrast block per study.
std::vector<NmaContrast> to_nma_contrasts(const Stage1Result& result);

// Aggregate-estimates CSV for entering at stage 2 without IPD. Columns:
//   univariate: study,y,var
//   bivariate:  study,y1,y2,var1,cov12,var2
std::vector<PairwiseEstimate> read_aggregate_csv(const std::string& path);

}  // namespace tvhr

#endif
