#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedlab/dataset.hpp"
#include "fedlab/federation.hpp"
#include "fedlab/nn.hpp"

namespace fedlab::analysis {

/// Fraction rho of N clients is malicious; C are drawn per round.
struct MajorityQuery {
    double rho = 0;
    std::size_t sampled = 1;
    std::size_t clients = 1;

    void validate() const;
};

enum class SamplingModel { Binomial, Hypergeometric };

struct BoundValue {
    double value = 0;
    /// Set when rho sat on {0, 1} and the value came from the continuity convention.
    bool degenerate = false;
};

/// 1 - (4 rho (1 - rho))^(C/2), clamped to [0, 1]. rho = 0 and rho = 1 map to
/// 0 and 1 respectively.
BoundValue chernoff_majority_bound(const MajorityQuery& q);

/// P(M >= C/2), i.e. M >= ceil(C/2). Binomial: M ~ Bin(C, rho). Hypergeometric:
/// C drawn without replacement from N containing round(rho N) malicious clients.
double exact_majority_prob(const MajorityQuery& q, SamplingModel model);

/// Phi(sqrt(C) (2 rho - 1)); approximates the strict-majority probability P(M > B).
double normal_majority_approx(const MajorityQuery& q);

double standard_normal_cdf(double x);

/// Top-1 accuracy on clean data.
double mta(const nn::Classifier& model, const LabeledDataset& test);

/// Fraction of triggered inputs classified as `target`.
double asr(const nn::Classifier& model, const LabeledDataset& triggered, int target);

struct ConsistencyStat {
    /// Empty when no round reached the MTA threshold.
    std::optional<double> min_asr;
    std::size_t qualifying_rounds = 0;
};

/// K = {t : MTA_t >= lambda}; returns min ASR over K and |K|.
ConsistencyStat consistency_stat(std::span<const fl::RoundRecord> records, double lambda);

struct GridCell {
    std::string id;
    nn::TrainingConfig training;
    double mta = 0;
    double asr = 0;
    bool danger = false;
    std::string error;
};

struct DangerZoneReport {
    std::vector<GridCell> grid;
    std::vector<GridCell> zones;
    double lambda = 0.8;
    double tau = 0.85;
};

}  // namespace fedlab::analysis
