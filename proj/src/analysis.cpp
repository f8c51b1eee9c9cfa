#include "fedlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fedlab::analysis {

void MajorityQuery::validate() const {
    if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidInput("rho must be in [0, 1]");
    if (sampled == 0) throw InvalidInput("sampled clients C must be positive");
    if (sampled > clients) throw InvalidInput("sampled clients C must not exceed total clients N");
}

BoundValue chernoff_majority_bound(const MajorityQuery& q) {
    q.validate();
    if (q.rho == 0.0) return {0.0, true};
    if (q.rho == 1.0) return {1.0, true};
    const double base = 4.0 * q.rho * (1.0 - q.rho);
    const double v = 1.0 - std::pow(base, static_cast<double>(q.sampled) / 2.0);
    return {std::clamp(v, 0.0, 1.0), false};
}

namespace {

double log_choose(double n, double k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

double exact_majority_prob(const MajorityQuery& q, SamplingModel model) {
    q.validate();
    const std::size_t C = q.sampled;
    const std::size_t threshold = (C + 1) / 2;  // M >= C/2
    double total = 0.0;

    if (model == SamplingModel::Binomial) {
        if (q.rho == 0.0) return threshold == 0 ? 1.0 : 0.0;
        if (q.rho == 1.0) return 1.0;
        const double lr = std::log(q.rho), lq = std::log1p(-q.rho);
        for (std::size_t k = threshold; k <= C; ++k) {
            const double kk = static_cast<double>(k);
            total += std::exp(log_choose(double(C), kk) + kk * lr + (double(C) - kk) * lq);
        }
        return std::clamp(total, 0.0, 1.0);
    }

    const std::size_t N = q.clients;
    const auto K = static_cast<std::size_t>(std::floor(q.rho * static_cast<double>(N) + 0.5 + 1e-9));
    const std::size_t lo = std::max(threshold, C > N - K ? C - (N - K) : std::size_t{0});
    const std::size_t hi = std::min(C, K);
    const double log_denom = log_choose(double(N), double(C));
    for (std::size_t k = lo; k <= hi; ++k) {
        total += std::exp(log_choose(double(K), double(k)) + log_choose(double(N - K), double(C - k)) - log_denom);
    }
    return std::clamp(total, 0.0, 1.0);
}

double standard_normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double normal_majority_approx(const MajorityQuery& q) {
    q.validate();
    return standard_normal_cdf(std::sqrt(static_cast<double>(q.sampled)) * (2.0 * q.rho - 1.0));
}

double mta(const nn::Classifier& model, const LabeledDataset& test) {
    if (test.empty()) throw InvalidInput("mta: empty test set");
    const auto pred = model.predict(test.inputs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test.labels[i];
    return static_cast<double>(correct) / static_cast<double>(pred.size());
}

double asr(const nn::Classifier& model, const LabeledDataset& triggered, int target) {
    if (triggered.empty()) throw InvalidInput("asr: empty triggered set");
    const auto pred = model.predict(triggered.inputs);
    const auto hits = std::count(pred.begin(), pred.end(), target);
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

ConsistencyStat consistency_stat(std::span<const fl::RoundRecord> records, double lambda) {
    ConsistencyStat out;
    for (const auto& r : records) {
        if (r.mta < lambda) continue;
        ++out.qualifying_rounds;
        out.min_asr = out.min_asr ? std::min(*out.min_asr, r.asr) : r.asr;
    }
    return out;
}

}  // namespace fedlab::analysis
