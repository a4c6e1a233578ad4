#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace tablefuse {

inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size() || truth.empty())
        throw std::invalid_argument("accuracy needs equal-length non-empty inputs");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (predicted[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

inline double rmse(const std::vector<double>& predicted, const std::vector<double>& truth) {
    if (predicted.size() != truth.size() || truth.empty())
        throw std::invalid_argument("rmse needs equal-length non-empty inputs");
    double sq = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = predicted[i] - truth[i];
        sq += d * d;
    }
    return std::sqrt(sq / static_cast<double>(truth.size()));
}

// AUC via the Mann-Whitney rank statistic with ties counted half. Equals
// all-pairs counting: P(score_pos > score_neg) + P(equal)/2.
inline double auc_rank(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("auc needs equal-length non-empty inputs");
    std::size_t n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw std::invalid_argument("auc labels must be 0 or 1");
        n_pos += static_cast<std::size_t>(l);
    }
    const std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("auc undefined with a single class");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average ranks over tie groups (1-based ranks).
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
        i = j + 1;
    }
    const double n_pos_d = static_cast<double>(n_pos);
    return (pos_rank_sum - n_pos_d * (n_pos_d + 1.0) / 2.0) /
           (n_pos_d * static_cast<double>(n_neg));
}

}  // namespace tablefuse
