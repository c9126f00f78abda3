#include "palette/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace palette {

double metric_accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    if (preds.size() != labels.size() || preds.empty()) {
        throw std::invalid_argument("accuracy: need equal, non-empty prediction/label vectors");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        correct += (preds[i] == labels[i]);
    }
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double metric_matthews(const std::vector<int>& preds, const std::vector<int>& labels) {
    if (preds.size() != labels.size() || preds.empty()) {
        throw std::invalid_argument("matthews: need equal, non-empty prediction/label vectors");
    }
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] != 0 && preds[i] != 1) {
            throw std::invalid_argument("matthews: predictions must be binary, got " +
                                        std::to_string(preds[i]));
        }
        if (labels[i] != 0 && labels[i] != 1) {
            throw std::invalid_argument("matthews: labels must be binary, got " +
                                        std::to_string(labels[i]));
        }
        if (preds[i] == 1) {
            (labels[i] == 1 ? tp : fp) += 1;
        } else {
            (labels[i] == 0 ? tn : fn) += 1;
        }
    }
    const double denom2 = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (denom2 == 0.0) return 0.0;
    return (tp * tn - fp * fn) / std::sqrt(denom2);
}

double metric_pearson(const std::vector<double>& preds, const std::vector<double>& labels) {
    if (preds.size() != labels.size()) {
        throw std::invalid_argument("pearson: prediction/label length mismatch");
    }
    if (preds.size() < 2) {
        throw std::invalid_argument("pearson: need at least 2 points");
    }
    const double n = static_cast<double>(preds.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        mx += preds[i];
        my += labels[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double dx = preds[i] - mx;
        const double dy = labels[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace palette
