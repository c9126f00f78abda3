#pragma once

#include <vector>

namespace palette {

// Fraction of matching entries.
double metric_accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

// Matthews correlation over binary predictions/labels (values in {0,1});
// returns 0 when any marginal of the confusion matrix is empty.
double metric_matthews(const std::vector<int>& preds, const std::vector<int>& labels);

// Pearson correlation; needs at least two points, returns 0 by convention
// when either vector is constant.
double metric_pearson(const std::vector<double>& preds, const std::vector<double>& labels);

}  // namespace palette
