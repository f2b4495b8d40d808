#pragma once

#include <vector>

#include "c2f/matrix.hpp"

namespace c2f {

struct Segment {
    int label = 0;
    int start = 0;  // half-open [start, end)
    int end = 0;
};

std::vector<Segment> to_segments(const std::vector<int>& labels);

// 100 * correct / valid over mask; zero valid frames is an error.
double mof(const std::vector<int>& pred, const std::vector<int>& gt, const Mask& mask);
double mof(const std::vector<int>& pred, const std::vector<int>& gt);

// 100 * (1 - Lev(seg(pred), seg(gt)) / max(len, len)), floored at 0.
double edit_score(const std::vector<int>& pred, const std::vector<int>& gt);

struct F1Result {
    double precision = 0.0;  // percent
    double recall = 0.0;
    double f1 = 0.0;
};

// Segment F1 at IoU threshold tau: per predicted segment, best same-class IoU.
F1Result f1_at(const std::vector<int>& pred, const std::vector<int>& gt, double tau);
F1Result f1_segments(const std::vector<Segment>& pred, const std::vector<Segment>& gt, double tau);

struct CalibrationBin {
    double lo = 0.0;  // interval (lo, hi]
    double hi = 0.0;
    int count = 0;
    double accuracy = 0.0;         // 0 when empty
    double mean_confidence = 0.0;  // 0 when empty
    bool empty = true;

    double midpoint() const { return 0.5 * (lo + hi); }
};

// Equal-width bins P_n = (n/N, (n+1)/N]; confidence 0 lands in the first bin.
std::vector<CalibrationBin> calibration_curve(const std::vector<double>& confidences,
                                              const std::vector<bool>& correct, int bins = 10);

// (midpoint, accuracy - midpoint) pairs for the non-empty bins.
std::vector<std::pair<double, double>> calibration_diff_series(const std::vector<CalibrationBin>& bins);

// Shannon entropy (nats) of each row where pred != gt.
std::vector<double> wrong_prediction_entropy(const Matrix& p, const std::vector<int>& pred,
                                             const std::vector<int>& gt);

double entropy_nats(const double* row, int n);

}  // namespace c2f
