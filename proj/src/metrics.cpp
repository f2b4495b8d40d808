#include "c2f/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "c2f/errors.hpp"

namespace c2f {

std::vector<Segment> to_segments(const std::vector<int>& labels) {
    std::vector<Segment> segs;
    const int T = static_cast<int>(labels.size());
    for (int t = 0; t < T;) {
        int s = t;
        while (t < T && labels[t] == labels[s]) ++t;
        segs.push_back({labels[s], s, t});
    }
    return segs;
}

double mof(const std::vector<int>& pred, const std::vector<int>& gt, const Mask& mask) {
    if (pred.size() != gt.size() || pred.size() != mask.size()) throw ShapeError("mof: length mismatch");
    long long valid = 0, correct = 0;
    for (size_t t = 0; t < pred.size(); ++t) {
        if (!mask[t]) continue;
        ++valid;
        if (pred[t] == gt[t]) ++correct;
    }
    if (valid == 0) throw ValidationError("mof: no valid frames");
    return 100.0 * static_cast<double>(correct) / static_cast<double>(valid);
}

double mof(const std::vector<int>& pred, const std::vector<int>& gt) {
    return mof(pred, gt, ones_mask(pred.size()));
}

namespace {

int levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
    const int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
    std::vector<int> prev(m + 1), cur(m + 1);
    for (int j = 0; j <= m; ++j) prev[j] = j;
    for (int i = 1; i <= n; ++i) {
        cur[0] = i;
        for (int j = 1; j <= m; ++j) {
            int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

std::vector<int> segment_labels(const std::vector<Segment>& segs) {
    std::vector<int> out;
    out.reserve(segs.size());
    for (const auto& s : segs) out.push_back(s.label);
    return out;
}

}  // namespace

double edit_score(const std::vector<int>& pred, const std::vector<int>& gt) {
    if (pred.empty() || gt.empty()) throw ValidationError("edit_score: empty label sequence");
    auto sp = segment_labels(to_segments(pred));
    auto sg = segment_labels(to_segments(gt));
    int dist = levenshtein(sp, sg);
    double denom = static_cast<double>(std::max(sp.size(), sg.size()));
    return std::max(0.0, 100.0 * (1.0 - dist / denom));
}

F1Result f1_at(const std::vector<int>& pred, const std::vector<int>& gt, double tau) {
    if (pred.size() != gt.size()) throw ShapeError("f1_at: length mismatch");
    return f1_segments(to_segments(pred), to_segments(gt), tau);
}

F1Result f1_segments(const std::vector<Segment>& ps, const std::vector<Segment>& gs, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("f1_at: tau must lie in (0, 1)");
    std::vector<bool> used(gs.size(), false);
    int tp = 0, fp = 0;
    for (const auto& p : ps) {
        int best = -1;
        double best_iou = -1.0;
        for (size_t j = 0; j < gs.size(); ++j) {
            if (gs[j].label != p.label) continue;
            int inter = std::min(p.end, gs[j].end) - std::max(p.start, gs[j].start);
            if (inter < 0) inter = 0;
            int uni = (p.end - p.start) + (gs[j].end - gs[j].start) - inter;
            double iou = uni > 0 ? static_cast<double>(inter) / uni : 0.0;
            if (iou > best_iou) {
                best_iou = iou;
                best = static_cast<int>(j);
            }
        }
        if (best >= 0 && best_iou >= tau && !used[best]) {
            used[best] = true;
            ++tp;
        } else {
            ++fp;
        }
    }
    int fn = 0;
    for (bool u : used)
        if (!u) ++fn;
    F1Result r;
    r.precision = (tp + fp) > 0 ? 100.0 * tp / (tp + fp) : 0.0;
    r.recall = (tp + fn) > 0 ? 100.0 * tp / (tp + fn) : 0.0;
    r.f1 = (r.precision + r.recall) > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

std::vector<CalibrationBin> calibration_curve(const std::vector<double>& confidences,
                                              const std::vector<bool>& correct, int bins) {
    if (bins < 2) throw ValidationError("calibration_curve: need at least 2 bins");
    if (confidences.size() != correct.size()) throw ShapeError("calibration_curve: length mismatch");
    std::vector<CalibrationBin> out(bins);
    std::vector<double> conf_sum(bins, 0.0);
    std::vector<int> hits(bins, 0);
    for (int n = 0; n < bins; ++n) {
        out[n].lo = static_cast<double>(n) / bins;
        out[n].hi = static_cast<double>(n + 1) / bins;
    }
    for (size_t i = 0; i < confidences.size(); ++i) {
        double c = confidences[i];
        if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("calibration_curve: confidence outside [0, 1]");
        // Bins are (n/N, (n+1)/N]; confidence 0 goes to the first bin.
        int n = static_cast<int>(std::ceil(c * bins)) - 1;
        n = std::clamp(n, 0, bins - 1);
        ++out[n].count;
        conf_sum[n] += c;
        if (correct[i]) ++hits[n];
    }
    for (int n = 0; n < bins; ++n) {
        if (out[n].count > 0) {
            out[n].empty = false;
            out[n].accuracy = static_cast<double>(hits[n]) / out[n].count;
            out[n].mean_confidence = conf_sum[n] / out[n].count;
        }
    }
    return out;
}

std::vector<std::pair<double, double>> calibration_diff_series(const std::vector<CalibrationBin>& bins) {
    std::vector<std::pair<double, double>> out;
    for (const auto& b : bins)
        if (!b.empty) out.emplace_back(b.midpoint(), b.accuracy - b.midpoint());
    return out;
}

double entropy_nats(const double* row, int n) {
    double h = 0.0;
    for (int c = 0; c < n; ++c)
        if (row[c] > 0.0) h -= row[c] * std::log(row[c]);
    return h;
}

std::vector<double> wrong_prediction_entropy(const Matrix& p, const std::vector<int>& pred,
                                             const std::vector<int>& gt) {
    if (static_cast<int>(pred.size()) != p.rows || pred.size() != gt.size())
        throw ShapeError("wrong_prediction_entropy: length mismatch");
    std::vector<double> out;
    for (int t = 0; t < p.rows; ++t)
        if (pred[t] != gt[t]) out.push_back(entropy_nats(p.row(t), p.cols));
    return out;
}

}  // namespace c2f
