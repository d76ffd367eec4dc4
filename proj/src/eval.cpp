#include "ulab/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace ulab {

double accuracy(const Mlp& m, const Batch& split) {
    if (split.empty()) throw InputError("accuracy: empty split");
    Tensor logits = forward(m, split.x);
    std::size_t c = logits.cols(), correct = 0;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (argmax_row(&logits.values[i * c], c) == static_cast<std::size_t>(split.y[i]))
            ++correct;
    return 100.0 * static_cast<double>(correct) / static_cast<double>(split.size());
}

double mia_score(const Mlp& m, const Batch& forget, const Batch& t, double k) {
    if (forget.empty() || t.empty()) throw InputError("mia_score: empty split");

    std::vector<double> pooled = cross_entropy(forward(m, forget.x), forget.y);
    std::vector<double> t_losses = cross_entropy(forward(m, t.x), t.y);
    std::size_t n_f = pooled.size(), n_t = t_losses.size();
    pooled.insert(pooled.end(), t_losses.begin(), t_losses.end());
    for (double& v : pooled) v = std::log1p(v);
    std::vector<double> z = gaussianize(pooled, k);

    // Sort with membership tags, then walk the 2N+1 candidate thresholds
    // (below everything, between consecutive values, above everything).
    // Balanced accuracy is compared as an exact integer fraction
    // (tp*n_t + tn*n_f) / (2*n_f*n_t) to keep the sweep free of rounding.
    std::vector<std::pair<double, bool>> tagged(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) tagged[i] = {z[i], i < n_f};
    std::sort(tagged.begin(), tagged.end());

    std::uint64_t best_num = 0;
    // f_below/t_below: counts strictly below the current threshold position.
    // A cut between tied values is not achievable by any real threshold, so
    // only boundaries between distinct values (plus the extremes) count.
    std::uint64_t f_below = 0, t_below = 0;
    for (std::size_t pos = 0; pos <= tagged.size(); ++pos) {
        bool achievable = pos == 0 || pos == tagged.size() ||
                          tagged[pos - 1].first < tagged[pos].first;
        if (achievable) {
            // Orientation A: member iff z >= threshold (high loss = member).
            std::uint64_t tp_a = n_f - f_below, tn_a = t_below;
            // Orientation B: member iff z < threshold.
            std::uint64_t tp_b = f_below, tn_b = n_t - t_below;
            best_num =
                std::max({best_num, tp_a * n_t + tn_a * n_f, tp_b * n_t + tn_b * n_f});
        }
        if (pos < tagged.size()) {
            if (tagged[pos].second)
                ++f_below;
            else
                ++t_below;
        }
    }
    return 100.0 * static_cast<double>(best_num) /
           (2.0 * static_cast<double>(n_f) * static_cast<double>(n_t));
}

MetricsReport report(const Mlp& m, const Batch& retain, const Batch& forget, const Batch& t,
                     const Batch& test_eval, double unlearn_s, double preprocess_s, double k) {
    MetricsReport r;
    r.mia_score = mia_score(m, forget, t, k);
    r.retain_acc = accuracy(m, retain);
    r.forget_acc = accuracy(m, forget);
    r.test_acc = accuracy(m, test_eval);
    r.unlearning_seconds = unlearn_s;
    r.preprocessing_seconds = preprocess_s;
    return r;
}

std::string csv_header() {
    return "method,retain_source,round,threshold_mia,retain_acc,forget_acc,test_acc,"
           "preprocess_s,unlearn_s,seed";
}

std::string csv_row(const std::string& method, const std::string& retain_source, int round,
                    const MetricsReport& r, std::uint64_t seed) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.4f,%.4f,%.4f,%.4f,%.6f,%.6f,%llu",
                  method.c_str(), retain_source.c_str(), round, r.mia_score, r.retain_acc,
                  r.forget_acc, r.test_acc, r.preprocessing_seconds, r.unlearning_seconds,
                  static_cast<unsigned long long>(seed));
    return buf;
}

}  // namespace ulab
