#pragma once

#include <cstdint>
#include <string>

#include "ulab/common.hpp"
#include "ulab/gaussianize.hpp"
#include "ulab/nn.hpp"

namespace ulab {

// Percent of samples whose argmax logit (lowest index on ties) matches the
// label.
double accuracy(const Mlp& m, const Batch& split);

// Loss-threshold membership attack on jointly gaussianized losses: pool the
// CE losses of forget (members) and t (non-members), log1p + gaussianize the
// pooled vector, then sweep every threshold between sorted values in both
// orientations and return 100 x the best balanced accuracy. 50 means the
// attacker does no better than chance; the sweep makes 50 the exact floor.
double mia_score(const Mlp& m, const Batch& forget, const Batch& t,
                 double k = kDefaultTemperature);

struct MetricsReport {
    double mia_score = 0.0;  // threshold-MIA, percent
    double retain_acc = 0.0;
    double forget_acc = 0.0;
    double test_acc = 0.0;
    double unlearning_seconds = 0.0;
    double preprocessing_seconds = 0.0;
};

MetricsReport report(const Mlp& m, const Batch& retain, const Batch& forget, const Batch& t,
                     const Batch& test_eval, double unlearn_s, double preprocess_s,
                     double k = kDefaultTemperature);

// CSV plumbing with fixed column order and fixed formatting, so identical
// runs serialize to identical bytes.
std::string csv_header();
std::string csv_row(const std::string& method, const std::string& retain_source, int round,
                    const MetricsReport& r, std::uint64_t seed);

}  // namespace ulab
