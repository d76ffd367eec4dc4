#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ulab/common.hpp"

namespace ulab {

// Mask values in Dataset::mask.
inline constexpr std::uint8_t kMaskTrain = 0;
inline constexpr std::uint8_t kMaskTest = 1;

// Labeled sample collection. Sample ids are row indices 0..N-1; the mask
// assigns each id to the train or test side.
struct Dataset {
    Tensor x;                        // N x d
    std::vector<int> y;              // N labels in [0, C)
    std::vector<std::uint8_t> mask;  // kMaskTrain / kMaskTest per sample
    int class_count = 0;

    std::size_t size() const { return y.size(); }
    std::size_t dim() const { return x.cols(); }

    std::vector<std::size_t> train_ids() const;
    std::vector<std::size_t> test_ids() const;
};

// Rows + labels for an id list, in the given order.
Batch batch_of(const Dataset& ds, const std::vector<std::size_t>& ids);

enum class ForgetMode { RandomClass, UniformFraction, ExplicitIds };

struct ForgetSpec {
    ForgetMode mode = ForgetMode::RandomClass;
    int class_id = 0;                       // RandomClass; -1 draws one from seed
    double fraction = 0.1;                  // UniformFraction, in (0, 1)
    std::vector<std::size_t> explicit_ids;  // ExplicitIds
    std::uint64_t seed = 0;
};

const char* forget_mode_name(ForgetMode m);

// R / F from the training side plus the class-matched test subset T and the
// held-out evaluation remainder. T takes every other class-matched test
// sample (by ascending id within each forgotten class), so T and test_eval
// are disjoint halves.
struct Splits {
    std::vector<std::size_t> retain_ids;
    std::vector<std::size_t> forget_ids;
    std::vector<std::size_t> t_ids;
    std::vector<std::size_t> test_eval_ids;
};

Splits make_splits(const Dataset& ds, const ForgetSpec& spec);

// Same, but F is drawn from (and R is the rest of) the given training pool
// instead of the full train mask. Used by multi-round drivers where the pool
// shrinks each round. For UniformFraction, fraction_base gives the count
// reference (|original train| by default, the current pool otherwise).
Splits make_splits_from_pool(const Dataset& ds, const std::vector<std::size_t>& pool,
                             const ForgetSpec& spec, std::size_t fraction_base = 0);

// Isotropic unit-noise Gaussian blobs, one center per class at
// separation * u_c. The directions u_c are orthonormalized when C <= d so
// inter-class distances do not depend on the seed. Per class, the first 80%
// of samples are train, the rest test.
Dataset gen_gaussian_classes(int c, std::size_t per_class, std::size_t d, double separation,
                             std::uint64_t seed);

// Binary dataset file: magic "ULAB", then u32 version, N, d, C, then N*d
// float64 samples, N u16 labels, N u8 masks, all little-endian.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace ulab
