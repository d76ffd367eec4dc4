#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ulab/blend.hpp"
#include "ulab/dataset.hpp"
#include "ulab/eval.hpp"
#include "ulab/nn.hpp"
#include "ulab/partition.hpp"
#include "ulab/unlearn.hpp"

namespace ulab {

inline constexpr const char* kVersion = "0.1.0";

struct DataConfig {
    int classes = 5;
    std::size_t per_class = 1000;
    std::size_t dim = 8;
    double separation = 20.0;
    std::string file;  // when set, load this dataset instead of generating
};

// Everything one experiment needs, expressed as flat dotted config keys
// (see parse_config_text). Stage seeds are all derived from run_seed
// together with the arm, repeat, and round indices, so one number pins the
// whole run.
struct ExperimentConfig {
    DataConfig data;
    std::vector<std::size_t> hidden = {64, 64};  // classifier hidden widths
    TrainConfig pretrain{0.05, 30, 64, 0};
    std::size_t partition_k = 10;
    BlendConfig blend;
    UnlearnConfig unlearn;
    ForgetSpec forget;
    int rounds = 1;
    bool rounds_of_original = true;  // uniform fraction counts against the original train size
    int repeats = 1;
    std::uint64_t run_seed = 1;
    std::string output_dir;
    bool deterministic_output = false;  // zero the timing columns in the CSV
    bool write_trail = false;           // per-epoch trail CSVs next to the results
};

ExperimentConfig default_config();
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string config_to_text(const ExperimentConfig& cfg);
void validate_config(const ExperimentConfig& cfg);

void save_model(const Mlp& m, const std::string& path);
Mlp load_model(const std::string& path);

// Every stage seed is derived from run.seed. Data, model init, and pretrain
// seeds are shared across arms and repeats; forget, partition, and blend seeds
// vary per (repeat, round) but are shared across arms so the seven retain
// sources face identical splits; the unlearning seed also varies per arm.
struct StageSeeds {
    std::uint64_t data = 0;
    std::uint64_t model_init = 0;
    std::uint64_t pretrain = 0;
    std::uint64_t forget = 0;
    std::uint64_t partition = 0;
    std::uint64_t blend = 0;
    std::uint64_t unlearn = 0;
};

StageSeeds stage_seeds(const ExperimentConfig& cfg, std::uint64_t arm = 0, int repeat = 0,
                       int round = 0);

// Load data.file when set, otherwise generate the Gaussian fixture with the
// derived data seed.
Dataset generate_data(const ExperimentConfig& cfg);

// The fixed feature extractor used to partition a pool; seeded off the
// partition seed so clustering is reproducible without storing the extractor.
Mlp partition_extractor(const Dataset& ds, std::uint64_t partition_seed);

// Data + pretrained classifier shared by every arm and repeat of a run.
struct PipelineContext {
    Dataset ds;
    Mlp pretrained;
};

PipelineContext prepare_context(const ExperimentConfig& cfg);

struct MaterializedRetain {
    Batch retain;
    double preprocess_seconds = 0.0;  // partition + condensation wall clock
};

// Build the training set an unlearning run sees. Every source except Full
// partitions the pool (which still contains the forget ids), splits it
// against F, and condenses per the source tag; that work is what the
// recorded preprocessing time covers.
MaterializedRetain materialize_retain(const Dataset& ds, const std::vector<std::size_t>& pool,
                                      const Splits& splits, RetainSource src, std::size_t k,
                                      std::uint64_t partition_seed, const BlendConfig& blend);

struct RunEntry {
    std::string method;
    std::string retain_source;
    int round = 0;
    int repeat = 0;
    std::uint64_t seed = 0;  // unlearning seed for this arm/repeat
    MetricsReport metrics;
    std::vector<EpochMetrics> trail;  // per-epoch metrics when recorded
};

struct RunRecord {
    std::string config_text;
    std::vector<RunEntry> entries;
    std::vector<std::string> errors;  // one per aborted repeat, labeled
    std::string version = kVersion;
    std::string timestamp;
};

// One arm (cfg.unlearn.retain_source), cfg.repeats repeats, cfg.rounds
// rounds. Repeats run in a worker pool; rows come out in repeat-major order
// regardless of scheduling. A repeat that throws is recorded in errors and
// the others continue.
RunRecord run_experiment(const ExperimentConfig& cfg);

// All seven retain sources with shared data, pretrained model, forget draws,
// partition, and blend seeds, so rows differ only in the arm.
RunRecord run_ablation(const ExperimentConfig& cfg);

// Sequential unlearning: round r+1 starts from round r's model and draws its
// forget set from the shrunken pool. Specs with explicit ids must be
// disjoint or the pool membership check rejects them.
std::vector<UnlearnResult> run_rounds(const Mlp& pretrained, const Dataset& ds,
                                      const std::vector<ForgetSpec>& round_specs,
                                      const ExperimentConfig& cfg);

std::string render_csv(const RunRecord& record, bool deterministic_output);
std::string run_record_json(const RunRecord& record);
void save_run_record(const RunRecord& record, const std::string& path);

// Writes results.csv, run_record.json, and optional trail CSVs under
// cfg.output_dir (created if missing). Returns the CSV text.
std::string persist_outputs(const RunRecord& record, const ExperimentConfig& cfg);

}  // namespace ulab
