#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ulab/harness.hpp"

namespace {

ulab::ExperimentConfig build_config(const std::string& config_path,
                                    const std::vector<std::string>& sets) {
    ulab::ExperimentConfig cfg =
        config_path.empty() ? ulab::default_config() : ulab::load_config(config_path);
    for (const std::string& kv : sets) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw ulab::InputError("--set expects key=value, got '" + kv + "'");
        ulab::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

int finish_run(const ulab::RunRecord& record, const ulab::ExperimentConfig& cfg) {
    std::fputs(ulab::render_csv(record, cfg.deterministic_output).c_str(), stdout);
    if (!cfg.output_dir.empty())
        std::fprintf(stderr, "wrote %s/results.csv and run_record.json\n",
                     cfg.output_dir.c_str());
    for (const std::string& err : record.errors)
        std::fprintf(stderr, "error: %s\n", err.c_str());
    return record.errors.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale machine unlearning laboratory"};
    app.set_version_flag("--version", std::string(ulab::kVersion));
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> sets;
    app.add_option("--config", config_path, "config file, one 'key = value' per line");
    app.add_option("--set", sets, "override a config key, e.g. --set run.seed=7");

    std::string gen_out = "dataset.ulab";
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset and write it");
    gen->add_option("--out", gen_out, "output dataset path");

    std::string pretrain_out = "model.json";
    auto* pre = app.add_subcommand("pretrain", "train the classifier and save it");
    pre->add_option("--out", pretrain_out, "output model path");

    std::string part_out = "partition.json";
    auto* part = app.add_subcommand("partition", "cluster the train pool in feature space");
    part->add_option("--out", part_out, "output partition path");

    std::string cond_out = "condensed.json";
    auto* cond = app.add_subcommand("condense",
                                    "partition, split against the forget set, condense "
                                    "the free clusters");
    cond->add_option("--out", cond_out, "output condensed-set path");

    auto* unl = app.add_subcommand("unlearn", "run the configured unlearning method");

    std::string eval_model;
    auto* ev = app.add_subcommand("evaluate", "score a saved model on the configured splits");
    ev->add_option("--model", eval_model, "model file to score")->required();

    auto* pipe = app.add_subcommand("pipeline", "end-to-end run: data, pretrain, unlearn, score");
    auto* abl = app.add_subcommand("ablate", "run all seven retain sources on shared splits");
    auto* rnd = app.add_subcommand("rounds", "sequential forgetting rounds (rounds.count >= 2)");

    CLI11_PARSE(app, argc, argv);

    try {
        ulab::ExperimentConfig cfg = build_config(config_path, sets);

        if (*gen) {
            cfg.data.file.clear();  // always generate, even if the config points at a file
            ulab::validate_config(cfg);
            ulab::Dataset ds = ulab::generate_data(cfg);
            ulab::save_dataset(ds, gen_out);
            std::fprintf(stderr, "wrote %zu samples (%d classes, dim %zu) to %s\n", ds.size(),
                         ds.class_count, ds.dim(), gen_out.c_str());
        } else if (*pre) {
            ulab::validate_config(cfg);
            ulab::PipelineContext ctx = ulab::prepare_context(cfg);
            ulab::save_model(ctx.pretrained, pretrain_out);
            ulab::Batch tb = ulab::batch_of(ctx.ds, ctx.ds.train_ids());
            std::fprintf(stderr, "pretrained %zu params, train acc %.2f%%, saved to %s\n",
                         ctx.pretrained.param_count(), ulab::accuracy(ctx.pretrained, tb),
                         pretrain_out.c_str());
        } else if (*part) {
            ulab::validate_config(cfg);
            ulab::Dataset ds = ulab::generate_data(cfg);
            ulab::StageSeeds seeds = ulab::stage_seeds(cfg);
            ulab::Mlp ext = ulab::partition_extractor(ds, seeds.partition);
            ulab::Partition p =
                ulab::partition_dataset(ds, ext, cfg.partition_k, seeds.partition);
            ulab::save_partition(p, part_out);
            std::fprintf(stderr, "%zu clusters over %zu train samples, saved to %s\n",
                         p.clusters.size(), ds.train_ids().size(), part_out.c_str());
        } else if (*cond) {
            ulab::validate_config(cfg);
            ulab::Dataset ds = ulab::generate_data(cfg);
            ulab::StageSeeds seeds = ulab::stage_seeds(cfg);
            ulab::ForgetSpec spec = cfg.forget;
            spec.seed = seeds.forget;
            ulab::Splits splits = ulab::make_splits(ds, spec);
            ulab::Mlp ext = ulab::partition_extractor(ds, seeds.partition);
            ulab::Partition p =
                ulab::partition_dataset(ds, ext, cfg.partition_k, seeds.partition);
            ulab::SplitResult sr = ulab::sample_F(p, splits.forget_ids);
            ulab::BlendConfig bc = cfg.blend;
            bc.seed = seeds.blend;
            ulab::CondensedSet cs = ulab::condense_free(p, sr, ds, bc);
            ulab::save_condensed(cs, cond_out);
            std::fprintf(stderr,
                         "%zu free clusters condensed to %zu prototypes, %zu residual "
                         "samples, saved to %s\n",
                         sr.free_cluster_ids.size(), cs.prototypes.size(),
                         sr.residual_image_ids.size(), cond_out.c_str());
        } else if (*ev) {
            ulab::validate_config(cfg);
            ulab::Dataset ds = ulab::generate_data(cfg);
            ulab::Mlp m = ulab::load_model(eval_model);
            ulab::ForgetSpec spec = cfg.forget;
            spec.seed = ulab::stage_seeds(cfg).forget;
            ulab::Splits s = ulab::make_splits(ds, spec);
            ulab::MetricsReport r = ulab::report(
                m, ulab::batch_of(ds, s.retain_ids), ulab::batch_of(ds, s.forget_ids),
                ulab::batch_of(ds, s.t_ids), ulab::batch_of(ds, s.test_eval_ids), 0.0, 0.0,
                cfg.unlearn.k_temp);
            std::fputs((ulab::csv_header() + "\n").c_str(), stdout);
            std::fputs((ulab::csv_row("evaluate", "full", 0, r, cfg.run_seed) + "\n").c_str(),
                       stdout);
        } else if (*unl || *pipe) {
            return finish_run(ulab::run_experiment(cfg), cfg);
        } else if (*abl) {
            return finish_run(ulab::run_ablation(cfg), cfg);
        } else if (*rnd) {
            if (cfg.rounds < 2)
                throw ulab::InputError(
                    "rounds subcommand needs rounds.count >= 2 (use pipeline for one round)");
            return finish_run(ulab::run_experiment(cfg), cfg);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
