#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "ulab/harness.hpp"

using namespace ulab;

namespace {

// Small enough to pretrain and unlearn in well under a second.
ExperimentConfig tiny_config() {
    ExperimentConfig cfg = default_config();
    cfg.data.classes = 3;
    cfg.data.per_class = 30;
    cfg.data.dim = 4;
    cfg.data.separation = 12.0;
    cfg.hidden = {8};
    cfg.pretrain.epochs = 4;
    cfg.partition_k = 3;
    cfg.blend.steps = 5;
    cfg.blend.pool = 2;
    cfg.unlearn.method = UnlearnMethod::Cf;
    cfg.unlearn.lambda = 0.0;
    cfg.unlearn.epochs = 2;
    cfg.forget.mode = ForgetMode::RandomClass;
    cfg.forget.class_id = 1;
    cfg.run_seed = 7;
    return cfg;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("config text round-trips and overrides type-check") {
    ExperimentConfig cfg = default_config();
    apply_override(cfg, "data.classes", "7");
    apply_override(cfg, "unlearn.method", "a_cf");
    apply_override(cfg, "unlearn.lambda", "2.5");
    apply_override(cfg, "output.deterministic", "true");
    CHECK(cfg.data.classes == 7);
    CHECK(cfg.unlearn.method == UnlearnMethod::ACf);
    CHECK(cfg.deterministic_output);

    ExperimentConfig back = parse_config_text(config_to_text(cfg));
    CHECK(back.data.classes == 7);
    CHECK(back.unlearn.method == UnlearnMethod::ACf);
    CHECK(back.unlearn.lambda == 2.5);
    CHECK(back.deterministic_output);
    CHECK(config_to_text(back) == config_to_text(cfg));

    CHECK_THROWS_AS(apply_override(cfg, "unlearn.warp", "1"), InputError);
    CHECK_THROWS_AS(apply_override(cfg, "data.classes", "many"), InputError);
    CHECK_THROWS_AS(apply_override(cfg, "unlearn.lr", "fast"), InputError);
    CHECK_THROWS_AS(parse_config_text("data.classes 5\n"), InputError);
}

TEST_CASE("comments and blank lines survive config parsing") {
    ExperimentConfig cfg = parse_config_text(
        "# fixture\n"
        "\n"
        "data.classes = 4\n"
        "  unlearn.method=retrain  \n");
    CHECK(cfg.data.classes == 4);
    CHECK(cfg.unlearn.method == UnlearnMethod::Retrain);
}

TEST_CASE("config validation rejects out-of-contract values") {
    ExperimentConfig cfg = tiny_config();
    validate_config(cfg);

    ExperimentConfig bad = cfg;
    bad.data.dim = 1;  // the generator needs a 2-plane for the class circle
    CHECK_THROWS_AS(validate_config(bad), InputError);

    bad = cfg;
    bad.unlearn.method = UnlearnMethod::ACf;
    bad.unlearn.batch_f = 16;  // the soft CDF needs a real sample of losses
    CHECK_THROWS_AS(validate_config(bad), InputError);
    bad.unlearn.method = UnlearnMethod::Cf;
    validate_config(bad);  // plain fine-tuning never reads batch_f

    bad = cfg;
    bad.forget.mode = ForgetMode::UniformFraction;
    bad.forget.fraction = 1.0;
    CHECK_THROWS_AS(validate_config(bad), InputError);

    bad = cfg;
    bad.forget.class_id = 3;  // only classes 0..2 exist
    CHECK_THROWS_AS(validate_config(bad), InputError);

    bad = cfg;
    bad.rounds = 0;
    CHECK_THROWS_AS(validate_config(bad), InputError);
}

TEST_CASE("models survive a save and load cycle byte for byte") {
    Mlp m = init_model({3, 5, 2}, 99, Act::Relu);
    std::string path = temp_path("ulab_model_rt.json");
    save_model(m, path);
    Mlp back = load_model(path);
    REQUIRE(back.layers.size() == m.layers.size());
    CHECK(back.act == Act::Relu);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        CHECK(back.layers[l].W.values == m.layers[l].W.values);
        CHECK(back.layers[l].b.values == m.layers[l].b.values);
        CHECK(back.layers[l].W.shape == m.layers[l].W.shape);
    }
    std::remove(path.c_str());

    CHECK_THROWS_AS(load_model(temp_path("ulab_no_such_model.json")), InputError);
    std::string junk = temp_path("ulab_model_junk.json");
    std::ofstream(junk) << "{\"layers\": 12}";
    CHECK_THROWS_AS(load_model(junk), FormatError);
    std::remove(junk.c_str());
}

TEST_CASE("stage seeds share what arms must share and split what they must not") {
    ExperimentConfig cfg = tiny_config();
    StageSeeds a0 = stage_seeds(cfg, 0, 0, 0);
    StageSeeds a1 = stage_seeds(cfg, 1, 0, 0);
    // Arms compare retain sources, so everything up to the unlearning draw is
    // pinned across them.
    CHECK(a0.data == a1.data);
    CHECK(a0.model_init == a1.model_init);
    CHECK(a0.pretrain == a1.pretrain);
    CHECK(a0.forget == a1.forget);
    CHECK(a0.partition == a1.partition);
    CHECK(a0.blend == a1.blend);
    CHECK(a0.unlearn != a1.unlearn);

    // Repeats and rounds redraw the forget split but keep the same dataset.
    StageSeeds r1 = stage_seeds(cfg, 0, 1, 0);
    StageSeeds round1 = stage_seeds(cfg, 0, 0, 1);
    CHECK(r1.data == a0.data);
    CHECK(r1.forget != a0.forget);
    CHECK(round1.forget != a0.forget);
    CHECK(round1.forget != r1.forget);

    ExperimentConfig other = cfg;
    other.run_seed = 8;
    CHECK(stage_seeds(other).data != a0.data);
}

TEST_CASE("a small experiment produces one row per repeat and a stable CSV") {
    ExperimentConfig cfg = tiny_config();
    cfg.repeats = 2;
    cfg.deterministic_output = true;
    RunRecord rec = run_experiment(cfg);
    CHECK(rec.errors.empty());
    REQUIRE(rec.entries.size() == 2);
    CHECK(rec.entries[0].repeat == 0);
    CHECK(rec.entries[1].repeat == 1);
    CHECK(rec.entries[0].method == "cf");
    CHECK(rec.entries[0].retain_source == "full");
    // Both repeats saw the same data but different forget draws; metrics are
    // real percentages either way.
    for (const RunEntry& e : rec.entries) {
        CHECK(e.metrics.retain_acc >= 0.0);
        CHECK(e.metrics.retain_acc <= 100.0);
        CHECK(e.metrics.mia_score >= 50.0);
    }

    std::string csv = render_csv(rec, cfg.deterministic_output);
    std::string again = render_csv(run_experiment(cfg), cfg.deterministic_output);
    CHECK(csv == again);  // timing zeroed, everything else seeded
    CHECK(csv.find("cf,full,0,") != std::string::npos);
    CHECK(csv.find("0.000000,0.000000") != std::string::npos);

    std::string live = render_csv(rec, false);
    CHECK(live != csv);  // real wall clock survives without the flag
}

TEST_CASE("the ablation covers all seven retain sources over shared splits") {
    ExperimentConfig cfg = tiny_config();
    // Class forgetting starves the residual arms (a pure class cluster minus
    // its class is empty), so the ablation fixture forgets a scattered sample.
    cfg.forget.mode = ForgetMode::UniformFraction;
    cfg.forget.fraction = 0.15;
    RunRecord rec = run_ablation(cfg);
    CHECK(rec.errors.empty());
    REQUIRE(rec.entries.size() == 7);
    std::set<std::string> sources;
    for (const RunEntry& e : rec.entries) sources.insert(e.retain_source);
    CHECK(sources == std::set<std::string>{"full", "full_condensed", "free_raw",
                                           "free_condensed", "residual_raw",
                                           "residual_condensed", "reduced"});
    // Shared stage seeds mean every arm forgot the same samples, so the raw
    // full-retain arm and the condensed arms report the same forget set size
    // effects only through their models, not their splits. Spot-check that
    // metrics at least stay in range.
    for (const RunEntry& e : rec.entries) {
        CHECK(e.metrics.forget_acc >= 0.0);
        CHECK(e.metrics.forget_acc <= 100.0);
    }
}

TEST_CASE("sequential rounds pass models forward and veto overlapping ids") {
    ExperimentConfig cfg = tiny_config();
    PipelineContext ctx = prepare_context(cfg);

    ForgetSpec first;
    first.mode = ForgetMode::ExplicitIds;
    Splits s0 = make_splits(ctx.ds, ForgetSpec{ForgetMode::RandomClass, 1, 0.1, {}, 3});
    first.explicit_ids = {s0.forget_ids[0], s0.forget_ids[1]};
    ForgetSpec second = first;
    second.explicit_ids = {s0.forget_ids[2]};

    std::vector<UnlearnResult> rounds =
        run_rounds(ctx.pretrained, ctx.ds, {first, second}, cfg);
    REQUIRE(rounds.size() == 2);
    // Round 1 starts from round 0's weights, not the pretrained net.
    CHECK(rounds[1].model.layers[0].W.values != ctx.pretrained.layers[0].W.values);

    ForgetSpec overlap = first;  // round 2 asks for an already-forgotten id
    CHECK_THROWS_AS(run_rounds(ctx.pretrained, ctx.ds, {first, overlap}, cfg),
                    InputError);
}

TEST_CASE("persisted outputs land in the run directory") {
    ExperimentConfig cfg = tiny_config();
    cfg.output_dir = temp_path("ulab_out_dir");
    cfg.write_trail = true;
    cfg.unlearn.record_trail = true;
    std::filesystem::remove_all(cfg.output_dir);
    RunRecord rec = run_experiment(cfg);
    std::string csv = persist_outputs(rec, cfg);

    std::ifstream f(cfg.output_dir + "/results.csv");
    REQUIRE(f.good());
    std::string disk((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(disk == csv);
    CHECK(std::filesystem::exists(cfg.output_dir + "/run_record.json"));
    bool trail_found = false;
    for (const auto& ent : std::filesystem::directory_iterator(cfg.output_dir))
        if (ent.path().filename().string().rfind("trail_", 0) == 0) trail_found = true;
    CHECK(trail_found);
    std::filesystem::remove_all(cfg.output_dir);
}

TEST_CASE("generated and file-backed data agree through the config path") {
    ExperimentConfig cfg = tiny_config();
    Dataset gen = generate_data(cfg);
    std::string path = temp_path("ulab_ds_rt.json");
    save_dataset(gen, path);

    ExperimentConfig from_file = cfg;
    from_file.data.file = path;
    Dataset loaded = generate_data(from_file);
    CHECK(loaded.x.values == gen.x.values);
    CHECK(loaded.y == gen.y);
    CHECK(loaded.mask == gen.mask);
    std::remove(path.c_str());
}
