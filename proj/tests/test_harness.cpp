#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "parlab/harness.hpp"
#include "synthetic_corpus.hpp"

using namespace parlab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void spit(const fs::path& p, const std::string& content) {
    std::ofstream os(p, std::ios::binary);
    os << content;
}

fs::path fresh_dir(const char* name) {
    auto p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// a complete tiny experiment config over a synthetic story corpus
ExperimentConfig tiny_experiment(const fs::path& work) {
    spit(work / "corpus.txt", testsupport::make_story_corpus(60 * 1024, 5));
    ExperimentConfig c;
    c.corpus_path = (work / "corpus.txt").string();
    c.shared_model.vocab_size = vocab::SIZE;
    c.shared_model.d_model = 16;
    c.shared_model.n_layers = 1;
    c.shared_model.n_heads = 2;
    c.shared_model.ffn_dim = 32;
    c.shared_model.seq_len = 16;
    c.train.steps = 8;
    c.train.batch_size = 4;
    c.train.eval_every = 4;
    c.train.warmup_steps = 2;
    c.num_samples = 4;
    c.gen_ar.length = c.gen_mdlm.length = 12;
    c.gen_mdlm.steps = 6;
    c.output_dir = (work / "out").string();
    c.seed = 11;
    c.train.seed = 11;
    c.gen_ar.seed = c.gen_mdlm.seed = 11;
    return c;
}

} // namespace

TEST_CASE("kv text round-trips through sections") {
    std::string text = "[model]\nd_model = 64\n\n[run]\nseed = 3\n# comment\n";
    auto kv = parse_kv(text);
    CHECK(kv.at("model.d_model") == "64");
    CHECK(kv.at("run.seed") == "3");
    auto again = parse_kv(emit_kv(kv));
    CHECK(again == kv);
    CHECK_THROWS_AS(parse_kv("novalue\n"), std::invalid_argument);
}

TEST_CASE("experiment config round-trip, hash, and errors") {
    auto work = fresh_dir("parlab_hcfg");
    auto cfg = tiny_experiment(work);
    auto kv = cfg.to_kv();
    auto back = ExperimentConfig::from_kv(kv);
    CHECK(back.snapshot() == cfg.snapshot());
    CHECK(back.hash() == cfg.hash());
    CHECK(cfg.hash().size() == 16);

    // file round-trip
    spit(work / "cfg.txt", cfg.snapshot());
    auto from_file = ExperimentConfig::from_file((work / "cfg.txt").string());
    CHECK(from_file.hash() == cfg.hash());

    // missing required key / bad value -> ConfigError
    auto broken = kv;
    broken.erase("model.d_model");
    CHECK_THROWS_AS(ExperimentConfig::from_kv(broken), ConfigError);
    auto bad = kv;
    bad["corpus.split_fraction"] = "1.5";
    CHECK_THROWS_AS(ExperimentConfig::from_kv(bad), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_file("/nonexistent/cfg"), ConfigError);
    fs::remove_all(work);
}

TEST_CASE("samples file round-trips escapes and header") {
    auto work = fresh_dir("parlab_hsamp");
    auto set = SampleSet::from_texts({
        "plain text",
        "two\n\ndocuments with a \\ backslash",
        "trailing newline\n",
        "",
    });
    auto path = (work / "samples.txt").string();
    write_samples_file(path, set, "config_hash=abc paradigm=ar");
    std::string header;
    auto back = read_samples_file(path, &header);
    CHECK(header == "config_hash=abc paradigm=ar");
    CHECK(back.texts == set.texts);
    CHECK(back.token_samples == set.token_samples);
    CHECK_THROWS_AS(read_samples_file((work / "missing.txt").string()), ValidationError);
    fs::remove_all(work);
}

TEST_CASE("load_corpus chunks and splits") {
    auto work = fresh_dir("parlab_hcorp");
    spit(work / "c.txt", testsupport::make_story_corpus(8 * 1024, 3));
    auto split = load_corpus((work / "c.txt").string(), 64, 0.05);
    CHECK(!split.train_chunks.empty());
    CHECK(!split.val_chunks.empty());
    for (const auto& c : split.train_chunks) CHECK(c.size() == 64);
    CHECK_THROWS_AS(load_corpus((work / "absent.txt").string(), 64, 0.05), ValidationError);
    spit(work / "small.txt", "xy");
    CHECK_THROWS_AS(load_corpus((work / "small.txt").string(), 64, 0.05), ValidationError);
    fs::remove_all(work);
}

TEST_CASE("emit_figures writes csv and svg artifacts") {
    auto work = fresh_dir("parlab_hfig");
    ConvergenceLog ar, md;
    for (int i = 1; i <= 5; ++i) {
        ar.records.push_back({i * 10, "train", 3.0, i * 100.0, 1000.0});
        ar.records.push_back({i * 10, "val", 3.0 - 0.2 * i + (i == 4 ? -0.3 : 0.0), i * 100.0, 0.0});
        md.records.push_back({i * 10, "val", 4.0 - 0.1 * i, i * 100.0, 0.0});
    }
    emit_figures(ar, md, (work / "figures").string(), "cafebabe");
    auto loss_csv = slurp(work / "figures" / "loss.csv");
    CHECK(loss_csv.starts_with("# config_hash=cafebabe\n"));
    // header comment + column header + one row per eval point
    CHECK(std::count(loss_csv.begin(), loss_csv.end(), '\n') == 2 + 5);
    auto loss_svg = slurp(work / "figures" / "loss.svg");
    CHECK(loss_svg.find("<svg") != std::string::npos);
    CHECK(loss_svg.find("polyline") != std::string::npos);
    CHECK(slurp(work / "figures" / "throughput.csv").find("paradigm,tokens_per_sec") != std::string::npos);
    CHECK(slurp(work / "figures" / "throughput.svg").find("<rect") != std::string::npos);

    // single eval point still renders
    ConvergenceLog one;
    one.records.push_back({10, "val", 2.5, 100.0, 0.0});
    emit_figures(one, one, (work / "fig1").string(), "h");
    CHECK(slurp(work / "fig1" / "loss.svg").find("<svg") != std::string::npos);
    fs::remove_all(work);
}

TEST_CASE("dry run validates without touching disk") {
    auto work = fresh_dir("parlab_hdry");
    auto cfg = tiny_experiment(work);
    RunOptions opt;
    opt.dry_run = true;
    run_experiment(cfg, opt);
    CHECK(!fs::exists(cfg.output_dir));
    fs::remove_all(work);
}

TEST_CASE("run refuses a dirty output directory") {
    auto work = fresh_dir("parlab_hdirty");
    auto cfg = tiny_experiment(work);
    fs::create_directories(cfg.output_dir);
    spit(fs::path(cfg.output_dir) / "stale", "x");
    CHECK_THROWS_AS(run_experiment(cfg, {}), ValidationError);
    fs::remove_all(work);
}

TEST_CASE("full tiny experiment: artifacts, recompute equivalence, determinism") {
    auto work = fresh_dir("parlab_hrun");
    auto cfg = tiny_experiment(work);
    auto rep = run_experiment(cfg, {});

    for (const char* f :
         {"config.snapshot", "report.csv", "report.md", "ar/log.csv", "ar/samples.txt",
          "ar/ckpt_best", "ar/ckpt_last", "ar/model.cfg", "mdlm/log.csv", "mdlm/samples.txt",
          "mdlm/ckpt_best", "mdlm/ckpt_last", "mdlm/model.cfg", "figures/loss.csv",
          "figures/loss.svg", "figures/throughput.csv", "figures/throughput.svg"})
        CHECK(fs::exists(fs::path(cfg.output_dir) / f));

    std::string report_csv = slurp(fs::path(cfg.output_dir) / "report.csv");
    CHECK(report_csv.starts_with("# config_hash=" + cfg.hash()));
    CHECK(report_csv.find("wall") == std::string::npos); // no wall-clock in the deterministic artifact
    CHECK(rep.ar.best_step >= 1);
    CHECK(rep.mdlm.best_step >= 1);

    // the two serialized model configs differ only in the paradigm switches
    auto cfg_ar = parse_kv(slurp(fs::path(cfg.output_dir) / "ar/model.cfg"));
    auto cfg_md = parse_kv(slurp(fs::path(cfg.output_dir) / "mdlm/model.cfg"));
    for (const auto& [k, v] : cfg_ar) {
        if (k == "model.attention_mode" || k == "model.timestep_conditioning") {
            CHECK(cfg_md.at(k) != v);
        } else {
            CHECK(cfg_md.at(k) == v);
        }
    }

    // compare() over the archived directories reproduces the run-time report
    auto rep2 = compare(cfg.output_dir + "/ar", cfg.output_dir + "/mdlm", false, cfg.seed);
    CHECK(rep2.ar.best_step == rep.ar.best_step);
    CHECK(rep2.ar.best_val_loss == rep.ar.best_val_loss);
    CHECK(rep2.mdlm.final_val_loss == rep.mdlm.final_val_loss);
    REQUIRE(rep2.diversity.rows.size() == rep.diversity.rows.size());
    for (size_t i = 0; i < rep.diversity.rows.size(); ++i) {
        CHECK(rep2.diversity.rows[i].metric == rep.diversity.rows[i].metric);
        CHECK(rep2.diversity.rows[i].verdict == rep.diversity.rows[i].verdict);
        CHECK(rep2.diversity.rows[i].a == rep.diversity.rows[i].a);
        CHECK(rep2.diversity.rows[i].b == rep.diversity.rows[i].b);
    }

    // comparing a run directory with itself: every diversity verdict ties
    auto self_rep = compare(cfg.output_dir + "/ar", cfg.output_dir + "/ar", false, cfg.seed);
    for (const auto& r : self_rep.diversity.rows) CHECK(r.verdict == "tie");

    // identical (config, seed) rerun produces a byte-identical report.csv
    auto cfg2 = cfg;
    cfg2.output_dir = (work / "out2").string();
    run_experiment(cfg2, {});
    std::string csv1 = report_csv;
    std::string csv2 = slurp(fs::path(cfg2.output_dir) / "report.csv");
    // hashes differ only through output_dir, which is part of the snapshot;
    // strip the hash line and compare the body byte-for-byte
    auto body = [](const std::string& s) { return s.substr(s.find('\n') + 1); };
    CHECK(body(csv1) == body(csv2));

    // tampered log: non-monotone steps are rejected on re-read
    {
        std::string log = slurp(fs::path(cfg.output_dir) / "ar/log.csv");
        log += "1,train,1.0,1.0,1.0\n"; // step goes backwards
        spit(fs::path(cfg.output_dir) / "ar/log.csv", log);
        CHECK_THROWS_AS(compare(cfg.output_dir + "/ar", cfg.output_dir + "/mdlm", false, cfg.seed),
                        std::runtime_error);
    }
    fs::remove_all(work);
}

TEST_CASE("compare rejects mixed config hashes unless allowed") {
    auto work = fresh_dir("parlab_hmix");
    for (const char* d : {"a", "b"}) {
        fs::create_directories(work / d);
        ConvergenceLog log;
        log.records.push_back({1, "train", 1.0, 1.0, 10.0});
        log.records.push_back({1, "val", 1.0, 1.0, 0.0});
        spit(work / d / "log.csv",
             std::string("# config_hash=") + (d[0] == 'a' ? "1111" : "2222") + "\n" + log.to_csv());
        auto set = SampleSet::from_texts({"one sample", "two sample"});
        write_samples_file((work / d / "samples.txt").string(), set,
                           std::string("config_hash=") + (d[0] == 'a' ? "1111" : "2222"));
    }
    CHECK_THROWS_AS(compare((work / "a").string(), (work / "b").string(), false, 0), ValidationError);
    auto rep = compare((work / "a").string(), (work / "b").string(), true, 0);
    CHECK(rep.ar.best_step == 1);
    CHECK_THROWS_AS(compare((work / "a").string(), (work / "missing").string(), true, 0),
                    ValidationError);
    fs::remove_all(work);
}
