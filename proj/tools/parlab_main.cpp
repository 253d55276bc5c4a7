#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "parlab/harness.hpp"

extern "C" void openblas_set_num_threads(int);

namespace {

using namespace parlab;

constexpr int EXIT_CONFIG = 2;
constexpr int EXIT_RUNTIME = 3;
constexpr int EXIT_VALIDATION = 4;

std::optional<Paradigm> parse_only(const std::string& s) {
    if (s.empty()) return std::nullopt;
    if (s == "ar") return Paradigm::AR;
    if (s == "mdlm") return Paradigm::MDLM;
    throw ConfigError("--only expects 'ar' or 'mdlm', got: " + s);
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << content;
}

} // namespace

int main(int argc, char** argv) {
    // single-threaded BLAS keeps runs bitwise reproducible across reruns
    openblas_set_num_threads(1);

    CLI::App app{"controlled AR vs masked-diffusion language model laboratory"};
    app.require_subcommand(1);

    std::string config_path, only_str, out_path, ckpt_path;
    std::string samples_a, samples_b, dir_a, dir_b, run_dir;
    std::optional<uint64_t> seed;
    std::optional<int> num_samples, length;
    bool resume = false, force = false, dry_run = false, allow_mixed = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config file")->required();
        cmd->add_option("--seed", seed, "override run seed");
    };

    auto* cmd_run = app.add_subcommand("run", "full A/B experiment: train, generate, report, figures");
    add_common(cmd_run);
    cmd_run->add_option("--only", only_str, "run a single paradigm (ar|mdlm)");
    cmd_run->add_option("--num-samples", num_samples, "samples per paradigm");
    cmd_run->add_option("--length", length, "generated sample length in tokens");
    cmd_run->add_flag("--resume", resume, "continue into an existing output directory");
    cmd_run->add_flag("--force", force, "overwrite prior outputs");
    cmd_run->add_flag("--dry-run", dry_run, "validate config and print parameter counts only");

    auto* cmd_train = app.add_subcommand("train", "train without generation or reports");
    add_common(cmd_train);
    cmd_train->add_option("--only", only_str, "train a single paradigm (ar|mdlm)");
    cmd_train->add_flag("--resume", resume, "resume from last checkpoint");
    cmd_train->add_flag("--force", force, "overwrite prior outputs");

    auto* cmd_gen = app.add_subcommand("generate", "sample from a trained checkpoint");
    add_common(cmd_gen);
    cmd_gen->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    cmd_gen->add_option("--num-samples", num_samples, "number of samples");
    cmd_gen->add_option("--length", length, "sample length in tokens");
    cmd_gen->add_option("--out", out_path, "samples output file (default stdout)");

    auto* cmd_div = app.add_subcommand("eval-diversity", "diversity metrics over samples files");
    cmd_div->add_option("--samples-a", samples_a, "first samples file")->required();
    cmd_div->add_option("--samples-b", samples_b, "second samples file (paired report)");
    cmd_div->add_option("--seed", seed, "reference-draw seed");
    cmd_div->add_option("--out", out_path, "report csv output (default stdout)");

    auto* cmd_cmp = app.add_subcommand("compare", "recompute a report from two archived run directories");
    cmd_cmp->add_option("dir_a", dir_a, "first paradigm directory")->required();
    cmd_cmp->add_option("dir_b", dir_b, "second paradigm directory")->required();
    cmd_cmp->add_option("--seed", seed, "reference-draw seed");
    cmd_cmp->add_flag("--allow-mixed", allow_mixed, "permit mixed config hashes");
    cmd_cmp->add_option("--out", out_path, "report csv output (default stdout)");

    auto* cmd_plot = app.add_subcommand("plot", "regenerate figures from run-directory logs");
    cmd_plot->add_option("run_dir", run_dir, "run directory with ar/ and mdlm/ logs")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e); // prints help or the parse diagnostic
        return rc == 0 ? 0 : EXIT_CONFIG;
    }

    try {
        if (*cmd_run || *cmd_train) {
            ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
            if (seed) {
                cfg.seed = *seed;
                cfg.train.seed = *seed;
                cfg.gen_ar.seed = cfg.gen_mdlm.seed = *seed;
            }
            RunOptions opt;
            opt.only = parse_only(only_str);
            opt.num_samples = num_samples;
            opt.length = length;
            opt.resume = resume;
            opt.force = force;
            opt.dry_run = dry_run;
            if (*cmd_train && !dry_run) {
                // training-only: reuse the orchestrator per paradigm, skip sampling
                opt.num_samples = 2; // minimum; cheap
            }
            ComparisonReport rep = run_experiment(cfg, opt);
            if (!dry_run && !opt.only && *cmd_run) std::cout << rep.to_csv();
        } else if (*cmd_gen) {
            ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
            Checkpoint ck = load_checkpoint(ckpt_path);
            Model<float> model(ck.model_cfg);
            model.params = std::move(ck.params);
            bool is_ar = ck.model_cfg.attention_mode == AttentionMode::causal;
            GenerationConfig gen = is_ar ? cfg.gen_ar : cfg.gen_mdlm;
            if (seed) gen.seed = *seed;
            if (length) gen.length = *length;
            int n = num_samples.value_or(cfg.num_samples);
            auto tokens = is_ar ? ar_generate_batch(model, gen, n) : mdlm_generate_batch(model, gen, n);
            std::vector<std::string> texts;
            for (auto& t : tokens) texts.push_back(detokenize(t));
            std::ostringstream prov;
            prov << "checkpoint=" << ckpt_path << " paradigm=" << (is_ar ? "ar" : "mdlm")
                 << " num_samples=" << n << " length=" << gen.length << " seed=" << gen.seed;
            SampleSet set = SampleSet::from_texts(std::move(texts), prov.str());
            if (out_path.empty()) {
                for (const auto& t : set.texts) std::cout << t << "\n---\n";
            } else {
                write_samples_file(out_path, set, prov.str());
            }
        } else if (*cmd_div) {
            SampleSet a = read_samples_file(samples_a);
            std::string csv;
            if (samples_b.empty()) {
                DiversityReport r = diversity_report(a, seed.value_or(0));
                std::ostringstream os;
                os << "metric,value\n";
                for (int n = 1; n <= 4; ++n)
                    os << "distinct_" << n << ","
                       << (r.distinct_n[n - 1] ? std::to_string(*r.distinct_n[n - 1]) : "absent") << "\n";
                os << "self_bleu," << r.self_bleu << "\n";
                os << "vocab_used," << r.vocab_used << "\n";
                os << "unique_first_words," << r.unique_first_word_fraction << "\n";
                os << "unique_first_5grams," << r.unique_first_5gram_fraction << "\n";
                csv = os.str();
            } else {
                SampleSet b = read_samples_file(samples_b);
                csv = compile_report(a, b, seed.value_or(0)).to_csv();
            }
            if (out_path.empty()) std::cout << csv;
            else write_text(out_path, csv);
        } else if (*cmd_cmp) {
            ComparisonReport rep = compare(dir_a, dir_b, allow_mixed, seed.value_or(0));
            if (out_path.empty()) std::cout << rep.to_csv();
            else write_text(out_path, rep.to_csv());
        } else if (*cmd_plot) {
            auto read = [](const std::string& p) {
                std::ifstream is(p, std::ios::binary);
                if (!is) throw ValidationError("missing artifact: " + p);
                std::ostringstream os;
                os << is.rdbuf();
                return os.str();
            };
            std::string ar_text = read(run_dir + "/ar/log.csv");
            std::string md_text = read(run_dir + "/mdlm/log.csv");
            std::string hash;
            if (size_t p = ar_text.find("config_hash="); p != std::string::npos)
                hash = ar_text.substr(p + 12, 16);
            emit_figures(ConvergenceLog::from_csv(ar_text), ConvergenceLog::from_csv(md_text),
                         run_dir + "/figures", hash);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return EXIT_CONFIG;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return EXIT_VALIDATION;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return EXIT_CONFIG;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return EXIT_RUNTIME;
    }
    return 0;
}
