#include "parlab/harness.hpp"

#include <climits>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace parlab {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open file: " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write file: " + path);
    os << content;
}

std::string escape_line(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '\\') out += "\\\\";
        else if (c == '\n') out += "\\n";
        else if (c == '\r') out += "\\r";
        else out.push_back(c);
    }
    return out;
}

std::string unescape_line(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            char n = s[++i];
            out.push_back(n == 'n' ? '\n' : n == 'r' ? '\r' : n);
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

// the keys on which the AR and MDLM serialized model configs may differ
const std::vector<std::string> kParadigmKeys = {"model.attention_mode", "model.timestep_conditioning"};

void check_single_sourcing(const ModelConfig& ar, const ModelConfig& mdlm) {
    KvMap a = model_config_to_kv(ar), b = model_config_to_kv(mdlm);
    for (const auto& [k, v] : a) {
        bool paradigm_key = std::find(kParadigmKeys.begin(), kParadigmKeys.end(), k) != kParadigmKeys.end();
        if (!paradigm_key && b.at(k) != v)
            throw ValidationError("single-sourcing violated: shared key differs: " + k);
    }
}

std::string hash_of_artifact(const std::string& text) {
    // artifacts carry "# config_hash=<hex>" near the top
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind("# config_hash=", 0) == 0) return line.substr(14);
        if (!line.empty() && line[0] != '#') break;
    }
    return "";
}

} // namespace

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// ---- experiment config -----------------------------------------------------

KvMap ExperimentConfig::to_kv() const {
    KvMap kv = model_config_to_kv(shared_model);
    // the paradigm switches are derived per run; keep the snapshot canonical
    kv.erase("model.attention_mode");
    kv.erase("model.timestep_conditioning");
    KvMap t = train_config_to_kv(train);
    t.erase("train.seed"); // single-sourced under [run]
    kv.insert(t.begin(), t.end());
    kv["corpus.path"] = corpus_path;
    kv["corpus.split_fraction"] = fmt(split_fraction);
    kv["generate.ar.top_p"] = fmt(gen_ar.top_p);
    kv["generate.ar.temperature"] = fmt(gen_ar.temperature);
    kv["generate.mdlm.steps"] = std::to_string(gen_mdlm.steps);
    kv["generate.mdlm.tau_start"] = fmt(gen_mdlm.tau_start);
    kv["generate.mdlm.tau_end"] = fmt(gen_mdlm.tau_end);
    kv["generate.mdlm.repetition_penalty"] = fmt(gen_mdlm.repetition_penalty);
    kv["generate.num_samples"] = std::to_string(num_samples);
    kv["generate.length"] = std::to_string(gen_ar.length);
    kv["run.output_dir"] = output_dir;
    kv["run.seed"] = std::to_string(seed);
    return kv;
}

ExperimentConfig ExperimentConfig::from_kv(const KvMap& kv) {
    try {
        ExperimentConfig c;
        c.corpus_path = kv_require(kv, "corpus.path");
        c.split_fraction = std::stod(kv_get(kv, "corpus.split_fraction", "0.05"));
        c.shared_model = model_config_from_kv(kv);
        c.train = train_config_from_kv(kv);
        c.seed = std::stoull(kv_get(kv, "run.seed", "0"));
        c.train.seed = c.seed;
        c.output_dir = kv_get(kv, "run.output_dir", "run_out");
        c.num_samples = std::stoi(kv_get(kv, "generate.num_samples", "200"));
        int length = std::stoi(kv_get(kv, "generate.length", "128"));
        c.gen_ar.length = c.gen_mdlm.length = length;
        c.gen_ar.top_p = std::stod(kv_get(kv, "generate.ar.top_p", "0.9"));
        c.gen_ar.temperature = std::stod(kv_get(kv, "generate.ar.temperature", "0.8"));
        c.gen_mdlm.steps = std::stoi(kv_get(kv, "generate.mdlm.steps", "100"));
        c.gen_mdlm.tau_start = std::stod(kv_get(kv, "generate.mdlm.tau_start", "1.2"));
        c.gen_mdlm.tau_end = std::stod(kv_get(kv, "generate.mdlm.tau_end", "0.5"));
        c.gen_mdlm.repetition_penalty = std::stod(kv_get(kv, "generate.mdlm.repetition_penalty", "1.3"));
        c.gen_ar.seed = c.gen_mdlm.seed = c.seed;
        c.validate();
        return c;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    } catch (const std::out_of_range& e) {
        throw ConfigError(e.what());
    }
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::ostringstream os;
    os << is.rdbuf();
    try {
        return from_kv(parse_kv(os.str()));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

void ExperimentConfig::validate() const {
    shared_model.validate();
    train.validate();
    gen_ar.validate();
    gen_mdlm.validate();
    if (!(split_fraction > 0 && split_fraction < 1))
        throw std::invalid_argument("config: split_fraction must be in (0,1)");
    if (num_samples < 2) throw std::invalid_argument("config: num_samples must be >= 2");
    if (corpus_path.empty()) throw std::invalid_argument("config: corpus path required");
}

std::string ExperimentConfig::hash() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)fnv1a(snapshot()));
    return buf;
}

// ---- corpus loading --------------------------------------------------------

CorpusSplit load_corpus(const std::string& path, int seq_len, double fraction) {
    std::string text = read_file(path);
    auto chunks = build_chunks(tokenize(text), (size_t)seq_len);
    if (chunks.empty()) throw ValidationError("corpus too small for one chunk: " + path);
    return split(std::move(chunks), fraction);
}

// ---- samples file ----------------------------------------------------------

void write_samples_file(const std::string& path, const SampleSet& set, const std::string& header) {
    std::ostringstream os;
    os << "# " << header << "\n";
    for (const auto& t : set.texts) os << escape_line(t) << "\n";
    write_file(path, os.str());
}

SampleSet read_samples_file(const std::string& path, std::string* header_out) {
    std::istringstream is(read_file(path));
    std::string line;
    std::vector<std::string> texts;
    std::string header;
    bool first = true;
    while (std::getline(is, line)) {
        if (first && line.rfind("# ", 0) == 0) {
            header = line.substr(2);
            first = false;
            continue;
        }
        first = false;
        texts.push_back(unescape_line(line));
    }
    if (header_out) *header_out = header;
    return SampleSet::from_texts(std::move(texts), header);
}

// ---- figures ---------------------------------------------------------------

namespace {

struct SvgCanvas {
    std::ostringstream body;
    int w, h;
    SvgCanvas(int width, int height) : w(width), h(height) {}

    void line(double x1, double y1, double x2, double y2, const std::string& color, double sw = 1.0) {
        body << "<line x1='" << x1 << "' y1='" << y1 << "' x2='" << x2 << "' y2='" << y2
             << "' stroke='" << color << "' stroke-width='" << sw << "'/>\n";
    }
    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color) {
        body << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (auto& [x, y] : pts) body << x << "," << y << " ";
        body << "'/>\n";
    }
    void circle(double x, double y, double r, const std::string& color) {
        body << "<circle cx='" << x << "' cy='" << y << "' r='" << r << "' fill='" << color << "'/>\n";
    }
    void text(double x, double y, const std::string& s, const std::string& anchor = "start",
              const std::string& color = "#333") {
        body << "<text x='" << x << "' y='" << y << "' font-size='11' font-family='sans-serif'"
             << " text-anchor='" << anchor << "' fill='" << color << "'>" << s << "</text>\n";
    }
    void rect(double x, double y, double rw, double rh, const std::string& color) {
        body << "<rect x='" << x << "' y='" << y << "' width='" << rw << "' height='" << rh
             << "' fill='" << color << "'/>\n";
    }
    std::string str() const {
        std::ostringstream os;
        os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
           << "' viewBox='0 0 " << w << " " << h << "'>\n"
           << "<rect width='100%' height='100%' fill='white'/>\n"
           << body.str() << "</svg>\n";
        return os.str();
    }
};

struct Curve {
    std::vector<std::pair<long long, double>> pts; // (step, val loss)
    long long best_step = -1;
};

Curve val_curve(const ConvergenceLog& log) {
    Curve c;
    double best = 1e300;
    for (const auto& r : log.records) {
        if (r.split != "val") continue;
        c.pts.emplace_back(r.step, r.loss_nats);
        if (r.loss_nats < best) {
            best = r.loss_nats;
            c.best_step = r.step;
        }
    }
    return c;
}

} // namespace

void emit_figures(const ConvergenceLog& ar_log, const ConvergenceLog& mdlm_log,
                  const std::string& figures_dir, const std::string& config_hash) {
    fs::create_directories(figures_dir);
    Curve ar = val_curve(ar_log), md = val_curve(mdlm_log);
    if (ar.pts.empty() && md.pts.empty()) throw ValidationError("emit_figures: no eval points");

    // loss.csv: one row per eval step
    {
        std::ostringstream os;
        os << "# config_hash=" << config_hash << "\n";
        os << "step,ar_val_loss,mdlm_val_loss\n";
        size_t n = std::max(ar.pts.size(), md.pts.size());
        for (size_t i = 0; i < n; ++i) {
            long long step = i < ar.pts.size() ? ar.pts[i].first
                                               : md.pts[i].first;
            os << step << "," << (i < ar.pts.size() ? fmt(ar.pts[i].second) : "")
               << "," << (i < md.pts.size() ? fmt(md.pts[i].second) : "") << "\n";
        }
        write_file(figures_dir + "/loss.csv", os.str());
    }

    // loss.svg: dual y-axes, one per objective
    {
        const int W = 640, H = 400, ML = 60, MR = 60, MT = 30, MB = 40;
        SvgCanvas svg(W, H);
        long long smin = LLONG_MAX, smax = LLONG_MIN;
        for (auto& [s, v] : ar.pts) { smin = std::min(smin, s); smax = std::max(smax, s); }
        for (auto& [s, v] : md.pts) { smin = std::min(smin, s); smax = std::max(smax, s); }
        if (smax == smin) smax = smin + 1;
        auto sx = [&](double s) { return ML + (s - (double)smin) / (double)(smax - smin) * (W - ML - MR); };
        auto yscale = [&](const Curve& c) {
            double lo = 1e300, hi = -1e300;
            for (auto& [s, v] : c.pts) { lo = std::min(lo, v); hi = std::max(hi, v); }
            if (hi - lo < 1e-9) { hi += 0.5; lo -= 0.5; }
            return std::pair{lo, hi};
        };
        svg.line(ML, H - MB, W - MR, H - MB, "#888");
        svg.line(ML, MT, ML, H - MB, "#1f77b4");
        svg.line(W - MR, MT, W - MR, H - MB, "#d62728");
        svg.text((ML + W - MR) / 2.0, H - 10, "step", "middle");
        auto draw = [&](const Curve& c, const std::string& color, bool left) {
            if (c.pts.empty()) return;
            auto [lo, hi] = yscale(c);
            auto sy = [&](double v) { return H - MB - (v - lo) / (hi - lo) * (H - MT - MB); };
            std::vector<std::pair<double, double>> pix;
            for (auto& [s, v] : c.pts) pix.emplace_back(sx((double)s), sy(v));
            svg.polyline(pix, color);
            if (pix.size() == 1) svg.circle(pix[0].first, pix[0].second, 3, color);
            for (auto& [s, v] : c.pts)
                if (s == c.best_step) svg.circle(sx((double)s), sy(v), 4, color);
            double x = left ? ML - 8 : W - MR + 8;
            std::string anchor = left ? "end" : "start";
            svg.text(x, MT + 4, fmt(hi), anchor, color);
            svg.text(x, H - MB, fmt(lo), anchor, color);
        };
        draw(ar, "#1f77b4", true);
        draw(md, "#d62728", false);
        svg.text(ML, 18, "ar val loss (left)", "start", "#1f77b4");
        svg.text(W - MR, 18, "mdlm val loss (right)", "end", "#d62728");
        write_file(figures_dir + "/loss.svg", svg.str());
    }

    // throughput
    double tp_ar = 0, tp_md = 0;
    try { tp_ar = measure_throughput(ar_log); } catch (const std::exception&) {}
    try { tp_md = measure_throughput(mdlm_log); } catch (const std::exception&) {}
    {
        std::ostringstream os;
        os << "# config_hash=" << config_hash << "\n";
        os << "paradigm,tokens_per_sec\n";
        os << "ar," << fmt(tp_ar) << "\n";
        os << "mdlm," << fmt(tp_md) << "\n";
        write_file(figures_dir + "/throughput.csv", os.str());
    }
    {
        const int W = 360, H = 300, MB = 40, MT = 30;
        SvgCanvas svg(W, H);
        double hi = std::max({tp_ar, tp_md, 1.0});
        auto bar = [&](double x, double v, const std::string& color, const std::string& label) {
            double bh = v / hi * (H - MT - MB);
            svg.rect(x, H - MB - bh, 80, bh, color);
            svg.text(x + 40, H - MB + 16, label, "middle");
            svg.text(x + 40, H - MB - bh - 6, fmt(v), "middle");
        };
        bar(60, tp_ar, "#1f77b4", "ar");
        bar(220, tp_md, "#d62728", "mdlm");
        svg.text(W / 2.0, 18, "training throughput (tokens/sec)", "middle");
        write_file(figures_dir + "/throughput.svg", svg.str());
    }
}

// ---- report ----------------------------------------------------------------

std::string ComparisonReport::to_csv() const {
    std::ostringstream os;
    os << "# config_hash=" << config_hash << "\n";
    os << "metric," << diversity.label_a << "," << diversity.label_b << ",verdict\n";
    os << "best_step," << ar.best_step << "," << mdlm.best_step << ",n/a\n";
    os << "best_val_loss," << fmt(ar.best_val_loss) << "," << fmt(mdlm.best_val_loss) << ",n/a\n";
    os << "final_val_loss," << fmt(ar.final_val_loss) << "," << fmt(mdlm.final_val_loss) << ",n/a\n";
    for (const auto& r : diversity.rows)
        os << r.metric << "," << (r.a ? fmt(*r.a) : "absent") << "," << (r.b ? fmt(*r.b) : "absent")
           << "," << r.verdict << "\n";
    return os.str();
}

std::string ComparisonReport::to_markdown() const {
    std::ostringstream os;
    os << "# Paradigm comparison report\n\nconfig hash: `" << config_hash << "`\n\n";
    os << "## Convergence\n\n";
    os << "| | ar | mdlm |\n|---|---|---|\n";
    os << "| best step | " << ar.best_step << " | " << mdlm.best_step << " |\n";
    os << "| best val loss (nats) | " << fmt(ar.best_val_loss) << " | " << fmt(mdlm.best_val_loss) << " |\n";
    os << "| final val loss (nats) | " << fmt(ar.final_val_loss) << " | " << fmt(mdlm.final_val_loss) << " |\n";
    os << "\nThe two columns measure different objectives (next-token vs masked-token\n"
          "prediction); compare convergence shapes, not absolute values.\n";
    if (throughput_ratio > 0) {
        os << "\n## Throughput\n\n";
        os << "| | ar | mdlm |\n|---|---|---|\n";
        os << "| tokens/sec | " << fmt(ar.tokens_per_sec) << " | " << fmt(mdlm.tokens_per_sec) << " |\n";
        os << "\nmdlm/ar per-step ratio: " << fmt(throughput_ratio) << "\n";
    }
    os << "\n## Diversity (" << diversity.report_a.sample_count << " samples each)\n\n";
    os << diversity.to_table();
    if (!notes.empty()) {
        os << "\n## Harness conventions\n\n";
        for (const auto& n : notes) os << "- " << n << "\n";
    }
    return os.str();
}

// ---- orchestration ---------------------------------------------------------

namespace {

const std::vector<std::string> kHarnessNotes = {
    "distinct-n is computed over byte-level token ids, corpus-aggregated",
    "learning rate: linear warmup then constant; gradient clipping at global norm 1.0",
    "mdlm validation uses a fixed stratified timestep grid for bitwise-repeatable evals",
    "loss unit is nats; both objectives equal ln(vocab) under uniform logits",
    "wall-clock columns live in log.csv and figures/throughput.csv; report.csv is "
    "deterministic given (config, seed)",
};

struct ParadigmArtifacts {
    TrainResult result;
    SampleSet samples;
    double tokens_per_sec = 0.0;
};

ParadigmArtifacts run_paradigm(const ExperimentConfig& cfg, Paradigm p, const RunOptions& opt,
                               const CorpusSplit& data) {
    std::string dir = cfg.output_dir + "/" + to_string(p);
    fs::create_directories(dir);
    ModelConfig mc = ModelConfig::for_paradigm(cfg.shared_model, p);
    write_file(dir + "/model.cfg", emit_kv(model_config_to_kv(mc)));

    std::optional<std::string> resume;
    if (opt.resume && fs::exists(dir + "/ckpt_last")) resume = dir + "/ckpt_last";

    Model<float> model(mc);
    TrainResult res = train(mc, cfg.train, data, p, dir, resume, &model);
    write_file(dir + "/log.csv", "# config_hash=" + cfg.hash() + "\n" + res.log.to_csv());

    // generate from the best checkpoint
    Model<float> best(mc);
    best.params = load_checkpoint(dir + "/ckpt_best").params;
    GenerationConfig gen = p == Paradigm::AR ? cfg.gen_ar : cfg.gen_mdlm;
    if (opt.length) gen.length = *opt.length;
    int n = opt.num_samples ? *opt.num_samples : cfg.num_samples;
    auto tokens = p == Paradigm::AR ? ar_generate_batch(best, gen, n) : mdlm_generate_batch(best, gen, n);

    std::string ck_hash;
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)fnv1a(read_file(dir + "/ckpt_best")));
        ck_hash = buf;
    }
    std::ostringstream prov;
    prov << "config_hash=" << cfg.hash() << " checkpoint=" << ck_hash << " paradigm=" << to_string(p)
         << " num_samples=" << n << " length=" << gen.length << " seed=" << gen.seed;
    if (p == Paradigm::AR)
        prov << " top_p=" << gen.top_p << " temperature=" << gen.temperature;
    else
        prov << " steps=" << gen.steps << " tau=" << gen.tau_start << ".." << gen.tau_end
             << " repetition_penalty=" << gen.repetition_penalty;

    ParadigmArtifacts art;
    std::vector<std::string> texts;
    for (auto& t : tokens) texts.push_back(detokenize(t));
    art.samples = SampleSet::from_texts(std::move(texts), prov.str());
    write_samples_file(dir + "/samples.txt", art.samples, prov.str());
    art.result = std::move(res);
    try {
        art.tokens_per_sec = measure_throughput(art.result.log);
    } catch (const std::exception&) {
        art.tokens_per_sec = 0.0;
    }
    return art;
}

ComparisonReport assemble(const ExperimentConfig& cfg, const TrainResult& ar_res,
                          const TrainResult& mdlm_res, double tp_ar, double tp_md,
                          const SampleSet& ar_samples, const SampleSet& mdlm_samples) {
    ComparisonReport rep;
    rep.config_hash = cfg.hash();
    rep.ar = {ar_res.best_step, ar_res.best_val_loss, ar_res.final_val_loss, tp_ar};
    rep.mdlm = {mdlm_res.best_step, mdlm_res.best_val_loss, mdlm_res.final_val_loss, tp_md};
    rep.throughput_ratio = tp_ar > 0 && tp_md > 0 ? tp_md / tp_ar : 0.0;
    rep.diversity = compile_report(ar_samples, mdlm_samples, cfg.seed, "ar", "mdlm");
    rep.notes = kHarnessNotes;
    return rep;
}

} // namespace

ComparisonReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opt) {
    cfg.validate();
    check_single_sourcing(ModelConfig::for_paradigm(cfg.shared_model, Paradigm::AR),
                          ModelConfig::for_paradigm(cfg.shared_model, Paradigm::MDLM));
    if (opt.dry_run) {
        std::cout << "config ok; hash " << cfg.hash() << "\n";
        for (Paradigm p : {Paradigm::AR, Paradigm::MDLM}) {
            ModelConfig mc = ModelConfig::for_paradigm(cfg.shared_model, p);
            std::cout << to_string(p) << " parameters: " << count_params(mc) << "\n";
        }
        return {};
    }
    if (fs::exists(cfg.output_dir) && !fs::is_empty(cfg.output_dir) && !opt.resume && !opt.force)
        throw ValidationError("output directory has prior contents: " + cfg.output_dir +
                              " (use --resume or --force)");
    fs::create_directories(cfg.output_dir);
    write_file(cfg.output_dir + "/config.snapshot",
               "# config_hash=" + cfg.hash() + "\n" + cfg.snapshot());

    CorpusSplit data = load_corpus(cfg.corpus_path, cfg.shared_model.seq_len, cfg.split_fraction);

    std::optional<ParadigmArtifacts> ar_art, mdlm_art;
    if (!opt.only || *opt.only == Paradigm::AR)
        ar_art = run_paradigm(cfg, Paradigm::AR, opt, data);
    if (!opt.only || *opt.only == Paradigm::MDLM)
        mdlm_art = run_paradigm(cfg, Paradigm::MDLM, opt, data);
    if (!ar_art || !mdlm_art) return {}; // single-paradigm run: artifacts only

    ComparisonReport rep = assemble(cfg, ar_art->result, mdlm_art->result, ar_art->tokens_per_sec,
                                    mdlm_art->tokens_per_sec, ar_art->samples, mdlm_art->samples);
    write_file(cfg.output_dir + "/report.csv", rep.to_csv());
    write_file(cfg.output_dir + "/report.md", rep.to_markdown());
    emit_figures(ar_art->result.log, mdlm_art->result.log, cfg.output_dir + "/figures", cfg.hash());
    return rep;
}

ComparisonReport compare(const std::string& dir_a, const std::string& dir_b, bool allow_mixed,
                         uint64_t seed) {
    auto load_dir = [&](const std::string& dir) {
        std::string log_path = dir + "/log.csv";
        std::string samples_path = dir + "/samples.txt";
        if (!fs::exists(log_path)) throw ValidationError("missing artifact: " + log_path);
        if (!fs::exists(samples_path)) throw ValidationError("missing artifact: " + samples_path);
        std::string log_text = read_file(log_path);
        ConvergenceLog log = ConvergenceLog::from_csv(log_text);
        std::string header;
        SampleSet samples = read_samples_file(samples_path, &header);
        std::string h1 = hash_of_artifact(log_text);
        std::string h2;
        if (size_t p = header.find("config_hash="); p != std::string::npos)
            h2 = header.substr(p + 12, 16);
        if (!allow_mixed && !h1.empty() && !h2.empty() && h1 != h2)
            throw ValidationError("mixed config hashes inside " + dir + " (use --allow-mixed)");
        return std::tuple{std::move(log), std::move(samples), h1};
    };
    auto [log_a, samples_a, hash_a] = load_dir(dir_a);
    auto [log_b, samples_b, hash_b] = load_dir(dir_b);
    if (!allow_mixed && !hash_a.empty() && !hash_b.empty() && hash_a != hash_b)
        throw ValidationError("config hashes differ between run directories (use --allow-mixed)");

    auto summarize = [](const ConvergenceLog& log) {
        ParadigmSummary s;
        double best = 1e300;
        for (const auto& r : log.records) {
            if (r.split != "val") continue;
            s.final_val_loss = r.loss_nats;
            if (r.loss_nats < best) {
                best = r.loss_nats;
                s.best_step = r.step;
                s.best_val_loss = r.loss_nats;
            }
        }
        try { s.tokens_per_sec = measure_throughput(log); } catch (const std::exception&) {}
        return s;
    };
    ComparisonReport rep;
    rep.config_hash = hash_a.empty() ? hash_b : hash_a;
    rep.ar = summarize(log_a);
    rep.mdlm = summarize(log_b);
    rep.throughput_ratio = rep.ar.tokens_per_sec > 0 && rep.mdlm.tokens_per_sec > 0
                               ? rep.mdlm.tokens_per_sec / rep.ar.tokens_per_sec
                               : 0.0;
    rep.diversity = compile_report(samples_a, samples_b, seed, "ar", "mdlm");
    rep.notes = kHarnessNotes;
    return rep;
}

} // namespace parlab
