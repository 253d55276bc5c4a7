#include "parlab/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace parlab {

namespace {

// independent deterministic streams derived from the master seed
constexpr uint64_t STREAM_INIT = 1;
constexpr uint64_t STREAM_DATA = 2;
constexpr uint64_t STREAM_MASK = 3;
constexpr uint64_t STREAM_EVAL = 4;

constexpr double DIVERGENCE_NATS = 20.0;
constexpr int DIVERGENCE_PATIENCE = 100;

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string hexfloat(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

void check_paradigm(const ModelConfig& mc, Paradigm p) {
    if (p == Paradigm::AR && (mc.attention_mode != AttentionMode::causal || mc.timestep_conditioning))
        throw std::invalid_argument("AR paradigm requires causal attention without timestep conditioning");
    if (p == Paradigm::MDLM && (mc.attention_mode != AttentionMode::bidirectional || !mc.timestep_conditioning))
        throw std::invalid_argument("MDLM paradigm requires bidirectional attention with timestep conditioning");
}

// deterministic epoch-shuffled index stream over the training chunks
struct BatchSchedule {
    size_t n;
    uint64_t seed;
    long long epoch = -1;
    std::vector<size_t> order;

    size_t at(long long global) {
        long long e = global / (long long)n;
        if (e != epoch) {
            epoch = e;
            order.resize(n);
            for (size_t i = 0; i < n; ++i) order[i] = i;
            Rng rng(derive_seed(seed, STREAM_DATA, (uint64_t)e));
            rng.shuffle(order);
        }
        return order[global % (long long)n];
    }
};

} // namespace

void adamw_step(Parameters<float>& params, const std::vector<Tensor<float>>& grads,
                OptimizerState& state, const TrainConfig& cfg, double lr_now) {
    if (grads.size() != params.tensors.size()) throw std::invalid_argument("adamw: grad count mismatch");
    state.step += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, (double)state.step);
    double bc2 = 1.0 - std::pow(cfg.beta2, (double)state.step);
    for (size_t i = 0; i < grads.size(); ++i) {
        auto& p = params.tensors[i];
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (!grads[i].same_shape(p)) throw std::invalid_argument("adamw: grad shape mismatch");
        for (size_t j = 0; j < p.size(); ++j) {
            double g = grads[i][j];
            if (!std::isfinite(g))
                throw std::runtime_error("adamw: non-finite gradient in " + params.names[i]);
            double mm = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            double vv = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            m[j] = (float)mm;
            v[j] = (float)vv;
            double mhat = mm / bc1;
            double vhat = vv / bc2;
            p[j] = (float)(p[j] - lr_now * mhat / (std::sqrt(vhat) + cfg.eps)
                           - lr_now * cfg.weight_decay * p[j]);
        }
    }
}

std::string ConvergenceLog::to_csv(bool include_timing) const {
    std::ostringstream os;
    os << (include_timing ? "step,split,loss_nats,wall_ms,tokens_per_sec\n" : "step,split,loss_nats\n");
    for (const auto& r : records) {
        os << r.step << "," << r.split << "," << fmt_double(r.loss_nats);
        if (include_timing) os << "," << fmt_double(r.wall_ms) << "," << fmt_double(r.tokens_per_sec);
        os << "\n";
    }
    return os.str();
}

ConvergenceLog ConvergenceLog::from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    do {
        if (!std::getline(is, line)) throw std::runtime_error("log csv: empty");
    } while (line.empty() || line[0] == '#');
    bool timed = line.find("wall_ms") != std::string::npos;
    if (line != "step,split,loss_nats,wall_ms,tokens_per_sec" && line != "step,split,loss_nats")
        throw std::runtime_error("log csv: unexpected header");
    ConvergenceLog log;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        LogRecord r;
        std::string field;
        std::getline(ls, field, ',');
        r.step = std::stoll(field);
        std::getline(ls, r.split, ',');
        std::getline(ls, field, ',');
        r.loss_nats = std::stod(field);
        if (timed) {
            std::getline(ls, field, ',');
            r.wall_ms = std::stod(field);
            std::getline(ls, field, ',');
            r.tokens_per_sec = std::stod(field);
        }
        log.records.push_back(std::move(r));
    }
    log.validate();
    return log;
}

void ConvergenceLog::validate() const {
    long long prev = 0;
    for (const auto& r : records) {
        if (r.step < prev) throw std::runtime_error("log: steps not non-decreasing");
        if (r.split != "train" && r.split != "val") throw std::runtime_error("log: unknown split");
        prev = r.step;
    }
}

double measure_throughput(const ConvergenceLog& log, long long skip_steps) {
    double tokens = 0.0, ms = 0.0;
    size_t counted = 0;
    double prev_wall = -1.0;
    for (const auto& r : log.records) {
        if (r.split != "train") continue;
        if (r.step <= skip_steps) continue;
        if (prev_wall < 0) {
            prev_wall = r.wall_ms; // window opens here; this step not counted
            continue;
        }
        double dt = r.wall_ms - prev_wall;
        tokens += r.tokens_per_sec * dt / 1000.0;
        ms += dt;
        prev_wall = r.wall_ms;
        ++counted;
    }
    if (counted < 100) throw std::runtime_error("measure_throughput: fewer than 100 steady-state steps");
    if (ms <= 0) throw std::runtime_error("measure_throughput: empty measurement window");
    return tokens / (ms / 1000.0);
}

// ---- config serialization --------------------------------------------------

KvMap model_config_to_kv(const ModelConfig& c) {
    KvMap kv;
    kv["model.vocab_size"] = std::to_string(c.vocab_size);
    kv["model.d_model"] = std::to_string(c.d_model);
    kv["model.n_layers"] = std::to_string(c.n_layers);
    kv["model.n_heads"] = std::to_string(c.n_heads);
    kv["model.ffn_dim"] = std::to_string(c.ffn_dim);
    kv["model.seq_len"] = std::to_string(c.seq_len);
    kv["model.attention_mode"] = c.attention_mode == AttentionMode::causal ? "causal" : "bidirectional";
    kv["model.timestep_conditioning"] = c.timestep_conditioning ? "true" : "false";
    kv["model.tie_output_head"] = c.tie_output_head ? "true" : "false";
    return kv;
}

static bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::invalid_argument("expected boolean, got: " + s);
}

ModelConfig model_config_from_kv(const KvMap& kv, const std::string& prefix) {
    ModelConfig c;
    c.vocab_size = std::stoi(kv_get(kv, prefix + "vocab_size", std::to_string(c.vocab_size)));
    c.d_model = std::stoi(kv_require(kv, prefix + "d_model"));
    c.n_layers = std::stoi(kv_require(kv, prefix + "n_layers"));
    c.n_heads = std::stoi(kv_require(kv, prefix + "n_heads"));
    c.ffn_dim = std::stoi(kv_require(kv, prefix + "ffn_dim"));
    c.seq_len = std::stoi(kv_require(kv, prefix + "seq_len"));
    std::string mode = kv_get(kv, prefix + "attention_mode", "causal");
    if (mode == "causal") c.attention_mode = AttentionMode::causal;
    else if (mode == "bidirectional") c.attention_mode = AttentionMode::bidirectional;
    else throw std::invalid_argument("unknown attention_mode: " + mode);
    c.timestep_conditioning = parse_bool(kv_get(kv, prefix + "timestep_conditioning", "false"));
    c.tie_output_head = parse_bool(kv_get(kv, prefix + "tie_output_head", "false"));
    c.validate();
    return c;
}

KvMap train_config_to_kv(const TrainConfig& c) {
    KvMap kv;
    kv["train.steps"] = std::to_string(c.steps);
    kv["train.batch_size"] = std::to_string(c.batch_size);
    kv["train.lr"] = fmt_double(c.lr);
    kv["train.weight_decay"] = fmt_double(c.weight_decay);
    kv["train.beta1"] = fmt_double(c.beta1);
    kv["train.beta2"] = fmt_double(c.beta2);
    kv["train.eps"] = fmt_double(c.eps);
    kv["train.warmup_steps"] = std::to_string(c.warmup_steps);
    kv["train.eval_every"] = std::to_string(c.eval_every);
    kv["train.seed"] = std::to_string(c.seed);
    kv["train.clip_norm"] = fmt_double(c.clip_norm);
    return kv;
}

TrainConfig train_config_from_kv(const KvMap& kv, const std::string& prefix) {
    TrainConfig c;
    c.steps = std::stoll(kv_require(kv, prefix + "steps"));
    c.batch_size = std::stoi(kv_require(kv, prefix + "batch_size"));
    c.lr = std::stod(kv_get(kv, prefix + "lr", fmt_double(c.lr)));
    c.weight_decay = std::stod(kv_get(kv, prefix + "weight_decay", fmt_double(c.weight_decay)));
    c.beta1 = std::stod(kv_get(kv, prefix + "beta1", fmt_double(c.beta1)));
    c.beta2 = std::stod(kv_get(kv, prefix + "beta2", fmt_double(c.beta2)));
    c.eps = std::stod(kv_get(kv, prefix + "eps", fmt_double(c.eps)));
    c.warmup_steps = std::stoll(kv_get(kv, prefix + "warmup_steps", "-1"));
    c.eval_every = std::stoll(kv_get(kv, prefix + "eval_every", "100"));
    c.seed = std::stoull(kv_get(kv, prefix + "seed", "0"));
    c.clip_norm = std::stod(kv_get(kv, prefix + "clip_norm", "1"));
    c.validate();
    return c;
}

// ---- checkpoint persistence ------------------------------------------------

namespace {
template <typename U>
void put_le(std::ostream& os, U v) {
    unsigned char buf[sizeof(U)];
    for (size_t i = 0; i < sizeof(U); ++i) buf[i] = (unsigned char)(v >> (8 * i));
    os.write((const char*)buf, sizeof(U));
}
template <typename U>
U get_le(std::istream& is) {
    unsigned char buf[sizeof(U)];
    is.read((char*)buf, sizeof(U));
    U v = 0;
    for (size_t i = 0; i < sizeof(U); ++i) v |= (U)buf[i] << (8 * i);
    return v;
}
void put_tensor(std::ostream& os, const std::string& name, const Tensor<float>& t) {
    put_le<uint16_t>(os, (uint16_t)name.size());
    os.write(name.data(), (std::streamsize)name.size());
    put_le<uint8_t>(os, (uint8_t)t.rank());
    for (size_t d : t.shape) put_le<uint32_t>(os, (uint32_t)d);
    for (float f : t.data) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_le<uint32_t>(os, bits);
    }
}
std::pair<std::string, Tensor<float>> get_tensor(std::istream& is) {
    uint16_t nlen = get_le<uint16_t>(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    uint8_t rank = get_le<uint8_t>(is);
    std::vector<size_t> shape(rank);
    for (auto& d : shape) d = get_le<uint32_t>(is);
    Tensor<float> t(shape);
    for (auto& f : t.data) {
        uint32_t bits = get_le<uint32_t>(is);
        std::memcpy(&f, &bits, 4);
    }
    return {std::move(name), std::move(t)};
}
} // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    os.write("PLCK", 4);
    put_le<uint16_t>(os, 1);
    KvMap meta = model_config_to_kv(ck.model_cfg);
    KvMap tkv = train_config_to_kv(ck.train_cfg);
    meta.insert(tkv.begin(), tkv.end());
    meta["ckpt.step"] = std::to_string(ck.step);
    meta["ckpt.best_val_loss"] = hexfloat(ck.best_val_loss);
    meta["ckpt.best_step"] = std::to_string(ck.best_step);
    meta["ckpt.role"] = ck.role;
    meta["ckpt.opt_step"] = std::to_string(ck.opt.step);
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)ck.master_seed);
        meta["ckpt.rng_state"] = buf;
    }
    std::string text = emit_kv(meta);
    put_le<uint32_t>(os, (uint32_t)text.size());
    os.write(text.data(), (std::streamsize)text.size());
    uint32_t n_tensors = (uint32_t)(ck.params.tensors.size() + ck.opt.m.size() + ck.opt.v.size());
    put_le<uint32_t>(os, n_tensors);
    for (size_t i = 0; i < ck.params.tensors.size(); ++i)
        put_tensor(os, ck.params.names[i], ck.params.tensors[i]);
    for (size_t i = 0; i < ck.opt.m.size(); ++i) put_tensor(os, "opt.m." + ck.params.names[i], ck.opt.m[i]);
    for (size_t i = 0; i < ck.opt.v.size(); ++i) put_tensor(os, "opt.v." + ck.params.names[i], ck.opt.v[i]);
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "PLCK", 4) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    if (get_le<uint16_t>(is) != 1) throw std::runtime_error("load_checkpoint: unsupported version");
    uint32_t mlen = get_le<uint32_t>(is);
    std::string text(mlen, '\0');
    is.read(text.data(), mlen);
    KvMap meta = parse_kv(text);
    Checkpoint ck;
    ck.model_cfg = model_config_from_kv(meta);
    ck.train_cfg = train_config_from_kv(meta);
    ck.step = std::stoll(kv_require(meta, "ckpt.step"));
    ck.best_val_loss = std::strtod(kv_require(meta, "ckpt.best_val_loss").c_str(), nullptr);
    ck.best_step = std::stoll(kv_get(meta, "ckpt.best_step", "-1"));
    ck.role = kv_require(meta, "ckpt.role");
    ck.master_seed = std::stoull(kv_require(meta, "ckpt.rng_state"), nullptr, 16);
    long long opt_step = std::stoll(kv_get(meta, "ckpt.opt_step", "0"));
    uint32_t n_tensors = get_le<uint32_t>(is);
    Model<float> skeleton(ck.model_cfg);
    ck.params = skeleton.params;
    ck.opt = OptimizerState::zeros_like(ck.params);
    ck.opt.step = opt_step;
    for (uint32_t i = 0; i < n_tensors; ++i) {
        auto [name, t] = get_tensor(is);
        if (name.starts_with("opt.m.")) ck.opt.m[ck.params.index(name.substr(6))] = std::move(t);
        else if (name.starts_with("opt.v.")) ck.opt.v[ck.params.index(name.substr(6))] = std::move(t);
        else ck.params.tensors[ck.params.index(name)] = std::move(t);
    }
    if (!is) throw std::runtime_error("load_checkpoint: truncated file " + path);
    return ck;
}

// ---- evaluation ------------------------------------------------------------

double evaluate(const Model<float>& model, const std::vector<TokenSeq>& val, Paradigm paradigm,
                int batch_size, uint64_t seed) {
    if (val.empty()) throw std::invalid_argument("evaluate: empty validation set");
    static constexpr double t_grid[9] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    double weighted = 0.0, weight = 0.0;
    for (size_t start = 0; start < val.size(); start += (size_t)batch_size) {
        size_t end = std::min(val.size(), start + (size_t)batch_size);
        std::vector<TokenSeq> batch(val.begin() + start, val.begin() + end);
        Tape<float> tape;
        if (paradigm == Paradigm::AR) {
            auto fw = model.forward(tape, batch, std::nullopt);
            int loss = ar_loss(tape, fw.logits, batch);
            double n_pred = (double)batch.size() * (double)(batch[0].size() - 1);
            weighted += tape.val(loss)[0] * n_pred;
            weight += n_pred;
        } else {
            std::vector<TokenSeq> corrupted;
            std::vector<MaskRealization> real;
            std::vector<float> ts;
            double n_masked = 0;
            for (size_t i = start; i < end; ++i) {
                double t = t_grid[i % 9];
                Rng rng(derive_seed(seed, STREAM_EVAL, (uint64_t)i));
                MaskRealization r = apply_mask(val[i], t, rng);
                while (r.masked_count() == 0) r = apply_mask(val[i], t, rng);
                n_masked += (double)r.masked_count();
                ts.push_back((float)t);
                corrupted.push_back(r.corrupted);
                real.push_back(std::move(r));
            }
            auto fw = model.forward(tape, corrupted, std::make_optional(ts));
            int loss = mdlm_loss(tape, fw.logits, batch, real);
            weighted += tape.val(loss)[0] * n_masked;
            weight += n_masked;
        }
    }
    return weighted / weight;
}

// ---- training loop ---------------------------------------------------------

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const CorpusSplit& data,
                  Paradigm paradigm, const std::string& out_dir,
                  const std::optional<std::string>& resume_from, Model<float>* trained_out) {
    model_cfg.validate();
    train_cfg.validate();
    check_paradigm(model_cfg, paradigm);
    if (data.train_chunks.empty() || data.val_chunks.empty())
        throw std::invalid_argument("train: empty corpus split");
    size_t S = data.train_chunks[0].size();
    if (S != (size_t)model_cfg.seq_len)
        throw std::invalid_argument("train: chunk length does not match model seq_len");

    Model<float> model(model_cfg);
    OptimizerState opt = OptimizerState::zeros_like(model.params);
    long long start_step = 0;
    long long best_step = -1;
    double best_val = std::numeric_limits<double>::infinity();
    uint64_t seed = train_cfg.seed;
    uint64_t paradigm_id = paradigm == Paradigm::AR ? 0 : 1;

    if (resume_from) {
        Checkpoint ck = load_checkpoint(*resume_from);
        if (emit_kv(model_config_to_kv(ck.model_cfg)) != emit_kv(model_config_to_kv(model_cfg)))
            throw std::invalid_argument("train: resume checkpoint model config mismatch");
        model.params = std::move(ck.params);
        opt = std::move(ck.opt);
        start_step = ck.step;
        best_val = ck.best_val_loss;
        best_step = ck.best_step;
        seed = ck.master_seed;
    } else {
        model.init_weights(derive_seed(seed, STREAM_INIT, paradigm_id));
    }

    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
    BatchSchedule schedule{data.train_chunks.size(), derive_seed(seed, 0, paradigm_id)};
    TrainResult result;
    auto t0 = std::chrono::steady_clock::now();
    auto wall_ms_now = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    };
    auto save_ck = [&](const std::string& role, long long step, const std::string& file) {
        if (out_dir.empty()) return;
        Checkpoint ck;
        ck.model_cfg = model_cfg;
        ck.train_cfg = train_cfg;
        ck.params = model.params;
        ck.opt = opt;
        ck.step = step;
        ck.best_val_loss = best_val;
        ck.best_step = best_step;
        ck.master_seed = seed;
        ck.role = role;
        save_checkpoint(out_dir + "/" + file, ck);
    };

    int divergent_run = 0;
    double prev_wall = 0.0;
    for (long long k = start_step; k < train_cfg.steps; ++k) {
        std::vector<TokenSeq> batch;
        batch.reserve(train_cfg.batch_size);
        for (int j = 0; j < train_cfg.batch_size; ++j)
            batch.push_back(data.train_chunks[schedule.at(k * train_cfg.batch_size + j)]);

        Tape<float> tape;
        int loss_node;
        ForwardNodes<float> fw;
        if (paradigm == Paradigm::AR) {
            fw = model.forward(tape, batch, std::nullopt);
            loss_node = ar_loss(tape, fw.logits, batch);
        } else {
            Rng rng(derive_seed(seed, STREAM_MASK, (uint64_t)k));
            while (true) {
                std::vector<TokenSeq> corrupted;
                std::vector<MaskRealization> real;
                std::vector<float> ts;
                size_t masked_total = 0;
                for (const auto& seq : batch) {
                    double t = rng.uniform();
                    MaskRealization r = apply_mask(seq, t, rng);
                    masked_total += r.masked_count();
                    ts.push_back((float)t);
                    corrupted.push_back(r.corrupted);
                    real.push_back(std::move(r));
                }
                if (masked_total == 0) continue; // resample t
                fw = model.forward(tape, corrupted, std::make_optional(ts));
                loss_node = mdlm_loss(tape, fw.logits, batch, real);
                break;
            }
        }

        double loss = tape.val(loss_node)[0];
        if (!std::isfinite(loss))
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(k + 1));
        tape.backward(loss_node);

        std::vector<Tensor<float>> grads;
        grads.reserve(fw.param_nodes.size());
        double sq_norm = 0.0;
        for (int pn : fw.param_nodes) {
            Tensor<float>& g = tape.grad(pn);
            for (float gv : g.data) {
                if (!std::isfinite(gv))
                    throw std::runtime_error("train: non-finite gradient at step " + std::to_string(k + 1));
                sq_norm += (double)gv * gv;
            }
            grads.push_back(std::move(g));
        }
        double norm = std::sqrt(sq_norm);
        if (train_cfg.clip_norm > 0 && norm > train_cfg.clip_norm) {
            float sc = (float)(train_cfg.clip_norm / norm);
            for (auto& g : grads)
                for (auto& gv : g.data) gv *= sc;
        }

        long long warmup = train_cfg.effective_warmup();
        double lr_now = warmup > 0 ? train_cfg.lr * std::min(1.0, (double)(k + 1) / (double)warmup)
                                   : train_cfg.lr;
        adamw_step(model.params, grads, opt, train_cfg, lr_now);

        double wall = wall_ms_now();
        double tps = (double)train_cfg.batch_size * (double)S / std::max(1e-9, (wall - prev_wall) / 1000.0);
        prev_wall = wall;
        result.log.records.push_back({k + 1, "train", loss, wall, tps});

        divergent_run = loss > DIVERGENCE_NATS ? divergent_run + 1 : 0;
        if (divergent_run >= DIVERGENCE_PATIENCE)
            throw std::runtime_error("train: diverged (loss > 20 nats for 100 consecutive steps)");

        if ((k + 1) % train_cfg.eval_every == 0 || k + 1 == train_cfg.steps) {
            double vloss = evaluate(model, data.val_chunks, paradigm, train_cfg.batch_size, seed);
            result.log.records.push_back({k + 1, "val", vloss, wall_ms_now(), 0.0});
            result.final_val_loss = vloss;
            if (vloss < best_val) {
                best_val = vloss;
                best_step = k + 1;
                save_ck("best", k + 1, "ckpt_best");
            }
        }
    }

    result.best_step = best_step;
    result.best_val_loss = best_val;
    save_ck("last", train_cfg.steps, "ckpt_last");
    if (trained_out) *trained_out = std::move(model);
    return result;
}

} // namespace parlab
