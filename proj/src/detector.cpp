#include "evh/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "evh/errors.hpp"
#include "evh/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace evh {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ForwardCache {
    std::vector<double> pooled;     // per filter
    std::vector<std::size_t> arg;   // winning temporal position per filter
    std::vector<double> a_win;      // relu-branch pre-activation at the winner
    std::vector<double> g_win;      // gate-branch pre-activation at the winner
    std::vector<double> pre1;       // fc1 pre-activations
    std::vector<double> hid;
    double y = 0.0;
};

void check_shapes(const DetectorWeights& w, std::size_t input_len) {
    if (w.params.size() != w.param_count())
        throw ShapeMismatch("weight vector length disagrees with config");
    if (input_len != w.cfg.k) throw ShapeMismatch("input length disagrees with k");
}

ForwardCache run_forward(const DetectorWeights& w, std::span<const std::uint8_t> x) {
    const auto& c = w.cfg;
    const double* P = w.params.data();
    const double* emb = P + w.embed_off();
    const double* wr = P + w.conv_relu_w_off();
    const double* br = P + w.conv_relu_b_off();
    const double* wg = P + w.conv_gate_w_off();
    const double* bg = P + w.conv_gate_b_off();
    const double* w1 = P + w.fc1_w_off();
    const double* b1 = P + w.fc1_b_off();
    const double* wo = P + w.out_w_off();
    const double bo = P[w.out_b_off()];

    const std::size_t E = c.embed_dim, K = c.kernel_size, F = c.conv_filters;
    const std::size_t T = c.conv_positions();

    ForwardCache fc;
    fc.pooled.resize(F);
    fc.arg.resize(F);
    fc.a_win.resize(F);
    fc.g_win.resize(F);

    for (std::size_t f = 0; f < F; ++f) {
        double best = 0.0, best_a = 0.0, best_g = 0.0;
        std::size_t best_t = 0;
        const double* wrf = wr + f * K * E;
        const double* wgf = wg + f * K * E;
        for (std::size_t t = 0; t < T; ++t) {
            double a = br[f], g = bg[f];
            const std::size_t base = t * c.stride;
            for (std::size_t u = 0; u < K; ++u) {
                const double* z = emb + static_cast<std::size_t>(x[base + u]) * E;
                const double* wru = wrf + u * E;
                const double* wgu = wgf + u * E;
                for (std::size_t j = 0; j < E; ++j) {
                    a += wru[j] * z[j];
                    g += wgu[j] * z[j];
                }
            }
            const double val = (a > 0.0 ? a : 0.0) * sigmoid(g);
            if (t == 0 || val > best) {
                best = val;
                best_t = t;
                best_a = a;
                best_g = g;
            }
        }
        fc.pooled[f] = best;
        fc.arg[f] = best_t;
        fc.a_win[f] = best_a;
        fc.g_win[f] = best_g;
    }

    fc.pre1.resize(c.hidden_units);
    fc.hid.resize(c.hidden_units);
    double logit = bo;
    for (std::size_t q = 0; q < c.hidden_units; ++q) {
        double s = b1[q];
        const double* row = w1 + q * F;
        for (std::size_t f = 0; f < F; ++f) s += row[f] * fc.pooled[f];
        fc.pre1[q] = s;
        fc.hid[q] = s > 0.0 ? s : 0.0;
        logit += wo[q] * fc.hid[q];
    }
    fc.y = sigmoid(logit);
    return fc;
}

} // namespace

void DetectorConfig::validate() const {
    if (k == 0 || embed_dim == 0 || conv_filters == 0 || hidden_units == 0)
        throw ConfigError("detector dimensions must be positive");
    if (kernel_size == 0 || stride == 0) throw ConfigError("kernel and stride must be positive");
    if (stride != kernel_size)
        throw ConfigError("stride must equal kernel_size (non-overlapping windows)");
    if (k < kernel_size || k % stride != 0)
        throw ConfigError("k must be a positive multiple of the window size");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0,1)");
}

DetectorWeights DetectorWeights::zeros(const DetectorConfig& cfg) {
    cfg.validate();
    DetectorWeights w;
    w.cfg = cfg;
    w.params.assign(w.param_count(), 0.0);
    return w;
}

DetectorWeights DetectorWeights::xavier(const DetectorConfig& cfg, std::uint64_t seed,
                                        double init_scale) {
    DetectorWeights w = zeros(cfg);
    Rng rng = Rng::derive({seed, 0x77E16875u});
    auto fill = [&](std::size_t begin, std::size_t end, double limit) {
        for (std::size_t i = begin; i < end; ++i) w.params[i] = rng.range(-limit, limit);
    };
    const double E = static_cast<double>(cfg.embed_dim);
    const double fan_conv = static_cast<double>(cfg.kernel_size) * E;
    fill(w.embed_off(), w.conv_relu_w_off(), init_scale * std::sqrt(6.0 / (256.0 + E)));
    const double conv_lim = init_scale * std::sqrt(6.0 / (fan_conv + cfg.conv_filters));
    fill(w.conv_relu_w_off(), w.conv_relu_b_off(), conv_lim);
    fill(w.conv_gate_w_off(), w.conv_gate_b_off(), conv_lim);
    const double fc1_lim =
        init_scale * std::sqrt(6.0 / (double(cfg.conv_filters) + cfg.hidden_units));
    fill(w.fc1_w_off(), w.fc1_b_off(), fc1_lim);
    fill(w.out_w_off(), w.out_b_off(), init_scale * std::sqrt(6.0 / (cfg.hidden_units + 1.0)));
    return w;
}

std::vector<std::uint8_t> prepare_input(std::span<const std::uint8_t> bytes, std::size_t k) {
    std::vector<std::uint8_t> out(k, 0);
    if (!bytes.empty()) std::memcpy(out.data(), bytes.data(), std::min(bytes.size(), k));
    return out;
}

double forward(const DetectorWeights& w, std::span<const std::uint8_t> input) {
    check_shapes(w, input.size());
    return run_forward(w, input).y;
}

double score_bytes(const DetectorWeights& w, std::span<const std::uint8_t> file_bytes) {
    const auto input = prepare_input(file_bytes, w.cfg.k);
    return forward(w, input);
}

std::pair<double, std::vector<double>> loss_and_grad(const DetectorWeights& w,
                                                     std::span<const std::uint8_t> input,
                                                     int label) {
    check_shapes(w, input.size());
    const auto& c = w.cfg;
    const ForwardCache fc = run_forward(w, input);

    const double y = std::clamp(fc.y, 1e-7, 1.0 - 1e-7);
    const double loss = label ? -std::log(y) : -std::log(1.0 - y);

    std::vector<double> grad(w.params.size(), 0.0);
    const double* P = w.params.data();
    const double* emb = P + w.embed_off();
    const double* wr = P + w.conv_relu_w_off();
    const double* wg = P + w.conv_gate_w_off();
    const double* w1 = P + w.fc1_w_off();
    const double* wo = P + w.out_w_off();

    double* g_emb = grad.data() + w.embed_off();
    double* g_wr = grad.data() + w.conv_relu_w_off();
    double* g_br = grad.data() + w.conv_relu_b_off();
    double* g_wg = grad.data() + w.conv_gate_w_off();
    double* g_bg = grad.data() + w.conv_gate_b_off();
    double* g_w1 = grad.data() + w.fc1_w_off();
    double* g_b1 = grad.data() + w.fc1_b_off();
    double* g_wo = grad.data() + w.out_w_off();

    const std::size_t E = c.embed_dim, K = c.kernel_size, F = c.conv_filters;
    const double dlogit = fc.y - label;

    grad[w.out_b_off()] = dlogit;
    std::vector<double> dpooled(F, 0.0);
    for (std::size_t q = 0; q < c.hidden_units; ++q) {
        g_wo[q] = dlogit * fc.hid[q];
        const double dpre = fc.pre1[q] > 0.0 ? dlogit * wo[q] : 0.0;
        g_b1[q] = dpre;
        const double* row = w1 + q * F;
        double* grow = g_w1 + q * F;
        for (std::size_t f = 0; f < F; ++f) {
            grow[f] = dpre * fc.pooled[f];
            dpooled[f] += dpre * row[f];
        }
    }

    for (std::size_t f = 0; f < F; ++f) {
        const double dh = dpooled[f];
        if (dh == 0.0) continue;
        const double a = fc.a_win[f], g = fc.g_win[f];
        const double sg = sigmoid(g);
        const double da = a > 0.0 ? dh * sg : 0.0;
        const double dg = dh * (a > 0.0 ? a : 0.0) * sg * (1.0 - sg);
        g_br[f] += da;
        g_bg[f] += dg;
        const std::size_t base = fc.arg[f] * c.stride;
        const double* wrf = wr + f * K * E;
        const double* wgf = wg + f * K * E;
        double* gwrf = g_wr + f * K * E;
        double* gwgf = g_wg + f * K * E;
        for (std::size_t u = 0; u < K; ++u) {
            const std::size_t b = static_cast<std::size_t>(input[base + u]);
            const double* z = emb + b * E;
            double* ge = g_emb + b * E;
            for (std::size_t j = 0; j < E; ++j) {
                gwrf[u * E + j] += da * z[j];
                gwgf[u * E + j] += dg * z[j];
                ge[j] += da * wrf[u * E + j] + dg * wgf[u * E + j];
            }
        }
    }
    return {loss, std::move(grad)};
}

std::vector<double> score_files_serial(const DetectorWeights& w, const std::vector<Bytes>& files) {
    std::vector<double> out(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) out[i] = score_bytes(w, files[i]);
    return out;
}

std::vector<double> score_files(const DetectorWeights& w, const std::vector<Bytes>& files) {
    std::vector<double> out(files.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::size_t i = 0; i < files.size(); ++i) out[i] = score_bytes(w, files[i]);
    return out;
}

std::pair<double, std::vector<double>>
batch_loss_grad_serial(const DetectorWeights& w, const std::vector<const LabeledSample*>& batch) {
    std::vector<double> sum(w.params.size(), 0.0);
    double loss = 0.0;
    for (const LabeledSample* s : batch) {
        const auto input = prepare_input(s->data, w.cfg.k);
        auto [l, g] = loss_and_grad(w, input, s->label);
        loss += l;
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g[i];
    }
    const double inv = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());
    for (double& v : sum) v *= inv;
    return {loss * inv, std::move(sum)};
}

std::pair<double, std::vector<double>>
batch_loss_grad(const DetectorWeights& w, const std::vector<const LabeledSample*>& batch) {
    std::vector<std::vector<double>> slots(batch.size());
    std::vector<double> losses(batch.size(), 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto input = prepare_input(batch[i]->data, w.cfg.k);
        auto [l, g] = loss_and_grad(w, input, batch[i]->label);
        losses[i] = l;
        slots[i] = std::move(g);
    }
    // fixed-order reduction keeps the result independent of thread count
    std::vector<double> sum(w.params.size(), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        loss += losses[i];
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += slots[i][j];
    }
    const double inv = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());
    for (double& v : sum) v *= inv;
    return {loss * inv, std::move(sum)};
}

DetectorWeights train(const DetectorWeights& start, const std::vector<LabeledSample>& dataset,
                      const TrainConfig& cfg) {
    if (dataset.empty()) throw InsufficientSamples("empty training set");
    bool seen[2] = {false, false};
    for (const auto& s : dataset) seen[s.label ? 1 : 0] = true;
    if (!seen[0] || !seen[1]) throw InsufficientSamples("training set needs both labels");
    if (cfg.learning_rate <= 0.0 || cfg.batch_size == 0)
        throw ConfigError("bad training hyperparameters");

    DetectorWeights w = start;
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng = Rng::derive({cfg.seed, 0x5487FFu, epoch});
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.below(static_cast<std::uint32_t>(i))]);

        for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
            std::vector<const LabeledSample*> batch;
            const std::size_t end = std::min(pos + cfg.batch_size, order.size());
            for (std::size_t i = pos; i < end; ++i) batch.push_back(&dataset[order[i]]);
            auto [loss, grad] = batch_loss_grad(w, batch);
            if (!std::isfinite(loss)) throw DivergedLoss("non-finite training loss");
            for (std::size_t i = 0; i < w.params.size(); ++i)
                w.params[i] -= cfg.learning_rate * grad[i];
        }
    }
    return w;
}

EvalResult evaluate(const DetectorWeights& w, const std::vector<LabeledSample>& dataset) {
    EvalResult r;
    std::vector<Bytes> files;
    files.reserve(dataset.size());
    for (const auto& s : dataset) files.push_back(s.data);
    r.scores = score_files(w, files);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const bool benign = r.scores[i] > w.cfg.threshold;
        if (benign == (dataset[i].label == 1)) ++correct;
        if (dataset[i].label == 0 && r.scores[i] < w.cfg.threshold)
            r.detected_malware.push_back(i);
    }
    r.accuracy = dataset.empty() ? 0.0 : static_cast<double>(correct) / dataset.size();
    return r;
}

void save_weights(const std::string& path, const DetectorWeights& w) {
    Bytes out;
    const char magic[4] = {'D', 'W', 'T', 'S'};
    out.insert(out.end(), magic, magic + 4);
    auto push_u64 = [&](std::uint64_t v) {
        std::uint8_t b[8];
        write_u64(b, v);
        out.insert(out.end(), b, b + 8);
    };
    push_u64(1);  // format version
    push_u64(w.cfg.k);
    push_u64(w.cfg.embed_dim);
    push_u64(w.cfg.conv_filters);
    push_u64(w.cfg.kernel_size);
    push_u64(w.cfg.stride);
    push_u64(w.cfg.hidden_units);
    std::uint64_t tbits;
    std::memcpy(&tbits, &w.cfg.threshold, 8);
    push_u64(tbits);
    push_u64(w.params.size());
    for (double v : w.params) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        push_u64(bits);
    }
    write_file(path, out);
}

DetectorWeights load_weights(const std::string& path) {
    const Bytes in = read_file(path);
    if (in.size() < 4 + 9 * 8 || std::memcmp(in.data(), "DWTS", 4) != 0)
        throw Error("not a weight file: " + path);
    std::size_t off = 4;
    auto take_u64 = [&]() {
        const std::uint64_t v = read_u64(in.data() + off);
        off += 8;
        return v;
    };
    if (take_u64() != 1) throw Error("unsupported weight file version");
    DetectorWeights w;
    w.cfg.k = take_u64();
    w.cfg.embed_dim = take_u64();
    w.cfg.conv_filters = take_u64();
    w.cfg.kernel_size = take_u64();
    w.cfg.stride = take_u64();
    w.cfg.hidden_units = take_u64();
    const std::uint64_t tbits = take_u64();
    std::memcpy(&w.cfg.threshold, &tbits, 8);
    const std::uint64_t n = take_u64();
    if (in.size() != off + n * 8) throw Error("truncated weight file");
    w.cfg.validate();
    if (n != w.param_count()) throw ShapeMismatch("weight count disagrees with header");
    w.params.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t bits = take_u64();
        std::memcpy(&w.params[i], &bits, 8);
    }
    return w;
}

} // namespace evh
