#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evh/bytes.hpp"

namespace evh {

struct DetectorConfig {
    std::size_t k = 4096;
    std::size_t embed_dim = 8;
    std::size_t conv_filters = 16;
    std::size_t kernel_size = 32;
    std::size_t stride = 32;
    std::size_t hidden_units = 16;
    double threshold = 0.5;

    void validate() const;
    std::size_t conv_positions() const { return (k - kernel_size) / stride + 1; }
    bool operator==(const DetectorConfig&) const = default;
};

// label: 0 = malware, 1 = benign
struct LabeledSample {
    Bytes data;
    int label = 0;
};

// All parameters live in one flat vector, laid out block by block; the
// offsets below fix the layout for training, gradient checks and the
// weight-file format.
struct DetectorWeights {
    DetectorConfig cfg;
    std::vector<double> params;

    std::size_t embed_off() const { return 0; }
    std::size_t conv_relu_w_off() const { return 256 * cfg.embed_dim; }
    std::size_t conv_relu_b_off() const {
        return conv_relu_w_off() + cfg.conv_filters * cfg.kernel_size * cfg.embed_dim;
    }
    std::size_t conv_gate_w_off() const { return conv_relu_b_off() + cfg.conv_filters; }
    std::size_t conv_gate_b_off() const {
        return conv_gate_w_off() + cfg.conv_filters * cfg.kernel_size * cfg.embed_dim;
    }
    std::size_t fc1_w_off() const { return conv_gate_b_off() + cfg.conv_filters; }
    std::size_t fc1_b_off() const { return fc1_w_off() + cfg.hidden_units * cfg.conv_filters; }
    std::size_t out_w_off() const { return fc1_b_off() + cfg.hidden_units; }
    std::size_t out_b_off() const { return out_w_off() + cfg.hidden_units; }
    std::size_t param_count() const { return out_b_off() + 1; }

    static DetectorWeights zeros(const DetectorConfig& cfg);
    static DetectorWeights xavier(const DetectorConfig& cfg, std::uint64_t seed, double init_scale);
};

struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
    double init_scale = 1.0;
};

struct EvalResult {
    double accuracy = 0.0;
    std::vector<double> scores;
    std::vector<std::size_t> detected_malware;  // indices: label==0 and score < threshold
};

std::vector<std::uint8_t> prepare_input(std::span<const std::uint8_t> bytes, std::size_t k);

double forward(const DetectorWeights& w, std::span<const std::uint8_t> input);
double score_bytes(const DetectorWeights& w, std::span<const std::uint8_t> file_bytes);

std::pair<double, std::vector<double>> loss_and_grad(const DetectorWeights& w,
                                                     std::span<const std::uint8_t> input,
                                                     int label);

// Batch kernels. The plain versions run the same arithmetic in parallel with
// per-sample result slots and a fixed-order reduction, so they match the
// _serial references bit for bit at any thread count.
std::vector<double> score_files_serial(const DetectorWeights& w, const std::vector<Bytes>& files);
std::vector<double> score_files(const DetectorWeights& w, const std::vector<Bytes>& files);
std::pair<double, std::vector<double>>
batch_loss_grad_serial(const DetectorWeights& w, const std::vector<const LabeledSample*>& batch);
std::pair<double, std::vector<double>>
batch_loss_grad(const DetectorWeights& w, const std::vector<const LabeledSample*>& batch);

DetectorWeights train(const DetectorWeights& start, const std::vector<LabeledSample>& dataset,
                      const TrainConfig& cfg);
EvalResult evaluate(const DetectorWeights& w, const std::vector<LabeledSample>& dataset);

void save_weights(const std::string& path, const DetectorWeights& w);
DetectorWeights load_weights(const std::string& path);

} // namespace evh
