#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "evh/detector.hpp"
#include "evh/errors.hpp"
#include "evh/rng.hpp"

using namespace evh;

namespace {

DetectorConfig tiny_config() {
  DetectorConfig c;
  c.k = 8;
  c.embed_dim = 2;
  c.conv_filters = 2;
  c.kernel_size = 4;
  c.stride = 4;
  c.hidden_units = 2;
  return c;
}

DetectorWeights random_weights(const DetectorConfig& cfg, std::uint64_t seed) {
  DetectorWeights w = DetectorWeights::zeros(cfg);
  Rng rng(seed);
  for (double& v : w.params) v = rng.uniform() * 2.0 - 1.0;
  return w;
}

std::vector<std::uint8_t> random_input(std::size_t k, std::uint64_t seed) {
  std::vector<std::uint8_t> in(k);
  Rng rng(seed);
  for (auto& b : in) b = static_cast<std::uint8_t>(rng.below(256));
  return in;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Textbook re-derivation of the forward pass, written with different loop
// structure from the production kernel so a shared mistake is unlikely.
double forward_reference(const DetectorWeights& w, const std::vector<std::uint8_t>& input) {
  const auto& c = w.cfg;
  const double* P = w.params.data();
  std::vector<double> pooled(c.conv_filters, -1e300);
  for (std::size_t t = 0; t + c.kernel_size <= c.k; t += c.stride) {
    for (std::size_t f = 0; f < c.conv_filters; ++f) {
      double a = P[w.conv_relu_b_off() + f];
      double g = P[w.conv_gate_b_off() + f];
      for (std::size_t j = 0; j < c.kernel_size; ++j) {
        for (std::size_t e = 0; e < c.embed_dim; ++e) {
          const double x = P[w.embed_off() + input[t + j] * c.embed_dim + e];
          a += x * P[w.conv_relu_w_off() + (f * c.kernel_size + j) * c.embed_dim + e];
          g += x * P[w.conv_gate_w_off() + (f * c.kernel_size + j) * c.embed_dim + e];
        }
      }
      const double v = (a > 0 ? a : 0) * sigmoid(g);
      if (v > pooled[f]) pooled[f] = v;
    }
  }
  double out = P[w.out_b_off()];
  for (std::size_t h = 0; h < c.hidden_units; ++h) {
    double z = P[w.fc1_b_off() + h];
    for (std::size_t f = 0; f < c.conv_filters; ++f) {
      z += pooled[f] * P[w.fc1_w_off() + h * c.conv_filters + f];
    }
    out += (z > 0 ? z : 0) * P[w.out_w_off() + h];
  }
  return sigmoid(out);
}

}  // namespace

TEST_CASE("all-zero weights score exactly one half") {
  DetectorConfig cfg = tiny_config();
  const DetectorWeights w = DetectorWeights::zeros(cfg);
  CHECK(forward(w, random_input(cfg.k, 1)) == 0.5);
  CHECK(score_bytes(w, Bytes{1, 2, 3}) == 0.5);
  CHECK(score_bytes(w, Bytes{}) == 0.5);

  // and the binary cross entropy at 0.5 is ln 2 for either label
  const auto in = random_input(cfg.k, 2);
  CHECK(loss_and_grad(w, in, 0).first == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(loss_and_grad(w, in, 1).first == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("forward pass matches an independent re-derivation") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    DetectorConfig cfg = tiny_config();
    const DetectorWeights w = random_weights(cfg, seed);
    const auto in = random_input(cfg.k, seed + 100);
    CHECK(forward(w, in) == doctest::Approx(forward_reference(w, in)).epsilon(1e-14));
  }
}

TEST_CASE("forward matches the reference on the default architecture") {
  DetectorConfig cfg;  // full-size: 4096 window, 16 filters
  const DetectorWeights w = DetectorWeights::xavier(cfg, 31, 1.0);
  const auto in = random_input(cfg.k, 77);
  CHECK(forward(w, in) == doctest::Approx(forward_reference(w, in)).epsilon(1e-13));
}

TEST_CASE("input preparation truncates and zero-pads") {
  const auto a = prepare_input(Bytes{9, 9, 9}, 5);
  CHECK(a == std::vector<std::uint8_t>{9, 9, 9, 0, 0});
  const auto b = prepare_input(Bytes{1, 2, 3, 4, 5, 6}, 4);
  CHECK(b == std::vector<std::uint8_t>{1, 2, 3, 4});
  CHECK(prepare_input(Bytes{}, 3) == std::vector<std::uint8_t>{0, 0, 0});
}

TEST_CASE("analytic gradients agree with central finite differences") {
  const double h = 1e-4;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    DetectorConfig cfg = tiny_config();
    DetectorWeights w = random_weights(cfg, seed * 13);
    const auto in = random_input(cfg.k, seed * 29);
    const int label = seed % 2;

    const auto [loss, grad] = loss_and_grad(w, in, label);
    CHECK(std::isfinite(loss));

    for (std::size_t i = 0; i < w.params.size(); ++i) {
      const double keep = w.params[i];
      w.params[i] = keep + h;
      const double lp = loss_and_grad(w, in, label).first;
      w.params[i] = keep - h;
      const double lm = loss_and_grad(w, in, label).first;
      w.params[i] = keep;
      const double fd = (lp - lm) / (2 * h);
      const double denom = std::max({std::fabs(fd), std::fabs(grad[i]), 1e-6});
      CHECK(std::fabs(fd - grad[i]) / denom < 1e-4);
    }
  }
}

TEST_CASE("bytes absent from the input get zero embedding gradient") {
  DetectorConfig cfg = tiny_config();
  DetectorWeights w = random_weights(cfg, 5);
  // keep filter 0 active so gradient actually reaches the embeddings
  w.params[w.conv_relu_b_off()] = 2.0;
  std::vector<std::uint8_t> in(cfg.k);
  for (std::size_t i = 0; i < in.size(); ++i) in[i] = (i % 2) ? 17 : 230;

  const auto [loss, grad] = loss_and_grad(w, in, 0);
  (void)loss;
  for (std::size_t byte = 0; byte < 256; ++byte) {
    double row = 0;
    for (std::size_t e = 0; e < cfg.embed_dim; ++e) {
      row += std::fabs(grad[w.embed_off() + byte * cfg.embed_dim + e]);
    }
    if (byte == 17 || byte == 230) {
      CHECK(row > 0);
    } else {
      CHECK(row == 0);
    }
  }
}

TEST_CASE("parallel kernels are bit-identical to the serial references") {
#ifdef _OPENMP
  omp_set_num_threads(3);
#endif
  DetectorConfig cfg = tiny_config();
  cfg.k = 64;
  cfg.kernel_size = 8;
  cfg.stride = 8;
  const DetectorWeights w = random_weights(cfg, 11);

  std::vector<Bytes> files;
  std::vector<LabeledSample> samples;
  Rng rng(404);
  for (int i = 0; i < 37; ++i) {
    Bytes b(rng.below(200) + 1);
    for (auto& byte : b) byte = static_cast<std::uint8_t>(rng.below(256));
    samples.push_back({b, i % 2});
    files.push_back(std::move(b));
  }

  const auto serial = score_files_serial(w, files);
  const auto parallel = score_files(w, files);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) CHECK(serial[i] == parallel[i]);

  std::vector<const LabeledSample*> batch;
  for (const auto& s : samples) batch.push_back(&s);
  const auto [ls, gs] = batch_loss_grad_serial(w, batch);
  const auto [lp, gp] = batch_loss_grad(w, batch);
  CHECK(ls == lp);
  REQUIRE(gs.size() == gp.size());
  for (std::size_t i = 0; i < gs.size(); ++i) CHECK(gs[i] == gp[i]);
}

TEST_CASE("training is deterministic in the seed and learns a toy split") {
  DetectorConfig cfg = tiny_config();
  cfg.k = 32;
  cfg.kernel_size = 8;
  cfg.stride = 8;

  // malware rich in byte 0xD3, benign rich in byte 0x41
  std::vector<LabeledSample> data;
  Rng rng(9);
  for (int i = 0; i < 40; ++i) {
    Bytes b(32);
    const int label = i % 2;
    for (auto& byte : b) {
      byte = static_cast<std::uint8_t>(rng.coin(0.7) ? (label ? 0x41 : 0xD3) : rng.below(256));
    }
    data.push_back({b, label});
  }

  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 8;
  tc.seed = 2;
  const DetectorWeights start = DetectorWeights::xavier(cfg, 50, 1.0);
  const DetectorWeights w1 = train(start, data, tc);
  const DetectorWeights w2 = train(start, data, tc);
  CHECK(w1.params == w2.params);

  tc.seed = 3;
  const DetectorWeights w3 = train(start, data, tc);
  CHECK(w1.params != w3.params);

  const EvalResult ev = evaluate(w1, data);
  CHECK(ev.accuracy >= 0.9);
  CHECK(ev.scores.size() == data.size());
}

TEST_CASE("evaluate separates detected malware from the rest") {
  DetectorConfig cfg = tiny_config();
  const DetectorWeights w = random_weights(cfg, 21);
  std::vector<LabeledSample> data;
  for (int i = 0; i < 12; ++i) data.push_back({random_input(cfg.k, 900 + i), i % 3 == 0});

  const EvalResult ev = evaluate(w, data);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool says_benign = ev.scores[i] > cfg.threshold;
    if (says_benign == (data[i].label == 1)) ++correct;
    const bool detected = data[i].label == 0 && ev.scores[i] < cfg.threshold;
    const bool listed = std::find(ev.detected_malware.begin(), ev.detected_malware.end(), i) !=
                        ev.detected_malware.end();
    CHECK(detected == listed);
  }
  CHECK(ev.accuracy == doctest::Approx(double(correct) / data.size()).epsilon(1e-12));
}

TEST_CASE("training rejects single-class data and reports divergence") {
  DetectorConfig cfg = tiny_config();
  std::vector<LabeledSample> one_class;
  for (int i = 0; i < 6; ++i) one_class.push_back({random_input(cfg.k, i), 0});
  TrainConfig tc;
  tc.epochs = 1;
  CHECK_THROWS_AS(train(DetectorWeights::zeros(cfg), one_class, tc), InsufficientSamples);

  // poisoned start: both hidden units saturate to +inf and the output layer
  // subtracts them, so the first batch loss is NaN
  std::vector<LabeledSample> data;
  for (int i = 0; i < 8; ++i) data.push_back({random_input(cfg.k, i), i % 2});
  DetectorWeights bad = DetectorWeights::zeros(cfg);
  for (std::size_t i = bad.embed_off(); i < bad.conv_relu_w_off(); ++i) bad.params[i] = 1e100;
  for (std::size_t i = bad.conv_relu_w_off(); i < bad.conv_relu_b_off(); ++i)
    bad.params[i] = 1e100;
  for (std::size_t i = bad.fc1_w_off(); i < bad.fc1_b_off(); ++i) bad.params[i] = 1e200;
  bad.params[bad.out_w_off()] = 1.0;
  bad.params[bad.out_w_off() + 1] = -1.0;
  CHECK_THROWS_AS(train(bad, data, tc), DivergedLoss);
}

TEST_CASE("weight files round-trip bit for bit") {
  DetectorConfig cfg = tiny_config();
  const DetectorWeights w = random_weights(cfg, 33);
  const std::string path = "test_weights_roundtrip.bin";
  save_weights(path, w);
  const DetectorWeights r = load_weights(path);
  CHECK(r.cfg == w.cfg);
  CHECK(r.params == w.params);

  Bytes file = read_file(path);
  file[0] = 'X';
  write_file(path, file);
  CHECK_THROWS_AS(load_weights(path), Error);
  std::remove(path.c_str());
}

TEST_CASE("xavier init is seed-deterministic and bias-free") {
  DetectorConfig cfg = tiny_config();
  const DetectorWeights a = DetectorWeights::xavier(cfg, 7, 1.0);
  const DetectorWeights b = DetectorWeights::xavier(cfg, 7, 1.0);
  const DetectorWeights c = DetectorWeights::xavier(cfg, 8, 1.0);
  CHECK(a.params == b.params);
  CHECK(a.params != c.params);

  for (std::size_t f = 0; f < cfg.conv_filters; ++f) {
    CHECK(a.params[a.conv_relu_b_off() + f] == 0.0);
    CHECK(a.params[a.conv_gate_b_off() + f] == 0.0);
  }
  for (std::size_t h = 0; h < cfg.hidden_units; ++h) CHECK(a.params[a.fc1_b_off() + h] == 0.0);
  CHECK(a.params[a.out_b_off()] == 0.0);

  const DetectorWeights half = DetectorWeights::xavier(cfg, 7, 0.5);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(half.params[i] == doctest::Approx(a.params[i] * 0.5).epsilon(1e-12));
  }
}

TEST_CASE("config validation rejects broken shapes") {
  DetectorConfig cfg = tiny_config();
  cfg.stride = 3;  // must equal kernel_size
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.k = 6;  // not a multiple of the stride
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.conv_filters = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
