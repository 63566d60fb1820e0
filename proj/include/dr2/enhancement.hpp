#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "dr2/dr2_sampler.hpp"
#include "dr2/image.hpp"
#include "dr2/keyvalue.hpp"
#include "dr2/nn.hpp"

namespace dr2 {

// Second-stage detail restorer contract. Implementations are deterministic
// given the input; output size is declared up front.
class Enhancer {
 public:
  virtual ~Enhancer() = default;
  virtual ImageTensor enhance(const ImageTensor& coarse) const = 0;
  virtual int input_size() const = 0;
  virtual int output_size() const = 0;
};

// Null backbone for pipeline tests: enhance(x) = x.
class IdentityEnhancer final : public Enhancer {
 public:
  explicit IdentityEnhancer(int size = 0) : size_(size) {}
  ImageTensor enhance(const ImageTensor& coarse) const override {
    return coarse;
  }
  int input_size() const override { return size_; }
  int output_size() const override { return size_; }

 private:
  int size_;
};

inline std::unique_ptr<Enhancer> identity_enhancer(int size = 0) {
  return std::make_unique<IdentityEnhancer>(size);
}

// ---------------------------------------------------------------------------
// Training-pair construction: y = blur(DR2(x; N, tau), sigma). DR2
// self-reconstruction plus Gaussian blur is the *only* corruption used here;
// this header deliberately has no dependency on the degradation module.

struct TrainingPair {
  ImageTensor input;
  ImageTensor target;
  int tau = 0;
  double sigma = 0.0;
};

struct PairSetConfig {
  int N = 4;
  std::vector<int> tau_set = {50, 100, 150, 200};
  std::vector<double> sigma_set = {1, 2, 3, 4, 5, 6, 7};
  std::uint64_t seed = 0;
};

inline std::vector<TrainingPair> build_training_pairs(
    const std::vector<ImageTensor>& clean_set, const Denoiser& denoiser,
    const NoiseSchedule& schedule, const PairSetConfig& cfg) {
  if (clean_set.empty())
    throw std::invalid_argument("build_training_pairs: empty clean set");
  if (cfg.tau_set.empty() || cfg.sigma_set.empty())
    throw std::invalid_argument("build_training_pairs: empty parameter sets");

  Rng rng(cfg.seed);
  std::vector<TrainingPair> pairs;
  pairs.reserve(clean_set.size());
  for (std::size_t i = 0; i < clean_set.size(); ++i) {
    TrainingPair p;
    p.tau = cfg.tau_set[rng.uniform_int(0, cfg.tau_set.size() - 1)];
    p.sigma = cfg.sigma_set[rng.uniform_int(0, cfg.sigma_set.size() - 1)];

    DR2Config dr2cfg;
    dr2cfg.N = cfg.N;
    dr2cfg.tau = p.tau;
    dr2cfg.seed = cfg.seed + static_cast<std::uint64_t>(i);
    ImageTensor coarse = dr2_remove(clean_set[i], denoiser, schedule, dr2cfg);
    if (p.sigma > 0.0) {
      coarse = gaussian_blur(coarse, p.sigma);
      coarse.clamp();
    }
    p.input = std::move(coarse);
    p.target = clean_set[i];
    pairs.push_back(std::move(p));
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Baseline enhancer: small residual CNN with an optional learnable
// upsampling head, trained with pixel L1. Stands in for the external
// restoration backbones so the pipeline is runnable end to end.

namespace nn {

struct EnhancerNet {
  int image_size = 32;
  int channels = 32;
  int upsample_factor = 1;
  static constexpr int kBlocks = 3;  // 2 convs each => 8 convs total

  Conv2d stem;
  Conv2d block_conv[kBlocks][2];
  Conv2d up_conv;  // after nearest-up when upsample_factor == 2
  Conv2d out_conv;

  void init(int size, int c, int factor, Rng& rng) {
    if (factor != 1 && factor != 2)
      throw std::invalid_argument("EnhancerNet: upsample factor must be 1 or 2");
    image_size = size;
    channels = c;
    upsample_factor = factor;
    stem.init(3, c, 3, 1, 1, rng);
    for (int b = 0; b < kBlocks; ++b) {
      block_conv[b][0].init(c, c, 3, 1, 1, rng);
      block_conv[b][1].init(c, c, 3, 1, 1, rng);
    }
    if (factor == 2) up_conv.init(c, c, 3, 1, 1, rng);
    out_conv.init(c, 3, 3, 1, 1, rng, /*zero_init=*/true);
  }

  std::vector<Param*> params() {
    std::vector<Param*> ps;
    stem.params(ps);
    for (int b = 0; b < kBlocks; ++b) {
      block_conv[b][0].params(ps);
      block_conv[b][1].params(ps);
    }
    if (upsample_factor == 2) up_conv.params(ps);
    out_conv.params(ps);
    return ps;
  }

  struct Cache {
    FMap x;
    Conv2d::Cache stemc, upc, outc;
    Conv2d::Cache blockc[kBlocks][2];
    SiLU::Cache stems, blocks[kBlocks][2], ups;
    FMap block_in[kBlocks];
    int up_in_h = 0, up_in_w = 0;
  };

  // Residual prediction added to the (possibly upsampled) input.
  FMap forward(const FMap& x, Cache* c) const {
    SiLU act;
    Cache local;
    Cache* k = c ? c : &local;
    if (c) k->x = x;

    FMap h = stem.forward(x, c ? &k->stemc : nullptr);
    h = act.forward(h, c ? &k->stems : nullptr);
    for (int b = 0; b < kBlocks; ++b) {
      if (c) k->block_in[b] = h;
      FMap r = block_conv[b][0].forward(h, c ? &k->blockc[b][0] : nullptr);
      r = act.forward(r, c ? &k->blocks[b][0] : nullptr);
      r = block_conv[b][1].forward(r, c ? &k->blockc[b][1] : nullptr);
      r.m += h.m;
      if (c) k->blocks[b][1].in = r.m;  // pre-activation, for backward
      r.m = act.apply(r.m);
      h = r;
    }
    if (upsample_factor == 2) {
      if (c) {
        k->up_in_h = h.H;
        k->up_in_w = h.W;
      }
      h = upsample2(h);
      h = up_conv.forward(h, c ? &k->upc : nullptr);
      h = act.forward(h, c ? &k->ups : nullptr);
    }
    FMap delta = out_conv.forward(h, c ? &k->outc : nullptr);
    FMap base = (upsample_factor == 2) ? upsample2(x) : x;
    delta.m += base.m;
    return delta;
  }

  void backward(const FMap& dout, Cache& k) {
    SiLU act;
    FMap d = out_conv.backward(dout, k.outc);
    if (upsample_factor == 2) {
      d = act.backward(d, k.ups);
      d = up_conv.backward(d, k.upc);
      d = upsample2_backward(d, k.up_in_h, k.up_in_w);
    }
    for (int b = kBlocks - 1; b >= 0; --b) {
      // through the post-residual SiLU
      d.m = SiLU::grad(k.blocks[b][1].in, d.m);
      FMap dres = block_conv[b][1].backward(d, k.blockc[b][1]);
      dres = act.backward(dres, k.blocks[b][0]);
      dres = block_conv[b][0].backward(dres, k.blockc[b][0]);
      dres.m += d.m;  // residual branch
      d = dres;
    }
    d = act.backward(d, k.stems);
    stem.backward(d, k.stemc);
    // gradient to input is discarded (input is data)
  }
};

}  // namespace nn

class BaselineEnhancer;

struct EnhancerTrainConfig {
  int image_size = 32;
  int channels = 32;
  int upsample_factor = 1;
  int epochs = 20;
  int batch_size = 8;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

class BaselineEnhancer final : public Enhancer {
 public:
  BaselineEnhancer(int image_size, int channels, int factor, Rng& rng) {
    net_.init(image_size, channels, factor, rng);
  }

  ImageTensor enhance(const ImageTensor& coarse) const override {
    if (coarse.height != net_.image_size || coarse.width != net_.image_size ||
        coarse.channels != 3)
      throw std::invalid_argument("BaselineEnhancer: input shape mismatch");
    std::vector<const ImageTensor*> ptr = {&coarse};
    const nn::FMap in = nn::images_to_fmap(ptr);
    nn::FMap out = net_.forward(in, nullptr);
    ImageTensor img = nn::fmap_to_image(out, 0);
    img.clamp();
    return img;
  }

  int input_size() const override { return net_.image_size; }
  int output_size() const override {
    return net_.image_size * net_.upsample_factor;
  }

  nn::EnhancerNet& net() { return net_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    const char magic[8] = {'D', 'R', '2', 'C', 'K', 'P', 'T', '1'};
    out.write(magic, sizeof(magic));
    const std::uint32_t kind = 2;  // enhancer
    out.write(reinterpret_cast<const char*>(&kind), sizeof(kind));
    const std::uint32_t vals[3] = {
        static_cast<std::uint32_t>(net_.image_size),
        static_cast<std::uint32_t>(net_.channels),
        static_cast<std::uint32_t>(net_.upsample_factor)};
    out.write(reinterpret_cast<const char*>(vals), sizeof(vals));
    auto ps = const_cast<BaselineEnhancer*>(this)->net_.params();
    nn::write_params(out, ps);
  }

  static std::unique_ptr<BaselineEnhancer> load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (std::string(magic, 8) != "DR2CKPT1")
      throw std::runtime_error("bad checkpoint magic in " + path);
    std::uint32_t kind = 0;
    in.read(reinterpret_cast<char*>(&kind), sizeof(kind));
    if (kind != 2)
      throw std::runtime_error("checkpoint is not an enhancer: " + path);
    std::uint32_t vals[3];
    in.read(reinterpret_cast<char*>(vals), sizeof(vals));
    Rng dummy(0);
    auto e = std::make_unique<BaselineEnhancer>(
        static_cast<int>(vals[0]), static_cast<int>(vals[1]),
        static_cast<int>(vals[2]), dummy);
    auto ps = e->net_.params();
    nn::read_params(in, ps);
    return e;
  }

 private:
  nn::EnhancerNet net_;
};

struct EnhancerTrainResult {
  std::unique_ptr<BaselineEnhancer> enhancer;
  std::vector<double> epoch_losses;
  double final_loss = 0.0;
};

inline EnhancerTrainResult train_baseline_enhancer(
    const std::vector<TrainingPair>& pairs, const EnhancerTrainConfig& cfg,
    std::ostream* log = nullptr) {
  if (pairs.empty())
    throw std::invalid_argument("train_baseline_enhancer: empty pair set");
  for (const auto& p : pairs) {
    if (p.input.height != cfg.image_size || p.input.width != cfg.image_size)
      throw std::invalid_argument(
          "train_baseline_enhancer: pair input size mismatch");
    if (p.target.height != cfg.image_size * cfg.upsample_factor)
      throw std::invalid_argument(
          "train_baseline_enhancer: pair target size mismatch");
  }

  Rng init_rng = Rng(cfg.seed).fork(200);
  auto enh = std::make_unique<BaselineEnhancer>(cfg.image_size, cfg.channels,
                                                cfg.upsample_factor, init_rng);
  nn::Adam opt(enh->net().params(), cfg.learning_rate);
  Rng order_rng = Rng(cfg.seed).fork(201);

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  EnhancerTrainResult result;
  const int n = static_cast<int>(pairs.size());
  const int bsz = std::min(cfg.batch_size, n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(order_rng.uniform_int(0, i));
      std::swap(order[i], order[j]);
    }
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start + bsz <= n; start += bsz) {
      std::vector<const ImageTensor*> ins, tgts;
      for (int b = 0; b < bsz; ++b) {
        ins.push_back(&pairs[order[start + b]].input);
        tgts.push_back(&pairs[order[start + b]].target);
      }
      const nn::FMap in = nn::images_to_fmap(ins);
      const nn::FMap target = nn::images_to_fmap(tgts);

      nn::EnhancerNet::Cache cache;
      nn::FMap pred = enh->net().forward(in, &cache);
      nn::FMap diff = pred;
      diff.m -= target.m;
      const double loss =
          static_cast<double>(diff.m.array().abs().sum()) / diff.m.size();
      nn::FMap dout = diff;
      dout.m = (diff.m.array().sign() / static_cast<float>(diff.m.size()))
                   .matrix();

      opt.zero_grad();
      enh->net().backward(dout, cache);
      opt.step();
      epoch_loss += loss;
      ++batches;
    }
    epoch_loss /= std::max(1, batches);
    result.epoch_losses.push_back(epoch_loss);
    if (log)
      (*log) << "epoch " << (epoch + 1) << "/" << cfg.epochs << "  l1 "
             << epoch_loss << "\n";
  }
  result.final_loss = result.epoch_losses.back();
  result.enhancer = std::move(enh);
  return result;
}

// ---------------------------------------------------------------------------
// External-backbone adapter (conformance only; heavyweight weights are out of
// scope). Native checkpoints are loaded behind the same contract.

inline void write_enhancer_manifest(const std::string& path, int input_size,
                                    int output_size,
                                    const std::string& format_tag) {
  KeyValueDoc doc;
  doc.set("checkpoint", "input_size", input_size);
  doc.set("checkpoint", "output_size", output_size);
  doc.set("checkpoint", "format_tag", format_tag);
  doc.save(path);
}

inline std::unique_ptr<Enhancer> load_external_enhancer(
    const std::string& checkpoint_path, const KeyValueDoc& manifest) {
  if (!std::filesystem::exists(checkpoint_path))
    throw std::runtime_error("enhancer checkpoint not found: " +
                             checkpoint_path);
  const std::string tag =
      manifest.get_or("checkpoint", "format_tag", "dr2-enhancer-v1");
  if (tag != "dr2-enhancer-v1")
    throw std::runtime_error("unsupported enhancer format_tag: " + tag);
  auto e = BaselineEnhancer::load(checkpoint_path);
  if (e->input_size() != manifest.get_int("checkpoint", "input_size") ||
      e->output_size() != manifest.get_int("checkpoint", "output_size"))
    throw std::runtime_error("enhancer manifest size mismatch");
  return e;
}

inline std::unique_ptr<Enhancer> load_external_enhancer(
    const std::string& checkpoint_path, const std::string& manifest_path) {
  if (!std::filesystem::exists(manifest_path))
    throw std::runtime_error("enhancer manifest not found: " + manifest_path);
  return load_external_enhancer(checkpoint_path,
                                KeyValueDoc::load(manifest_path));
}

}  // namespace dr2
