#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "dr2/denoiser.hpp"
#include "dr2/diffusion.hpp"
#include "dr2/keyvalue.hpp"
#include "dr2/nn.hpp"

namespace dr2 {

struct ToyTrainConfig {
  int image_size = 32;
  std::vector<int> channel_widths = {16, 32, 64};  // three resolution levels
  int epochs = 40;
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::string dataset = "procedural:512";

  void validate() const {
    if (image_size < 8 || image_size % 4 != 0)
      throw std::invalid_argument(
          "ToyTrainConfig: image_size must be a positive multiple of 4");
    if (channel_widths.size() != 3)
      throw std::invalid_argument(
          "ToyTrainConfig: exactly three channel widths expected");
    for (int c : channel_widths)
      if (c <= 0 || c % 8 != 0)
        throw std::invalid_argument(
            "ToyTrainConfig: channel widths must be positive multiples of 8");
    if (epochs <= 0 || batch_size <= 0 || learning_rate <= 0.0)
      throw std::invalid_argument("ToyTrainConfig: values must be positive");
  }
};

namespace nn {

// Residual block with timestep-embedding bias injection:
//   h = conv1(silu(gn1(x))); h += proj(temb); h = conv2(silu(gn2(h)));
//   out = skip(x) + h
struct ResBlock {
  int cin = 0, cout = 0;
  GroupNorm gn1, gn2;
  Conv2d conv1, conv2;
  Conv2d skip;  // 1x1, only when cin != cout
  Linear temb_proj;

  struct Cache {
    GroupNorm::Cache gn1c, gn2c;
    SiLU::Cache s1c, s2c;
    Conv2d::Cache c1c, c2c, skipc;
  };

  void init(int in_c, int out_c, int temb_dim, Rng& rng) {
    cin = in_c;
    cout = out_c;
    gn1.init(in_c, 8);
    gn2.init(out_c, 8);
    conv1.init(in_c, out_c, 3, 1, 1, rng);
    conv2.init(out_c, out_c, 3, 1, 1, rng);
    if (cin != cout) skip.init(in_c, out_c, 1, 1, 0, rng);
    temb_proj.init(temb_dim, out_c, rng);
  }

  FMap forward(const FMap& x, const Mat& temb, Cache* cache) const {
    SiLU act;
    Cache local;
    Cache* c = cache ? cache : &local;
    FMap h = gn1.forward(x, cache ? &c->gn1c : nullptr);
    h = act.forward(h, cache ? &c->s1c : nullptr);
    h = conv1.forward(h, cache ? &c->c1c : nullptr);
    const Mat bias = temb_proj.forward(temb, nullptr);
    const Eigen::Index hw = h.cols_per_sample();
    for (int b = 0; b < h.B; ++b)
      h.m.block(0, b * hw, cout, hw).colwise() +=
          Eigen::VectorXf(bias.col(b));
    h = gn2.forward(h, cache ? &c->gn2c : nullptr);
    h = act.forward(h, cache ? &c->s2c : nullptr);
    h = conv2.forward(h, cache ? &c->c2c : nullptr);
    if (cin != cout) {
      FMap s = skip.forward(x, cache ? &c->skipc : nullptr);
      h.m += s.m;
    } else {
      h.m += x.m;
    }
    return h;
  }

  // Returns dx; accumulates parameter gradients. dtemb accumulated into the
  // provided matrix.
  FMap backward(const FMap& dout, const FMap& x, const Mat& temb, Mat& dtemb,
                Cache& c) {
    SiLU act;
    FMap dh = conv2.backward(dout, c.c2c);
    dh = act.backward(dh, c.s2c);
    dh = gn2.backward(dh, c.gn2c);
    // Timestep bias gradient: per-sample column sums.
    const Eigen::Index hw = dh.cols_per_sample();
    Mat dbias(cout, dh.B);
    for (int b = 0; b < dh.B; ++b)
      dbias.col(b) = dh.m.block(0, b * hw, cout, hw).rowwise().sum();
    Linear::Cache proj_cache{temb};
    dtemb += temb_proj.backward(dbias, proj_cache);

    FMap dx = conv1.backward(dh, c.c1c);
    dx = act.backward(dx, c.s1c);
    dx = gn1.backward(dx, c.gn1c);
    if (cin != cout) {
      FMap ds = skip.backward(dout, c.skipc);
      dx.m += ds.m;
    } else {
      dx.m += dout.m;
    }
    return dx;
  }

  void params(std::vector<Param*>& out) {
    gn1.params(out);
    conv1.params(out);
    temb_proj.params(out);
    gn2.params(out);
    conv2.params(out);
    if (cin != cout) skip.params(out);
  }
};

// Three-level encoder-decoder noise predictor for square images.
struct ToyUNet {
  static constexpr int kTembDim = 64;

  int image_size = 32;
  std::vector<int> widths = {16, 32, 64};

  Linear temb_fc1, temb_fc2;
  Conv2d stem;
  ResBlock enc1, enc2, mid, dec1, dec2;
  Conv2d down1, down2, upconv1, upconv2;
  GroupNorm out_gn;
  Conv2d out_conv;

  void init(int size, const std::vector<int>& channel_widths, Rng& rng) {
    image_size = size;
    widths = channel_widths;
    const int c1 = widths[0], c2 = widths[1], c3 = widths[2];
    temb_fc1.init(kTembDim, kTembDim, rng);
    temb_fc2.init(kTembDim, kTembDim, rng);
    stem.init(3, c1, 3, 1, 1, rng);
    enc1.init(c1, c1, kTembDim, rng);
    down1.init(c1, c2, 3, 2, 1, rng);
    enc2.init(c2, c2, kTembDim, rng);
    down2.init(c2, c3, 3, 2, 1, rng);
    mid.init(c3, c3, kTembDim, rng);
    upconv1.init(c3, c2, 3, 1, 1, rng);
    dec1.init(2 * c2, c2, kTembDim, rng);
    upconv2.init(c2, c1, 3, 1, 1, rng);
    dec2.init(2 * c1, c1, kTembDim, rng);
    out_gn.init(c1, 8);
    out_conv.init(c1, 3, 3, 1, 1, rng, /*zero_init=*/true);
  }

  std::vector<Param*> params() {
    std::vector<Param*> ps;
    temb_fc1.params(ps);
    temb_fc2.params(ps);
    stem.params(ps);
    enc1.params(ps);
    down1.params(ps);
    enc2.params(ps);
    down2.params(ps);
    mid.params(ps);
    upconv1.params(ps);
    dec1.params(ps);
    upconv2.params(ps);
    dec2.params(ps);
    out_gn.params(ps);
    out_conv.params(ps);
    return ps;
  }

  struct Cache {
    Mat temb_raw, temb_mid;
    SiLU::Cache temb_silu;
    Mat temb;
    FMap x, h_stem, h_enc1, h_d1, h_enc2, h_d2, h_mid;
    FMap h_up1, h_cat1, h_dec1, h_up2, h_cat2, h_dec2;
    Conv2d::Cache stemc, d1c, d2c, up1c, up2c, outc;
    ResBlock::Cache e1c, e2c, midc, dec1c, dec2c;
    SiLU::Cache out_sc;
    GroupNorm::Cache out_gnc;
  };

  FMap forward(const FMap& x, const std::vector<int>& ts, Cache* c) const {
    SiLU act;
    Cache local;
    Cache* k = c ? c : &local;
    if (c) k->x = x;

    Mat temb_raw = time_embedding(ts, kTembDim);
    Mat temb_mid = temb_fc1.forward(temb_raw, nullptr);
    Mat temb_act = act.forward_mat(temb_mid, c ? &k->temb_silu : nullptr);
    Mat temb = temb_fc2.forward(temb_act, nullptr);
    if (c) {
      k->temb_raw = temb_raw;
      k->temb_mid = temb_mid;
      k->temb = temb;
    }

    FMap h = stem.forward(x, c ? &k->stemc : nullptr);
    if (c) k->h_stem = h;
    FMap e1 = enc1.forward(h, temb, c ? &k->e1c : nullptr);
    if (c) k->h_enc1 = e1;
    FMap d1 = down1.forward(e1, c ? &k->d1c : nullptr);
    if (c) k->h_d1 = d1;
    FMap e2 = enc2.forward(d1, temb, c ? &k->e2c : nullptr);
    if (c) k->h_enc2 = e2;
    FMap d2 = down2.forward(e2, c ? &k->d2c : nullptr);
    if (c) k->h_d2 = d2;
    FMap m = mid.forward(d2, temb, c ? &k->midc : nullptr);
    if (c) k->h_mid = m;

    FMap u1 = upsample2(m);
    u1 = upconv1.forward(u1, c ? &k->up1c : nullptr);
    if (c) k->h_up1 = u1;
    FMap cat1 = concat_channels(u1, e2);
    if (c) k->h_cat1 = cat1;
    FMap dd1 = dec1.forward(cat1, temb, c ? &k->dec1c : nullptr);
    if (c) k->h_dec1 = dd1;

    FMap u2 = upsample2(dd1);
    u2 = upconv2.forward(u2, c ? &k->up2c : nullptr);
    if (c) k->h_up2 = u2;
    FMap cat2 = concat_channels(u2, e1);
    if (c) k->h_cat2 = cat2;
    FMap dd2 = dec2.forward(cat2, temb, c ? &k->dec2c : nullptr);
    if (c) k->h_dec2 = dd2;

    FMap o = out_gn.forward(dd2, c ? &k->out_gnc : nullptr);
    o = act.forward(o, c ? &k->out_sc : nullptr);
    return out_conv.forward(o, c ? &k->outc : nullptr);
  }

  void backward(const FMap& dout, Cache& k) {
    SiLU act;
    Mat dtemb = Mat::Zero(kTembDim, dout.B);

    FMap d = out_conv.backward(dout, k.outc);
    d = act.backward(d, k.out_sc);
    d = out_gn.backward(d, k.out_gnc);

    d = dec2.backward(d, k.h_cat2, k.temb, dtemb, k.dec2c);
    FMap du2(d.B, k.h_up2.C, d.H, d.W);
    du2.m = d.m.topRows(k.h_up2.C);
    FMap de1(d.B, k.h_enc1.C, d.H, d.W);
    de1.m = d.m.bottomRows(k.h_enc1.C);
    FMap dd1 = upconv2.backward(du2, k.up2c);
    dd1 = upsample2_backward(dd1, k.h_dec1.H, k.h_dec1.W);

    FMap ddec1 = dec1.backward(dd1, k.h_cat1, k.temb, dtemb, k.dec1c);
    FMap du1(ddec1.B, k.h_up1.C, ddec1.H, ddec1.W);
    du1.m = ddec1.m.topRows(k.h_up1.C);
    FMap de2(ddec1.B, k.h_enc2.C, ddec1.H, ddec1.W);
    de2.m = ddec1.m.bottomRows(k.h_enc2.C);
    FMap dm = upconv1.backward(du1, k.up1c);
    dm = upsample2_backward(dm, k.h_mid.H, k.h_mid.W);

    dm = mid.backward(dm, k.h_d2, k.temb, dtemb, k.midc);
    FMap dd2map = down2.backward(dm, k.d2c);
    dd2map.m += de2.m;
    FMap denc2 = enc2.backward(dd2map, k.h_d1, k.temb, dtemb, k.e2c);
    FMap dd1map = down1.backward(denc2, k.d1c);
    dd1map.m += de1.m;
    FMap denc1 = enc1.backward(dd1map, k.h_stem, k.temb, dtemb, k.e1c);
    stem.backward(denc1, k.stemc);

    // Timestep embedding MLP.
    Linear::Cache fc2c{act.apply(k.temb_mid)};
    Mat dmid = temb_fc2.backward(dtemb, fc2c);
    dmid = act.backward_mat(dmid, k.temb_silu);
    Linear::Cache fc1c{k.temb_raw};
    temb_fc1.backward(dmid, fc1c);
  }
};

}  // namespace nn

// ---------------------------------------------------------------------------
// ToyDenoiser: Denoiser implementation backed by the ToyUNet.

class ToyDenoiser final : public Denoiser {
 public:
  ToyDenoiser(int image_size, std::vector<int> widths, NoiseSchedule schedule,
              Rng& init_rng)
      : schedule_(std::move(schedule)) {
    net_.init(image_size, widths, init_rng);
  }

  ImageTensor eps(const ImageTensor& x_t, int t) const override {
    std::vector<ImageTensor> xs = {x_t};
    return eps_batch(xs, t)[0];
  }

  std::vector<ImageTensor> eps_batch(const std::vector<ImageTensor>& xs,
                                     int t) const override {
    schedule_.check_t(t);
    if (xs.empty()) return {};
    for (const auto& x : xs)
      if (x.height != net_.image_size || x.width != net_.image_size ||
          x.channels != 3)
        throw std::invalid_argument("ToyDenoiser: input shape mismatch");
    std::vector<const ImageTensor*> ptrs;
    ptrs.reserve(xs.size());
    for (const auto& x : xs) ptrs.push_back(&x);
    const nn::FMap in = nn::images_to_fmap(ptrs);
    const std::vector<int> ts(xs.size(), t);
    const nn::FMap out = net_.forward(in, ts, nullptr);
    std::vector<ImageTensor> result;
    result.reserve(xs.size());
    for (std::size_t b = 0; b < xs.size(); ++b)
      result.push_back(nn::fmap_to_image(out, static_cast<int>(b)));
    return result;
  }

  int image_size() const override { return net_.image_size; }
  const NoiseSchedule& trained_schedule() const override { return schedule_; }

  nn::ToyUNet& net() { return net_; }
  const nn::ToyUNet& net() const { return net_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    const char magic[8] = {'D', 'R', '2', 'C', 'K', 'P', 'T', '1'};
    out.write(magic, sizeof(magic));
    const std::uint32_t kind = 1;  // toy-unet
    out.write(reinterpret_cast<const char*>(&kind), sizeof(kind));
    const std::uint32_t size = static_cast<std::uint32_t>(net_.image_size);
    out.write(reinterpret_cast<const char*>(&size), sizeof(size));
    for (int i = 0; i < 3; ++i) {
      const std::uint32_t wdt = static_cast<std::uint32_t>(net_.widths[i]);
      out.write(reinterpret_cast<const char*>(&wdt), sizeof(wdt));
    }
    auto ps = const_cast<ToyDenoiser*>(this)->net_.params();
    nn::write_params(out, ps);
  }

  static std::unique_ptr<ToyDenoiser> load(const std::string& path,
                                           const NoiseSchedule& schedule) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (std::string(magic, 8) != "DR2CKPT1")
      throw std::runtime_error("bad checkpoint magic in " + path);
    std::uint32_t kind = 0, size = 0;
    in.read(reinterpret_cast<char*>(&kind), sizeof(kind));
    if (kind != 1)
      throw std::runtime_error("checkpoint is not a toy-unet: " + path);
    in.read(reinterpret_cast<char*>(&size), sizeof(size));
    std::vector<int> widths(3);
    for (int i = 0; i < 3; ++i) {
      std::uint32_t w = 0;
      in.read(reinterpret_cast<char*>(&w), sizeof(w));
      widths[i] = static_cast<int>(w);
    }
    Rng dummy(0);
    auto d = std::make_unique<ToyDenoiser>(static_cast<int>(size), widths,
                                           schedule, dummy);
    auto ps = d->net_.params();
    nn::read_params(in, ps);
    return d;
  }

 private:
  nn::ToyUNet net_;
  NoiseSchedule schedule_;
};

// ---------------------------------------------------------------------------
// Training

struct ToyTrainResult {
  std::unique_ptr<ToyDenoiser> denoiser;
  std::vector<double> epoch_losses;
  double final_loss = 0.0;
};

// Standard epsilon-prediction objective: corrupt a clean image to a uniformly
// random timestep and regress the injected noise with MSE.
inline ToyTrainResult train_toy_denoiser(const std::vector<ImageTensor>& dataset,
                                         const NoiseSchedule& schedule,
                                         const ToyTrainConfig& cfg,
                                         std::ostream* log = nullptr) {
  cfg.validate();
  if (dataset.empty())
    throw std::invalid_argument("train_toy_denoiser: empty dataset");
  for (const auto& img : dataset)
    if (img.height != cfg.image_size || img.width != cfg.image_size ||
        img.channels != 3)
      throw std::invalid_argument(
          "train_toy_denoiser: dataset image size mismatch");

  Rng init_rng = Rng(cfg.seed).fork(100);
  auto denoiser = std::make_unique<ToyDenoiser>(
      cfg.image_size, cfg.channel_widths, schedule, init_rng);
  nn::ToyUNet& net = denoiser->net();
  nn::Adam opt(net.params(), cfg.learning_rate);

  Rng order_rng = Rng(cfg.seed).fork(101);
  Rng noise_rng = Rng(cfg.seed).fork(102);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  ToyTrainResult result;
  const int n = static_cast<int>(dataset.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the deterministic generator.
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(order_rng.uniform_int(0, i));
      std::swap(order[i], order[j]);
    }
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start + cfg.batch_size <= n; start += cfg.batch_size) {
      const int bsz = cfg.batch_size;
      std::vector<const ImageTensor*> batch_x0;
      std::vector<int> ts(bsz);
      std::vector<ImageTensor> noisy, noises;
      noisy.reserve(bsz);
      noises.reserve(bsz);
      for (int b = 0; b < bsz; ++b) {
        const ImageTensor& x0 = dataset[order[start + b]];
        ts[b] = static_cast<int>(noise_rng.uniform_int(1, schedule.T));
        ImageTensor eps = sample_noise_like(x0, noise_rng);
        noisy.push_back(diffuse(x0, ts[b], eps, schedule));
        noises.push_back(std::move(eps));
        batch_x0.push_back(&x0);
      }
      std::vector<const ImageTensor*> noisy_ptrs, noise_ptrs;
      for (auto& im : noisy) noisy_ptrs.push_back(&im);
      for (auto& im : noises) noise_ptrs.push_back(&im);
      const nn::FMap in = nn::images_to_fmap(noisy_ptrs);
      const nn::FMap target = nn::images_to_fmap(noise_ptrs);

      nn::ToyUNet::Cache cache;
      nn::FMap pred = net.forward(in, ts, &cache);
      nn::FMap diff = pred;
      diff.m -= target.m;
      const double loss =
          static_cast<double>(diff.m.array().square().sum()) / diff.m.size();
      nn::FMap dout = diff;
      dout.m *= 2.0f / static_cast<float>(diff.m.size());

      opt.zero_grad();
      net.backward(dout, cache);
      opt.step();

      epoch_loss += loss;
      ++batches;
    }
    if (batches == 0)
      throw std::invalid_argument(
          "train_toy_denoiser: dataset smaller than one batch");
    epoch_loss /= batches;
    result.epoch_losses.push_back(epoch_loss);
    if (log)
      (*log) << "epoch " << (epoch + 1) << "/" << cfg.epochs
             << "  eps-mse " << epoch_loss << "\n";
  }
  result.final_loss = result.epoch_losses.back();
  result.denoiser = std::move(denoiser);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint manifest + external adapter

inline void write_denoiser_manifest(const std::string& path, int image_size,
                                    const NoiseSchedule& schedule,
                                    const std::string& format_tag) {
  KeyValueDoc doc;
  doc.set("checkpoint", "image_size", image_size);
  doc.set("checkpoint", "T", schedule.T);
  doc.set("checkpoint", "beta_start", schedule.beta_start);
  doc.set("checkpoint", "beta_end", schedule.beta_end);
  doc.set("checkpoint", "format_tag", format_tag);
  doc.save(path);
}

// Wraps externally produced weights behind the Denoiser contract. The
// manifest declares the geometry and schedule; loading fails when the file is
// missing or the declared schedule disagrees with the runtime one (alpha-bar
// tables compared at 1e-6).
inline std::unique_ptr<Denoiser> load_external_denoiser(
    const std::string& checkpoint_path, const KeyValueDoc& manifest,
    const NoiseSchedule& runtime_schedule) {
  if (!std::filesystem::exists(checkpoint_path))
    throw std::runtime_error("denoiser checkpoint not found: " +
                             checkpoint_path);
  const int t = manifest.get_int("checkpoint", "T");
  const double bs = manifest.get_double("checkpoint", "beta_start");
  const double be = manifest.get_double("checkpoint", "beta_end");
  if (t != runtime_schedule.T)
    throw std::runtime_error("schedule mismatch: manifest T=" +
                             std::to_string(t) + " vs runtime T=" +
                             std::to_string(runtime_schedule.T));
  const NoiseSchedule declared = make_linear_schedule(t, bs, be);
  for (int i = 1; i <= t; ++i)
    if (std::fabs(declared.alpha_bar(i) - runtime_schedule.alpha_bar(i)) >
        1e-6)
      throw std::runtime_error(
          "schedule mismatch: alpha-bar tables differ by more than 1e-6");
  const std::string tag =
      manifest.get_or("checkpoint", "format_tag", "dr2-toy-unet-v1");
  if (tag != "dr2-toy-unet-v1")
    throw std::runtime_error("unsupported checkpoint format_tag: " + tag);
  auto d = ToyDenoiser::load(checkpoint_path, runtime_schedule);
  const int declared_size = manifest.get_int("checkpoint", "image_size");
  if (d->image_size() != declared_size)
    throw std::runtime_error("manifest image_size disagrees with checkpoint");
  return d;
}

inline std::unique_ptr<Denoiser> load_external_denoiser(
    const std::string& checkpoint_path, const std::string& manifest_path,
    const NoiseSchedule& runtime_schedule) {
  if (!std::filesystem::exists(manifest_path))
    throw std::runtime_error("denoiser manifest not found: " + manifest_path);
  return load_external_denoiser(checkpoint_path,
                                KeyValueDoc::load(manifest_path),
                                runtime_schedule);
}

}  // namespace dr2
