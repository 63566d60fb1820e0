#pragma once

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <opencv2/imgproc.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "dr2/degradation.hpp"
#include "dr2/dr2_sampler.hpp"
#include "dr2/enhancement.hpp"
#include "dr2/faces.hpp"
#include "dr2/io.hpp"
#include "dr2/metrics.hpp"
#include "dr2/toy_unet.hpp"
#include "dr2/version.hpp"

namespace dr2::harness {

// Seed resolution order: explicit flag, DR2_SEED env var, 0.
inline std::uint64_t default_seed() {
  if (const char* env = std::getenv("DR2_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      throw std::runtime_error("DR2_SEED is not a valid integer");
    }
  }
  return 0;
}

inline std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Run manifest: records the command, tool version and every flag needed to
// reproduce the run bit-identically via --replay.
class RunManifest {
 public:
  explicit RunManifest(const std::string& command) {
    doc_.set("run", "command", command);
    doc_.set("run", "version", kVersion);
    doc_.set("run", "timestamp", timestamp_utc());
  }

  void arg(const std::string& flag, const std::string& value) {
    doc_.set("args", flag, value);
  }
  void arg(const std::string& flag, int value) {
    doc_.set("args", flag, std::to_string(value));
  }
  void arg(const std::string& flag, std::uint64_t value) {
    doc_.set("args", flag, std::to_string(value));
  }
  void arg(const std::string& flag, double value) {
    std::ostringstream os;
    os.precision(17);
    os << value;
    doc_.set("args", flag, os.str());
  }
  void arg(const std::string& flag, bool value) {
    doc_.set("args", flag, value ? "true" : "false");
  }

  KeyValueDoc& doc() { return doc_; }

  void save(const std::string& path) const { doc_.save(path); }

 private:
  KeyValueDoc doc_;
};

// Rebuilds the argv of a recorded run. Every value is emitted in
// --flag=value form, which CLI11 accepts for options and booleans alike.
inline std::vector<std::string> replay_argv(const std::string& manifest_path) {
  const KeyValueDoc doc = KeyValueDoc::load(manifest_path);
  std::vector<std::string> argv;
  std::istringstream cmd(doc.get("run", "command"));
  std::string word;
  while (cmd >> word) argv.push_back(word);  // may be "train toy-ddpm"
  for (const auto& [flag, value] : doc.entries("args"))
    argv.push_back("--" + flag + "=" + value);
  return argv;
}

inline std::vector<int> parse_int_set(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty()) out.push_back(std::stoi(cell));
  }
  if (out.empty()) throw std::invalid_argument("empty integer set: " + csv);
  return out;
}

inline std::vector<double> parse_double_set(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty()) out.push_back(std::stod(cell));
  }
  if (out.empty()) throw std::invalid_argument("empty set: " + csv);
  return out;
}

inline std::string join_ints(const std::vector<int>& xs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i)
    os << (i ? "," : "") << xs[i];
  return os.str();
}

// ---------------------------------------------------------------------------
// Checkpoint helpers shared by the commands.

inline NoiseSchedule schedule_from_checkpoint_manifest(
    const std::string& ckpt_path) {
  const std::string manifest_path = ckpt_path + ".manifest";
  if (!fs::exists(manifest_path))
    throw std::runtime_error("denoiser manifest not found: " + manifest_path);
  const KeyValueDoc doc = KeyValueDoc::load(manifest_path);
  return make_linear_schedule(doc.get_int("checkpoint", "T"),
                              doc.get_double("checkpoint", "beta_start"),
                              doc.get_double("checkpoint", "beta_end"));
}

inline std::unique_ptr<Denoiser> load_denoiser_checkpoint(
    const std::string& ckpt_path, const NoiseSchedule& schedule) {
  return load_external_denoiser(ckpt_path, ckpt_path + ".manifest", schedule);
}

// "identity" | "baseline:<ckpt>" | "external:<ckpt>"
inline std::unique_ptr<Enhancer> make_enhancer(const std::string& spec,
                                               int size) {
  if (spec == "identity") return identity_enhancer(size);
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("bad enhancer spec: " + spec);
  const std::string kind = spec.substr(0, colon);
  const std::string path = spec.substr(colon + 1);
  if (kind == "baseline") return BaselineEnhancer::load(path);
  if (kind == "external")
    return load_external_enhancer(path, path + ".manifest");
  throw std::invalid_argument("unknown enhancer kind: " + kind);
}

// ---------------------------------------------------------------------------
// degrade

struct DegradeArgs {
  std::string input_dir;
  std::string out_dir;
  std::string level = "medium";
  int factor = 4;
  int count = 10;
  std::uint64_t seed = default_seed();
  bool resize_back = false;
};

inline void cmd_degrade(const DegradeArgs& a) {
  if (a.factor != 16 && a.factor != 8 && a.factor != 4 && a.factor != 1)
    throw std::invalid_argument("--factor must be one of 16, 8, 4, 1");
  const SplitSpec split = make_split_spec(split_level_from_string(a.level),
                                          a.factor);
  fs::create_directories(a.out_dir);
  build_testset(a.input_dir, split, a.count, a.out_dir, a.seed, a.resize_back);

  RunManifest m("degrade");
  m.arg("input-dir", a.input_dir);
  m.arg("out-dir", a.out_dir);
  m.arg("level", a.level);
  m.arg("factor", a.factor);
  m.arg("count", a.count);
  m.arg("seed", a.seed);
  m.arg("resize-back", a.resize_back);
  m.save((fs::path(a.out_dir) / "run_manifest.ini").string());
}

// ---------------------------------------------------------------------------
// restore

struct RestoreArgs {
  std::string input_dir;
  std::string out_dir;
  std::string denoiser_ckpt;
  std::string enhancer = "identity";
  int N = 4;
  int tau = 300;
  int omega = -1;  // default tau + 0.25T
  bool no_refinement = false;
  bool blend_at_tau = true;
  std::string guidance_mode = "independent";
  int stride = 1;
  std::uint64_t seed = default_seed();
  bool save_coarse = false;
  int batch = 8;
};

inline void cmd_restore(const RestoreArgs& a) {
  const NoiseSchedule schedule =
      schedule_from_checkpoint_manifest(a.denoiser_ckpt);
  const auto denoiser = load_denoiser_checkpoint(a.denoiser_ckpt, schedule);
  const auto enhancer = make_enhancer(a.enhancer, denoiser->image_size());

  DR2Config cfg;
  cfg.N = a.N;
  cfg.tau = a.tau;
  cfg.omega = a.omega;
  cfg.refinement_enabled = !a.no_refinement;
  cfg.blend_at_tau = a.blend_at_tau;
  cfg.guidance_noise_mode = guidance_mode_from_string(a.guidance_mode);
  cfg.stride = a.stride;
  cfg.seed = a.seed;
  cfg.validate(schedule);

  const auto files = list_images(a.input_dir);
  if (files.empty())
    throw std::runtime_error("no input images in " + a.input_dir);

  fs::create_directories(fs::path(a.out_dir) / "restored");
  if (a.save_coarse) fs::create_directories(fs::path(a.out_dir) / "coarse");

  const int size = denoiser->image_size();
  for (std::size_t start = 0; start < files.size();
       start += static_cast<std::size_t>(a.batch)) {
    const std::size_t end =
        std::min(files.size(), start + static_cast<std::size_t>(a.batch));
    std::vector<ImageTensor> batch;
    for (std::size_t i = start; i < end; ++i) {
      ImageTensor y = read_image(files[i].string());
      if (y.height != size || y.width != size) {
        y = resize_bicubic(y, size, size);
        y.clamp();
      }
      batch.push_back(std::move(y));
    }
    DR2Config batch_cfg = cfg;
    batch_cfg.seed = a.seed + static_cast<std::uint64_t>(start);
    const auto coarse = dr2_remove_batch(batch, *denoiser, schedule, batch_cfg);
    for (std::size_t i = start; i < end; ++i) {
      const std::string stem = files[i].stem().string();
      const ImageTensor& c = coarse[i - start];
      if (a.save_coarse)
        write_png((fs::path(a.out_dir) / "coarse" / (stem + ".png")).string(),
                  c);
      const ImageTensor final_img = enhancer->enhance(c);
      write_png(
          (fs::path(a.out_dir) / "restored" / (stem + ".png")).string(),
          final_img);
    }
  }

  RunManifest m("restore");
  m.arg("input-dir", a.input_dir);
  m.arg("out-dir", a.out_dir);
  m.arg("denoiser", a.denoiser_ckpt);
  m.arg("enhancer", a.enhancer);
  m.arg("N", a.N);
  m.arg("tau", a.tau);
  m.arg("omega", cfg.effective_omega(schedule));
  m.arg("no-refinement", a.no_refinement);
  m.arg("blend-at-tau", a.blend_at_tau);
  m.arg("guidance-mode", a.guidance_mode);
  m.arg("stride", a.stride);
  m.arg("seed", a.seed);
  m.arg("save-coarse", a.save_coarse);
  m.arg("batch", a.batch);
  schedule_to_kv(schedule, m.doc());
  dr2_config_to_kv(cfg, schedule, m.doc());
  m.save((fs::path(a.out_dir) / "run_manifest.ini").string());
}

// ---------------------------------------------------------------------------
// Contact sheet (Fig. 8 style): one tile per (N, tau) cell, labeled.

inline void write_contact_sheet(const std::string& path,
                                const std::vector<std::vector<ImageTensor>>& rows,
                                const std::vector<std::string>& row_labels,
                                const std::vector<std::string>& col_labels) {
  if (rows.empty() || rows[0].empty())
    throw std::invalid_argument("contact sheet needs at least one tile");
  const int tile_h = rows[0][0].height;
  const int tile_w = rows[0][0].width;
  const int label_h = 14;
  const int margin = 4;
  const int cols = static_cast<int>(rows[0].size());
  const int nrows = static_cast<int>(rows.size());
  const int cell_w = tile_w + margin;
  const int cell_h = tile_h + label_h + margin;
  cv::Mat sheet(label_h + nrows * cell_h + margin,
                60 + cols * cell_w + margin, CV_8UC3,
                cv::Scalar(30, 30, 30));

  const auto put_label = [&](const std::string& text, int x, int y) {
    cv::putText(sheet, text, {x, y}, cv::FONT_HERSHEY_PLAIN, 0.8,
                cv::Scalar(220, 220, 220), 1, cv::LINE_AA);
  };
  for (int c = 0; c < cols; ++c)
    put_label(col_labels[c], 60 + c * cell_w, label_h - 3);
  for (int r = 0; r < nrows; ++r) {
    put_label(row_labels[r], margin, label_h + r * cell_h + tile_h / 2);
    for (int c = 0; c < cols; ++c) {
      const cv::Mat tile = to_cv_bgr(rows[r][c]);
      tile.copyTo(sheet(cv::Rect(60 + c * cell_w, label_h + r * cell_h,
                                 tile_w, tile_h)));
    }
  }
  if (!cv::imwrite(path, sheet))
    throw std::runtime_error("cannot write contact sheet: " + path);
}

// ---------------------------------------------------------------------------
// gridsearch

struct GridSearchArgs {
  std::string input_dir;  // degraded samples (DR2 inputs)
  std::string ref_dir;    // LR references scored against
  std::string out_dir;
  std::string denoiser_ckpt;
  std::vector<int> n_set = {2, 4, 8, 16};
  std::vector<int> tau_set = {50, 100, 150, 200, 250, 300, 350, 400, 450};
  std::uint64_t seed = default_seed();
  bool with_deg = false;  // also report toy-embedder identity distance
  int limit = 0;          // 0 = all images
  int stride = 1;
};

struct GridCell {
  int N = 0;
  int tau = 0;
  double mean_psnr = 0.0;
  std::optional<double> mean_deg;
};

inline std::vector<GridCell> run_gridsearch(const GridSearchArgs& a) {
  const NoiseSchedule schedule =
      schedule_from_checkpoint_manifest(a.denoiser_ckpt);
  const auto denoiser = load_denoiser_checkpoint(a.denoiser_ckpt, schedule);
  const int size = denoiser->image_size();

  auto files = list_images(a.input_dir);
  if (files.empty())
    throw std::runtime_error("no sample images in " + a.input_dir);
  if (a.limit > 0 && static_cast<int>(files.size()) > a.limit)
    files.resize(a.limit);

  std::vector<ImageTensor> inputs, refs;
  for (const auto& f : files) {
    ImageTensor y = read_image(f.string());
    if (y.height != size || y.width != size) y = resize_bicubic(y, size, size);
    y.clamp();
    inputs.push_back(std::move(y));
    const fs::path ref = fs::path(a.ref_dir) / (f.stem().string() + ".png");
    ImageTensor r = read_image(ref.string());
    if (r.height != size || r.width != size) r = resize_bicubic(r, size, size);
    r.clamp();
    refs.push_back(std::move(r));
  }

  std::unique_ptr<ToyEmbedder> embedder;
  if (a.with_deg) embedder = std::make_unique<ToyEmbedder>(size);

  std::vector<GridCell> cells;
  std::vector<std::vector<ImageTensor>> sheet_rows;
  for (int n : a.n_set) {
    std::vector<ImageTensor> sheet_row;
    for (int tau : a.tau_set) {
      DR2Config cfg;
      cfg.N = n;
      cfg.tau = tau;
      cfg.seed = a.seed;
      cfg.stride = a.stride;
      cfg.validate(schedule);
      const auto outs = dr2_remove_batch(inputs, *denoiser, schedule, cfg);
      GridCell cell;
      cell.N = n;
      cell.tau = tau;
      double psnr_sum = 0.0, deg_sum = 0.0;
      for (std::size_t i = 0; i < outs.size(); ++i) {
        psnr_sum += psnr(outs[i], refs[i]);
        if (embedder) deg_sum += identity_deg(outs[i], refs[i], *embedder);
      }
      cell.mean_psnr = psnr_sum / outs.size();
      if (embedder) cell.mean_deg = deg_sum / outs.size();
      cells.push_back(cell);
      sheet_row.push_back(outs[0]);
    }
    sheet_rows.push_back(std::move(sheet_row));
  }

  fs::create_directories(a.out_dir);
  std::vector<std::vector<std::string>> csv_rows;
  for (const auto& c : cells) {
    std::ostringstream p, d;
    p.precision(10);
    p << c.mean_psnr;
    if (c.mean_deg) {
      d.precision(10);
      d << *c.mean_deg;
    }
    csv_rows.push_back({std::to_string(c.N), std::to_string(c.tau), p.str(),
                        d.str()});
  }
  write_csv((fs::path(a.out_dir) / "grid.csv").string(),
            {"N", "tau", "psnr", "deg"}, csv_rows);

  std::vector<std::string> row_labels, col_labels;
  for (int n : a.n_set) row_labels.push_back("N=" + std::to_string(n));
  for (int tau : a.tau_set) col_labels.push_back("t=" + std::to_string(tau));
  write_contact_sheet((fs::path(a.out_dir) / "grid_sheet.png").string(),
                      sheet_rows, row_labels, col_labels);

  RunManifest m("gridsearch");
  m.arg("input-dir", a.input_dir);
  m.arg("ref-dir", a.ref_dir);
  m.arg("out-dir", a.out_dir);
  m.arg("denoiser", a.denoiser_ckpt);
  m.arg("N-set", join_ints(a.n_set));
  m.arg("tau-set", join_ints(a.tau_set));
  m.arg("seed", a.seed);
  m.arg("with-deg", a.with_deg);
  m.arg("limit", a.limit);
  m.arg("stride", a.stride);
  m.save((fs::path(a.out_dir) / "run_manifest.ini").string());
  return cells;
}

// ---------------------------------------------------------------------------
// ablate-omega

struct AblateOmegaArgs {
  std::string input_dir;
  std::string ref_dir;  // empty = score against the inputs themselves
  std::string out_dir;
  std::string denoiser_ckpt;
  bool no_refinement = false;
  int N = 4;
  int tau = 300;                       // refinement-on mode
  std::vector<int> omega_set = {400, 500, 600, 700};
  std::vector<int> tau_set = {300, 150, 0};  // refinement-off mode
  std::uint64_t seed = default_seed();
  bool with_deg = false;
  int limit = 0;
  int stride = 1;
};

struct AblateRow {
  int tau = 0;
  int omega = 0;
  double mean_psnr = 0.0;
  std::optional<double> mean_deg;
};

inline std::vector<AblateRow> run_ablate_omega(const AblateOmegaArgs& a) {
  const NoiseSchedule schedule =
      schedule_from_checkpoint_manifest(a.denoiser_ckpt);
  const auto denoiser = load_denoiser_checkpoint(a.denoiser_ckpt, schedule);
  const int size = denoiser->image_size();

  auto files = list_images(a.input_dir);
  if (files.empty())
    throw std::runtime_error("no sample images in " + a.input_dir);
  if (a.limit > 0 && static_cast<int>(files.size()) > a.limit)
    files.resize(a.limit);

  std::vector<ImageTensor> inputs, refs;
  for (const auto& f : files) {
    ImageTensor y = read_image(f.string());
    if (y.height != size || y.width != size) y = resize_bicubic(y, size, size);
    y.clamp();
    if (a.ref_dir.empty()) {
      refs.push_back(y);
    } else {
      const fs::path ref = fs::path(a.ref_dir) / (f.stem().string() + ".png");
      ImageTensor r = read_image(ref.string());
      if (r.height != size || r.width != size)
        r = resize_bicubic(r, size, size);
      r.clamp();
      refs.push_back(std::move(r));
    }
    inputs.push_back(std::move(y));
  }

  std::unique_ptr<ToyEmbedder> embedder;
  if (a.with_deg) embedder = std::make_unique<ToyEmbedder>(size);

  const auto eval_cfg = [&](const DR2Config& cfg) {
    const auto outs = dr2_remove_batch(inputs, *denoiser, schedule, cfg);
    AblateRow row;
    row.tau = cfg.tau;
    row.omega = cfg.effective_omega(schedule);
    double ps = 0.0, dg = 0.0;
    for (std::size_t i = 0; i < outs.size(); ++i) {
      ps += psnr(outs[i], refs[i]);
      if (embedder) dg += identity_deg(outs[i], refs[i], *embedder);
    }
    row.mean_psnr = ps / outs.size();
    if (embedder) row.mean_deg = dg / outs.size();
    return row;
  };

  std::vector<AblateRow> rows;
  if (!a.no_refinement) {
    for (int omega : a.omega_set) {
      DR2Config cfg;
      cfg.N = a.N;
      cfg.tau = a.tau;
      cfg.omega = omega;
      cfg.seed = a.seed;
      cfg.stride = a.stride;
      cfg.validate(schedule);
      rows.push_back(eval_cfg(cfg));
    }
  } else {
    for (int tau : a.tau_set)
      for (int omega : a.omega_set) {
        if (omega <= tau) continue;
        DR2Config cfg;
        cfg.N = a.N;
        cfg.tau = tau;
        cfg.omega = omega;
        cfg.refinement_enabled = false;
        cfg.seed = a.seed;
        cfg.stride = a.stride;
        cfg.validate(schedule);
        rows.push_back(eval_cfg(cfg));
      }
  }

  fs::create_directories(a.out_dir);
  std::vector<std::vector<std::string>> csv_rows;
  for (const auto& r : rows) {
    std::ostringstream p, d;
    p.precision(10);
    p << r.mean_psnr;
    if (r.mean_deg) {
      d.precision(10);
      d << *r.mean_deg;
    }
    csv_rows.push_back({std::to_string(r.tau), std::to_string(r.omega),
                        p.str(), d.str()});
  }
  write_csv((fs::path(a.out_dir) / "ablate_omega.csv").string(),
            {"tau", "omega", "psnr", "deg"}, csv_rows);

  RunManifest m("ablate-omega");
  m.arg("input-dir", a.input_dir);
  if (!a.ref_dir.empty()) m.arg("ref-dir", a.ref_dir);
  m.arg("out-dir", a.out_dir);
  m.arg("denoiser", a.denoiser_ckpt);
  m.arg("no-refinement", a.no_refinement);
  m.arg("N", a.N);
  m.arg("tau", a.tau);
  m.arg("omega-set", join_ints(a.omega_set));
  m.arg("tau-set", join_ints(a.tau_set));
  m.arg("seed", a.seed);
  m.arg("with-deg", a.with_deg);
  m.arg("limit", a.limit);
  m.arg("stride", a.stride);
  m.save((fs::path(a.out_dir) / "run_manifest.ini").string());
  return rows;
}

// Peak-count test used for the Fig. 9 style tau sweeps: unimodal-or-monotone
// curves pass (at most one local maximum after merging sub-margin wiggles).
inline int count_local_maxima(const std::vector<double>& v, double margin) {
  int peaks = 0;
  const int n = static_cast<int>(v.size());
  for (int i = 0; i < n; ++i) {
    // walk left/right past plateau values within margin
    double left = -1e300, right = -1e300;
    for (int j = i - 1; j >= 0; --j)
      if (std::fabs(v[j] - v[i]) > margin) {
        left = v[j];
        break;
      }
    for (int j = i + 1; j < n; ++j)
      if (std::fabs(v[j] - v[i]) > margin) {
        right = v[j];
        break;
      }
    const bool left_lower = (left == -1e300) || (left < v[i] - margin);
    const bool right_lower = (right == -1e300) || (right < v[i] - margin);
    if (left_lower && right_lower) {
      // count a plateau once: require previous point not in the same plateau
      if (i == 0 || std::fabs(v[i - 1] - v[i]) > margin) ++peaks;
    }
  }
  return peaks;
}

inline bool passes_one_peak_test(const std::vector<double>& v,
                                 double margin = 0.05) {
  return count_local_maxima(v, margin) <= 1;
}

// ---------------------------------------------------------------------------
// train subcommands

struct TrainToyDdpmArgs {
  std::string data_dir;      // empty = procedural faces
  int count = 512;           // procedural dataset size
  int image_size = 32;
  std::string widths = "16,32,64";
  int epochs = 40;
  int batch = 16;
  double lr = 1e-3;
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::uint64_t seed = default_seed();
  std::string out;  // checkpoint path
  bool quiet = false;
};

inline ToyTrainResult cmd_train_toy_ddpm(const TrainToyDdpmArgs& a) {
  if (a.out.empty()) throw std::invalid_argument("--out is required");
  const NoiseSchedule schedule =
      make_linear_schedule(a.T, a.beta_start, a.beta_end);

  std::vector<ImageTensor> dataset;
  if (a.data_dir.empty()) {
    dataset = synth_face_dataset(a.count, a.image_size, a.seed);
  } else {
    for (const auto& f : list_images(a.data_dir)) {
      ImageTensor img = read_image(f.string());
      if (img.height != a.image_size || img.width != a.image_size)
        img = resize_bicubic(img, a.image_size, a.image_size);
      img.clamp();
      dataset.push_back(std::move(img));
    }
  }

  ToyTrainConfig cfg;
  cfg.image_size = a.image_size;
  cfg.channel_widths = parse_int_set(a.widths);
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  cfg.seed = a.seed;
  cfg.dataset = a.data_dir.empty()
                    ? "procedural:" + std::to_string(a.count)
                    : a.data_dir;

  ToyTrainResult result = train_toy_denoiser(dataset, schedule, cfg,
                                             a.quiet ? nullptr : &std::cerr);
  if (const auto dir = fs::path(a.out).parent_path(); !dir.empty())
    fs::create_directories(dir);
  result.denoiser->save(a.out);
  write_denoiser_manifest(a.out + ".manifest", a.image_size, schedule,
                          "dr2-toy-unet-v1");

  RunManifest m("train toy-ddpm");
  if (!a.data_dir.empty()) m.arg("data-dir", a.data_dir);
  m.arg("count", a.count);
  m.arg("image-size", a.image_size);
  m.arg("widths", a.widths);
  m.arg("epochs", a.epochs);
  m.arg("batch", a.batch);
  m.arg("lr", a.lr);
  m.arg("T", a.T);
  m.arg("beta-start", a.beta_start);
  m.arg("beta-end", a.beta_end);
  m.arg("seed", a.seed);
  m.arg("out", a.out);
  m.arg("quiet", a.quiet);
  m.doc().set("result", "final_loss", result.final_loss);
  m.save(a.out + ".run_manifest.ini");
  return result;
}

struct TrainPairsArgs {
  std::string data_dir;  // empty = procedural faces
  int count = 64;
  std::string denoiser_ckpt;
  std::string out_dir;
  int N = 4;
  std::string tau_set = "50,100,150,200";
  std::string sigma_set = "1,2,3,4,5,6,7";
  std::uint64_t seed = default_seed();
};

inline void cmd_train_pairs(const TrainPairsArgs& a) {
  if (a.out_dir.empty()) throw std::invalid_argument("--out-dir is required");
  const NoiseSchedule schedule =
      schedule_from_checkpoint_manifest(a.denoiser_ckpt);
  const auto denoiser = load_denoiser_checkpoint(a.denoiser_ckpt, schedule);
  const int size = denoiser->image_size();

  std::vector<ImageTensor> cleans;
  if (a.data_dir.empty()) {
    cleans = synth_face_dataset(a.count, size, a.seed);
  } else {
    for (const auto& f : list_images(a.data_dir)) {
      ImageTensor img = read_image(f.string());
      if (img.height != size || img.width != size)
        img = resize_bicubic(img, size, size);
      img.clamp();
      cleans.push_back(std::move(img));
      if (a.count > 0 && static_cast<int>(cleans.size()) >= a.count) break;
    }
  }

  PairSetConfig cfg;
  cfg.N = a.N;
  cfg.tau_set = parse_int_set(a.tau_set);
  cfg.sigma_set = parse_double_set(a.sigma_set);
  cfg.seed = a.seed;
  const auto pairs = build_training_pairs(cleans, *denoiser, schedule, cfg);

  fs::create_directories(fs::path(a.out_dir) / "input");
  fs::create_directories(fs::path(a.out_dir) / "target");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu.png", i);
    write_png((fs::path(a.out_dir) / "input" / name).string(), pairs[i].input);
    write_png((fs::path(a.out_dir) / "target" / name).string(),
              pairs[i].target);
    std::ostringstream sig;
    sig.precision(17);
    sig << pairs[i].sigma;
    rows.push_back({name, std::to_string(pairs[i].tau), sig.str()});
  }
  write_csv((fs::path(a.out_dir) / "manifest.csv").string(),
            {"filename", "tau", "sigma"}, rows);

  RunManifest m("train pairs");
  if (!a.data_dir.empty()) m.arg("data-dir", a.data_dir);
  m.arg("count", a.count);
  m.arg("denoiser", a.denoiser_ckpt);
  m.arg("out-dir", a.out_dir);
  m.arg("N", a.N);
  m.arg("tau-set", a.tau_set);
  m.arg("sigma-set", a.sigma_set);
  m.arg("seed", a.seed);
  m.save((fs::path(a.out_dir) / "run_manifest.ini").string());
}

struct TrainEnhancerArgs {
  std::string pairs_dir;
  std::string out;
  int channels = 32;
  int upsample = 1;
  int epochs = 20;
  int batch = 8;
  double lr = 1e-3;
  std::uint64_t seed = default_seed();
  bool quiet = false;
};

inline EnhancerTrainResult cmd_train_enhancer(const TrainEnhancerArgs& a) {
  if (a.out.empty()) throw std::invalid_argument("--out is required");
  const auto input_files =
      list_images((fs::path(a.pairs_dir) / "input").string());
  if (input_files.empty())
    throw std::runtime_error("no pairs found in " + a.pairs_dir);

  std::vector<TrainingPair> pairs;
  for (const auto& f : input_files) {
    TrainingPair p;
    p.input = read_image(f.string());
    p.target = read_image(
        (fs::path(a.pairs_dir) / "target" / f.filename()).string());
    pairs.push_back(std::move(p));
  }

  EnhancerTrainConfig cfg;
  cfg.image_size = pairs[0].input.height;
  cfg.channels = a.channels;
  cfg.upsample_factor = a.upsample;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  cfg.seed = a.seed;

  EnhancerTrainResult result =
      train_baseline_enhancer(pairs, cfg, a.quiet ? nullptr : &std::cerr);
  if (const auto dir = fs::path(a.out).parent_path(); !dir.empty())
    fs::create_directories(dir);
  result.enhancer->save(a.out);
  write_enhancer_manifest(a.out + ".manifest", cfg.image_size,
                          cfg.image_size * cfg.upsample_factor,
                          "dr2-enhancer-v1");

  RunManifest m("train baseline-enhancer");
  m.arg("pairs-dir", a.pairs_dir);
  m.arg("out", a.out);
  m.arg("channels", a.channels);
  m.arg("upsample", a.upsample);
  m.arg("epochs", a.epochs);
  m.arg("batch", a.batch);
  m.arg("lr", a.lr);
  m.arg("seed", a.seed);
  m.arg("quiet", a.quiet);
  m.doc().set("result", "final_loss", result.final_loss);
  m.save(a.out + ".run_manifest.ini");
  return result;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string pred_dir;
  std::string ref_dir;
  std::string out_csv;
  std::string embedder = "none";  // none | toy
};

inline MetricsReport cmd_evaluate(const EvaluateArgs& a) {
  EvaluateConfig cfg;
  std::unique_ptr<ToyEmbedder> embedder;
  if (a.embedder == "toy") {
    const auto files = list_images(a.pred_dir);
    if (files.empty()) throw std::runtime_error("no images in " + a.pred_dir);
    const ImageTensor probe = read_image(files[0].string());
    embedder = std::make_unique<ToyEmbedder>(probe.height);
    cfg.embedder = embedder.get();
  } else if (a.embedder != "none") {
    throw std::invalid_argument("unknown embedder: " + a.embedder);
  }

  MetricsReport report = evaluate_dir(a.pred_dir, a.ref_dir, cfg);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  if (!a.out_csv.empty()) {
    if (const auto dir = fs::path(a.out_csv).parent_path(); !dir.empty())
      fs::create_directories(dir);
    report.write_csv_file(a.out_csv);
    RunManifest m("evaluate");
    m.arg("pred-dir", a.pred_dir);
    m.arg("ref-dir", a.ref_dir);
    m.arg("out", a.out_csv);
    m.arg("embedder", a.embedder);
    m.save(a.out_csv + ".run_manifest.ini");
  }
  return report;
}

}  // namespace dr2::harness
