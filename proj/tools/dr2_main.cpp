// dr2: degradation-robust face restoration toolkit CLI.
//
// Verbs: degrade, restore, gridsearch, ablate-omega,
//        train {toy-ddpm | pairs | baseline-enhancer}, evaluate.
// Every command writes a run manifest next to its outputs; --replay re-runs
// a recorded manifest bit-identically.

#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "dr2/harness.hpp"
#include "dr2/version.hpp"

namespace {

using namespace dr2;
using namespace dr2::harness;

int run(std::vector<std::string> args);

void dispatch(CLI::App& app, std::vector<std::string> args) {
  // CLI11 wants reversed argv without the program name.
  std::reverse(args.begin(), args.end());
  app.parse(args);
}

int run(std::vector<std::string> args) {
  CLI::App app{"DR2 diffusion-based degradation removal toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(0, 1);

  std::string replay_path;
  app.add_option("--replay", replay_path,
                 "re-run a recorded run manifest");

  // ---- degrade ----
  DegradeArgs deg;
  auto* c_deg = app.add_subcommand("degrade", "synthesize a degraded split");
  c_deg->add_option("--input-dir", deg.input_dir, "clean image directory")
      ->required();
  c_deg->add_option("--out-dir", deg.out_dir, "output directory")->required();
  c_deg->add_option("--level", deg.level, "mild | medium | severe");
  c_deg->add_option("--factor", deg.factor, "upsampling factor r");
  c_deg->add_option("--count", deg.count, "number of images");
  c_deg->add_option("--seed", deg.seed, "base seed");
  c_deg->add_flag("--resize-back", deg.resize_back,
                  "upsample degraded outputs back to the input size");

  // ---- restore ----
  RestoreArgs res;
  auto* c_res = app.add_subcommand("restore", "run DR2 + enhancement");
  c_res->add_option("--input-dir", res.input_dir)->required();
  c_res->add_option("--out-dir", res.out_dir)->required();
  c_res->add_option("--denoiser", res.denoiser_ckpt, "denoiser checkpoint")
      ->required();
  c_res->add_option("--enhancer", res.enhancer,
                    "identity | baseline:<ckpt> | external:<ckpt>");
  c_res->add_option("--N", res.N, "downsampling factor");
  c_res->add_option("--tau", res.tau, "output timestep");
  c_res->add_option("--omega", res.omega,
                    "start timestep (default tau + 0.25T)");
  c_res->add_flag("--no-refinement", res.no_refinement);
  c_res->add_option("--blend-at-tau", res.blend_at_tau,
                    "blend the tau-th state before the truncated output");
  c_res->add_option("--guidance-mode", res.guidance_mode,
                    "independent | shared_trajectory");
  c_res->add_option("--stride", res.stride, "reverse-step stride");
  c_res->add_option("--seed", res.seed);
  c_res->add_flag("--save-coarse", res.save_coarse,
                  "also write the DR2 coarse outputs");
  c_res->add_option("--batch", res.batch, "lockstep batch size");

  // ---- gridsearch ----
  GridSearchArgs grid;
  std::string grid_n = "2,4,8,16";
  std::string grid_tau = "50,100,150,200,250,300,350,400,450";
  auto* c_grid =
      app.add_subcommand("gridsearch", "sweep (N, tau), emit CSV + sheet");
  c_grid->add_option("--input-dir", grid.input_dir)->required();
  c_grid->add_option("--ref-dir", grid.ref_dir)->required();
  c_grid->add_option("--out-dir", grid.out_dir)->required();
  c_grid->add_option("--denoiser", grid.denoiser_ckpt)->required();
  c_grid->add_option("--N-set", grid_n, "comma-separated N values");
  c_grid->add_option("--tau-set", grid_tau, "comma-separated tau values");
  c_grid->add_option("--seed", grid.seed);
  c_grid->add_flag("--with-deg", grid.with_deg,
                   "also report toy-embedder identity distance");
  c_grid->add_option("--limit", grid.limit, "max images (0 = all)");
  c_grid->add_option("--stride", grid.stride);

  // ---- ablate-omega ----
  AblateOmegaArgs abl;
  std::string abl_omega = "400,500,600,700";
  std::string abl_tau = "300,150,0";
  auto* c_abl = app.add_subcommand(
      "ablate-omega", "sweep the initial-condition step omega");
  c_abl->add_option("--input-dir", abl.input_dir)->required();
  c_abl->add_option("--ref-dir", abl.ref_dir,
                    "references (default: the inputs themselves)");
  c_abl->add_option("--out-dir", abl.out_dir)->required();
  c_abl->add_option("--denoiser", abl.denoiser_ckpt)->required();
  c_abl->add_flag("--no-refinement", abl.no_refinement,
                  "sweep (omega, tau) with refinement disabled");
  c_abl->add_option("--N", abl.N);
  c_abl->add_option("--tau", abl.tau, "fixed tau (refinement-on mode)");
  c_abl->add_option("--omega-set", abl_omega);
  c_abl->add_option("--tau-set", abl_tau, "tau values (refinement-off mode)");
  c_abl->add_option("--seed", abl.seed);
  c_abl->add_flag("--with-deg", abl.with_deg);
  c_abl->add_option("--limit", abl.limit);
  c_abl->add_option("--stride", abl.stride);

  // ---- train ----
  auto* c_train = app.add_subcommand("train", "training utilities");
  c_train->require_subcommand(1);

  TrainToyDdpmArgs tddpm;
  auto* c_tddpm = c_train->add_subcommand("toy-ddpm", "train the toy DDPM");
  c_tddpm->add_option("--data-dir", tddpm.data_dir,
                      "clean images (default: procedural faces)");
  c_tddpm->add_option("--count", tddpm.count, "procedural dataset size");
  c_tddpm->add_option("--image-size", tddpm.image_size);
  c_tddpm->add_option("--widths", tddpm.widths, "channel widths, e.g. 16,32,64");
  c_tddpm->add_option("--epochs", tddpm.epochs);
  c_tddpm->add_option("--batch", tddpm.batch);
  c_tddpm->add_option("--lr", tddpm.lr);
  c_tddpm->add_option("--T", tddpm.T);
  c_tddpm->add_option("--beta-start", tddpm.beta_start);
  c_tddpm->add_option("--beta-end", tddpm.beta_end);
  c_tddpm->add_option("--seed", tddpm.seed);
  c_tddpm->add_option("--out", tddpm.out, "checkpoint path")->required();
  c_tddpm->add_flag("--quiet", tddpm.quiet);

  TrainPairsArgs tpairs;
  auto* c_tpairs =
      c_train->add_subcommand("pairs", "build enhancement training pairs");
  c_tpairs->add_option("--data-dir", tpairs.data_dir);
  c_tpairs->add_option("--count", tpairs.count);
  c_tpairs->add_option("--denoiser", tpairs.denoiser_ckpt)->required();
  c_tpairs->add_option("--out-dir", tpairs.out_dir)->required();
  c_tpairs->add_option("--N", tpairs.N);
  c_tpairs->add_option("--tau-set", tpairs.tau_set);
  c_tpairs->add_option("--sigma-set", tpairs.sigma_set);
  c_tpairs->add_option("--seed", tpairs.seed);

  TrainEnhancerArgs tenh;
  auto* c_tenh = c_train->add_subcommand("baseline-enhancer",
                                         "train the baseline enhancer");
  c_tenh->add_option("--pairs-dir", tenh.pairs_dir)->required();
  c_tenh->add_option("--out", tenh.out)->required();
  c_tenh->add_option("--channels", tenh.channels);
  c_tenh->add_option("--upsample", tenh.upsample);
  c_tenh->add_option("--epochs", tenh.epochs);
  c_tenh->add_option("--batch", tenh.batch);
  c_tenh->add_option("--lr", tenh.lr);
  c_tenh->add_option("--seed", tenh.seed);
  c_tenh->add_flag("--quiet", tenh.quiet);

  // ---- evaluate ----
  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "PSNR/SSIM report over a dir");
  c_ev->add_option("--pred-dir", ev.pred_dir)->required();
  c_ev->add_option("--ref-dir", ev.ref_dir)->required();
  c_ev->add_option("--out", ev.out_csv, "report CSV path");
  c_ev->add_option("--embedder", ev.embedder, "none | toy");

  try {
    dispatch(app, std::move(args));
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    std::cerr << "dr2: error: " << e.what() << "\n";
    return e.get_exit_code() == 0 ? 1 : e.get_exit_code();
  }

  if (!replay_path.empty()) {
    if (app.get_subcommands().size() > 0)
      throw CLI::ValidationError("--replay cannot be combined with a verb");
    return run(replay_argv(replay_path));
  }

  if (c_deg->parsed()) {
    cmd_degrade(deg);
  } else if (c_res->parsed()) {
    cmd_restore(res);
  } else if (c_grid->parsed()) {
    grid.n_set = parse_int_set(grid_n);
    grid.tau_set = parse_int_set(grid_tau);
    run_gridsearch(grid);
  } else if (c_abl->parsed()) {
    abl.omega_set = parse_int_set(abl_omega);
    abl.tau_set = parse_int_set(abl_tau);
    run_ablate_omega(abl);
  } else if (c_tddpm->parsed()) {
    cmd_train_toy_ddpm(tddpm);
  } else if (c_tpairs->parsed()) {
    cmd_train_pairs(tpairs);
  } else if (c_tenh->parsed()) {
    cmd_train_enhancer(tenh);
  } else if (c_ev->parsed()) {
    const MetricsReport report = cmd_evaluate(ev);
    std::cout << "pairs " << report.rows.size() << "  mean psnr "
              << report.mean_psnr << "  mean ssim " << report.mean_ssim;
    if (report.mean_deg) std::cout << "  mean deg " << *report.mean_deg;
    std::cout << "\n";
  } else {
    std::cout << app.help();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run(std::move(args));
  } catch (const std::exception& e) {
    std::cerr << "dr2: error: " << e.what() << "\n";
    return 1;
  }
}
