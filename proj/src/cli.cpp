#include "lvt/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lvt/config.hpp"
#include "lvt/data_io.hpp"
#include "lvt/metrics.hpp"
#include "lvt/sampler.hpp"
#include "lvt/threading.hpp"
#include "lvt/train.hpp"

namespace lvt {

namespace fs = std::filesystem;

namespace {

int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct CsvLog {
  std::ofstream out;
  CsvLog(const std::string& path, uint64_t digest, const std::string& columns) {
    const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    out.open(path, std::ios::app);
    LVT_CHECK(out.good(), DataError, "cannot open log '" + path + "'");
    if (fresh) out << "# config_digest=" << digest << "\n" << columns << "\n";
  }
  template <typename... Args>
  void row(Args&&... args) {
    bool first = true;
    ((out << (first ? "" : ","), out << args, first = false), ...);
    out << "\n";
    out.flush();
  }
};

SyntheticSpec spec_from_kv(const KvConfig& kv) {
  SyntheticSpec spec;
  spec.kind = synthetic_kind_from_string(kv.get_str("kind", "moving_square"));
  spec.count = static_cast<int>(kv.get_int("count", spec.count));
  spec.T = static_cast<int>(kv.get_int("T", spec.T));
  spec.H = static_cast<int>(kv.get_int("H", spec.H));
  spec.W = static_cast<int>(kv.get_int("W", spec.W));
  spec.square = static_cast<int>(kv.get_int("square", spec.square));
  spec.vmin = static_cast<int>(kv.get_int("vmin", spec.vmin));
  spec.vmax = static_cast<int>(kv.get_int("vmax", spec.vmax));
  spec.seed = static_cast<uint64_t>(kv.get_int("seed", 0));
  return spec;
}

void cmd_make_data(const std::string& spec_path, const std::string& out_dir) {
  KvConfig kv = KvConfig::parse_file(spec_path);
  SyntheticSpec spec = spec_from_kv(kv);
  const int test_count = static_cast<int>(kv.get_int("test_count", std::max(1, spec.count / 16)));
  SyntheticSpec full = spec;
  full.count = spec.count + test_count;
  std::vector<Tensor> videos = generate_synthetic(full);
  std::vector<Tensor> train(videos.begin(), videos.begin() + spec.count);
  std::vector<Tensor> test(videos.begin() + spec.count, videos.end());
  write_dataset(out_dir, full, train, test);
  std::cout << "wrote " << train.size() << " train + " << test.size() << " test videos to "
            << out_dir << "\n";
}

std::vector<Tensor> frames_of(const std::vector<Tensor>& videos) {
  std::vector<Tensor> frames;
  for (const Tensor& v : videos) {
    const int T = v.dim(0);
    const int64_t fe = v.numel() / T;
    for (int t = 0; t < T; ++t) {
      Tensor f(Shape{v.dim(1), v.dim(2), v.dim(3)});
      std::copy(v.data() + t * fe, v.data() + (t + 1) * fe, f.data());
      frames.push_back(std::move(f));
    }
  }
  return frames;
}

void cmd_train_codec(const std::string& config_path, const std::string& out_path, int64_t steps_override,
                     int64_t seed_override) {
  KvConfig kv = KvConfig::parse_file(config_path);
  validate_run_config(kv);
  CodecConfig cfg = codec_config_from(kv);
  const uint64_t seed =
      seed_override >= 0 ? static_cast<uint64_t>(seed_override) : static_cast<uint64_t>(kv.get_int("train.seed", 0));
  const int64_t steps = steps_override >= 0 ? steps_override : kv.get_int("train.steps", 3000);
  const int batch = static_cast<int>(kv.get_int("train.batch", 8));
  AdamConfig adam;
  adam.lr = kv.get_real("train.lr", 3e-4);
  adam.beta1 = kv.get_real("train.beta1", adam.beta1);
  adam.beta2 = kv.get_real("train.beta2", adam.beta2);
  adam.eps = kv.get_real("train.eps", adam.eps);
  const int log_interval = static_cast<int>(kv.get_int("train.log_interval", 50));

  const std::string data_dir = kv.get_str("paths.data");
  std::vector<Tensor> train_frames = frames_of(load_video_dir(data_dir + "/train"));
  LVT_CHECK(!train_frames.empty(), DataError, "no training frames in " + data_dir);

  FrameCodec codec(cfg, seed);
  Rng rng = Rng(seed).fork(1);
  CsvLog log(out_path + ".log.csv", kv.digest(), "step,loss,mse,wall_ms");
  const int64_t t_start = now_ms();
  for (int64_t step = 0; step < steps; ++step) {
    std::vector<Tensor> batch_frames;
    for (int b = 0; b < batch; ++b)
      batch_frames.push_back(
          train_frames[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(train_frames.size()) - 1))]);
    auto res = codec_train_step(codec, batch_frames, adam);
    if (step % log_interval == 0 || step + 1 == steps)
      log.row(step, res.loss, res.mse, now_ms() - t_start);
  }
  save_codec_checkpoint(out_path, codec, kv.canonical_text());
  std::cout << "saved codec checkpoint to " << out_path << " after " << steps << " steps\n";
}

std::vector<LatentGrid> encode_dataset(const FrameCodec& codec, const std::vector<Tensor>& videos) {
  std::vector<LatentGrid> grids(videos.size());
  parallel_for(static_cast<int>(videos.size()),
               [&](int i) { grids[static_cast<size_t>(i)] = codec.encode_video(videos[static_cast<size_t>(i)]); });
  return grids;
}

std::vector<int> eligible_slices(const SubscalePlan& plan, int t0) {
  std::vector<int> out;
  for (int s = 0; s < plan.slice_count(); ++s)
    for (const auto& p : plan.slice_positions(s))
      if (p.t >= t0) {
        out.push_back(s);
        break;
      }
  return out;
}

void cmd_train_lvt(const std::string& config_path, const std::string& codec_path,
                   const std::string& out_path, int64_t steps_override, int64_t seed_override) {
  KvConfig kv = KvConfig::parse_file(config_path);
  validate_run_config(kv);
  LoadedCodec loaded = load_codec_checkpoint(codec_path);
  TransformerConfig cfg = lvt_config_from(kv);
  LVT_CHECK(cfg.K == loaded.codec.config().K && cfg.n_c == loaded.codec.config().n_c, ConfigError,
            "train-lvt: codec checkpoint disagrees with config on K or n_c");
  const uint64_t seed =
      seed_override >= 0 ? static_cast<uint64_t>(seed_override) : static_cast<uint64_t>(kv.get_int("train.seed", 0));
  const int64_t steps = steps_override >= 0 ? steps_override : kv.get_int("train.steps", 5000);
  const int batch = static_cast<int>(kv.get_int("train.batch", 2));
  const int t0 = static_cast<int>(kv.get_int("sampler.t0", 1));
  AdamConfig adam;
  adam.lr = kv.get_real("train.lr", 1e-3);
  const int log_interval = static_cast<int>(kv.get_int("train.log_interval", 25));

  const std::string data_dir = kv.get_str("paths.data");
  std::vector<LatentGrid> grids = encode_dataset(loaded.codec, load_video_dir(data_dir + "/train"));
  LVT_CHECK(!grids.empty(), DataError, "no training videos in " + data_dir);

  LatentTransformer model(cfg, seed);
  const std::vector<int> slices = eligible_slices(model.plan(), t0);
  LVT_CHECK(!slices.empty(), ConfigError, "train-lvt: every slice is fully primed");
  Rng rng = Rng(seed).fork(2);
  CsvLog log(out_path + ".log.csv", kv.digest(), "step,loss,bits_per_dim,wall_ms");
  const int64_t t_start = now_ms();
  for (int64_t step = 0; step < steps; ++step) {
    std::vector<const LatentGrid*> batch_grids;
    std::vector<int> batch_slices;
    for (int b = 0; b < batch; ++b) {
      batch_grids.push_back(
          &grids[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(grids.size()) - 1))]);
      batch_slices.push_back(
          slices[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(slices.size()) - 1))]);
    }
    auto res = lvt_train_step(model, batch_grids, batch_slices, t0, adam);
    if (step % log_interval == 0 || step + 1 == steps)
      log.row(step, res.nll_mean, bits_per_dim(res.nll_mean), now_ms() - t_start);
  }
  save_lvt_checkpoint(out_path, model, kv.canonical_text());
  std::cout << "saved lvt checkpoint to " << out_path << " after " << steps << " steps\n";
}

void cmd_encode(const std::string& codec_path, const std::string& video_path,
                const std::string& out_path) {
  LoadedCodec loaded = load_codec_checkpoint(codec_path);
  Tensor video = read_video(video_path);
  write_latents(out_path, loaded.codec.encode_video(video));
  std::cout << "wrote latents to " << out_path << "\n";
}

void cmd_generate(const std::string& codec_path, const std::string& lvt_path,
                  const std::string& prime_path, int t0, int frames, Real temperature,
                  int64_t seed, const std::string& out_path) {
  LoadedCodec codec = load_codec_checkpoint(codec_path);
  LoadedLvt lvt = load_lvt_checkpoint(lvt_path);
  LVT_CHECK(frames == lvt.model.config().extents.T, ConfigError,
            "generate: --frames " + std::to_string(frames) + " but the model generates " +
                std::to_string(lvt.model.config().extents.T) + "-frame videos");
  Tensor prime = read_video(prime_path);
  LVT_CHECK(prime.dim(0) >= t0, DataError,
            "generate: priming video has " + std::to_string(prime.dim(0)) + " frames, need " +
                std::to_string(t0));
  Tensor prime_t0(Shape{t0, prime.dim(1), prime.dim(2), prime.dim(3)});
  std::copy(prime.data(), prime.data() + prime_t0.numel(), prime_t0.data());

  SamplerConfig scfg;
  scfg.t0 = t0;
  scfg.temperature = temperature;
  scfg.seed = static_cast<uint64_t>(seed);
  GenerateResult res = generate(prime_t0, codec.codec, lvt.model, scfg);
  write_video(out_path, res.video, VideoDtype::U8);
  write_latents(out_path + ".lvtz", res.grid);
  std::ofstream meta(out_path + ".meta.txt");
  meta << "codec_config_digest=" << codec.config_digest << "\n"
       << "lvt_config_digest=" << lvt.config_digest << "\n"
       << "seed=" << seed << "\ntemperature=" << temperature << "\nt0=" << t0 << "\n";
  std::cout << "wrote generated video to " << out_path << "\n";
}

void cmd_eval(const std::string& codec_path, const std::string& lvt_path,
              const std::string& data_dir, const std::string& out_path) {
  LoadedCodec codec = load_codec_checkpoint(codec_path);
  std::vector<Tensor> videos = load_video_dir(data_dir);
  EvalReport rep;
  rep.config_digest = codec.config_digest;
  rep.K = codec.codec.config().K;

  Real mse = 0;
  std::vector<LatentGrid> grids = encode_dataset(codec.codec, videos);
  for (size_t i = 0; i < videos.size(); ++i)
    mse += reconstruction_mse(videos[i], codec.codec.decode_video(grids[i]));
  rep.mse = mse / static_cast<Real>(videos.size());

  std::vector<const LatentGrid*> grid_ptrs;
  for (const auto& g : grids) grid_ptrs.push_back(&g);
  for (int j = 0; j < codec.codec.config().n_c; ++j)
    rep.usage.push_back(codebook_usage(grid_ptrs, j));

  Real baseline = 0;
  const int t0_eval = 1;
  for (const Tensor& v : videos) {
    Tensor prime(Shape{t0_eval, v.dim(1), v.dim(2), v.dim(3)});
    std::copy(v.data(), v.data() + prime.numel(), prime.data());
    baseline += reconstruction_mse(v, last_frame_baseline(prime, v.dim(0)));
  }
  rep.baseline_mse = baseline / static_cast<Real>(videos.size());

  if (!lvt_path.empty()) {
    LoadedLvt lvt = load_lvt_checkpoint(lvt_path);
    LVT_CHECK(lvt.model.config().extents.T == grids[0].T, ConfigError,
              "eval: model frame count does not match the dataset");
    rep.bits_per_dim = bits_per_dim(lvt.model.nll_loss_value(grids, t0_eval));
  }

  std::ofstream text(out_path);
  LVT_CHECK(text.good(), DataError, "cannot write report '" + out_path + "'");
  text << rep.to_text();
  std::ofstream json(out_path + ".json");
  json << rep.to_json();
  std::cout << rep.to_text();
}

Tensor index_color_frame(const LatentGrid& grid, int t, int codebook) {
  Tensor img(Shape{grid.h, grid.w, 3});
  for (int y = 0; y < grid.h; ++y)
    for (int x = 0; x < grid.w; ++x) {
      const double hue = 360.0 * grid.at(t, y, x, codebook) / grid.K;
      const double s = 0.85, v = 0.95;
      const double c = v * s;
      const double hp = hue / 60.0;
      const double xx = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
      double r = 0, g = 0, b = 0;
      switch (static_cast<int>(hp) % 6) {
        case 0: r = c; g = xx; break;
        case 1: r = xx; g = c; break;
        case 2: g = c; b = xx; break;
        case 3: g = xx; b = c; break;
        case 4: r = xx; b = c; break;
        default: r = c; b = xx; break;
      }
      const double m = v - c;
      img.at((static_cast<int64_t>(y) * grid.w + x) * 3 + 0) = r + m;
      img.at((static_cast<int64_t>(y) * grid.w + x) * 3 + 1) = g + m;
      img.at((static_cast<int64_t>(y) * grid.w + x) * 3 + 2) = b + m;
    }
  return img;
}

void cmd_inspect_codes(const std::string& latent_path, const std::string& out_dir) {
  LatentGrid grid = read_latents(latent_path);
  fs::create_directories(out_dir);
  std::ofstream index(fs::path(out_dir) / "index.txt");
  index << "source=" << latent_path << "\nT=" << grid.T << " h=" << grid.h << " w=" << grid.w
        << " n_c=" << grid.n_c << " K=" << grid.K << "\n";
  char name[64];
  for (int j = 0; j < grid.n_c; ++j) {
    for (int t = 0; t < grid.T; ++t) {
      std::snprintf(name, sizeof(name), "codebook%d_frame%03d.ppm", j, t);
      write_ppm((fs::path(out_dir) / name).string(), index_color_frame(grid, t, j));
      index << name << "\n";
    }
  }
  if (grid.T >= 2) {
    const auto masks = code_change_mask(grid);
    const int64_t per_frame = static_cast<int64_t>(grid.h) * grid.w * grid.n_c;
    for (int j = 0; j < grid.n_c; ++j) {
      for (int t = 0; t + 1 < grid.T; ++t) {
        Tensor img(Shape{grid.h, grid.w, 3});
        for (int y = 0; y < grid.h; ++y)
          for (int x = 0; x < grid.w; ++x) {
            const bool changed =
                masks[static_cast<size_t>(t * per_frame + (static_cast<int64_t>(y) * grid.w + x) * grid.n_c + j)];
            // yellow marks a change
            img.at((static_cast<int64_t>(y) * grid.w + x) * 3 + 0) = changed ? 1.0 : 0.0;
            img.at((static_cast<int64_t>(y) * grid.w + x) * 3 + 1) = changed ? 1.0 : 0.0;
          }
        std::snprintf(name, sizeof(name), "codebook%d_change%03d.ppm", j, t);
        write_ppm((fs::path(out_dir) / name).string(), img);
        index << name << "\n";
      }
    }
  }
  std::cout << "wrote code visualizations to " << out_dir << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"latent video transformer: train, sample and evaluate", "lvt"};
  app.require_subcommand(1);

  // make-data
  auto* md = app.add_subcommand("make-data", "generate a synthetic video dataset");
  std::string md_spec, md_out;
  md->add_option("--spec", md_spec, "dataset spec file (key=value)")->required();
  md->add_option("--out", md_out, "output dataset directory")->required();

  // train-codec
  auto* tc = app.add_subcommand("train-codec", "train the VQ-VAE frame codec");
  std::string tc_config, tc_out;
  int64_t tc_steps = -1, tc_seed = -1;
  tc->add_option("--config", tc_config, "run config file")->required();
  tc->add_option("--out", tc_out, "output checkpoint path")->required();
  tc->add_option("--steps", tc_steps, "override train.steps");
  tc->add_option("--seed", tc_seed, "override train.seed");

  // train-lvt
  auto* tl = app.add_subcommand("train-lvt", "train the latent video transformer");
  std::string tl_config, tl_codec, tl_out;
  int64_t tl_steps = -1, tl_seed = -1;
  tl->add_option("--config", tl_config, "run config file")->required();
  tl->add_option("--codec", tl_codec, "codec checkpoint")->required();
  tl->add_option("--out", tl_out, "output checkpoint path")->required();
  tl->add_option("--steps", tl_steps, "override train.steps");
  tl->add_option("--seed", tl_seed, "override train.seed");

  // encode
  auto* en = app.add_subcommand("encode", "encode a video to discrete latents");
  std::string en_codec, en_video, en_out;
  en->add_option("--codec", en_codec, "codec checkpoint")->required();
  en->add_option("--video", en_video, "input video file");
  en->add_option("--out", en_out, "output latent file")->required();

  // generate
  auto* ge = app.add_subcommand("generate", "sample future frames from priming frames");
  std::string ge_codec, ge_lvt, ge_prime, ge_out;
  int ge_t0 = 5, ge_frames = 16;
  double ge_temp = 1.0;
  int64_t ge_seed = 0;
  ge->add_option("--codec", ge_codec, "codec checkpoint")->required();
  ge->add_option("--lvt", ge_lvt, "transformer checkpoint")->required();
  ge->add_option("--prime", ge_prime, "priming video file")->required();
  ge->add_option("--t0", ge_t0, "priming frame count");
  ge->add_option("--frames", ge_frames, "total frames (must match the model)");
  ge->add_option("--temperature", ge_temp, "sampling temperature (> 0)");
  ge->add_option("--seed", ge_seed, "sampling seed");
  ge->add_option("--out", ge_out, "output video file")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate codec (and optionally generator) on a dataset");
  std::string ev_codec, ev_lvt, ev_data, ev_out;
  ev->add_option("--codec", ev_codec, "codec checkpoint")->required();
  ev->add_option("--lvt", ev_lvt, "transformer checkpoint (optional)");
  ev->add_option("--data", ev_data, "directory of .lvtv videos")->required();
  ev->add_option("--out", ev_out, "report path (text; .json written alongside)")->required();

  // inspect-codes
  auto* in = app.add_subcommand("inspect-codes", "emit index-color maps and change masks");
  std::string in_latent, in_out;
  in->add_option("--latent", in_latent, "latent file")->required();
  in->add_option("--out", in_out, "output directory")->required();

  std::vector<const char*> argv;
  argv.push_back("lvt");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*md) cmd_make_data(md_spec, md_out);
    if (*tc) cmd_train_codec(tc_config, tc_out, tc_steps, tc_seed);
    if (*tl) cmd_train_lvt(tl_config, tl_codec, tl_out, tl_steps, tl_seed);
    if (*en) cmd_encode(en_codec, en_video, en_out);
    if (*ge) cmd_generate(ge_codec, ge_lvt, ge_prime, ge_t0, ge_frames, ge_temp, ge_seed, ge_out);
    if (*ev) cmd_eval(ev_codec, ev_lvt, ev_data, ev_out);
    if (*in) cmd_inspect_codes(in_latent, in_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: numeric: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace lvt
