#include "lvt/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "lvt/config.hpp"

namespace lvt {

namespace fs = std::filesystem;

// ---- little-endian byte streams ------------------------------------------------

namespace {

struct ByteWriter {
  std::vector<uint8_t> data;
  void u8(uint8_t v) { data.push_back(v); }
  void u16(uint16_t v) {
    for (int i = 0; i < 2; ++i) data.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) data.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) data.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void str(const std::string& s) {
    LVT_CHECK(s.size() < 65536, DataError, "string field too long");
    u16(static_cast<uint16_t>(s.size()));
    data.insert(data.end(), s.begin(), s.end());
  }
  void flush(const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    LVT_CHECK(f.good(), DataError, "cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    LVT_CHECK(f.good(), DataError, "short write to '" + path + "'");
  }
};

struct ByteReader {
  std::string path;
  std::vector<uint8_t> data;
  size_t off = 0;

  explicit ByteReader(const std::string& p) : path(p) {
    std::ifstream f(p, std::ios::binary);
    LVT_CHECK(f.good(), DataError, "cannot open '" + p + "'");
    data.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }
  void need(size_t n, const char* what) {
    LVT_CHECK(off + n <= data.size(), DataError,
              path + ": truncated: need " + std::to_string(n) + " bytes for " + what +
                  " at offset " + std::to_string(off) + ", only " +
                  std::to_string(data.size() - off) + " left");
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return data[off++];
  }
  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(data[off++]) << (8 * i);
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[off++]) << (8 * i);
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data[off++]) << (8 * i);
    return v;
  }
  double f64(const char* what) {
    const uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  float f32(const char* what) {
    const uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(const char* what) {
    const uint16_t n = u16(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data.data() + off), n);
    off += n;
    return s;
  }
  void expect_magic(const char* magic) {
    need(4, "magic");
    LVT_CHECK(std::memcmp(data.data() + off, magic, 4) == 0, DataError,
              path + ": bad magic at offset 0, expected '" + magic + "'");
    off += 4;
  }
  void done() {
    LVT_CHECK(off == data.size(), DataError,
              path + ": " + std::to_string(data.size() - off) + " trailing bytes at offset " +
                  std::to_string(off));
  }
};

constexpr uint16_t kFormatVersion = 1;

void write_tensor(ByteWriter& w, const Tensor& t) {
  w.u8(static_cast<uint8_t>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) w.u32(static_cast<uint32_t>(t.dim(i)));
  for (int64_t i = 0; i < t.numel(); ++i) w.f64(t.at(i));
}

Tensor read_tensor(ByteReader& r, const char* what) {
  const int nd = r.u8(what);
  Shape shape;
  for (int i = 0; i < nd; ++i) shape.push_back(static_cast<int>(r.u32(what)));
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = r.f64(what);
  return t;
}

}  // namespace

// ---- video files -----------------------------------------------------------------

void write_video(const std::string& path, const Tensor& video, VideoDtype dtype) {
  LVT_CHECK(video.ndim() == 4, ShapeError,
            "write_video: expected [T,H,W,C], got " + shape_str(video.shape()));
  ByteWriter w;
  w.data.insert(w.data.end(), {'L', 'V', 'T', 'V'});
  w.u16(kFormatVersion);
  for (int i = 0; i < 4; ++i) w.u32(static_cast<uint32_t>(video.dim(i)));
  w.u8(static_cast<uint8_t>(dtype));
  if (dtype == VideoDtype::U8) {
    for (int64_t i = 0; i < video.numel(); ++i) {
      const double v = std::clamp(video.at(i), 0.0, 1.0);
      w.u8(static_cast<uint8_t>(std::lround(v * 255.0)));
    }
  } else {
    for (int64_t i = 0; i < video.numel(); ++i) w.f32(static_cast<float>(video.at(i)));
  }
  w.flush(path);
}

Tensor read_video(const std::string& path) {
  ByteReader r(path);
  r.expect_magic("LVTV");
  const uint16_t version = r.u16("version");
  LVT_CHECK(version == kFormatVersion, DataError,
            path + ": unsupported version " + std::to_string(version));
  Shape shape;
  for (int i = 0; i < 4; ++i) shape.push_back(static_cast<int>(r.u32("extent")));
  const uint8_t dtype = r.u8("dtype");
  Tensor video(shape);
  if (dtype == static_cast<uint8_t>(VideoDtype::U8)) {
    r.need(static_cast<size_t>(video.numel()), "u8 payload");
    for (int64_t i = 0; i < video.numel(); ++i) video.at(i) = r.u8("payload") / 255.0;
  } else if (dtype == static_cast<uint8_t>(VideoDtype::F32)) {
    for (int64_t i = 0; i < video.numel(); ++i) video.at(i) = r.f32("payload");
  } else {
    throw DataError(path + ": unknown dtype tag " + std::to_string(dtype));
  }
  r.done();
  return video;
}

// ---- latent files -----------------------------------------------------------------

void write_latents(const std::string& path, const LatentGrid& grid) {
  grid.check_valid();
  LVT_CHECK(grid.K <= 65535, DataError, "write_latents: K exceeds u16 indices");
  ByteWriter w;
  w.data.insert(w.data.end(), {'L', 'V', 'T', 'Z'});
  w.u16(kFormatVersion);
  w.u32(static_cast<uint32_t>(grid.T));
  w.u32(static_cast<uint32_t>(grid.h));
  w.u32(static_cast<uint32_t>(grid.w));
  w.u32(static_cast<uint32_t>(grid.n_c));
  w.u32(static_cast<uint32_t>(grid.K));
  for (int32_t c : grid.codes) w.u16(static_cast<uint16_t>(c));
  w.flush(path);
}

LatentGrid read_latents(const std::string& path) {
  ByteReader r(path);
  r.expect_magic("LVTZ");
  const uint16_t version = r.u16("version");
  LVT_CHECK(version == kFormatVersion, DataError,
            path + ": unsupported version " + std::to_string(version));
  LatentGrid grid;
  grid.T = static_cast<int>(r.u32("T"));
  grid.h = static_cast<int>(r.u32("h"));
  grid.w = static_cast<int>(r.u32("w"));
  grid.n_c = static_cast<int>(r.u32("n_c"));
  grid.K = static_cast<int>(r.u32("K"));
  const int64_t n = grid.positions() * grid.n_c;
  grid.codes.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) grid.codes[static_cast<size_t>(i)] = r.u16("indices");
  r.done();
  grid.check_valid();
  return grid;
}

// ---- checkpoints --------------------------------------------------------------------

namespace {

void write_param_store(ByteWriter& w, const ParamStore& store) {
  w.u64(static_cast<uint64_t>(store.step()));
  w.u32(static_cast<uint32_t>(store.entries().size()));
  for (const auto& [name, e] : store.entries()) {
    w.str(name);
    write_tensor(w, e.value);
    write_tensor(w, e.m);
    write_tensor(w, e.v);
  }
}

void read_param_store(ByteReader& r, ParamStore& store) {
  store.set_step(static_cast<int64_t>(r.u64("step")));
  const uint32_t count = r.u32("param count");
  LVT_CHECK(count == store.entries().size(), DataError,
            r.path + ": checkpoint has " + std::to_string(count) + " parameters, model expects " +
                std::to_string(store.entries().size()));
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str("param name");
    LVT_CHECK(store.has(name), DataError, r.path + ": unknown parameter '" + name + "'");
    auto& e = store.entry(name);
    Tensor value = read_tensor(r, "param value");
    Tensor m = read_tensor(r, "adam m");
    Tensor v = read_tensor(r, "adam v");
    check_same_shape(e.value, value, "checkpoint param");
    e.value = std::move(value);
    e.m = std::move(m);
    e.v = std::move(v);
  }
}

void write_header(ByteWriter& w, const std::string& kind, const std::string& config_text) {
  w.data.insert(w.data.end(), {'L', 'V', 'T', 'C'});
  w.u16(kFormatVersion);
  w.str(kind);
  w.u64(fnv1a64(config_text));
  LVT_CHECK(config_text.size() < (1u << 30), DataError, "config text too large");
  w.u32(static_cast<uint32_t>(config_text.size()));
  w.data.insert(w.data.end(), config_text.begin(), config_text.end());
}

struct Header {
  std::string kind;
  uint64_t digest;
  std::string config_text;
};

Header read_header(ByteReader& r, const std::string& expected_kind) {
  r.expect_magic("LVTC");
  const uint16_t version = r.u16("version");
  LVT_CHECK(version == kFormatVersion, DataError,
            r.path + ": unsupported version " + std::to_string(version));
  Header h;
  h.kind = r.str("kind");
  LVT_CHECK(h.kind == expected_kind, DataError,
            r.path + ": checkpoint kind '" + h.kind + "', expected '" + expected_kind + "'");
  h.digest = r.u64("config digest");
  const uint32_t len = r.u32("config length");
  r.need(len, "config text");
  h.config_text.assign(reinterpret_cast<const char*>(r.data.data() + r.off), len);
  r.off += len;
  LVT_CHECK(fnv1a64(h.config_text) == h.digest, DataError,
            r.path + ": config digest mismatch (corrupt checkpoint)");
  return h;
}

}  // namespace

void save_codec_checkpoint(const std::string& path, const FrameCodec& codec,
                           const std::string& config_text) {
  ByteWriter w;
  write_header(w, "codec", config_text);
  write_param_store(w, codec.params());
  const Codebook& cb = codec.codebook();
  w.u32(static_cast<uint32_t>(cb.tables()));
  for (int j = 0; j < cb.tables(); ++j) {
    write_tensor(w, cb.rows(j));
    write_tensor(w, cb.ema_count(j));
    write_tensor(w, cb.ema_sum(j));
  }
  w.flush(path);
}

LoadedCodec load_codec_checkpoint(const std::string& path) {
  ByteReader r(path);
  Header h = read_header(r, "codec");
  KvConfig kv = KvConfig::parse_string(h.config_text);
  FrameCodec codec(codec_config_from(kv), /*seed=*/0);
  read_param_store(r, codec.params());
  const uint32_t tables = r.u32("codebook tables");
  LVT_CHECK(static_cast<int>(tables) == codec.codebook().tables(), DataError,
            path + ": codebook table count mismatch");
  for (uint32_t j = 0; j < tables; ++j) {
    Tensor rows = read_tensor(r, "codebook rows");
    Tensor count = read_tensor(r, "codebook count");
    Tensor sum = read_tensor(r, "codebook sum");
    check_same_shape(codec.codebook().rows(static_cast<int>(j)), rows, "codebook rows");
    codec.codebook().rows(static_cast<int>(j)) = std::move(rows);
    codec.codebook().ema_count(static_cast<int>(j)) = std::move(count);
    codec.codebook().ema_sum(static_cast<int>(j)) = std::move(sum);
  }
  r.done();
  return LoadedCodec{std::move(codec), h.config_text, h.digest};
}

void save_lvt_checkpoint(const std::string& path, const LatentTransformer& model,
                         const std::string& config_text) {
  ByteWriter w;
  write_header(w, "lvt", config_text);
  write_param_store(w, model.params());
  w.flush(path);
}

LoadedLvt load_lvt_checkpoint(const std::string& path) {
  ByteReader r(path);
  Header h = read_header(r, "lvt");
  KvConfig kv = KvConfig::parse_string(h.config_text);
  LatentTransformer model(lvt_config_from(kv), /*seed=*/0);
  read_param_store(r, model.params());
  r.done();
  return LoadedLvt{std::move(model), h.config_text, h.digest};
}

// ---- PPM frames -------------------------------------------------------------------

void write_ppm(const std::string& path, const Tensor& frame) {
  LVT_CHECK(frame.ndim() == 3 && frame.dim(2) == 3, ShapeError,
            "write_ppm: expected [H,W,3], got " + shape_str(frame.shape()));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  LVT_CHECK(f.good(), DataError, "cannot open '" + path + "' for writing");
  f << "P6\n" << frame.dim(1) << " " << frame.dim(0) << "\n255\n";
  for (int64_t i = 0; i < frame.numel(); ++i) {
    const double v = std::clamp(frame.at(i), 0.0, 1.0);
    f.put(static_cast<char>(std::lround(v * 255.0)));
  }
  LVT_CHECK(f.good(), DataError, "short write to '" + path + "'");
}

Tensor read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  LVT_CHECK(f.good(), DataError, "cannot open '" + path + "'");
  std::string magic;
  f >> magic;
  LVT_CHECK(magic == "P6", DataError, path + ": not a binary PPM (magic '" + magic + "')");
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  LVT_CHECK(f.good() && w > 0 && h > 0, DataError, path + ": bad PPM header");
  LVT_CHECK(maxval == 255, DataError, path + ": unsupported maxval " + std::to_string(maxval));
  f.get();  // single whitespace after header
  Tensor frame(Shape{h, w, 3});
  for (int64_t i = 0; i < frame.numel(); ++i) {
    const int c = f.get();
    LVT_CHECK(c != EOF, DataError, path + ": truncated pixel data at element " + std::to_string(i));
    frame.at(i) = c / 255.0;
  }
  return frame;
}

// ---- synthetic videos ---------------------------------------------------------------

SyntheticKind synthetic_kind_from_string(const std::string& s) {
  if (s == "moving_square") return SyntheticKind::MovingSquare;
  if (s == "bouncing_two_squares") return SyntheticKind::BouncingTwoSquares;
  if (s == "static_noise") return SyntheticKind::StaticNoise;
  throw ConfigError("unknown synthetic kind '" + s +
                    "' (expected moving_square|bouncing_two_squares|static_noise)");
}

std::string to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::MovingSquare: return "moving_square";
    case SyntheticKind::BouncingTwoSquares: return "bouncing_two_squares";
    case SyntheticKind::StaticNoise: return "static_noise";
  }
  return "?";
}

void SyntheticSpec::validate() const {
  LVT_CHECK(count >= 1 && T >= 1 && H >= 1 && W >= 1, ConfigError,
            "synthetic: count/T/H/W must be positive");
  LVT_CHECK(square <= H && square <= W, DataError,
            "synthetic: sprite of size " + std::to_string(square) + " does not fit a " +
                std::to_string(H) + "x" + std::to_string(W) + " frame");
  LVT_CHECK(square >= 1, ConfigError, "synthetic: square size must be positive");
  LVT_CHECK(0 <= vmin && vmin <= vmax, ConfigError, "synthetic: need 0 <= vmin <= vmax");
}

std::vector<int> bounce_track(int start, int velocity, int frames, int extent, int size) {
  const int hi = std::max(extent - size, 0);
  std::vector<int> track{std::clamp(start, 0, hi)};
  int p = track[0], v = velocity;
  for (int t = 1; t < frames; ++t) {
    p += v;
    if (p < 0) {
      p = -p;
      v = -v;
    }
    if (p > hi) {
      p = 2 * hi - p;
      v = -v;
    }
    p = std::clamp(p, 0, hi);
    track.push_back(p);
  }
  return track;
}

namespace {

void draw_square(Tensor& video, int t, int y0, int x0, int size, double value) {
  const int H = video.dim(1), W = video.dim(2);
  for (int y = y0; y < y0 + size; ++y)
    for (int x = x0; x < x0 + size; ++x)
      for (int c = 0; c < 3; ++c)
        video.at(((static_cast<int64_t>(t) * H + y) * W + x) * 3 + c) = value;
}

void add_sprite(Tensor& video, const SyntheticSpec& spec, Rng& rng, double value) {
  const int hi_y = spec.H - spec.square, hi_x = spec.W - spec.square;
  const int y0 = static_cast<int>(rng.uniform_int(0, hi_y));
  const int x0 = static_cast<int>(rng.uniform_int(0, hi_x));
  auto speed = [&] {
    const int mag = static_cast<int>(rng.uniform_int(spec.vmin, spec.vmax));
    return rng.uniform_int(0, 1) ? mag : -mag;
  };
  const int vy = speed(), vx = speed();
  const auto ty = bounce_track(y0, vy, spec.T, spec.H, spec.square);
  const auto tx = bounce_track(x0, vx, spec.T, spec.W, spec.square);
  for (int t = 0; t < spec.T; ++t) draw_square(video, t, ty[static_cast<size_t>(t)],
                                               tx[static_cast<size_t>(t)], spec.square, value);
}

}  // namespace

std::vector<Tensor> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng master(spec.seed);
  std::vector<Tensor> videos;
  videos.reserve(static_cast<size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) {
    Rng rng = master.fork(static_cast<uint64_t>(i) + 1);
    Tensor video(Shape{spec.T, spec.H, spec.W, 3});
    switch (spec.kind) {
      case SyntheticKind::MovingSquare:
        add_sprite(video, spec, rng, 1.0);
        break;
      case SyntheticKind::BouncingTwoSquares:
        add_sprite(video, spec, rng, 1.0);
        add_sprite(video, spec, rng, 0.55);
        break;
      case SyntheticKind::StaticNoise: {
        const int64_t fe = static_cast<int64_t>(spec.H) * spec.W * 3;
        for (int64_t e = 0; e < fe; ++e) video.at(e) = rng.uniform();
        for (int t = 1; t < spec.T; ++t)
          std::copy(video.data(), video.data() + fe, video.data() + t * fe);
        break;
      }
    }
    videos.push_back(std::move(video));
  }
  return videos;
}

// ---- dataset directories --------------------------------------------------------------

void write_dataset(const std::string& dir, const SyntheticSpec& spec,
                   const std::vector<Tensor>& train, const std::vector<Tensor>& test) {
  fs::create_directories(fs::path(dir) / "train");
  fs::create_directories(fs::path(dir) / "test");
  auto save = [&](const std::string& sub, const std::vector<Tensor>& vids) {
    for (size_t i = 0; i < vids.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "video_%05zu.lvtv", i);
      write_video((fs::path(dir) / sub / name).string(), vids[i], VideoDtype::U8);
    }
  };
  save("train", train);
  save("test", test);
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  LVT_CHECK(manifest.good(), DataError, "cannot write manifest in '" + dir + "'");
  manifest << "kind=" << to_string(spec.kind) << "\n"
           << "T=" << spec.T << "\nH=" << spec.H << "\nW=" << spec.W << "\n"
           << "square=" << spec.square << "\nvmin=" << spec.vmin << "\nvmax=" << spec.vmax << "\n"
           << "seed=" << spec.seed << "\n"
           << "train_count=" << train.size() << "\ntest_count=" << test.size() << "\n";
}

std::vector<Tensor> load_video_dir(const std::string& dir) {
  LVT_CHECK(fs::is_directory(dir), DataError, "'" + dir + "' is not a directory");
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".lvtv") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  LVT_CHECK(!files.empty(), DataError, "no .lvtv files in '" + dir + "'");
  std::vector<Tensor> videos;
  videos.reserve(files.size());
  for (const auto& f : files) videos.push_back(read_video(f));
  return videos;
}

}  // namespace lvt
