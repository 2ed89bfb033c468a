#include "lvt/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace lvt {

namespace {
std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

void parse_into(KvConfig& kv, const std::string& text, const std::string& base_dir, int depth) {
  LVT_CHECK(depth < 16, ConfigError, "config: include nesting too deep (cycle?)");
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.rfind("include ", 0) == 0) {
      const std::string rel = trim(t.substr(8));
      const std::string path = (std::filesystem::path(base_dir) / rel).string();
      std::ifstream f(path);
      LVT_CHECK(f.good(), ConfigError, "config: cannot open include '" + path + "'");
      std::stringstream buf;
      buf << f.rdbuf();
      parse_into(kv, buf.str(), std::filesystem::path(path).parent_path().string(), depth + 1);
      continue;
    }
    const size_t eq = t.find('=');
    LVT_CHECK(eq != std::string::npos, ConfigError,
              "config: line " + std::to_string(lineno) + " is not key=value: '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    LVT_CHECK(!key.empty(), ConfigError, "config: empty key on line " + std::to_string(lineno));
    kv.set(key, value);
  }
}
}  // namespace

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  LVT_CHECK(f.good(), ConfigError, "config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  KvConfig kv;
  parse_into(kv, buf.str(), std::filesystem::path(path).parent_path().string(), 0);
  return kv;
}

KvConfig KvConfig::parse_string(const std::string& text, const std::string& base_dir) {
  KvConfig kv;
  parse_into(kv, text, base_dir, 0);
  return kv;
}

std::string KvConfig::get_str(const std::string& key) const {
  auto it = values_.find(key);
  LVT_CHECK(it != values_.end(), ConfigError, "config: missing required key '" + key + "'");
  return it->second;
}

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int64_t KvConfig::get_int(const std::string& key) const {
  const std::string v = get_str(key);
  try {
    size_t pos = 0;
    const int64_t r = std::stoll(v, &pos);
    LVT_CHECK(pos == v.size(), ConfigError, "config: '" + key + "' is not an integer: " + v);
    return r;
  } catch (const std::logic_error&) {
    throw ConfigError("config: '" + key + "' is not an integer: " + v);
  }
}

int64_t KvConfig::get_int(const std::string& key, int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

Real KvConfig::get_real(const std::string& key, Real fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_str(key);
  try {
    size_t pos = 0;
    const Real r = std::stod(v, &pos);
    LVT_CHECK(pos == v.size(), ConfigError, "config: '" + key + "' is not a number: " + v);
    return r;
  } catch (const std::logic_error&) {
    throw ConfigError("config: '" + key + "' is not a number: " + v);
  }
}

std::string KvConfig::canonical_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << "=" << v << "\n";
  return os.str();
}

uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

uint64_t KvConfig::digest() const { return fnv1a64(canonical_text()); }

CodecConfig codec_config_from(const KvConfig& kv) {
  CodecConfig cfg;
  cfg.K = static_cast<int>(kv.get_int("codec.K", cfg.K));
  cfg.D = static_cast<int>(kv.get_int("codec.D", cfg.D));
  cfg.n_c = static_cast<int>(kv.get_int("codec.n_c", cfg.n_c));
  cfg.H = static_cast<int>(kv.get_int("data.H", cfg.H));
  cfg.W = static_cast<int>(kv.get_int("data.W", cfg.W));
  cfg.downsample = static_cast<int>(kv.get_int("codec.downsample", cfg.downsample));
  cfg.residual_blocks = static_cast<int>(kv.get_int("codec.residual_blocks", cfg.residual_blocks));
  cfg.hidden = static_cast<int>(kv.get_int("codec.hidden", cfg.hidden));
  cfg.ema_decay = kv.get_real("codec.ema_decay", cfg.ema_decay);
  cfg.ema_epsilon = kv.get_real("codec.ema_epsilon", cfg.ema_epsilon);
  cfg.commitment = kv.get_real("codec.commitment", cfg.commitment);
  cfg.validate();
  return cfg;
}

TransformerConfig lvt_config_from(const KvConfig& kv) {
  TransformerConfig cfg;
  cfg.d_model = static_cast<int>(kv.get_int("lvt.d_model", cfg.d_model));
  cfg.heads = static_cast<int>(kv.get_int("lvt.heads", cfg.heads));
  cfg.encoder_layers = static_cast<int>(kv.get_int("lvt.encoder_layers", cfg.encoder_layers));
  cfg.decoder_layers = static_cast<int>(kv.get_int("lvt.decoder_layers", cfg.decoder_layers));
  cfg.ff_width = static_cast<int>(kv.get_int("lvt.ff_width", cfg.ff_width));
  cfg.variant = attention_variant_from_string(
      kv.get_str("lvt.variant", to_string(AttentionVariant::QueryKeyRelative)));
  cfg.K = static_cast<int>(kv.get_int("codec.K", cfg.K));
  cfg.n_c = static_cast<int>(kv.get_int("codec.n_c", cfg.n_c));
  cfg.r_t = static_cast<int>(kv.get_int("lvt.r_t", cfg.r_t));
  cfg.r_h = static_cast<int>(kv.get_int("lvt.r_h", cfg.r_h));
  cfg.r_w = static_cast<int>(kv.get_int("lvt.r_w", cfg.r_w));
  // explicit latent extents (checkpoints) win over pixel-space derivation
  const int T = static_cast<int>(kv.get_int("data.T", 16));
  const int H = static_cast<int>(kv.get_int("data.H", 32));
  const int W = static_cast<int>(kv.get_int("data.W", 32));
  const int ds = static_cast<int>(kv.get_int("codec.downsample", 4));
  cfg.extents = {static_cast<int>(kv.get_int("lvt.T", T)),
                 static_cast<int>(kv.get_int("lvt.h", H / ds)),
                 static_cast<int>(kv.get_int("lvt.w", W / ds))};
  cfg.factor = {static_cast<int>(kv.get_int("subscale.s_t", 1)),
                static_cast<int>(kv.get_int("subscale.s_h", 1)),
                static_cast<int>(kv.get_int("subscale.s_w", 1))};
  cfg.validate();
  return cfg;
}

void put_codec_config(KvConfig& kv, const CodecConfig& cfg) {
  kv.set("codec.K", std::to_string(cfg.K));
  kv.set("codec.D", std::to_string(cfg.D));
  kv.set("codec.n_c", std::to_string(cfg.n_c));
  kv.set("data.H", std::to_string(cfg.H));
  kv.set("data.W", std::to_string(cfg.W));
  kv.set("codec.downsample", std::to_string(cfg.downsample));
  kv.set("codec.residual_blocks", std::to_string(cfg.residual_blocks));
  kv.set("codec.hidden", std::to_string(cfg.hidden));
  std::ostringstream d1, d2, d3;
  d1.precision(17);
  d1 << cfg.ema_decay;
  d2.precision(17);
  d2 << cfg.ema_epsilon;
  d3.precision(17);
  d3 << cfg.commitment;
  kv.set("codec.ema_decay", d1.str());
  kv.set("codec.ema_epsilon", d2.str());
  kv.set("codec.commitment", d3.str());
}

void put_lvt_config(KvConfig& kv, const TransformerConfig& cfg) {
  kv.set("lvt.d_model", std::to_string(cfg.d_model));
  kv.set("lvt.heads", std::to_string(cfg.heads));
  kv.set("lvt.encoder_layers", std::to_string(cfg.encoder_layers));
  kv.set("lvt.decoder_layers", std::to_string(cfg.decoder_layers));
  kv.set("lvt.ff_width", std::to_string(cfg.ff_width));
  kv.set("lvt.variant", to_string(cfg.variant));
  kv.set("codec.K", std::to_string(cfg.K));
  kv.set("codec.n_c", std::to_string(cfg.n_c));
  kv.set("lvt.r_t", std::to_string(cfg.r_t));
  kv.set("lvt.r_h", std::to_string(cfg.r_h));
  kv.set("lvt.r_w", std::to_string(cfg.r_w));
  kv.set("lvt.T", std::to_string(cfg.extents.T));
  kv.set("lvt.h", std::to_string(cfg.extents.h));
  kv.set("lvt.w", std::to_string(cfg.extents.w));
  kv.set("subscale.s_t", std::to_string(cfg.factor.s_t));
  kv.set("subscale.s_h", std::to_string(cfg.factor.s_h));
  kv.set("subscale.s_w", std::to_string(cfg.factor.s_w));
}

void validate_run_config(const KvConfig& kv) {
  const CodecConfig cc = codec_config_from(kv);  // validates divisibility D/n_c, H/ds
  if (kv.has("subscale.s_t") || kv.has("subscale.s_h") || kv.has("subscale.s_w") ||
      kv.has("lvt.d_model")) {
    const TransformerConfig tc = lvt_config_from(kv);  // validates d_model/heads
    (void)build_plan(tc.extents, tc.factor);           // validates extents/subscale divisibility
    LVT_CHECK(tc.K == cc.K && tc.n_c == cc.n_c, ConfigError,
              "config: codec and lvt disagree on K or n_c");
  }
  const int t0 = static_cast<int>(kv.get_int("sampler.t0", 1));
  const int T = static_cast<int>(kv.get_int("data.T", 16));
  LVT_CHECK(1 <= t0 && t0 < T, ConfigError, "config: need 1 <= sampler.t0 < data.T");
  const Real temp = kv.get_real("sampler.temperature", 1.0);
  LVT_CHECK(temp > 0, ConfigError, "config: sampler.temperature must be positive");
}

}  // namespace lvt
