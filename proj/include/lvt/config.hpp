#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "lvt/codec.hpp"
#include "lvt/transformer.hpp"

namespace lvt {

// Flat key=value configuration. Lines: `key = value`, `# comment`, and
// `include <relative-path>`; later assignments win.
class KvConfig {
 public:
  static KvConfig parse_file(const std::string& path);
  static KvConfig parse_string(const std::string& text, const std::string& base_dir = ".");

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  int64_t get_int(const std::string& key) const;
  Real get_real(const std::string& key, Real fallback) const;

  // sorted key=value lines; the digest hashes exactly this text
  std::string canonical_text() const;
  uint64_t digest() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

uint64_t fnv1a64(const std::string& text);

// typed views over the flat keys (codec.*, lvt.*, subscale.*, data.*)
CodecConfig codec_config_from(const KvConfig& kv);
TransformerConfig lvt_config_from(const KvConfig& kv);
void put_codec_config(KvConfig& kv, const CodecConfig& cfg);
void put_lvt_config(KvConfig& kv, const TransformerConfig& cfg);

// cross-field checks shared by every command
void validate_run_config(const KvConfig& kv);

}  // namespace lvt
