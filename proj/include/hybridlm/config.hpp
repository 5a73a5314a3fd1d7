#pragma once
// Plain-text key/value config files ("key = value", one per line, # starts a
// comment). Field names are part of the file contract; see README for the
// full list.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hybridlm/token_space.hpp"

namespace hybridlm {

using KvMap = std::map<std::string, std::string>;

KvMap parse_kv_text(const std::string& text);
KvMap parse_kv_file(const std::string& path);
std::string dump_kv(const KvMap& kv);

// typed accessors; throw std::invalid_argument on missing keys / bad values
int64_t kv_int(const KvMap& kv, const std::string& key);
int64_t kv_int(const KvMap& kv, const std::string& key, int64_t fallback);
double kv_double(const KvMap& kv, const std::string& key, double fallback);
std::string kv_str(const KvMap& kv, const std::string& key, const std::string& fallback);
std::vector<int32_t> kv_int_list(const KvMap& kv, const std::string& key);

// VocabSpec <-> kv. Keys: text_size, codebook_sizes (comma list; a single
// value is repeated num_codebooks times), num_codebooks, pad_audio_id,
// bos_id, eos_text_id, eos_audio_id, role_user_id, role_assistant_id,
// role_system_id, audio_eos_mode (token|infer).
VocabSpec vocab_from_kv(const KvMap& kv);
KvMap vocab_to_kv(const VocabSpec& spec);

}  // namespace hybridlm
