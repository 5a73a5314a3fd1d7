#include "hybridlm/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hybridlm {

static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

KvMap parse_kv_text(const std::string& text) {
    KvMap kv;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

KvMap parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_kv_text(ss.str());
}

std::string dump_kv(const KvMap& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

int64_t kv_int(const KvMap& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument("config missing key '" + key + "'");
    try {
        return std::stoll(it->second);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': bad integer '" + it->second + "'");
    }
}

int64_t kv_int(const KvMap& kv, const std::string& key, int64_t fallback) {
    return kv.count(key) ? kv_int(kv, key) : fallback;
}

double kv_double(const KvMap& kv, const std::string& key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': bad number '" + it->second + "'");
    }
}

std::string kv_str(const KvMap& kv, const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

std::vector<int32_t> kv_int_list(const KvMap& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument("config missing key '" + key + "'");
    std::vector<int32_t> out;
    std::istringstream ss(it->second);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (part.empty()) continue;
        try {
            out.push_back((int32_t)std::stol(part));
        } catch (const std::exception&) {
            throw std::invalid_argument("config key '" + key + "': bad integer '" + part + "'");
        }
    }
    return out;
}

VocabSpec vocab_from_kv(const KvMap& kv) {
    VocabSpec spec;
    spec.text_size = (int32_t)kv_int(kv, "text_size");
    spec.codebook_sizes = kv_int_list(kv, "codebook_sizes");
    int64_t j = kv_int(kv, "num_codebooks", (int64_t)spec.codebook_sizes.size());
    if (spec.codebook_sizes.size() == 1 && j > 1)
        spec.codebook_sizes.assign((size_t)j, spec.codebook_sizes[0]);
    if ((int64_t)spec.codebook_sizes.size() != j)
        throw std::invalid_argument("num_codebooks disagrees with codebook_sizes length");
    spec.pad_audio_id = (int32_t)kv_int(kv, "pad_audio_id");
    spec.bos_id = (int32_t)kv_int(kv, "bos_id");
    spec.eos_text_id = (int32_t)kv_int(kv, "eos_text_id");
    spec.eos_audio_id = (int32_t)kv_int(kv, "eos_audio_id");
    spec.role_user_id = (int32_t)kv_int(kv, "role_user_id");
    spec.role_assistant_id = (int32_t)kv_int(kv, "role_assistant_id");
    spec.role_system_id = (int32_t)kv_int(kv, "role_system_id");
    std::string mode = kv_str(kv, "audio_eos_mode", "token");
    if (mode == "token")
        spec.audio_eos_mode = AudioEosMode::Token;
    else if (mode == "infer")
        spec.audio_eos_mode = AudioEosMode::Infer;
    else
        throw std::invalid_argument("audio_eos_mode must be 'token' or 'infer'");
    return spec;
}

KvMap vocab_to_kv(const VocabSpec& spec) {
    KvMap kv;
    kv["text_size"] = std::to_string(spec.text_size);
    std::string sizes;
    for (size_t i = 0; i < spec.codebook_sizes.size(); ++i)
        sizes += (i ? "," : "") + std::to_string(spec.codebook_sizes[i]);
    kv["codebook_sizes"] = sizes;
    kv["num_codebooks"] = std::to_string(spec.num_codebooks());
    kv["pad_audio_id"] = std::to_string(spec.pad_audio_id);
    kv["bos_id"] = std::to_string(spec.bos_id);
    kv["eos_text_id"] = std::to_string(spec.eos_text_id);
    kv["eos_audio_id"] = std::to_string(spec.eos_audio_id);
    kv["role_user_id"] = std::to_string(spec.role_user_id);
    kv["role_assistant_id"] = std::to_string(spec.role_assistant_id);
    kv["role_system_id"] = std::to_string(spec.role_system_id);
    kv["audio_eos_mode"] = spec.audio_eos_mode == AudioEosMode::Token ? "token" : "infer";
    return kv;
}

}  // namespace hybridlm
