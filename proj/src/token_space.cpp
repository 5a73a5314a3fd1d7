#include "hybridlm/token_space.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace hybridlm {

VocabSpec make_vocab(int32_t text_size, int num_codebooks, int32_t codebook_size) {
    VocabSpec spec;
    spec.text_size = text_size;
    spec.codebook_sizes.assign((size_t)num_codebooks, codebook_size);
    spec.pad_audio_id = codebook_size - 1;
    spec.bos_id = 0;
    spec.eos_text_id = 1;
    spec.eos_audio_id = 2;
    spec.role_user_id = 3;
    spec.role_assistant_id = 4;
    spec.role_system_id = 5;
    return spec;
}

ValidationResult validate(const VocabSpec& spec) {
    auto fail = [](std::string msg) { return ValidationResult{false, std::move(msg)}; };

    if (spec.codebook_sizes.empty()) return fail("num_codebooks must be >= 1");
    if (spec.text_size < 1) return fail("zero-size text vocabulary");
    for (size_t j = 0; j < spec.codebook_sizes.size(); ++j) {
        if (spec.codebook_sizes[j] < 1)
            return fail("zero-size codebook " + std::to_string(j));
    }

    const int32_t reserved[] = {spec.bos_id,       spec.eos_text_id,       spec.eos_audio_id,
                                spec.role_user_id, spec.role_assistant_id, spec.role_system_id};
    std::set<int32_t> seen;
    for (int32_t id : reserved) {
        if (id < 0 || id >= spec.text_size)
            return fail("reserved id " + std::to_string(id) + " outside text vocabulary");
        if (!seen.insert(id).second)
            return fail("duplicate reserved id " + std::to_string(id));
    }

    // pad_audio_id must be a valid id in every codebook
    int32_t min_cb = *std::min_element(spec.codebook_sizes.begin(), spec.codebook_sizes.end());
    if (spec.pad_audio_id < 0 || spec.pad_audio_id >= min_cb)
        return fail("pad_audio_id " + std::to_string(spec.pad_audio_id) +
                    " outside codebook range");

    return {};
}

int32_t to_unified_head0(const HybridToken& tok, const VocabSpec& spec) {
    if (tok.is_text()) {
        if (tok.text_id < 0 || tok.text_id >= spec.text_size)
            throw std::out_of_range("text id " + std::to_string(tok.text_id) +
                                    " outside [0, " + std::to_string(spec.text_size) + ")");
        return tok.text_id;
    }
    if ((int)tok.frame.size() != spec.num_codebooks())
        throw std::out_of_range("audio frame arity " + std::to_string(tok.frame.size()) +
                                " != J = " + std::to_string(spec.num_codebooks()));
    int32_t id0 = tok.frame[0];
    if (id0 < 0 || id0 >= spec.codebook_sizes[0])
        throw std::out_of_range("layer-0 id " + std::to_string(id0) + " outside [0, " +
                                std::to_string(spec.codebook_sizes[0]) + ")");
    return spec.text_size + id0;
}

UnifiedDecode from_unified_head0(int32_t uid, const VocabSpec& spec) {
    if (uid < 0 || uid >= spec.unified_head0_size())
        throw std::out_of_range("unified id " + std::to_string(uid) + " outside [0, " +
                                std::to_string(spec.unified_head0_size()) + ")");
    if (uid < spec.text_size) return {Modality::Text, uid};
    return {Modality::Audio, uid - spec.text_size};
}

}  // namespace hybridlm
