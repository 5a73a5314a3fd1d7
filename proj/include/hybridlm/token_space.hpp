#pragma once
// Joint text/audio token universe: vocabulary sizes, reserved ids, and the
// unified head-0 vocabulary in which the first output head predicts either
// a text token or a layer-0 audio token.

#include <cstdint>
#include <string>
#include <vector>

namespace hybridlm {

// How the end of the audio stream is signalled.
//   Token: head 0 emits eos_audio_id once the layer-0 codebook stream is done
//          (see loss.hpp for how the target positions are scored).
//   Infer: no dedicated signal; generation stops on text EOS plus frame limit.
enum class AudioEosMode { Token, Infer };

struct VocabSpec {
    int32_t text_size = 0;                  // |V|
    std::vector<int32_t> codebook_sizes;    // |U^j|, j = 0..J-1
    int32_t pad_audio_id = -1;              // reserved in every codebook
    int32_t bos_id = -1;                    // text-side reserved ids
    int32_t eos_text_id = -1;
    int32_t eos_audio_id = -1;
    int32_t role_user_id = -1;
    int32_t role_assistant_id = -1;
    int32_t role_system_id = -1;
    AudioEosMode audio_eos_mode = AudioEosMode::Token;

    int num_codebooks() const { return (int)codebook_sizes.size(); }
    // text block first, then the layer-0 audio block
    int32_t unified_head0_size() const { return text_size + codebook_sizes.at(0); }
};

// Small spec with all reserved ids allocated at the bottom of the text range
// and pad_audio_id as the last id of the smallest codebook.
VocabSpec make_vocab(int32_t text_size, int num_codebooks, int32_t codebook_size);

struct ValidationResult {
    bool ok = true;
    std::string message;
};

// Checks every VocabSpec invariant; never throws.
ValidationResult validate(const VocabSpec& spec);

// One element of a hybrid sequence. The modality tag is intrinsic: no
// positional inference is needed to classify an item.
struct HybridToken {
    enum class Kind { Text, AudioFrame };
    Kind kind = Kind::Text;
    int32_t text_id = -1;             // valid when kind == Text
    std::vector<int32_t> frame;       // length J when kind == AudioFrame

    static HybridToken text(int32_t id) {
        HybridToken t;
        t.kind = Kind::Text;
        t.text_id = id;
        return t;
    }
    static HybridToken audio(std::vector<int32_t> ids) {
        HybridToken t;
        t.kind = Kind::AudioFrame;
        t.frame = std::move(ids);
        return t;
    }
    bool is_text() const { return kind == Kind::Text; }
    bool is_audio() const { return kind == Kind::AudioFrame; }

    bool operator==(const HybridToken& o) const {
        if (kind != o.kind) return false;
        return is_text() ? text_id == o.text_id : frame == o.frame;
    }
};

enum class Modality { Text, Audio };

struct UnifiedDecode {
    Modality modality;
    int32_t local_id;   // text id, or layer-0 codebook id
};

// Text(id) -> id; AudioFrame(ids) -> |V| + ids[0]. Throws std::out_of_range
// on ids outside the declared ranges.
int32_t to_unified_head0(const HybridToken& tok, const VocabSpec& spec);

// Inverse of to_unified_head0 restricted to head-0 content.
UnifiedDecode from_unified_head0(int32_t uid, const VocabSpec& spec);

}  // namespace hybridlm
