#include "hybridlm/interleave.hpp"

#include <stdexcept>

namespace hybridlm {

static void require_valid(const InterleaveConfig& cfg) {
    if (cfg.n < 1 || cfg.m < 1)
        throw std::invalid_argument("interleave ratio requires n >= 1 and m >= 1");
}

Modality modality_at(size_t text_used, size_t audio_used, const InterleaveConfig& cfg,
                     std::optional<size_t> text_total, std::optional<size_t> audio_total) {
    require_valid(cfg);
    bool text_done = text_total && text_used >= *text_total;
    bool audio_done = audio_total && audio_used >= *audio_total;
    if (text_done) return Modality::Audio;
    if (audio_done) return Modality::Text;

    // Inside an audio block until it reaches m; otherwise text until the
    // cycle's text block reaches n.
    size_t cycle = audio_used / (size_t)cfg.m;
    if (audio_used % (size_t)cfg.m != 0) return Modality::Audio;
    if (text_used < (cycle + 1) * (size_t)cfg.n) return Modality::Text;
    return Modality::Audio;
}

HybridSeq interleave(const std::vector<int32_t>& text, const std::vector<Frame>& frames,
                     const InterleaveConfig& cfg) {
    require_valid(cfg);
    HybridSeq out;
    out.reserve(text.size() + frames.size());
    size_t t = 0, a = 0;
    while (t < text.size() || a < frames.size()) {
        Modality next = modality_at(t, a, cfg, text.size(), frames.size());
        if (next == Modality::Text) {
            out.push_back(HybridToken::text(text[t++]));
        } else {
            out.push_back(HybridToken::audio(frames[a++]));
        }
    }
    return out;
}

void deinterleave(const HybridSeq& seq, std::vector<int32_t>& text_out,
                  std::vector<Frame>& frames_out) {
    text_out.clear();
    frames_out.clear();
    for (const HybridToken& item : seq) {
        if (item.is_text())
            text_out.push_back(item.text_id);
        else
            frames_out.push_back(item.frame);
    }
}

std::optional<size_t> check_schedule(const HybridSeq& seq, const InterleaveConfig& cfg) {
    require_valid(cfg);
    size_t text_total = 0, audio_total = 0;
    for (const HybridToken& item : seq)
        (item.is_text() ? text_total : audio_total)++;

    size_t t = 0, a = 0;
    for (size_t pos = 0; pos < seq.size(); ++pos) {
        Modality want = modality_at(t, a, cfg, text_total, audio_total);
        Modality got = seq[pos].is_text() ? Modality::Text : Modality::Audio;
        if (want != got) return pos;
        (got == Modality::Text ? t : a)++;
    }
    return std::nullopt;
}

}  // namespace hybridlm
