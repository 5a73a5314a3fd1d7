#pragma once
// n:m block interleaving of text tokens and audio frames into one hybrid
// response sequence, plus the inverse and schedule auditing.
//
// Layout: [Y_0..Y_{n-1}, Z_0..Z_{m-1}, Y_n..Y_{2n-1}, ...]. When one side
// runs out, the remainder of the other side is appended contiguously.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "hybridlm/token_space.hpp"

namespace hybridlm {

struct InterleaveConfig {
    int n = 4;    // text block size
    int m = 12;   // audio block size
};

using HybridSeq = std::vector<HybridToken>;

using Frame = std::vector<int32_t>;

// Throws std::invalid_argument when cfg.n < 1 or cfg.m < 1.
HybridSeq interleave(const std::vector<int32_t>& text, const std::vector<Frame>& frames,
                     const InterleaveConfig& cfg);

// Projects items back onto their modalities, order preserved.
void deinterleave(const HybridSeq& seq, std::vector<int32_t>& text_out,
                  std::vector<Frame>& frames_out);

// nullopt when the layout matches the schedule for (|Y|, |Z|, cfg);
// otherwise the first offending position.
std::optional<size_t> check_schedule(const HybridSeq& seq, const InterleaveConfig& cfg);

// Next-modality decision used by generation. Totals are optional: a known
// total of `used` tokens marks that side exhausted, forcing the other
// modality (the tail-flush rule). Generation signals text EOS by passing
// text_total == text_used.
Modality modality_at(size_t text_used, size_t audio_used, const InterleaveConfig& cfg,
                     std::optional<size_t> text_total = std::nullopt,
                     std::optional<size_t> audio_total = std::nullopt);

}  // namespace hybridlm
