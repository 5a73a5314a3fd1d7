#pragma once
// Hybrid negative log-likelihood: standard cross-entropy on text positions,
// codebook-averaged cross-entropy on audio positions, response-only masking.
//
// Audio positions average -log p over the scored cells of the target column.
// A non-pad cell of layer j scores head j (layer 0 through the audio block
// of the unified head 0). A pad cell is skipped, with one exception: in
// AudioEosMode::Token, a pad at layer 0 scores head 0 toward eos_audio_id --
// that is the trainable stop signal the generation driver samples for.

#include <cstdint>
#include <vector>

#include "hybridlm/dialog.hpp"
#include "hybridlm/interleave.hpp"
#include "hybridlm/token_space.hpp"

namespace hybridlm {

// Per-position output distributions: head0 over the unified vocabulary
// |V|+|U^0|, heads[j-1] over codebook j for j = 1..J-1.
struct PositionPrediction {
    std::vector<double> head0;
    std::vector<std::vector<double>> heads;
};

// 1 = scored, 0 = unscored.
using LossMask = std::vector<uint8_t>;

struct NllResult {
    double total = 0.0;
    std::vector<double> per_position;
    size_t scored_positions = 0;

    double mean_per_token() const {
        return scored_positions == 0 ? 0.0 : total / (double)scored_positions;
    }
};

// Throws std::invalid_argument on length mismatch, a target id outside its
// vocabulary, or a consulted distribution whose mass deviates from 1 by more
// than norm_tolerance. Unscored positions contribute exactly 0.
NllResult hybrid_nll(const std::vector<PositionPrediction>& preds, const HybridSeq& targets,
                     const LossMask& mask, const VocabSpec& spec,
                     double norm_tolerance = 1e-9);

// Scored exactly on assistant-response positions: markers, user/system
// content, speaker slots and feature items are unscored. Throws
// std::invalid_argument when content precedes the first role marker.
LossMask build_response_mask(const Context& items, const VocabSpec& spec);

}  // namespace hybridlm
