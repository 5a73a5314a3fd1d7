#include "hybridlm/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hybridlm {

static void check_normalized(const std::vector<double>& p, double tol, const char* what,
                             size_t pos) {
    double sum = 0.0;
    for (double v : p) {
        if (v < 0.0)
            throw std::invalid_argument(std::string(what) + " at position " +
                                        std::to_string(pos) + " has negative mass");
        sum += v;
    }
    if (std::abs(sum - 1.0) > tol)
        throw std::invalid_argument(std::string(what) + " at position " + std::to_string(pos) +
                                    " sums to " + std::to_string(sum));
}

static double cell_nll(const std::vector<double>& p, int32_t id, const char* what, size_t pos) {
    if (id < 0 || id >= (int32_t)p.size())
        throw std::invalid_argument(std::string(what) + " target " + std::to_string(id) +
                                    " out of vocabulary at position " + std::to_string(pos));
    return -std::log(p[(size_t)id]);
}

NllResult hybrid_nll(const std::vector<PositionPrediction>& preds, const HybridSeq& targets,
                     const LossMask& mask, const VocabSpec& spec, double norm_tolerance) {
    if (preds.size() != targets.size() || mask.size() != targets.size())
        throw std::invalid_argument("hybrid_nll: length mismatch (preds " +
                                    std::to_string(preds.size()) + ", targets " +
                                    std::to_string(targets.size()) + ", mask " +
                                    std::to_string(mask.size()) + ")");
    const int J = spec.num_codebooks();

    NllResult res;
    res.per_position.assign(targets.size(), 0.0);
    for (size_t t = 0; t < targets.size(); ++t) {
        if (!mask[t]) continue;
        const PositionPrediction& pred = preds[t];
        const HybridToken& target = targets[t];

        if (target.is_text()) {
            check_normalized(pred.head0, norm_tolerance, "head0", t);
            int32_t uid = to_unified_head0(target, spec);
            res.per_position[t] = cell_nll(pred.head0, uid, "head0", t);
        } else {
            if ((int)target.frame.size() != J)
                throw std::invalid_argument("audio target arity != J at position " +
                                            std::to_string(t));
            if ((int)pred.heads.size() != J - 1)
                throw std::invalid_argument("prediction carries " +
                                            std::to_string(pred.heads.size()) +
                                            " auxiliary heads, expected " + std::to_string(J - 1));
            check_normalized(pred.head0, norm_tolerance, "head0", t);
            for (int j = 1; j < J; ++j)
                check_normalized(pred.heads[(size_t)j - 1], norm_tolerance, "head", t);

            double sum = 0.0;
            int scored_cells = 0;
            for (int j = 0; j < J; ++j) {
                int32_t id = target.frame[(size_t)j];
                bool is_pad = id == spec.pad_audio_id;
                if (j == 0) {
                    if (!is_pad) {
                        if (id < 0 || id >= spec.codebook_sizes[0])
                            throw std::invalid_argument("layer-0 target out of vocabulary at " +
                                                        std::to_string(t));
                        sum += cell_nll(pred.head0, spec.text_size + id, "head0", t);
                        ++scored_cells;
                    } else if (spec.audio_eos_mode == AudioEosMode::Token) {
                        // stop signal: layer-0 pad scores head0 toward eos_audio
                        sum += cell_nll(pred.head0, spec.eos_audio_id, "head0", t);
                        ++scored_cells;
                    }
                } else if (!is_pad) {
                    if (id < 0 || id >= spec.codebook_sizes[(size_t)j])
                        throw std::invalid_argument("layer-" + std::to_string(j) +
                                                    " target out of vocabulary at " +
                                                    std::to_string(t));
                    sum += cell_nll(pred.heads[(size_t)j - 1], id, "head", t);
                    ++scored_cells;
                }
            }
            res.per_position[t] = scored_cells == 0 ? 0.0 : sum / (double)scored_cells;
        }
        res.total += res.per_position[t];
        ++res.scored_positions;
    }
    return res;
}

LossMask build_response_mask(const Context& items, const VocabSpec& spec) {
    LossMask mask(items.size(), 0);
    bool in_assistant = false;
    bool seen_marker = false;
    for (size_t i = 0; i < items.size(); ++i) {
        const ContextItem& item = items[i];
        if (item.kind != ContextItem::Kind::Token) {
            if (!seen_marker)
                throw std::invalid_argument("unmatched turn markers: content at position " +
                                            std::to_string(i) + " precedes any role marker");
            continue;  // slots and features are never scored
        }
        const HybridToken& tok = item.token;
        bool is_marker = tok.is_text() && (tok.text_id == spec.role_user_id ||
                                           tok.text_id == spec.role_assistant_id ||
                                           tok.text_id == spec.role_system_id);
        if (is_marker) {
            seen_marker = true;
            in_assistant = tok.text_id == spec.role_assistant_id;
            continue;  // markers themselves are unscored
        }
        if (tok.is_text() && tok.text_id == spec.bos_id && !seen_marker) continue;
        if (!seen_marker)
            throw std::invalid_argument("unmatched turn markers: content at position " +
                                        std::to_string(i) + " precedes any role marker");
        if (in_assistant) mask[i] = 1;
    }
    return mask;
}

}  // namespace hybridlm
