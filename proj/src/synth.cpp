#include "hybridlm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hybridlm/loss.hpp"

namespace hybridlm {

static std::vector<double> unit_vector(Rng& rng, int dim) {
    std::vector<double> v((size_t)dim);
    double norm = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) return unit_vector(rng, dim);
    for (double& x : v) x /= norm;
    return v;
}

SynthCorpus make_synth_corpus(const SynthConfig& cfg) {
    ValidationResult v = validate(cfg.vocab);
    if (!v.ok) throw std::invalid_argument("synth vocab: " + v.message);
    if (cfg.num_voices < 1 || cfg.num_dialogs < 1)
        throw std::invalid_argument("need at least one voice and one dialog");

    // content ids stay clear of the reserved block
    int32_t text_lo = 1 + std::max({cfg.vocab.bos_id, cfg.vocab.eos_text_id,
                                    cfg.vocab.eos_audio_id, cfg.vocab.role_user_id,
                                    cfg.vocab.role_assistant_id, cfg.vocab.role_system_id});
    if (text_lo >= cfg.vocab.text_size)
        throw std::invalid_argument("text vocabulary too small for content tokens");

    SpeakerTable table = speaker_table(cfg.seed, cfg.num_voices, cfg.speaker_dim);
    SynthCorpus corpus;
    corpus.voices = std::move(table.voices);
    corpus.user_vec = std::move(table.user_vec);
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);  // content stream

    const int J = cfg.vocab.num_codebooks();
    auto rand_text = [&](int lo, int hi) {
        std::vector<int32_t> ids((size_t)rng.uniform_int(lo, hi));
        for (auto& id : ids) id = (int32_t)rng.uniform_int(text_lo, cfg.vocab.text_size - 1);
        return ids;
    };
    auto rand_frames = [&]() {
        std::vector<Frame> frames((size_t)rng.uniform_int(cfg.frames_min, cfg.frames_max));
        for (Frame& f : frames) {
            f.resize((size_t)J);
            for (int j = 0; j < J; ++j) {
                // exclude the pad id from content
                int32_t hi = cfg.vocab.codebook_sizes[(size_t)j] - 1;
                int32_t id = (int32_t)rng.uniform_int(0, hi - 1);
                if (id >= cfg.vocab.pad_audio_id) ++id;
                f[(size_t)j] = id;
            }
        }
        return frames;
    };

    int base_queries = (cfg.num_dialogs + cfg.num_voices - 1) / cfg.num_voices;
    std::vector<Query> queries;
    for (int q = 0; q < base_queries; ++q) {
        Query query;
        if (cfg.query_as_features) {
            int count = rng.uniform_int(cfg.query_len_min, cfg.query_len_max);
            for (int i = 0; i < count; ++i) {
                std::vector<double> feat((size_t)cfg.adapter_in_dim);
                for (double& x : feat) x = rng.normal();
                query.features.push_back(std::move(feat));
            }
        } else {
            query.text = rand_text(cfg.query_len_min, cfg.query_len_max);
        }
        queries.push_back(std::move(query));
    }

    for (int i = 0; i < cfg.num_dialogs; ++i) {
        SynthDialog d;
        d.query = queries[(size_t)(i / cfg.num_voices)];
        d.voice = i % cfg.num_voices;
        d.response_text = rand_text(cfg.text_len_min, cfg.text_len_max);
        d.response_frames = rand_frames();
        corpus.dialogs.push_back(std::move(d));
    }
    return corpus;
}

SpeakerTable speaker_table(uint64_t seed, int num_voices, int dim) {
    Rng rng(seed);
    SpeakerTable table;
    for (int i = 0; i < num_voices; ++i) table.voices.push_back(unit_vector(rng, dim));
    table.user_vec = unit_vector(rng, dim);
    return table;
}

TrainExample build_example(const Query& query, const std::vector<double>& agent_vec,
                           const std::vector<double>& user_vec,
                           const std::vector<int32_t>& response_text,
                           const std::vector<Frame>& response_frames, const VocabSpec& spec,
                           const InterleaveConfig& ratio, size_t max_seq, bool inject) {
    AssembledContext ctx = assemble_context({}, query, agent_vec, user_vec, spec, max_seq, inject);
    HybridSeq body = build_response_body(response_text, response_frames, spec, ratio);

    TrainExample ex;
    ex.items = ctx.items;
    for (const HybridToken& tok : body) ex.items.push_back(ContextItem::from_token(tok));
    if (ex.items.size() > max_seq) throw ContextOverflowError(ex.items.size() - max_seq);
    ex.item_mask = build_response_mask(ex.items, spec);
    return ex;
}

TrainExample make_train_example(const SynthDialog& dialog, const SynthCorpus& corpus,
                                const VocabSpec& spec, const InterleaveConfig& ratio,
                                size_t max_seq, bool inject) {
    return build_example(dialog.query, corpus.voices[(size_t)dialog.voice], corpus.user_vec,
                         dialog.response_text, dialog.response_frames, spec, ratio, max_seq,
                         inject);
}

double token_accuracy(const HybridSeq& want, const HybridSeq& got) {
    size_t cells = 0, hits = 0;
    size_t n = std::max(want.size(), got.size());
    for (size_t i = 0; i < n; ++i) {
        if (i >= want.size() || i >= got.size()) {
            // count missing positions against the score
            const HybridSeq& longer = want.size() > got.size() ? want : got;
            cells += longer[i].is_text() ? 1 : longer[i].frame.size();
            continue;
        }
        const HybridToken& w = want[i];
        const HybridToken& g = got[i];
        if (w.is_text()) {
            cells += 1;
            if (g.is_text() && g.text_id == w.text_id) hits += 1;
        } else {
            cells += w.frame.size();
            if (g.is_audio() && g.frame.size() == w.frame.size())
                for (size_t j = 0; j < w.frame.size(); ++j)
                    if (w.frame[j] == g.frame[j]) ++hits;
        }
    }
    return cells == 0 ? 1.0 : (double)hits / (double)cells;
}

}  // namespace hybridlm
