#pragma once
// Deterministic synthetic dialog corpus for the toy pipeline: a set of base
// queries, each paired with every voice and a voice-dependent response, so a
// model must consume the injected speaker vector to fit the data.

#include <cstdint>
#include <vector>

#include "hybridlm/dialog.hpp"
#include "hybridlm/interleave.hpp"
#include "hybridlm/model.hpp"
#include "hybridlm/token_space.hpp"

namespace hybridlm {

struct SynthConfig {
    VocabSpec vocab;
    InterleaveConfig ratio{2, 6};
    int num_dialogs = 32;
    int num_voices = 2;
    int query_len_min = 3, query_len_max = 5;
    int text_len_min = 4, text_len_max = 6;
    int frames_min = 6, frames_max = 10;
    int speaker_dim = 8;
    uint64_t seed = 1234;
    bool query_as_features = false;   // route queries through the adapter path
    int adapter_in_dim = 8;
};

struct SynthDialog {
    Query query;
    int voice = 0;
    std::vector<int32_t> response_text;    // content ids, no eos
    std::vector<Frame> response_frames;    // raw frames, undelayed
};

struct SynthCorpus {
    std::vector<SynthDialog> dialogs;
    std::vector<std::vector<double>> voices;   // unit agent embeddings
    std::vector<double> user_vec;
};

SynthCorpus make_synth_corpus(const SynthConfig& cfg);

struct SpeakerTable {
    std::vector<std::vector<double>> voices;
    std::vector<double> user_vec;
};

// Unit agent vectors plus one user vector, all from a single seeded stream,
// so training and generation derive identical tables.
SpeakerTable speaker_table(uint64_t seed, int num_voices, int dim);

// Context + response body + response-only mask for one dialog.
TrainExample build_example(const Query& query, const std::vector<double>& agent_vec,
                           const std::vector<double>& user_vec,
                           const std::vector<int32_t>& response_text,
                           const std::vector<Frame>& response_frames, const VocabSpec& spec,
                           const InterleaveConfig& ratio, size_t max_seq, bool inject);

TrainExample make_train_example(const SynthDialog& dialog, const SynthCorpus& corpus,
                                const VocabSpec& spec, const InterleaveConfig& ratio,
                                size_t max_seq, bool inject);

// Fraction of matching cells between two hybrid sequences compared
// position-by-position (text = 1 cell, audio column = J cells).
double token_accuracy(const HybridSeq& want, const HybridSeq& got);

}  // namespace hybridlm
