#pragma once
// Multi-turn conversational state: history compaction (assistant speech is
// dropped, text kept), context assembly with speaker conditioning, and
// agent-voice embedding averaging.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hybridlm/interleave.hpp"
#include "hybridlm/token_space.hpp"

namespace hybridlm {

enum class Role { User, Assistant, System };

struct Turn {
    Role role = Role::User;
    std::vector<int32_t> text;
    std::vector<Frame> audio;          // empty = no audio
    std::string speaker_ref;           // empty = none
};

struct SpeakerEmbedding {
    std::vector<double> vec;
    double norm = 0.0;
};

SpeakerEmbedding make_speaker_embedding(std::vector<double> vec);

// One element of a model-ready context. Besides discrete tokens, a context
// may carry continuous encoder features (adapter path) and speaker-vector
// slots (virtual positions injected after role markers).
struct ContextItem {
    enum class Kind { Token, Feature, SpeakerSlot };
    Kind kind = Kind::Token;
    HybridToken token;                 // Token
    std::vector<double> vec;           // Feature payload or speaker vector

    static ContextItem from_token(HybridToken t) {
        ContextItem c;
        c.kind = Kind::Token;
        c.token = std::move(t);
        return c;
    }
    static ContextItem feature(std::vector<double> v) {
        ContextItem c;
        c.kind = Kind::Feature;
        c.vec = std::move(v);
        return c;
    }
    static ContextItem speaker_slot(std::vector<double> v) {
        ContextItem c;
        c.kind = Kind::SpeakerSlot;
        c.vec = std::move(v);
        return c;
    }
};

using Context = std::vector<ContextItem>;

// Current user query; any subset of the three payloads may be present.
struct Query {
    std::vector<int32_t> text;
    std::vector<Frame> frames;
    std::vector<std::vector<double>> features;
};

struct AssembledContext {
    Context items;
    std::vector<size_t> injection_positions;   // indices of speaker slots
};

class ContextOverflowError : public std::runtime_error {
   public:
    ContextOverflowError(size_t overflow)
        : std::runtime_error("context exceeds max_seq by " + std::to_string(overflow) +
                             " positions"),
          overflow_(overflow) {}
    size_t overflow() const { return overflow_; }

   private:
    size_t overflow_;
};

// Assistant turns lose their audio; user and system turns pass through.
// Idempotent, order and count preserving.
std::vector<Turn> compact_history(const std::vector<Turn>& turns);

// Layout: [system?][compacted history][user marker][query][assistant marker],
// then speaker slots inserted after every user/assistant marker when both
// inject == true and the corresponding vector is non-empty. Throws
// ContextOverflowError when the result exceeds max_seq.
AssembledContext assemble_context(const std::vector<Turn>& history, const Query& query,
                                  const std::vector<double>& agent_vec,
                                  const std::vector<double>& user_vec, const VocabSpec& spec,
                                  size_t max_seq, bool inject);

// Inserts one speaker-slot virtual position after each user/assistant role
// marker. With inject == false the context is returned unchanged.
Context inject_speaker(const Context& ctx, const std::vector<double>& agent_vec,
                       const std::vector<double>& user_vec, const VocabSpec& spec, bool inject,
                       std::vector<size_t>* positions = nullptr);

// Oldest-turns-first truncation; drops whole turns until the estimated item
// count fits the budget. Never silent: returns the number of dropped turns.
size_t truncate_oldest(std::vector<Turn>& history, size_t item_budget, const VocabSpec& spec);

// Arithmetic mean renormalized to unit length. Throws std::invalid_argument
// on an empty sample list, width mismatch, or a zero-norm mean.
SpeakerEmbedding average_speaker_embeddings(const std::vector<std::vector<double>>& samples);

}  // namespace hybridlm
