#include "hybridlm/dialog.hpp"

#include <cmath>
#include <stdexcept>

namespace hybridlm {

SpeakerEmbedding make_speaker_embedding(std::vector<double> vec) {
    SpeakerEmbedding e;
    double s = 0.0;
    for (double v : vec) s += v * v;
    e.norm = std::sqrt(s);
    e.vec = std::move(vec);
    return e;
}

std::vector<Turn> compact_history(const std::vector<Turn>& turns) {
    std::vector<Turn> out = turns;
    for (Turn& t : out)
        if (t.role == Role::Assistant) t.audio.clear();
    return out;
}

static size_t turn_item_count(const Turn& t) {
    return 1 + t.text.size() + t.audio.size();  // marker + content
}

static void append_turn(Context& items, const Turn& t, const VocabSpec& spec) {
    if (t.role == Role::System && !t.audio.empty())
        throw std::invalid_argument("system turns never carry audio");
    int32_t marker = t.role == Role::User        ? spec.role_user_id
                     : t.role == Role::Assistant ? spec.role_assistant_id
                                                 : spec.role_system_id;
    items.push_back(ContextItem::from_token(HybridToken::text(marker)));
    for (int32_t id : t.text) items.push_back(ContextItem::from_token(HybridToken::text(id)));
    for (const Frame& f : t.audio) items.push_back(ContextItem::from_token(HybridToken::audio(f)));
}

Context inject_speaker(const Context& ctx, const std::vector<double>& agent_vec,
                       const std::vector<double>& user_vec, const VocabSpec& spec, bool inject,
                       std::vector<size_t>* positions) {
    if (positions) positions->clear();
    if (!inject) return ctx;
    Context out;
    out.reserve(ctx.size());
    for (const ContextItem& item : ctx) {
        out.push_back(item);
        if (item.kind != ContextItem::Kind::Token || !item.token.is_text()) continue;
        int32_t id = item.token.text_id;
        if (id == spec.role_user_id && !user_vec.empty()) {
            if (positions) positions->push_back(out.size());
            out.push_back(ContextItem::speaker_slot(user_vec));
        } else if (id == spec.role_assistant_id && !agent_vec.empty()) {
            if (positions) positions->push_back(out.size());
            out.push_back(ContextItem::speaker_slot(agent_vec));
        }
    }
    return out;
}

AssembledContext assemble_context(const std::vector<Turn>& history, const Query& query,
                                  const std::vector<double>& agent_vec,
                                  const std::vector<double>& user_vec, const VocabSpec& spec,
                                  size_t max_seq, bool inject) {
    std::vector<Turn> compacted = compact_history(history);

    Context items;
    for (const Turn& t : compacted) append_turn(items, t, spec);

    items.push_back(ContextItem::from_token(HybridToken::text(spec.role_user_id)));
    for (int32_t id : query.text) items.push_back(ContextItem::from_token(HybridToken::text(id)));
    for (const Frame& f : query.frames)
        items.push_back(ContextItem::from_token(HybridToken::audio(f)));
    for (const auto& feat : query.features) items.push_back(ContextItem::feature(feat));
    items.push_back(ContextItem::from_token(HybridToken::text(spec.role_assistant_id)));

    AssembledContext out;
    out.items = inject_speaker(items, agent_vec, user_vec, spec, inject, &out.injection_positions);
    if (out.items.size() > max_seq) throw ContextOverflowError(out.items.size() - max_seq);
    return out;
}

size_t truncate_oldest(std::vector<Turn>& history, size_t item_budget, const VocabSpec&) {
    size_t total = 0;
    for (const Turn& t : history) total += turn_item_count(t);
    size_t dropped = 0;
    while (!history.empty() && total > item_budget) {
        total -= turn_item_count(history.front());
        history.erase(history.begin());
        ++dropped;
    }
    return dropped;
}

SpeakerEmbedding average_speaker_embeddings(const std::vector<std::vector<double>>& samples) {
    if (samples.empty()) throw std::invalid_argument("no speaker samples to average");
    size_t dim = samples[0].size();
    std::vector<double> mean(dim, 0.0);
    for (const auto& s : samples) {
        if (s.size() != dim) throw std::invalid_argument("speaker sample width mismatch");
        for (size_t i = 0; i < dim; ++i) mean[i] += s[i];
    }
    for (double& v : mean) v /= (double)samples.size();

    double norm = 0.0;
    for (double v : mean) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw std::invalid_argument("zero-norm mean speaker embedding");
    for (double& v : mean) v /= norm;
    return make_speaker_embedding(std::move(mean));
}

}  // namespace hybridlm
