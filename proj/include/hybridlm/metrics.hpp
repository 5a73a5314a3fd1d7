#pragma once
// Evaluation primitives: word/character error rate via edit distance, cosine
// speaker similarity, and pitch-contour MSE/DTW.

#include <cstdint>
#include <vector>

namespace hybridlm {

struct EditCounts {
    size_t distance = 0;
    size_t substitutions = 0;
    size_t insertions = 0;
    size_t deletions = 0;
};

// Minimal unit-cost edit distance with a deterministic S/I/D decomposition
// (ties resolved substitution > deletion > insertion).
EditCounts edit_distance(const std::vector<int64_t>& ref, const std::vector<int64_t>& hyp);

// distance / |ref|; may exceed 1. Throws std::invalid_argument on empty ref.
double wer(const std::vector<int64_t>& ref, const std::vector<int64_t>& hyp);

// a.b / (|a||b|), clamped to [-1, 1]. Throws on width mismatch or zero vector.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

struct Contour {
    std::vector<double> values;
};

// Z-score over voiced positions (population sd); unvoiced positions dropped.
// Throws on fewer than 2 voiced values or zero spread.
Contour normalize_contour(const std::vector<double>& raw, const std::vector<uint8_t>& voiced);

// Mean squared difference; the shorter contour is linearly resampled to the
// longer one's length first. Throws on an empty contour.
double contour_mse(const Contour& a, const Contour& b);

// Minimal accumulated |a_i - b_j| over monotone alignment paths with steps
// (1,0), (0,1), (1,1), endpoints anchored. Unnormalized by default;
// normalized divides by |a| + |b|. Throws on an empty contour.
double dtw_distance(const Contour& a, const Contour& b, bool normalized = false);

}  // namespace hybridlm
