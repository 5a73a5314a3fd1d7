#include "hybridlm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hybridlm {

EditCounts edit_distance(const std::vector<int64_t>& ref, const std::vector<int64_t>& hyp) {
    const size_t R = ref.size(), H = hyp.size();
    // d[i][j] = distance between ref[0..i) and hyp[0..j)
    std::vector<std::vector<size_t>> d(R + 1, std::vector<size_t>(H + 1, 0));
    for (size_t i = 0; i <= R; ++i) d[i][0] = i;
    for (size_t j = 0; j <= H; ++j) d[0][j] = j;
    for (size_t i = 1; i <= R; ++i)
        for (size_t j = 1; j <= H; ++j) {
            size_t sub = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            size_t del = d[i - 1][j] + 1;   // ref token missing from hyp
            size_t ins = d[i][j - 1] + 1;   // extra token in hyp
            d[i][j] = std::min({sub, del, ins});
        }

    // backtrace, ties: match/sub > del > ins
    EditCounts counts;
    counts.distance = d[R][H];
    size_t i = R, j = H;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 &&
            d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
            if (ref[i - 1] != hyp[j - 1]) ++counts.substitutions;
            --i, --j;
        } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
            ++counts.deletions;
            --i;
        } else {
            ++counts.insertions;
            --j;
        }
    }
    return counts;
}

double wer(const std::vector<int64_t>& ref, const std::vector<int64_t>& hyp) {
    if (ref.empty()) throw std::invalid_argument("wer: empty reference");
    return (double)edit_distance(ref, hyp).distance / (double)ref.size();
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: width mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

Contour normalize_contour(const std::vector<double>& raw, const std::vector<uint8_t>& voiced) {
    if (voiced.size() != raw.size())
        throw std::invalid_argument("normalize_contour: mask length mismatch");
    std::vector<double> v;
    for (size_t i = 0; i < raw.size(); ++i)
        if (voiced[i]) v.push_back(raw[i]);
    if (v.size() < 2) throw std::invalid_argument("normalize_contour: fewer than 2 voiced values");

    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= (double)v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= (double)v.size();
    if (var == 0.0) throw std::invalid_argument("normalize_contour: zero spread");
    double sd = std::sqrt(var);

    Contour out;
    out.values.reserve(v.size());
    for (double x : v) out.values.push_back((x - mean) / sd);
    return out;
}

// endpoint-anchored linear resampling to `len` points
static std::vector<double> resample(const std::vector<double>& v, size_t len) {
    if (v.size() == len) return v;
    std::vector<double> out(len);
    if (v.size() == 1) {
        std::fill(out.begin(), out.end(), v[0]);
        return out;
    }
    for (size_t i = 0; i < len; ++i) {
        double u = len == 1 ? 0.0 : (double)i * (double)(v.size() - 1) / (double)(len - 1);
        size_t lo = (size_t)u;
        if (lo >= v.size() - 1) {
            out[i] = v.back();
            continue;
        }
        double frac = u - (double)lo;
        out[i] = v[lo] * (1.0 - frac) + v[lo + 1] * frac;
    }
    return out;
}

double contour_mse(const Contour& a, const Contour& b) {
    if (a.values.empty() || b.values.empty())
        throw std::invalid_argument("contour_mse: empty contour");
    size_t len = std::max(a.values.size(), b.values.size());
    std::vector<double> x = resample(a.values, len);
    std::vector<double> y = resample(b.values, len);
    double acc = 0.0;
    for (size_t i = 0; i < len; ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
    return acc / (double)len;
}

double dtw_distance(const Contour& a, const Contour& b, bool normalized) {
    const auto& x = a.values;
    const auto& y = b.values;
    if (x.empty() || y.empty()) throw std::invalid_argument("dtw_distance: empty contour");
    const size_t N = x.size(), M = y.size();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> d(N, std::vector<double>(M, inf));
    d[0][0] = std::abs(x[0] - y[0]);
    for (size_t i = 0; i < N; ++i)
        for (size_t j = 0; j < M; ++j) {
            if (i == 0 && j == 0) continue;
            double best = inf;
            if (i > 0) best = std::min(best, d[i - 1][j]);
            if (j > 0) best = std::min(best, d[i][j - 1]);
            if (i > 0 && j > 0) best = std::min(best, d[i - 1][j - 1]);
            d[i][j] = std::abs(x[i] - y[j]) + best;
        }
    double dist = d[N - 1][M - 1];
    return normalized ? dist / (double)(N + M) : dist;
}

}  // namespace hybridlm
