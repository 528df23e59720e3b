#include "hypernas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hypernas {

namespace {

void check_lengths(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("rank metric: length mismatch");
    if (a.size() < 2) throw std::invalid_argument("rank metric: need at least 2 points");
}

// Number of strictly decreasing pairs in `v`, by merge sort. Equal elements
// are kept stable and not counted.
int64_t count_inversions(std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<double> buf(n);
    int64_t inversions = 0;
    for (size_t width = 1; width < n; width *= 2) {
        for (size_t lo = 0; lo + width < n; lo += 2 * width) {
            const size_t mid = lo + width;
            const size_t hi = std::min(lo + 2 * width, n);
            size_t i = lo, j = mid, k = lo;
            while (i < mid && j < hi) {
                if (v[j] < v[i]) {
                    inversions += static_cast<int64_t>(mid - i);
                    buf[k++] = v[j++];
                } else {
                    buf[k++] = v[i++];
                }
            }
            while (i < mid) buf[k++] = v[i++];
            while (j < hi) buf[k++] = v[j++];
            std::copy(buf.begin() + static_cast<int64_t>(lo), buf.begin() + static_cast<int64_t>(hi),
                      v.begin() + static_cast<int64_t>(lo));
        }
    }
    return inversions;
}

int64_t tie_pair_count(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    int64_t pairs = 0;
    size_t i = 0;
    while (i < v.size()) {
        size_t j = i;
        while (j < v.size() && v[j] == v[i]) ++j;
        const int64_t t = static_cast<int64_t>(j - i);
        pairs += t * (t - 1) / 2;
        i = j;
    }
    return pairs;
}

}  // namespace

std::optional<double> kendall_tau(const std::vector<double>& pred,
                                  const std::vector<double>& truth) {
    check_lengths(pred, truth);
    const int64_t n = static_cast<int64_t>(pred.size());
    const int64_t n0 = n * (n - 1) / 2;

    std::vector<size_t> order(pred.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (pred[a] != pred[b]) return pred[a] < pred[b];
        return truth[a] < truth[b];
    });

    // Pairs tied in pred (n1) and tied in both (n3), from the sorted order.
    int64_t n1 = 0, n3 = 0;
    {
        size_t i = 0;
        while (i < order.size()) {
            size_t j = i;
            while (j < order.size() && pred[order[j]] == pred[order[i]]) ++j;
            const int64_t t = static_cast<int64_t>(j - i);
            n1 += t * (t - 1) / 2;
            size_t a = i;
            while (a < j) {
                size_t b = a;
                while (b < j && truth[order[b]] == truth[order[a]]) ++b;
                const int64_t u = static_cast<int64_t>(b - a);
                n3 += u * (u - 1) / 2;
                a = b;
            }
            i = j;
        }
    }
    const int64_t n2 = tie_pair_count(truth);

    std::vector<double> y_sorted(pred.size());
    for (size_t i = 0; i < order.size(); ++i) y_sorted[i] = truth[order[i]];
    const int64_t discordant = count_inversions(y_sorted);
    const int64_t concordant = n0 - n1 - n2 + n3 - discordant;

    const double d1 = static_cast<double>(n0 - n1);
    const double d2 = static_cast<double>(n0 - n2);
    if (d1 <= 0.0 || d2 <= 0.0) return std::nullopt;  // one side entirely tied
    return static_cast<double>(concordant - discordant) / std::sqrt(d1 * d2);
}

std::vector<double> fractional_ranks(const std::vector<double>& values) {
    std::vector<size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of 1-based positions
        for (size_t k = i; k < j; ++k) ranks[order[k]] = avg;
        i = j;
    }
    return ranks;
}

std::optional<double> spearman(const std::vector<double>& pred, const std::vector<double>& truth) {
    check_lengths(pred, truth);
    const std::vector<double> ra = fractional_ranks(pred);
    const std::vector<double> rb = fractional_ranks(truth);
    const double n = static_cast<double>(ra.size());
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < ra.size(); ++i) {
        const double da = ra[i] - ma;
        const double db = rb[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return std::nullopt;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace hypernas
