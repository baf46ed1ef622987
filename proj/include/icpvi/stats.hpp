#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icpvi/errors.hpp"
#include "icpvi/pvi.hpp"
#include "icpvi/special.hpp"

namespace icpvi {

struct CorrelationResult {
    double r = 0.0;
    std::optional<double> p_value; // two-sided; defined for n >= 3
    std::size_t n = 0;
};

/// Sample Pearson correlation with a two-sided p-value computed via
/// t = r * sqrt((n-2) / (1-r^2)) against the Student-t distribution.
inline CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw ValidationError("pearson: input lengths differ (" + std::to_string(x.size()) + " vs " +
                              std::to_string(y.size()) + ")");
    }
    const std::size_t n = x.size();
    if (n < 2) throw ValidationError("pearson: need at least 2 observations");

    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_x += x[i];
        mean_y += y[i];
    }
    mean_x /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);

    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mean_x;
        const double dy = y[i] - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("pearson: constant input vector");

    CorrelationResult result;
    result.n = n;
    result.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    if (n >= 3) {
        const double df = static_cast<double>(n - 2);
        const double r2 = result.r * result.r;
        if (r2 >= 1.0) {
            result.p_value = 0.0;
        } else {
            const double t = result.r * std::sqrt(df / (1.0 - r2));
            result.p_value = special::student_t_two_sided_p(t, df);
        }
    }
    return result;
}

struct AnovaResult {
    double f_statistic = 0.0;
    double p_value = 1.0;
    std::size_t df_between = 0;
    std::size_t df_within = 0;
};

/// One-way analysis of variance: F = MS_between / MS_within, p from the
/// F(df_between, df_within) survival function.
inline AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw ValidationError("anova_oneway: need at least 2 groups");
    std::size_t total = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].size() < 2) {
            throw ValidationError("anova_oneway: group " + std::to_string(g) + " has fewer than 2 values");
        }
        total += groups[g].size();
    }

    double grand_sum = 0.0;
    for (const auto& g : groups) grand_sum = std::accumulate(g.begin(), g.end(), grand_sum);
    const double grand_mean = grand_sum / static_cast<double>(total);

    double ss_between = 0.0, ss_within = 0.0;
    for (const auto& g : groups) {
        const double mean = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
        ss_between += static_cast<double>(g.size()) * (mean - grand_mean) * (mean - grand_mean);
        for (const double v : g) ss_within += (v - mean) * (v - mean);
    }

    AnovaResult result;
    result.df_between = groups.size() - 1;
    result.df_within = total - groups.size();
    const double ms_between = ss_between / static_cast<double>(result.df_between);
    const double ms_within = ss_within / static_cast<double>(result.df_within);
    if (ms_within == 0.0) {
        if (ms_between > 0.0) {
            result.f_statistic = std::numeric_limits<double>::infinity();
            result.p_value = 0.0;
        } else {
            result.f_statistic = 0.0;
            result.p_value = 1.0;
        }
        return result;
    }
    result.f_statistic = ms_between / ms_within;
    result.p_value = special::f_survival(result.f_statistic, static_cast<double>(result.df_between),
                                         static_cast<double>(result.df_within));
    return result;
}

/// Fraction of annotators choosing the modal label. Tied modes share the
/// maximum count, so no tie-break is needed.
inline double variation_ratio_agreement(std::span<const std::string> annotations) {
    if (annotations.empty()) throw ValidationError("variation_ratio_agreement: empty annotation list");
    std::map<std::string_view, std::size_t> counts;
    for (const auto& a : annotations) ++counts[a];
    std::size_t mode = 0;
    for (const auto& [label, count] : counts) mode = std::max(mode, count);
    return static_cast<double>(mode) / static_cast<double>(annotations.size());
}

struct QuantileStratum {
    double q = 0.0;
    std::size_t size = 0;   // ceil(q * N) records in each of bottom and top
    double acc_bottom = 0.0;
    double acc_top = 0.0;
    double gap = 0.0;       // acc_top - acc_bottom
};

struct StrataReport {
    double accuracy = 0.0;
    std::optional<double> mean_pvi_true;  // absent when nothing was correct
    std::optional<double> mean_pvi_false; // absent when nothing was incorrect
    std::vector<QuantileStratum> strata;

    const QuantileStratum* stratum(double q) const {
        for (const auto& s : strata) {
            if (s.q == q) return &s;
        }
        return nullptr;
    }
};

/// Accuracy overall and within bottom/top PVI strata. Records are ordered by
/// ascending pvi_bits with ties broken by instance id; each stratum holds
/// ceil(q*N) records.
inline StrataReport strata_report(std::span<const ScoredInstance> scored,
                                  const std::vector<double>& quantiles = {0.2, 0.5}) {
    if (scored.empty()) throw ValidationError("strata_report: no records");
    for (const double q : quantiles) {
        if (!(q > 0.0) || q > 0.5) throw ValidationError("strata_report: quantiles must lie in (0, 0.5]");
    }

    std::vector<const ScoredInstance*> order;
    order.reserve(scored.size());
    for (const auto& s : scored) order.push_back(&s);
    std::sort(order.begin(), order.end(), [](const ScoredInstance* a, const ScoredInstance* b) {
        if (a->pvi_bits != b->pvi_bits) return a->pvi_bits < b->pvi_bits;
        return a->instance_id < b->instance_id;
    });

    const auto accuracy_of = [](auto first, auto last) {
        std::size_t correct = 0, count = 0;
        for (auto it = first; it != last; ++it, ++count) correct += (*it)->correct ? 1 : 0;
        return static_cast<double>(correct) / static_cast<double>(count);
    };

    StrataReport report;
    report.accuracy = accuracy_of(order.begin(), order.end());

    double sum_true = 0.0, sum_false = 0.0;
    std::size_t n_true = 0, n_false = 0;
    for (const auto& s : scored) {
        if (s.correct) {
            sum_true += s.pvi_bits;
            ++n_true;
        } else {
            sum_false += s.pvi_bits;
            ++n_false;
        }
    }
    if (n_true > 0) report.mean_pvi_true = sum_true / static_cast<double>(n_true);
    if (n_false > 0) report.mean_pvi_false = sum_false / static_cast<double>(n_false);

    const std::size_t n = order.size();
    for (const double q : quantiles) {
        QuantileStratum s;
        s.q = q;
        s.size = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
        s.size = std::max<std::size_t>(1, std::min(s.size, n));
        s.acc_bottom = accuracy_of(order.begin(), order.begin() + static_cast<long>(s.size));
        s.acc_top = accuracy_of(order.end() - static_cast<long>(s.size), order.end());
        s.gap = s.acc_top - s.acc_bottom;
        report.strata.push_back(s);
    }
    return report;
}

struct HistogramBin {
    double left = 0.0;
    double right = 0.0;
    std::size_t count_correct = 0;
    std::size_t count_incorrect = 0;

    std::size_t total() const { return count_correct + count_incorrect; }
};

/// Equal-width bins over [min_pvi, max_pvi]; a degenerate range collapses to
/// one bin holding everything. Counts are always kept per correctness series;
/// use total() for the merged view.
inline std::vector<HistogramBin> histogram(std::span<const ScoredInstance> scored, std::size_t bins) {
    if (bins < 1) throw ValidationError("histogram: need at least one bin");
    if (scored.empty()) throw ValidationError("histogram: no records");

    double lo = scored.front().pvi_bits, hi = scored.front().pvi_bits;
    for (const auto& s : scored) {
        lo = std::min(lo, s.pvi_bits);
        hi = std::max(hi, s.pvi_bits);
    }

    std::vector<HistogramBin> out;
    if (lo == hi) {
        HistogramBin bin;
        bin.left = lo;
        bin.right = hi;
        for (const auto& s : scored) (s.correct ? bin.count_correct : bin.count_incorrect)++;
        out.push_back(bin);
        return out;
    }

    const double width = (hi - lo) / static_cast<double>(bins);
    out.resize(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        out[b].left = lo + width * static_cast<double>(b);
        out[b].right = (b + 1 == bins) ? hi : lo + width * static_cast<double>(b + 1);
    }
    for (const auto& s : scored) {
        std::size_t b = static_cast<std::size_t>((s.pvi_bits - lo) / width);
        b = std::min(b, bins - 1);
        (s.correct ? out[b].count_correct : out[b].count_incorrect)++;
    }
    return out;
}

struct NamedPviRun {
    std::string label;
    std::vector<double> pvi;
};

struct ConsistencySummary {
    double mean_r = 0.0;
    double median_r = 0.0;
    double frac_above_0_6 = 0.0; // fraction of pairs with r > 0.6
    double frac_below_0_3 = 0.0; // fraction of pairs with r < 0.3
    std::size_t pairs = 0;
};

struct ConsistencyMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<CorrelationResult>> cells; // symmetric, unit diagonal
    ConsistencySummary summary;                        // over off-diagonal pairs
};

/// Pairwise Pearson correlations between aligned PVI vectors, plus the
/// mean/median/threshold summary over the off-diagonal pairs.
inline ConsistencyMatrix consistency_matrix(const std::vector<NamedPviRun>& runs) {
    if (runs.size() < 2) throw ValidationError("consistency_matrix: need at least 2 runs");
    const std::size_t n = runs.front().pvi.size();
    for (const auto& run : runs) {
        if (run.pvi.size() != n) {
            throw ValidationError("consistency_matrix: run '" + run.label + "' has " +
                                  std::to_string(run.pvi.size()) + " values, expected " + std::to_string(n));
        }
    }

    ConsistencyMatrix m;
    m.cells.assign(runs.size(), std::vector<CorrelationResult>(runs.size()));
    std::vector<double> rs;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        m.labels.push_back(runs[i].label);
        m.cells[i][i] = CorrelationResult{1.0, std::nullopt, n};
        for (std::size_t j = i + 1; j < runs.size(); ++j) {
            const CorrelationResult r = pearson(runs[i].pvi, runs[j].pvi);
            m.cells[i][j] = r;
            m.cells[j][i] = r;
            rs.push_back(r.r);
        }
    }

    std::sort(rs.begin(), rs.end());
    m.summary.pairs = rs.size();
    m.summary.mean_r = std::accumulate(rs.begin(), rs.end(), 0.0) / static_cast<double>(rs.size());
    m.summary.median_r = (rs.size() % 2 == 1) ? rs[rs.size() / 2]
                                              : 0.5 * (rs[rs.size() / 2 - 1] + rs[rs.size() / 2]);
    const auto frac = [&](auto pred) {
        const auto k = std::count_if(rs.begin(), rs.end(), pred);
        return static_cast<double>(k) / static_cast<double>(rs.size());
    };
    m.summary.frac_above_0_6 = frac([](double r) { return r > 0.6; });
    m.summary.frac_below_0_3 = frac([](double r) { return r < 0.3; });
    return m;
}

} // namespace icpvi
