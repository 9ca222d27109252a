#ifndef OODLAB_EVAL_STATS_HPP
#define OODLAB_EVAL_STATS_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "oodlab/numerics.hpp"

namespace oodlab {

/// Fraction of exact prediction/label matches.
double id_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

/// Probability that a random OOD score exceeds a random ID score, ties
/// half-credited; computed with the rank-sum formulation, which equals exact
/// pair counting. Scores follow the higher-is-more-OOD convention.
double auroc(const Vector& id_scores, const Vector& ood_scores);

struct WelchResult {
    double t = 0.0;
    double nu = 0.0;  // Welch-Satterthwaite degrees of freedom
    double p = 1.0;   // two-sided
    bool significant = false;  // p < 0.05
    bool degenerate = false;   // both variances zero
};

/// Unequal-variance two-sample t-test. Degenerate inputs (both variances
/// zero) resolve to p = 1 for equal means and p = 0 otherwise.
WelchResult welch_t_test(const Vector& a, const Vector& b);

/// Regularized incomplete beta I_x(a, b) via Lentz-style continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// Two-sided p-value for a Student-t statistic: I_{nu/(nu+t^2)}(nu/2, 1/2).
double student_t_two_sided_p(double t, double nu);

struct RunMetrics {
    std::string objective;
    std::string scorer;
    std::uint64_t seed = 0;
    double id_accuracy = 0.0;
    double near_auroc = 0.0;
    double far_auroc = 0.0;

    bool operator==(const RunMetrics&) const = default;
};

inline constexpr std::array<const char*, 3> kMetricNames = {"id_accuracy", "near_auroc",
                                                            "far_auroc"};

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation (n - 1)
    int runs = 0;
};

struct ObjectiveAggregate {
    std::string objective;
    std::string scorer;
    std::array<MetricSummary, 3> metrics;  // indexed like kMetricNames
};

/// One row of a sorted metric table; `vs_next` compares this row's run
/// distribution with the next row's (unset on the last row).
struct RankedRow {
    std::string objective;
    MetricSummary summary;
    bool has_next = false;
    WelchResult vs_next;
};

struct MetricTable {
    std::string metric;
    std::vector<RankedRow> rows;  // descending by mean
};

struct ComparisonReport {
    std::vector<ObjectiveAggregate> aggregates;  // in first-seen objective order
    std::array<MetricTable, 3> tables;
    std::vector<std::string> notes;
};

/// Groups runs by objective, computes mean +- sample std per metric, sorts
/// each metric descending, and runs Welch tests between adjacent pairs.
/// Objectives with fewer than 2 runs are dropped into a report note.
ComparisonReport aggregate(const std::vector<RunMetrics>& runs);

/// Markdown rendering: a summary table in (ID Accuracy, Near-OOD AUROC,
/// Far-OOD AUROC) layout plus one sorted table per metric with (**) markers
/// on significantly different adjacent pairs. Values printed as percent.
std::string render_markdown(const ComparisonReport& report);

}  // namespace oodlab

#endif
