#include "oodlab/eval_stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace oodlab {

double id_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size() || predictions.empty()) {
        throw std::invalid_argument("id_accuracy: need equal nonempty prediction/label lists");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double auroc(const Vector& id_scores, const Vector& ood_scores) {
    if (id_scores.empty() || ood_scores.empty()) {
        throw std::invalid_argument("auroc: both score lists must be nonempty");
    }
    require_finite(id_scores, "auroc id scores");
    require_finite(ood_scores, "auroc ood scores");

    struct Entry {
        double score;
        bool is_ood;
    };
    std::vector<Entry> all;
    all.reserve(id_scores.size() + ood_scores.size());
    for (double s : id_scores) all.push_back({s, false});
    for (double s : ood_scores) all.push_back({s, true});
    std::sort(all.begin(), all.end(),
              [](const Entry& a, const Entry& b) { return a.score < b.score; });

    // Midranks over tie groups; all quantities are exact half-integers.
    double ood_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        double midrank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (all[k].is_ood) ood_rank_sum += midrank;
        }
        i = j;
    }
    const auto n_ood = static_cast<double>(ood_scores.size());
    const auto n_id = static_cast<double>(id_scores.size());
    double u = ood_rank_sum - n_ood * (n_ood + 1.0) / 2.0;
    return u / (n_id * n_ood);
}

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) {
        throw std::invalid_argument("regularized_incomplete_beta: a, b must be positive");
    }
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;

    // Continued fraction with Lentz's method.
    auto continued_fraction = [](double aa, double bb, double xx) {
        const int max_iter = 500;
        const double eps = 3e-16;
        const double fpmin = 1e-300;
        double qab = aa + bb, qap = aa + 1.0, qam = aa - 1.0;
        double c = 1.0;
        double d = 1.0 - qab * xx / qap;
        if (std::fabs(d) < fpmin) d = fpmin;
        d = 1.0 / d;
        double h = d;
        for (int m = 1; m <= max_iter; ++m) {
            const double m2 = 2.0 * m;
            double coeff = m * (bb - m) * xx / ((qam + m2) * (aa + m2));
            d = 1.0 + coeff * d;
            if (std::fabs(d) < fpmin) d = fpmin;
            c = 1.0 + coeff / c;
            if (std::fabs(c) < fpmin) c = fpmin;
            d = 1.0 / d;
            h *= d * c;
            coeff = -(aa + m) * (qab + m) * xx / ((aa + m2) * (qap + m2));
            d = 1.0 + coeff * d;
            if (std::fabs(d) < fpmin) d = fpmin;
            c = 1.0 + coeff / c;
            if (std::fabs(c) < fpmin) c = fpmin;
            d = 1.0 / d;
            double del = d * c;
            h *= del;
            if (std::fabs(del - 1.0) < eps) break;
        }
        return h;
    };

    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log1p(-x);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return std::exp(ln_front) * continued_fraction(a, b, x) / a;
    }
    return 1.0 - std::exp(ln_front) * continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double nu) {
    if (!(nu > 0.0)) {
        throw std::invalid_argument("student_t_two_sided_p: nu must be positive");
    }
    if (!std::isfinite(t)) return 0.0;
    double x = nu / (nu + t * t);
    return regularized_incomplete_beta(nu / 2.0, 0.5, x);
}

WelchResult welch_t_test(const Vector& a, const Vector& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw std::invalid_argument("welch_t_test: each sample needs >= 2 values");
    }
    auto mean_var = [](const Vector& v) {
        double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::pair<double, double>(mean, ss / static_cast<double>(v.size() - 1));
    };
    auto [ma, va] = mean_var(a);
    auto [mb, vb] = mean_var(b);
    const auto na = static_cast<double>(a.size());
    const auto nb = static_cast<double>(b.size());

    WelchResult out;
    if (va == 0.0 && vb == 0.0) {
        out.degenerate = true;
        out.nu = na + nb - 2.0;  // documented fallback for the degenerate case
        if (ma == mb) {
            out.t = 0.0;
            out.p = 1.0;
        } else {
            std::fprintf(stderr,
                         "warning: welch_t_test on two zero-variance samples with different "
                         "means; reporting p = 0\n");
            out.t = ma > mb ? std::numeric_limits<double>::infinity()
                            : -std::numeric_limits<double>::infinity();
            out.p = 0.0;
        }
        out.significant = out.p < 0.05;
        return out;
    }

    double sa = va / na;
    double sb = vb / nb;
    out.t = (ma - mb) / std::sqrt(sa + sb);
    out.nu = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    out.p = student_t_two_sided_p(out.t, out.nu);
    out.significant = out.p < 0.05;
    return out;
}

namespace {

double metric_value(const RunMetrics& run, std::size_t metric) {
    switch (metric) {
        case 0: return run.id_accuracy;
        case 1: return run.near_auroc;
        default: return run.far_auroc;
    }
}

MetricSummary summarize(const Vector& values) {
    MetricSummary s;
    s.runs = static_cast<int>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) /
             static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
    return s;
}

std::string format_percent(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", value * 100.0);
    return buf;
}

const char* metric_title(std::size_t metric) {
    switch (metric) {
        case 0: return "ID Accuracy";
        case 1: return "Near-OOD AUROC";
        default: return "Far-OOD AUROC";
    }
}

}  // namespace

ComparisonReport aggregate(const std::vector<RunMetrics>& runs) {
    ComparisonReport report;

    std::vector<std::string> order;
    for (const RunMetrics& r : runs) {
        if (std::find(order.begin(), order.end(), r.objective) == order.end()) {
            order.push_back(r.objective);
        }
    }

    // Per-objective metric samples, in first-seen order.
    std::vector<std::array<Vector, 3>> samples(order.size());
    std::vector<std::string> scorers(order.size());
    for (const RunMetrics& r : runs) {
        std::size_t idx = static_cast<std::size_t>(
            std::find(order.begin(), order.end(), r.objective) - order.begin());
        for (std::size_t m = 0; m < 3; ++m) samples[idx][m].push_back(metric_value(r, m));
        scorers[idx] = r.scorer;
    }

    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (samples[i][0].size() < 2) {
            report.notes.push_back("objective '" + order[i] +
                                   "' omitted: fewer than 2 runs available");
            continue;
        }
        kept.push_back(i);
        ObjectiveAggregate agg;
        agg.objective = order[i];
        agg.scorer = scorers[i];
        for (std::size_t m = 0; m < 3; ++m) agg.metrics[m] = summarize(samples[i][m]);
        report.aggregates.push_back(std::move(agg));
    }

    for (std::size_t m = 0; m < 3; ++m) {
        MetricTable& table = report.tables[m];
        table.metric = kMetricNames[m];
        std::vector<std::size_t> ranked = kept;
        std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
            return summarize(samples[a][m]).mean > summarize(samples[b][m]).mean;
        });
        for (std::size_t r = 0; r < ranked.size(); ++r) {
            RankedRow row;
            row.objective = order[ranked[r]];
            row.summary = summarize(samples[ranked[r]][m]);
            if (r + 1 < ranked.size()) {
                row.has_next = true;
                row.vs_next = welch_t_test(samples[ranked[r]][m], samples[ranked[r + 1]][m]);
            }
            table.rows.push_back(std::move(row));
        }
    }
    return report;
}

std::string render_markdown(const ComparisonReport& report) {
    std::ostringstream out;
    out << "# Objective comparison\n\n";
    out << "## Summary (mean ± std over runs, percent)\n\n";
    out << "| Objective | Scorer | ID Accuracy | Near-OOD AUROC | Far-OOD AUROC |\n";
    out << "|---|---|---|---|---|\n";
    for (const ObjectiveAggregate& agg : report.aggregates) {
        out << "| " << agg.objective << " | " << agg.scorer;
        for (std::size_t m = 0; m < 3; ++m) {
            out << " | " << format_percent(agg.metrics[m].mean) << " ± "
                << format_percent(agg.metrics[m].stddev);
        }
        out << " |\n";
    }
    out << "\n";
    for (std::size_t m = 0; m < 3; ++m) {
        const MetricTable& table = report.tables[m];
        out << "## " << metric_title(m) << " (sorted)\n\n";
        out << "| Rank | Objective | Mean ± Std | vs next |\n";
        out << "|---|---|---|---|\n";
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const RankedRow& row = table.rows[r];
            out << "| " << (r + 1) << " | " << row.objective << " | "
                << format_percent(row.summary.mean) << " ± "
                << format_percent(row.summary.stddev) << " | ";
            if (row.has_next) {
                char pbuf[32];
                std::snprintf(pbuf, sizeof(pbuf), "%.4f", row.vs_next.p);
                out << (row.vs_next.significant ? "(**) " : "") << "p=" << pbuf;
            }
            out << " |\n";
        }
        out << "\n";
    }
    if (!report.notes.empty()) {
        out << "## Notes\n\n";
        for (const std::string& note : report.notes) out << "- " << note << "\n";
    }
    return out.str();
}

}  // namespace oodlab
