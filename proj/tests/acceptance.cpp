// Acceptance suite: runs the ten release criteria end to end and prints one
// PASS/FAIL line per criterion. Exit code is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oodlab/experiment.hpp"

using namespace oodlab;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("criterion %2d: %s  %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
    if (!pass) ++failures;
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

Vector random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
    Vector v(n);
    for (double& x : v) x = scale * rng.next_gaussian();
    return v;
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness for CE, Triplet (hinge-active, off-kink), Prototype.
// ---------------------------------------------------------------------------
void criterion_gradients() {
    auto start = Clock::now();
    Rng rng(20240801);
    double worst = 0.0;

    for (int trial = 0; trial < 100; ++trial) {  // cross-entropy
        Vector logits = random_vector(rng, 4, 2.0);
        int label = static_cast<int>(rng.next_below(4));
        auto loss = [&](const Vector& z) { return ce_loss(z, label).loss; };
        worst = std::max(worst, grad_check(loss, logits, ce_loss(logits, label).grad_logits));
    }

    int checked = 0;  // triplet, hinge active and away from the kink
    while (checked < 100) {
        Vector a = random_vector(rng, 4), p = random_vector(rng, 4), n = random_vector(rng, 4);
        const double margin = 1.0;
        double hinge = squared_euclidean(a, p) - squared_euclidean(a, n) + margin;
        if (hinge < 1e-2) continue;
        ++checked;
        Vector params;
        for (const Vector* part : {&a, &p, &n}) {
            params.insert(params.end(), part->begin(), part->end());
        }
        auto loss = [&](const Vector& q) {
            Vector qa(q.begin(), q.begin() + 4);
            Vector qp(q.begin() + 4, q.begin() + 8);
            Vector qn(q.begin() + 8, q.end());
            return triplet_loss(qa, qp, qn, margin).loss;
        };
        TripletLossResult r = triplet_loss(a, p, n, margin);
        Vector analytic;
        for (const Vector* part : {&r.grad_anchor, &r.grad_positive, &r.grad_negative}) {
            analytic.insert(analytic.end(), part->begin(), part->end());
        }
        worst = std::max(worst, grad_check(loss, params, analytic));
    }

    for (int trial = 0; trial < 100; ++trial) {  // prototype total
        const std::size_t n = 5, ed = 3, classes = 3;
        Vector params = random_vector(rng, n * ed + classes * ed);
        std::vector<int> labels(n);
        for (int& label : labels) label = static_cast<int>(rng.next_below(classes));
        double lambda = rng.next_double();
        double tau = 0.2 + rng.next_double();
        auto unpack = [&](const Vector& q, Matrix& em, PrototypeBank& bank) {
            em = Matrix(n, ed);
            std::copy(q.begin(), q.begin() + n * ed, em.storage().begin());
            bank.prototypes = Matrix(classes, ed);
            std::copy(q.begin() + n * ed, q.end(), bank.prototypes.storage().begin());
        };
        auto loss = [&](const Vector& q) {
            Matrix em;
            PrototypeBank bank;
            unpack(q, em, bank);
            return prototype_total(em, bank, labels, lambda, tau).loss;
        };
        Matrix em;
        PrototypeBank bank;
        unpack(params, em, bank);
        PrototypeTotalResult r = prototype_total(em, bank, labels, lambda, tau);
        Vector analytic = r.grad_embeddings.storage();
        analytic.insert(analytic.end(), r.grad_prototypes.storage().begin(),
                        r.grad_prototypes.storage().end());
        worst = std::max(worst, grad_check(loss, params, analytic));
    }

    double elapsed = seconds_since(start);
    char detail[128];
    std::snprintf(detail, sizeof(detail),
                  "gradient checks: max rel err %.3g (<= 1e-5), %.2f s (< 10 s)", worst,
                  elapsed);
    report(1, worst <= 1e-5 && elapsed < 10.0, detail);
}

// ---------------------------------------------------------------------------
// 2. AP forward equals the hard-step brute force when gaps exceed delta.
// ---------------------------------------------------------------------------
void criterion_ap_forward() {
    auto start = Clock::now();
    Rng rng(20240802);
    const double delta = 0.3;
    double worst = 0.0;
    int done = 0;
    while (done < 200) {
        const std::size_t n = 3 + rng.next_below(12);
        Vector scores(n);
        std::vector<std::size_t> slots(n);
        for (std::size_t i = 0; i < n; ++i) slots[i] = i;
        rng.shuffle(slots);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = 1.5 * delta * static_cast<double>(slots[i]);
        }
        std::vector<int> positive(n);
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            positive[i] = rng.next_below(2) == 0 ? 1 : 0;
            (positive[i] ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        ++done;
        double smoothed = ap_loss_one_class(scores, positive, delta).loss;
        double hard = ap_brute_force(scores, positive);
        worst = std::max(worst, std::fabs(smoothed - hard));
    }
    double elapsed = seconds_since(start);
    char detail[128];
    std::snprintf(detail, sizeof(detail),
                  "forward vs brute force: max |diff| %.3g (<= 1e-9), %.2f s (< 5 s)", worst,
                  elapsed);
    report(2, worst <= 1e-9 && elapsed < 5.0, detail);
}

// ---------------------------------------------------------------------------
// 3. The error-driven gradient is a descent direction for the smoothed loss.
// ---------------------------------------------------------------------------
void criterion_ap_descent() {
    Rng rng(20240803);
    int nonzero = 0, decreased = 0;
    while (nonzero < 100) {
        const std::size_t n = 6 + rng.next_below(10);
        const std::size_t c = 2 + rng.next_below(3);
        Matrix scores(n, c);
        for (double& v : scores.storage()) v = rng.next_gaussian();
        std::vector<int> labels(n);
        for (int& label : labels) label = static_cast<int>(rng.next_below(c));
        ApLossResult r = ap_loss(scores, labels, 1.0);
        if (r.active_classes == 0 || r.loss <= 1e-6) continue;
        ++nonzero;
        Matrix stepped = scores;
        for (std::size_t i = 0; i < stepped.storage().size(); ++i) {
            stepped.storage()[i] -= 1e-4 * r.grad_scores.storage()[i];
        }
        if (ap_loss(stepped, labels, 1.0).loss < r.loss) ++decreased;
    }
    char detail[96];
    std::snprintf(detail, sizeof(detail), "loss decreased in %d/100 nonzero instances (>= 99)",
                  decreased);
    report(3, decreased >= 99, detail);
}

// ---------------------------------------------------------------------------
// 4. Rank-sum AUROC equals O(n^2) pair counting, ties half-credited.
// ---------------------------------------------------------------------------
void criterion_auroc_oracle() {
    Rng rng(20240804);
    bool all_equal = true;
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t n_id = 1 + rng.next_below(40);
        std::size_t n_ood = 1 + rng.next_below(40);
        Vector id(n_id), ood(n_ood);
        for (double& v : id) v = static_cast<double>(rng.next_below(10));
        for (double& v : ood) v = static_cast<double>(rng.next_below(10));

        double wins = 0.0;
        for (double o : ood) {
            for (double i : id) {
                if (o > i) wins += 1.0;
                else if (o == i) wins += 0.5;
            }
        }
        double pairs = wins / (static_cast<double>(n_id) * static_cast<double>(n_ood));
        if (auroc(id, ood) != pairs) {
            all_equal = false;
            break;
        }
    }
    report(4, all_equal, "rank-sum equals pair counting exactly on 1000 instances");
}

// ---------------------------------------------------------------------------
// 5. Welch statistics match a high-precision reference.
// ---------------------------------------------------------------------------
double t_density(double x, double nu) {
    double log_norm =
        std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) - 0.5 * std::log(nu * M_PI);
    return std::exp(log_norm - (nu + 1.0) / 2.0 * std::log1p(x * x / nu));
}

double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fb,
               double fm, double eps, int depth) {
    double m = 0.5 * (a + b);
    double flm = f(0.5 * (a + m)), frm = f(0.5 * (m + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * eps) {
        return left + right + (left + right - whole) / 15.0;
    }
    return simpson(f, a, m, fa, fm, flm, eps / 2.0, depth - 1) +
           simpson(f, m, b, fm, fb, frm, eps / 2.0, depth - 1);
}

void criterion_welch_oracle() {
    Rng rng(20240805);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t na = 3 + rng.next_below(12);
        std::size_t nb = 3 + rng.next_below(12);
        Vector a(na), b(nb);
        for (double& v : a) v = rng.next_gaussian();
        for (double& v : b) v = 1.3 * rng.next_gaussian() + 0.3;

        // Reference t / nu from first principles.
        auto mean_var = [](const Vector& v) {
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            double ss = 0.0;
            for (double x : v) ss += (x - mean) * (x - mean);
            return std::pair<double, double>{mean, ss / static_cast<double>(v.size() - 1)};
        };
        auto [ma, va] = mean_var(a);
        auto [mb, vb] = mean_var(b);
        double sa = va / static_cast<double>(na), sb = vb / static_cast<double>(nb);
        double t_ref = (ma - mb) / std::sqrt(sa + sb);
        double nu_ref = (sa + sb) * (sa + sb) /
                        (sa * sa / static_cast<double>(na - 1) +
                         sb * sb / static_cast<double>(nb - 1));
        auto f = [nu_ref](double x) { return t_density(x, nu_ref); };
        double limit = std::fabs(t_ref);
        double p_ref =
            1.0 - 2.0 * simpson(f, 0.0, limit, f(0.0), f(limit), f(limit / 2.0), 1e-13, 40);

        WelchResult r = welch_t_test(a, b);
        worst = std::max({worst, std::fabs(r.t - t_ref), std::fabs(r.nu - nu_ref),
                          std::fabs(r.p - p_ref)});
    }
    WelchResult identical = welch_t_test({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0});
    char detail[128];
    std::snprintf(detail, sizeof(detail),
                  "max |t/nu/p error| %.3g (<= 1e-6); identical samples give p = %g", worst,
                  identical.p);
    report(5, worst <= 1e-6 && identical.p == 1.0, detail);
}

// ---------------------------------------------------------------------------
// 6. Semi-hard mining constraint over 1e4 mined triplets.
// ---------------------------------------------------------------------------
void criterion_mining() {
    Rng rng(20240806);
    const double margin = 1.0;
    std::size_t mined = 0, violations = 0, semi_hard = 0;
    while (mined < 10000) {
        Matrix embeddings(24, 4);
        std::vector<int> labels(24);
        for (double& v : embeddings.storage()) v = rng.next_gaussian();
        for (int& label : labels) label = static_cast<int>(rng.next_below(4));
        std::vector<Triplet> triplets =
            mine_triplets(embeddings, labels, MiningStrategy::semi_hard, margin, rng);
        mined += triplets.size();
        for (const Triplet& t : triplets) {
            if (t.selection != TripletSelection::semi_hard) continue;
            ++semi_hard;
            double d_ap = squared_euclidean(embeddings.row_vector(t.anchor),
                                            embeddings.row_vector(t.positive));
            double d_an = squared_euclidean(embeddings.row_vector(t.anchor),
                                            embeddings.row_vector(t.negative));
            if (!(d_ap < d_an && d_an < d_ap + margin)) ++violations;
        }
    }
    char detail[128];
    std::snprintf(detail, sizeof(detail),
                  "%zu mined, %zu semi-hard, %zu window violations (== 0)", mined, semi_hard,
                  violations);
    report(6, violations == 0 && semi_hard > 0, detail);
}

// ---------------------------------------------------------------------------
// 7-10. End-to-end benchmark criteria over the four default presets.
// ---------------------------------------------------------------------------
struct BenchmarkOutcome {
    ComparisonReport report;
    std::vector<RunMetrics> runs;
    fs::path dir;
    double seconds = 0.0;
};

BenchmarkOutcome run_benchmark(const fs::path& dir) {
    auto start = Clock::now();
    BenchmarkOutcome outcome;
    outcome.dir = dir;
    fs::remove_all(dir);
    outcome.report = compare(preset_group("cifar10-analog"), dir);
    outcome.runs = load_metrics_csv(dir / "metrics.csv");
    outcome.seconds = seconds_since(start);
    return outcome;
}

void criterion_end_to_end(const BenchmarkOutcome& outcome) {
    bool pass = outcome.seconds < 300.0;
    std::string detail;
    for (const ObjectiveAggregate& agg : outcome.report.aggregates) {
        double acc = agg.metrics[0].mean;
        double far = agg.metrics[2].mean;
        bool ok = acc >= 0.95 && far >= 0.95;
        pass = pass && ok;
        char part[96];
        std::snprintf(part, sizeof(part), "%s[acc %.3f%s far %.3f%s] ", agg.objective.c_str(),
                      acc, acc >= 0.95 ? "+" : "-", far, far >= 0.95 ? "+" : "-");
        detail += part;
    }
    char timing[64];
    std::snprintf(timing, sizeof(timing), "(%.0f s < 300 s)", outcome.seconds);
    detail += timing;
    report(7, pass, detail);
}

void criterion_near_far_order(const BenchmarkOutcome& outcome) {
    bool pass = true;
    std::string detail;
    for (const ObjectiveAggregate& agg : outcome.report.aggregates) {
        double near = agg.metrics[1].mean;
        double far = agg.metrics[2].mean;
        bool ok = far >= near;
        pass = pass && ok;
        char part[96];
        std::snprintf(part, sizeof(part), "%s[near %.3f far %.3f%s] ", agg.objective.c_str(),
                      near, far, ok ? "+" : "-");
        detail += part;
    }
    report(8, pass, detail);
}

void criterion_determinism(const BenchmarkOutcome& first) {
    BenchmarkOutcome second = run_benchmark(first.dir.parent_path() / "benchmark_rerun");
    std::vector<std::string> files = {"metrics.csv", "report.md", "report.json"};
    for (const ObjectiveAggregate& agg : first.report.aggregates) {
        files.push_back(agg.objective + "/metrics.csv");
        files.push_back(agg.objective + "/runs/run_0/checkpoint.json");
        files.push_back(agg.objective + "/runs/run_0/metrics.json");
        files.push_back(agg.objective + "/runs/run_2/scores_far_ood.csv");
    }
    std::size_t mismatches = 0;
    for (const std::string& rel : files) {
        if (slurp(first.dir / rel) != slurp(second.dir / rel)) ++mismatches;
    }
    char detail[128];
    std::snprintf(detail, sizeof(detail), "%zu of %zu compared files differ between reruns",
                  mismatches, files.size());
    report(9, mismatches == 0, detail);
}

void criterion_report_fidelity(const BenchmarkOutcome& outcome) {
    bool pass = true;
    std::string why;

    // Recomputable from persisted per-run metrics.
    ComparisonReport recomputed = report_from_metrics_csv(outcome.dir / "metrics.csv");
    if (render_markdown(recomputed) != slurp(outcome.dir / "report.md")) {
        pass = false;
        why += "report.md not recomputable; ";
    }

    if (recomputed.tables.size() != 3) {
        pass = false;
        why += "expected 3 tables; ";
    }
    for (const MetricTable& table : recomputed.tables) {
        if (table.rows.size() != 4) {
            pass = false;
            why += "table missing rows; ";
        }
        for (std::size_t r = 0; r + 1 < table.rows.size(); ++r) {
            if (table.rows[r].summary.mean < table.rows[r + 1].summary.mean) {
                pass = false;
                why += "rows unsorted; ";
            }
            // Marker exactly where the recomputed Welch test is significant.
            Vector sample_a, sample_b;
            for (const RunMetrics& m : outcome.runs) {
                double value = table.metric == "id_accuracy"  ? m.id_accuracy
                               : table.metric == "near_auroc" ? m.near_auroc
                                                              : m.far_auroc;
                if (m.objective == table.rows[r].objective) sample_a.push_back(value);
                if (m.objective == table.rows[r + 1].objective) sample_b.push_back(value);
            }
            WelchResult expected = welch_t_test(sample_a, sample_b);
            if (table.rows[r].vs_next.significant != (expected.p < 0.05)) {
                pass = false;
                why += "marker mismatch; ";
            }
        }
    }
    // Markers in the markdown match the significant flags.
    std::string md = slurp(outcome.dir / "report.md");
    std::size_t md_markers = 0;
    for (std::size_t pos = md.find("(**)"); pos != std::string::npos;
         pos = md.find("(**)", pos + 1)) {
        ++md_markers;
    }
    std::size_t expected_markers = 0;
    for (const MetricTable& table : recomputed.tables) {
        for (const RankedRow& row : table.rows) {
            if (row.has_next && row.vs_next.significant) ++expected_markers;
        }
    }
    if (md_markers != expected_markers) {
        pass = false;
        why += "markdown marker count mismatch; ";
    }
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "3 sorted tables, %zu (**) markers, recomputed from metrics.csv %s",
                  expected_markers, why.empty() ? "" : why.c_str());
    report(10, pass, detail);
}

}  // namespace

int main() {
    std::printf("== acceptance suite ==\n");
    criterion_gradients();
    criterion_ap_forward();
    criterion_ap_descent();
    criterion_auroc_oracle();
    criterion_welch_oracle();
    criterion_mining();

    fs::path base = fs::temp_directory_path() / "oodlab_acceptance";
    BenchmarkOutcome outcome = run_benchmark(base / "benchmark");
    criterion_end_to_end(outcome);
    criterion_near_far_order(outcome);
    criterion_determinism(outcome);
    criterion_report_fidelity(outcome);

    std::printf("== %d criteria failed ==\n", failures);
    return failures;
}
