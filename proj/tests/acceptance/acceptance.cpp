// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. `--only 1,4` restricts the run; `--out DIR` receives the
// CSV artifacts (boundaries, bias traces, sweep table, metrics pairs).

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tsa/loss.hpp"
#include "tsa/oracle.hpp"
#include "tsa/runner.hpp"

using namespace tsa;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome(const fs::path&)> run;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Matrix logits_of(const AugmentationInstance& inst) {
    Matrix z = matmul_transposed(inst.features, inst.head_w);
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t c = 0; c < z.cols(); ++c) z(i, c) += inst.head_b[c];
    return z;
}

const std::vector<std::uint64_t> kSeeds{0, 1, 2, 3, 4};

Outcome reduction_exactness(const fs::path&) {
    Rng rng(101);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const auto inst = random_instance(rng, 10, 16, 16, 0.0);
        const Matrix z = logits_of(inst);
        const double l_inf = transferable_loss(z, inst.labels, inst.head_w, inst.stats, 0.0).value;
        worst = std::max(worst, std::abs(l_inf - cross_entropy(z, inst.labels).value));
    }
    return {worst <= 1e-12, fmt("1000 instances, max |L_inf - CE| = %.3g (tol 1e-12)", worst)};
}

Outcome jensen_bound(const fs::path& out) {
    Rng rng(202);
    const double lambdas[] = {0.1, 0.25, 1.0};
    std::size_t held = 0;
    double worst_z = -INFINITY;
    double worst_equality = 0.0;
    std::string csv = "instance_id,lambda,l_inf,mc_value,mc_stderr,margin,holds\n";
    for (int i = 0; i < 100; ++i) {
        auto inst = random_instance(rng, 5, 8, 8, lambdas[i % 3]);
        const auto r = verify_bound(inst, 100000, rng);
        held += r.holds;
        if (r.mc.std_error > 0.0) worst_z = std::max(worst_z, -r.margin / r.mc.std_error);
        csv += std::to_string(i) + "," + format_double(inst.lambda) + "," + format_double(r.l_inf) + "," +
               format_double(r.mc.value) + "," + format_double(r.mc.std_error) + "," +
               format_double(r.margin) + "," + (r.holds ? "1" : "0") + "\n";

        inst.lambda = 0.0;
        const auto z = verify_bound(inst, 1000, rng);
        worst_equality = std::max(worst_equality, std::abs(z.margin));
    }
    write_text(out / "jensen_bound.csv", csv);
    const bool pass = held == 100 && worst_equality <= 1e-12;
    return {pass, fmt("bound held on %zu/100 (worst (mc - L_inf)/se = %.2f), lambda=0 max |margin| = %.3g",
                      held, worst_z, worst_equality)};
}

Outcome mgf_identity(const fs::path&) {
    Rng rng(303);
    double worst = 0.0;
    std::size_t points = 0;
    for (double a : {-1.0, -0.5, 0.0, 0.25, 0.5, 1.0})
        for (double mu : {-1.0, 0.0, 1.5})
            for (double sigma : {0.0, 0.5, 1.0, 2.0}) {
                worst = std::max(worst, mgf_check(a, mu, sigma, 1000000, rng));
                ++points;
            }
    return {worst <= 0.01, fmt("%zu grid points, M=1e6, max relative error = %.4f (tol 0.01)", points, worst)};
}

Outcome gradient_audit(const fs::path&) {
    Rng rng(7);
    double worst_inf = 0.0;
    double worst_mi = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
    for (int i = 0; i < 20; ++i) {
        const auto c = random_audit_case(rng, 32);
        const auto a = audit_network_gradients(c, AuditedLoss::surrogate, 1e-5);
        const auto b = audit_network_gradients(c, AuditedLoss::mutual_information, 1e-5);
        worst_inf = std::max(worst_inf, a.max_relative_error);
        worst_mi = std::max(worst_mi, b.max_relative_error);
        checked += a.checked + b.checked;
        skipped += a.skipped_near_kink + b.skipped_near_kink;
    }
    const bool pass = worst_inf <= 1e-6 && worst_mi <= 1e-6;
    return {pass, fmt("20 networks, max rel error L_inf %.3g, L_MI %.3g (tol 1e-6); %zu checked, %zu near kink",
                      worst_inf, worst_mi, checked, skipped)};
}

Outcome two_moons(const fs::path& out) {
    std::vector<double> tsa_acc;
    std::vector<double> base_acc;
    std::string detail;
    for (auto seed : kSeeds) {
        const auto task = make_two_moons_task(seed);
        TrainConfig tsa_cfg;
        tsa_cfg.seed = seed;
        TrainConfig base_cfg = tsa_cfg;
        base_cfg.lambda0 = 0.0;
        base_cfg.beta = 0.0;

        const auto a = train(task.source, task.target, tsa_cfg);
        const auto b = train(task.source, task.target, base_cfg);
        tsa_acc.push_back(evaluate(a.model, task.target));
        base_acc.push_back(evaluate(b.model, task.target));
        const std::string s = std::to_string(seed);
        dump_boundary(a.model, Bounds{}, 101, 91, out / ("boundary_tsa_seed" + s + ".csv"));
        dump_boundary(b.model, Bounds{}, 101, 91, out / ("boundary_source_only_seed" + s + ".csv"));
        detail += fmt("%s%.3f/%.3f", detail.empty() ? "" : " ", tsa_acc.back(), base_acc.back());
    }
    const double m_tsa = median(tsa_acc);
    const double m_base = median(base_acc);
    const bool reach = m_tsa >= 0.95;
    const bool lift = m_tsa - m_base >= 0.05;
    return {reach && lift,
            fmt("median target acc TSA %.4f (need >= 0.95: %s), source-only %.4f, lift %+.4f (need >= +0.05: %s); "
                "per seed tsa/src-only: %s",
                m_tsa, reach ? "ok" : "no", m_base, m_tsa - m_base, lift ? "ok" : "no", detail.c_str())};
}

Outcome bias_trend(const fs::path& out) {
    std::size_t good_seeds = 0;
    std::string detail;
    for (auto seed : kSeeds) {
        const auto task = make_two_moons_task(seed);
        TrainConfig cfg;
        cfg.seed = seed;
        const auto rows = bias_experiment(task.source, task.target, cfg);
        write_text(out / ("bias_seed" + std::to_string(seed) + ".csv"), bias_csv(rows));
        std::size_t measured = 0;
        std::size_t good = 0;
        for (const auto& r : rows) {
            if (r.epoch <= 3) continue;
            ++measured;
            good += r.memory.mu <= r.iterative.mu && r.memory.sigma <= r.iterative.sigma;
        }
        const double frac = measured ? static_cast<double>(good) / static_cast<double>(measured) : 0.0;
        good_seeds += frac >= 0.8;
        detail += fmt("%s%.3f", detail.empty() ? "" : " ", frac);
    }
    return {good_seeds >= 4,
            fmt("seeds with memory <= iterative in >= 80%% of post-warm-up epochs: %zu/5 (need 4); fractions %s",
                good_seeds, detail.c_str())};
}

Outcome stationarity(const fs::path&) {
    const auto task = make_two_moons_task(0);
    TrainConfig cfg;
    cfg.total_iters = 200;
    cfg.eval_interval = cfg.total_iters;
    // A partly trained model, then frozen.
    const ModelParams model = train(task.source, task.target, cfg).model;
    DomainDataset target = task.target;
    std::fill(target.labels.begin(), target.labels.end(), kUnlabeled);

    MemoryModule mem = make_memory(task.source.size(), target.size(), model.feature_dim());
    const std::size_t b = cfg.batch_size;
    for (std::size_t start = 0; start < task.source.size(); start += b) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(start + b, task.source.size()); ++i) idx.push_back(i);
        const auto batch = subset(task.source, idx);
        memory_update(mem, idx, forward(model, batch.inputs).features, batch.labels);
    }
    for (std::size_t start = 0; start < target.size(); start += b) {
        std::vector<std::size_t> idx;
        std::vector<std::size_t> slots;
        for (std::size_t j = start; j < std::min(start + b, target.size()); ++j) {
            idx.push_back(j);
            slots.push_back(mem.target_slot(j));
        }
        const auto rec = forward(model, subset(target, idx).inputs);
        memory_update(mem, slots, rec.features, pseudo_label(softmax(rec.logits)));
    }

    const auto practical = estimate_class_stats(mem, 2);
    const auto ideal = ideal_class_stats(task.source, target, model);
    std::size_t mismatches = 0;
    std::size_t compared = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        const auto& p = practical.classes[c];
        const auto& q = ideal.classes[c];
        auto cmp = [&](std::span<const double> x, std::span<const double> y) {
            for (std::size_t k = 0; k < x.size(); ++k) mismatches += x[k] != y[k];
            compared += x.size();
        };
        cmp(p.mu_s, q.mu_s);
        cmp(p.mu_t, q.mu_t);
        cmp(p.delta_mu, q.delta_mu);
        cmp(p.sigma_t.data(), q.sigma_t.data());
        mismatches += p.count_s != q.count_s || p.count_t != q.count_t || p.enabled != q.enabled;
    }
    return {mismatches == 0, fmt("%zu of %zu statistic entries differ after one full pass", mismatches, compared)};
}

Outcome rho_trend(const fs::path& out) {
    const std::vector<double> rhos{0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<double> mean_acc(rhos.size(), 0.0);
    for (auto seed : kSeeds) {
        const auto task = make_two_moons_task(seed);
        TrainConfig cfg;
        cfg.seed = seed;
        const auto rows = rho_sweep(task.source, task.target, cfg, rhos);
        write_text(out / ("sweep_seed" + std::to_string(seed) + ".csv"), sweep_csv(rows));
        for (std::size_t i = 0; i < rows.size(); ++i) mean_acc[i] += rows[i].target_accuracy / kSeeds.size();
    }
    std::vector<SweepRow> avg;
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < rhos.size(); ++i) {
        avg.push_back({rhos[i], mean_acc[i]});
        mx += rhos[i] / rhos.size();
        my += mean_acc[i] / rhos.size();
    }
    write_text(out / "sweep.csv", sweep_csv(avg));
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < rhos.size(); ++i) {
        sxy += (rhos[i] - mx) * (mean_acc[i] - my);
        sxx += (rhos[i] - mx) * (rhos[i] - mx);
    }
    const double slope = sxy / sxx;
    const bool ends = mean_acc.back() > mean_acc.front();
    std::string table;
    for (std::size_t i = 0; i < rhos.size(); ++i) table += fmt(" %.1f:%.4f", rhos[i], mean_acc[i]);
    return {ends && slope > 0.0,
            fmt("seed-averaged acc%s; acc(1.0) > acc(0.2): %s; slope %+.3e (need > 0)", table.c_str(),
                ends ? "yes" : "no", slope)};
}

Outcome determinism(const fs::path& out) {
    const auto task = make_two_moons_task(0);
    TrainConfig cfg;
    const auto a = fs::path(out / "metrics_run_a.csv");
    const auto b = fs::path(out / "metrics_run_b.csv");
    write_text(a, metrics_csv(train(task.source, task.target, cfg).metrics));
    write_text(b, metrics_csv(train(task.source, task.target, cfg).metrics));
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string x = slurp(a);
    const std::string y = slurp(b);
    return {!x.empty() && x == y, fmt("two runs, metrics.csv %zu bytes each, identical: %s", x.size(),
                                      x == y ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::string out_dir = "acceptance-out";
    std::vector<int> only;
    app.add_option("--out", out_dir, "directory for CSV artifacts");
    app.add_option("--only", only, "criterion numbers to run")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> criteria{
        {1, "reduction exactness", 5.0, reduction_exactness},
        {2, "Jensen bound", 120.0, jensen_bound},
        {3, "MGF identity", 30.0, mgf_identity},
        {4, "gradient audit", 60.0, gradient_audit},
        {5, "two-moons adaptation", 120.0, two_moons},
        {6, "estimator bias trend", 180.0, bias_trend},
        {7, "stationarity exactness", 10.0, stationarity},
        {8, "rho-sweep trend", 600.0, rho_trend},
        {9, "determinism", 120.0, determinism},
    };

    const fs::path out(out_dir);
    fs::create_directories(out);
    const std::set<int> selected(only.begin(), only.end());
    int failures = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run(out);
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.budget_s;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::printf("criterion %d [%s] %s: %s; %.2f s (budget %.0f s%s)\n", c.id, c.name, pass ? "PASS" : "FAIL",
                    o.detail.c_str(), secs, c.budget_s, in_time ? "" : ", exceeded");
        std::fflush(stdout);
    }
    return failures ? 1 : 0;
}
