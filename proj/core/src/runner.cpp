#include "tsa/runner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "tsa/errors.hpp"

namespace tsa {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Independent streams derived from one user seed.
Rng stream(std::uint64_t seed, std::uint64_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(purpose)};
    return Rng(seq);
}

enum StreamPurpose : std::uint64_t { kTrainStream = 0, kDataStream = 1, kSubsampleStream = 2 };

std::vector<std::size_t> slots_for(const MemoryModule& mem, std::span<const std::size_t> idx,
                                   Domain d) {
    std::vector<std::size_t> out(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k)
        out[k] = d == Domain::source ? mem.source_slot(idx[k]) : mem.target_slot(idx[k]);
    return out;
}

std::string csv_value(double v) {
    if (std::isnan(v)) return "nan";
    return format_double(v);
}

}  // namespace

DomainPair make_two_moons_task(std::uint64_t seed) {
    Rng rng = stream(seed, kDataStream);
    DomainPair task;
    task.source = make_moons(kMoonsPerClass, kMoonsNoise, rng);
    task.target = rotate(make_moons(kMoonsPerClass, kMoonsNoise, rng), kMoonsRotation);
    return task;
}

Trainer::Trainer(DomainDataset source, DomainDataset target, TrainConfig config)
    : source_(std::move(source)), target_eval_(std::move(target)), config_(std::move(config)) {
    config_.validate();
    if (source_.size() == 0) throw ConfigError("source dataset is empty");
    if (target_eval_.size() == 0) throw ConfigError("target dataset is empty");
    if (source_.dim() != target_eval_.dim()) {
        throw ConfigError("source and target input dimensions differ");
    }
    if (!source_.fully_labeled()) throw ConfigError("every source row needs a label");
    classes_ = static_cast<std::size_t>(std::max(source_.class_count, target_eval_.class_count));
    if (classes_ < 2) throw ConfigError("need at least two classes");
    source_.class_count = static_cast<int>(classes_);
    target_eval_.class_count = static_cast<int>(classes_);

    rng_ = stream(config_.seed, kTrainStream);
    model_ = init_model(source_.dim(), config_.hidden_widths, classes_, rng_);
    optimizer_ = make_optimizer(model_, config_.learning_rate, config_.momentum);

    target_train_ = target_eval_;
    if (config_.rho < 1.0) {
        // Strata are the initial model's pseudo-labels: target ground truth
        // is never used for training decisions.
        const auto strata = pseudo_label(softmax(forward(model_, target_eval_.inputs).logits));
        Rng sub = stream(config_.seed, kSubsampleStream);
        target_train_ = stratified_subsample(target_eval_, strata, config_.rho, sub);
    }
    std::fill(target_train_.labels.begin(), target_train_.labels.end(), kUnlabeled);

    memory_ = memory_init(source_, target_train_, model_);
    iterative_source_ = make_iterative_state(classes_, model_.feature_dim());
    iterative_target_ = make_iterative_state(classes_, model_.feature_dim());
    {
        const Matrix& f = memory_.features;
        Matrix src(source_.size(), f.cols());
        Matrix tgt(target_train_.size(), f.cols());
        std::copy_n(f.data().begin(), src.size(), src.data().begin());
        std::copy_n(f.data().begin() + static_cast<std::ptrdiff_t>(src.size()), tgt.size(),
                    tgt.data().begin());
        const std::span<const int> labels = memory_.labels;
        iterative_update(iterative_source_, src, labels.subspan(0, source_.size()));
        iterative_update(iterative_target_, tgt, labels.subspan(source_.size()));
    }
    stats_ = active_stats();
}

ClassStats Trainer::memory_stats() const { return estimate_class_stats(memory_, classes_); }

ClassStats Trainer::iterative_stats() const {
    return stats_from_iterative(iterative_source_, iterative_target_);
}

ClassStats Trainer::ideal_stats() const { return ideal_class_stats(source_, target_train_, model_); }

ClassStats Trainer::active_stats() const {
    return config_.estimator == Estimator::memory ? memory_stats() : iterative_stats();
}

void Trainer::step() {
    if (done()) return;
    const std::size_t t = iter_ + 1;
    const double lambda = lambda_schedule(t, config_.total_iters, config_.lambda0);

    const auto src_idx = sample_batch(source_.size(), config_.batch_size, rng_);
    const auto tgt_idx = sample_batch(target_train_.size(), config_.batch_size, rng_);
    const auto src_batch = subset(source_, src_idx);
    const auto tgt_batch = subset(target_train_, tgt_idx);

    const auto src = forward(model_, src_batch.inputs);
    const auto tgt = forward(model_, tgt_batch.inputs);
    const auto pseudo = pseudo_label(softmax(tgt.logits));

    memory_update(memory_, slots_for(memory_, src_idx, Domain::source), src.features,
                  src_batch.labels);
    memory_update(memory_, slots_for(memory_, tgt_idx, Domain::target), tgt.features, pseudo);
    iterative_update(iterative_source_, src.features, src_batch.labels);
    iterative_update(iterative_target_, tgt.features, pseudo);

    if ((t - 1) % config_.stats_refresh_k == 0) stats_ = active_stats();

    report_ = tsa_loss(model_, src, src_batch.labels, tgt, stats_, lambda, config_.beta);
    const Gradients grads = tsa_gradients(model_, src, tgt, report_);
    sgd_step(model_, grads, optimizer_);
    iter_ = t;
}

MetricsRow Trainer::metrics_row() const {
    MetricsRow row;
    row.iter = iter_;
    row.lambda = report_.lambda;
    row.loss_total = report_.total;
    row.loss_inf = report_.l_inf;
    row.loss_mi = report_.l_mi;
    row.src_acc = evaluate(model_, source_);
    row.tgt_acc = target_eval_.fully_labeled() ? evaluate(model_, target_eval_) : kNaN;
    try {
        const auto bias = estimation_bias(active_stats(), ideal_stats());
        row.bias_mu = bias.mu;
        row.bias_sigma = bias.sigma;
    } catch (const UndefinedBias&) {
        row.bias_mu = kNaN;
        row.bias_sigma = kNaN;
    }
    return row;
}

TrainResult train(const DomainDataset& source, const DomainDataset& target,
                  const TrainConfig& config) {
    Trainer trainer(source, target, config);
    TrainResult result;
    while (!trainer.done()) {
        trainer.step();
        const std::size_t t = trainer.iteration();
        if (t % config.eval_interval == 0 || t == config.total_iters) {
            result.metrics.push_back(trainer.metrics_row());
        }
    }
    result.model = trainer.model();
    return result;
}

double evaluate(const ModelParams& model, const DomainDataset& ds) {
    if (ds.size() == 0) throw EvalError("evaluate: empty dataset");
    if (!ds.fully_labeled()) throw EvalError("evaluate: dataset has unlabeled rows");
    const auto pred = pseudo_label(forward(model, ds.inputs).logits);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) correct += pred[i] == ds.labels[i];
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

std::vector<BoundaryPoint> boundary_grid(const ModelParams& model, const Bounds& bounds,
                                         std::size_t nx, std::size_t ny) {
    if (model.input_dim() != 2) throw DimensionError("boundary: model input is not 2-D");
    if (nx == 0 || ny == 0) throw ConfigError("boundary: resolution must be >= 1");
    auto axis = [](double lo, double hi, std::size_t n, std::size_t i) {
        if (n == 1) return lo;
        if (i + 1 == n) return hi;
        return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    };
    Matrix inputs(nx * ny, 2);
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            inputs(j * nx + i, 0) = axis(bounds.xmin, bounds.xmax, nx, i);
            inputs(j * nx + i, 1) = axis(bounds.ymin, bounds.ymax, ny, j);
        }
    }
    const auto pred = pseudo_label(forward(model, inputs).logits);
    std::vector<BoundaryPoint> out(inputs.rows());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = {inputs(k, 0), inputs(k, 1), pred[k]};
    return out;
}

std::string boundary_csv(std::span<const BoundaryPoint> grid) {
    std::string out = "x,y,pred\n";
    for (const auto& p : grid)
        out += format_double(p.x) + "," + format_double(p.y) + "," + std::to_string(p.pred) + "\n";
    return out;
}

void dump_boundary(const ModelParams& model, const Bounds& bounds, std::size_t nx,
                   std::size_t ny, const std::filesystem::path& path) {
    write_text(path, boundary_csv(boundary_grid(model, bounds, nx, ny)));
}

std::vector<BiasRow> bias_experiment(const DomainDataset& source, const DomainDataset& target,
                                     const TrainConfig& config) {
    Trainer trainer(source, target, config);
    const std::size_t n = std::max(trainer.source().size(), trainer.target_train().size());
    const std::size_t epoch_len = (n + config.batch_size - 1) / config.batch_size;

    auto measure = [&](std::size_t epoch) {
        BiasRow row;
        row.epoch = epoch;
        const ClassStats ideal = trainer.ideal_stats();
        try {
            row.memory = estimation_bias(trainer.memory_stats(), ideal);
        } catch (const UndefinedBias&) {
            row.memory = {kNaN, kNaN};
        }
        try {
            row.iterative = estimation_bias(trainer.iterative_stats(), ideal);
        } catch (const UndefinedBias&) {
            row.iterative = {kNaN, kNaN};
        }
        return row;
    };

    std::vector<BiasRow> rows{measure(0)};
    while (!trainer.done()) {
        trainer.step();
        if (trainer.iteration() % epoch_len == 0) rows.push_back(measure(trainer.iteration() / epoch_len));
    }
    return rows;
}

std::vector<SweepRow> rho_sweep(const DomainDataset& source, const DomainDataset& target,
                                const TrainConfig& config, std::span<const double> rhos) {
    std::vector<SweepRow> rows;
    for (double rho : rhos) {
        TrainConfig c = config;
        c.rho = rho;
        c.eval_interval = c.total_iters;
        const auto result = train(source, target, c);
        rows.push_back({rho, evaluate(result.model, target)});
    }
    return rows;
}

std::string metrics_csv(std::span<const MetricsRow> rows) {
    std::string out =
        "iter,lambda,loss_total,loss_inf,loss_mi,src_acc,tgt_acc,bias_mu,bias_sigma\n";
    for (const auto& r : rows) {
        out += std::to_string(r.iter) + "," + csv_value(r.lambda) + "," + csv_value(r.loss_total) +
               "," + csv_value(r.loss_inf) + "," + csv_value(r.loss_mi) + "," +
               csv_value(r.src_acc) + "," + csv_value(r.tgt_acc) + "," + csv_value(r.bias_mu) +
               "," + csv_value(r.bias_sigma) + "\n";
    }
    return out;
}

std::string bias_csv(std::span<const BiasRow> rows) {
    std::string out =
        "epoch,bias_mu_memory,bias_sigma_memory,bias_mu_iterative,bias_sigma_iterative\n";
    for (const auto& r : rows) {
        out += std::to_string(r.epoch) + "," + csv_value(r.memory.mu) + "," +
               csv_value(r.memory.sigma) + "," + csv_value(r.iterative.mu) + "," +
               csv_value(r.iterative.sigma) + "\n";
    }
    return out;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
    std::string out = "rho,target_accuracy\n";
    for (const auto& r : rows) out += csv_value(r.rho) + "," + csv_value(r.target_accuracy) + "\n";
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace tsa
