#include "tsa/stats.hpp"

#include <algorithm>

#include "tsa/errors.hpp"

namespace tsa {

MemoryModule make_memory(std::size_t source_count, std::size_t target_count,
                         std::size_t feature_dim) {
    MemoryModule mem;
    const std::size_t slots = source_count + target_count;
    mem.features = Matrix(slots, feature_dim);
    mem.labels.assign(slots, kUnlabeled);
    mem.domains.assign(source_count, Domain::source);
    mem.domains.resize(slots, Domain::target);
    mem.initialized.assign(slots, false);
    mem.source_count = source_count;
    return mem;
}

MemoryModule memory_init(const DomainDataset& source, const DomainDataset& target,
                         const ModelParams& model) {
    MemoryModule mem = make_memory(source.size(), target.size(), model.feature_dim());

    const auto src = forward(model, source.inputs);
    std::vector<std::size_t> slots(source.size());
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = mem.source_slot(i);
    memory_update(mem, slots, src.features, source.labels);

    const auto tgt = forward(model, target.inputs);
    const auto pseudo = pseudo_label(softmax(tgt.logits));
    slots.resize(target.size());
    for (std::size_t j = 0; j < slots.size(); ++j) slots[j] = mem.target_slot(j);
    memory_update(mem, slots, tgt.features, pseudo);
    return mem;
}

void memory_update(MemoryModule& mem, std::span<const std::size_t> slots, const Matrix& features,
                   std::span<const int> labels) {
    if (features.rows() != slots.size() || labels.size() != slots.size()) {
        throw DimensionError("memory_update: batch sizes disagree");
    }
    if (!slots.empty() && features.cols() != mem.features.cols()) {
        throw DimensionError("memory_update: feature width mismatch");
    }
    for (std::size_t s : slots) {
        if (s >= mem.slot_count()) {
            throw IndexError("memory_update: slot " + std::to_string(s) + " out of range");
        }
    }
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const auto src = features.row(k);
        std::copy(src.begin(), src.end(), mem.features.row(slots[k]).begin());
        mem.labels[slots[k]] = labels[k];
        mem.initialized[slots[k]] = true;
    }
}

ClassStats estimate_class_stats(const MemoryModule& mem, std::size_t class_count) {
    const std::size_t dim = mem.features.cols();
    std::vector<std::vector<Vector>> src(class_count);
    std::vector<std::vector<Vector>> tgt(class_count);
    for (std::size_t s = 0; s < mem.slot_count(); ++s) {
        const int y = mem.labels[s];
        if (!mem.initialized[s] || y < 0 || static_cast<std::size_t>(y) >= class_count) continue;
        const auto row = mem.features.row(s);
        auto& bucket = mem.domains[s] == Domain::source ? src[y] : tgt[y];
        bucket.emplace_back(row.begin(), row.end());
    }

    ClassStats out;
    out.classes.resize(class_count);
    for (std::size_t c = 0; c < class_count; ++c) {
        auto& cs = out.classes[c];
        cs.count_s = src[c].size();
        cs.count_t = tgt[c].size();
        cs.mu_s = cs.count_s ? mean(src[c]) : Vector(dim, 0.0);
        cs.mu_t = cs.count_t ? mean(tgt[c]) : Vector(dim, 0.0);
        cs.enabled = cs.count_s > 0 && cs.count_t > 0;
        if (cs.enabled) {
            cs.delta_mu = subtract(cs.mu_t, cs.mu_s);
            cs.sigma_t = covariance(tgt[c], cs.mu_t);
        } else {
            cs.delta_mu = Vector(dim, 0.0);
            cs.sigma_t = Matrix(dim, dim);
        }
    }
    return out;
}

ClassStats ideal_class_stats(const DomainDataset& source, const DomainDataset& target,
                             const ModelParams& model) {
    return estimate_class_stats(memory_init(source, target, model), model.class_count());
}

IterativeState make_iterative_state(std::size_t class_count, std::size_t feature_dim) {
    IterativeState st;
    st.classes.resize(class_count);
    for (auto& m : st.classes) {
        m.mean = Vector(feature_dim, 0.0);
        m.covariance = Matrix(feature_dim, feature_dim);
    }
    return st;
}

void iterative_update(IterativeState& state, const Matrix& features, std::span<const int> labels) {
    if (features.rows() != labels.size()) {
        throw DimensionError("iterative_update: batch sizes disagree");
    }
    const std::size_t classes = state.classes.size();
    std::vector<std::vector<Vector>> buckets(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= classes) continue;
        const auto row = features.row(i);
        buckets[y].emplace_back(row.begin(), row.end());
    }
    for (std::size_t c = 0; c < classes; ++c) {
        if (buckets[c].empty()) continue;
        auto& m = state.classes[c];
        if (m.mean.size() != features.cols()) {
            throw DimensionError("iterative_update: feature width mismatch");
        }
        const Vector batch_mean = mean(buckets[c]);
        const Matrix batch_cov = covariance(buckets[c], batch_mean);
        const double b = static_cast<double>(buckets[c].size());
        const double eta = b / (static_cast<double>(m.count) + b);
        const Vector shift = subtract(m.mean, batch_mean);

        Matrix cov = add(scale(m.covariance, 1.0 - eta), scale(batch_cov, eta));
        add_outer(cov, shift, shift, eta * (1.0 - eta));
        for (std::size_t k = 0; k < m.mean.size(); ++k)
            m.mean[k] = (1.0 - eta) * m.mean[k] + eta * batch_mean[k];
        m.covariance = std::move(cov);
        m.count += buckets[c].size();
    }
}

ClassStats stats_from_iterative(const IterativeState& source, const IterativeState& target) {
    if (source.classes.size() != target.classes.size()) {
        throw DimensionError("stats_from_iterative: class counts differ");
    }
    ClassStats out;
    out.classes.resize(source.classes.size());
    for (std::size_t c = 0; c < out.classes.size(); ++c) {
        const auto& s = source.classes[c];
        const auto& t = target.classes[c];
        auto& cs = out.classes[c];
        const std::size_t dim = t.mean.size();
        cs.mu_s = s.mean;
        cs.mu_t = t.mean;
        cs.count_s = s.count;
        cs.count_t = t.count;
        cs.enabled = s.count > 0 && t.count > 0;
        if (cs.enabled) {
            cs.delta_mu = subtract(t.mean, s.mean);
            cs.sigma_t = t.covariance;
        } else {
            cs.delta_mu = Vector(dim, 0.0);
            cs.sigma_t = Matrix(dim, dim);
        }
    }
    return out;
}

EstimationBias estimation_bias(const ClassStats& practical, const ClassStats& ideal) {
    if (practical.class_count() != ideal.class_count()) {
        throw DimensionError("estimation_bias: class counts differ");
    }
    EstimationBias bias;
    std::size_t used = 0;
    for (std::size_t c = 0; c < practical.class_count(); ++c) {
        const auto& p = practical.classes[c];
        const auto& q = ideal.classes[c];
        if (!p.enabled || !q.enabled) continue;
        bias.mu += norm2(subtract(p.delta_mu, q.delta_mu));
        bias.sigma += frobenius_distance(p.sigma_t, q.sigma_t);
        ++used;
    }
    if (used == 0) throw UndefinedBias("estimation_bias: every class is disabled");
    bias.mu /= static_cast<double>(used);
    bias.sigma /= static_cast<double>(used);
    return bias;
}

}  // namespace tsa
