#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsa/linalg.hpp"

namespace tsa {

enum class Domain { source, target };

std::string to_string(Domain d);

inline constexpr int kUnlabeled = -1;

// Feature rows with labels and a domain tag. Target labels, when present,
// are ground truth kept for evaluation only; training never reads them.
struct DomainDataset {
    Matrix inputs;            // n x d
    std::vector<int> labels;  // n entries in [0, class_count) or kUnlabeled
    Domain domain = Domain::source;
    int class_count = 0;

    std::size_t size() const noexcept { return inputs.rows(); }
    std::size_t dim() const noexcept { return inputs.cols(); }
    bool fully_labeled() const noexcept;
};

// Source and/or target rows read from one CSV file.
struct DomainTask {
    std::optional<DomainDataset> source;
    std::optional<DomainDataset> target;
};

// Two interleaving half circles: class 0 on the upper unit arc, class 1 on
// the lower arc shifted by (1, -0.5). Rows are class 0 first, then class 1.
DomainDataset make_moons(std::size_t n_per_class, double noise_sd, Rng& rng);

// Rotates every input about the dataset centroid and retags it as target.
DomainDataset rotate(const DomainDataset& ds, double degrees);

DomainDataset subset(const DomainDataset& ds, std::span<const std::size_t> indices);

// Keeps round(rho * n_c) rows (at least one) of every stratum c, chosen
// uniformly; `strata` assigns each row to a stratum. rho == 1 returns the
// dataset unchanged, without touching the generator.
DomainDataset stratified_subsample(const DomainDataset& ds, std::span<const int> strata,
                                   double rho, Rng& rng);

// Indices drawn without replacement when batch_size <= n, with replacement
// otherwise.
std::vector<std::size_t> sample_batch(std::size_t n, std::size_t batch_size, Rng& rng);

// CSV contract: header `domain,label,x1,...,xd`; label -1 or empty marks an
// unlabeled target row. class_count is shared by both domains.
DomainTask load_csv(const std::filesystem::path& path);
DomainTask parse_csv(const std::string& text);
std::string serialize_csv(const DomainTask& task);
void save_csv(const DomainTask& task, const std::filesystem::path& path);

// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

}  // namespace tsa
