#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tsa {

enum class Estimator { memory, iterative };

std::string to_string(Estimator e);
Estimator parse_estimator(const std::string& name);

struct TrainConfig {
    double lambda0 = 0.25;
    double beta = 0.1;
    std::size_t total_iters = 2000;
    std::size_t batch_size = 32;
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::vector<std::size_t> hidden_widths{32, 32};
    std::uint64_t seed = 0;
    std::size_t stats_refresh_k = 1;
    Estimator estimator = Estimator::memory;
    double rho = 1.0;
    std::size_t eval_interval = 50;

    // Throws ConfigError describing the first violated constraint.
    void validate() const;
};

// Flat `key = value` text, '#' starts a comment. Keys match the long CLI
// flags without the leading dashes: lambda0, beta, iters, batch-size, lr,
// momentum, hidden, seed, stats-refresh, estimator, rho, eval-interval.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> load_key_values(const std::filesystem::path& path);

// Applies recognised keys onto `config`; unknown keys or malformed values
// raise ConfigError.
void apply_key_values(TrainConfig& config, const std::map<std::string, std::string>& values);

std::string serialize_config(const TrainConfig& config);

}  // namespace tsa
