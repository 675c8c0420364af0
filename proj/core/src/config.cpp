#include "tsa/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "tsa/dataset.hpp"
#include "tsa/errors.hpp"

namespace tsa {

std::string to_string(Estimator e) { return e == Estimator::memory ? "memory" : "iterative"; }

Estimator parse_estimator(const std::string& name) {
    if (name == "memory") return Estimator::memory;
    if (name == "iterative") return Estimator::iterative;
    throw ConfigError("unknown estimator '" + name + "' (expected memory or iterative)");
}

void TrainConfig::validate() const {
    if (!(lambda0 >= 0.0)) throw ConfigError("lambda0 must be >= 0");
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (total_iters < 1) throw ConfigError("iters must be >= 1");
    if (batch_size < 1) throw ConfigError("batch-size must be >= 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("lr must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (hidden_widths.empty()) throw ConfigError("hidden must list at least one layer width");
    for (auto w : hidden_widths)
        if (w == 0) throw ConfigError("hidden layer widths must be >= 1");
    if (stats_refresh_k < 1) throw ConfigError("stats-refresh must be >= 1");
    if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("rho must be in (0, 1]");
    if (eval_interval < 1) throw ConfigError("eval-interval must be >= 1");
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError(key + ": invalid number '" + v + "'");
    }
    return out;
}

template <class Int>
Int to_int(const std::string& key, const std::string& v) {
    Int out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError(key + ": invalid integer '" + v + "'");
    }
    return out;
}

std::vector<std::size_t> to_widths(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(to_int<std::size_t>(key, trim(part)));
    if (out.empty()) throw ConfigError(key + ": empty width list");
    return out;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ParseError(line_no, "empty key");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

std::map<std::string, std::string> load_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_key_values(ss.str());
}

void apply_key_values(TrainConfig& config, const std::map<std::string, std::string>& values) {
    for (const auto& [key, v] : values) {
        if (key == "lambda0") config.lambda0 = to_real(key, v);
        else if (key == "beta") config.beta = to_real(key, v);
        else if (key == "iters") config.total_iters = to_int<std::size_t>(key, v);
        else if (key == "batch-size") config.batch_size = to_int<std::size_t>(key, v);
        else if (key == "lr") config.learning_rate = to_real(key, v);
        else if (key == "momentum") config.momentum = to_real(key, v);
        else if (key == "hidden") config.hidden_widths = to_widths(key, v);
        else if (key == "seed") config.seed = to_int<std::uint64_t>(key, v);
        else if (key == "stats-refresh") config.stats_refresh_k = to_int<std::size_t>(key, v);
        else if (key == "estimator") config.estimator = parse_estimator(v);
        else if (key == "rho") config.rho = to_real(key, v);
        else if (key == "eval-interval") config.eval_interval = to_int<std::size_t>(key, v);
        else throw ConfigError("unknown config key '" + key + "'");
    }
}

std::string serialize_config(const TrainConfig& c) {
    std::string widths;
    for (std::size_t i = 0; i < c.hidden_widths.size(); ++i) {
        if (i) widths += ',';
        widths += std::to_string(c.hidden_widths[i]);
    }
    std::string out;
    out += "lambda0 = " + format_double(c.lambda0) + "\n";
    out += "beta = " + format_double(c.beta) + "\n";
    out += "iters = " + std::to_string(c.total_iters) + "\n";
    out += "batch-size = " + std::to_string(c.batch_size) + "\n";
    out += "lr = " + format_double(c.learning_rate) + "\n";
    out += "momentum = " + format_double(c.momentum) + "\n";
    out += "hidden = " + widths + "\n";
    out += "seed = " + std::to_string(c.seed) + "\n";
    out += "stats-refresh = " + std::to_string(c.stats_refresh_k) + "\n";
    out += "estimator = " + to_string(c.estimator) + "\n";
    out += "rho = " + format_double(c.rho) + "\n";
    out += "eval-interval = " + std::to_string(c.eval_interval) + "\n";
    return out;
}

}  // namespace tsa
