#include "tsa/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "tsa/errors.hpp"

namespace tsa {

std::string to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

bool DomainDataset::fully_labeled() const noexcept {
    return std::all_of(labels.begin(), labels.end(),
                       [this](int y) { return y >= 0 && y < class_count; });
}

DomainDataset make_moons(std::size_t n_per_class, double noise_sd, Rng& rng) {
    DomainDataset ds;
    ds.inputs = Matrix(2 * n_per_class, 2);
    ds.labels.resize(2 * n_per_class);
    ds.domain = Domain::source;
    ds.class_count = 2;

    const double step =
        n_per_class > 1 ? std::numbers::pi / static_cast<double>(n_per_class - 1) : 0.0;
    for (std::size_t i = 0; i < n_per_class; ++i) {
        const double t = step * static_cast<double>(i);
        ds.inputs(i, 0) = std::cos(t);
        ds.inputs(i, 1) = std::sin(t);
        ds.labels[i] = 0;
        const std::size_t j = n_per_class + i;
        ds.inputs(j, 0) = 1.0 - std::cos(t);
        ds.inputs(j, 1) = 0.5 - std::sin(t);
        ds.labels[j] = 1;
    }
    if (noise_sd > 0.0) {
        std::normal_distribution<double> noise(0.0, noise_sd);
        for (double& v : ds.inputs.data()) v += noise(rng);
    }
    return ds;
}

DomainDataset rotate(const DomainDataset& ds, double degrees) {
    if (ds.dim() != 2) throw DimensionError("rotate: inputs must be 2-dimensional");
    DomainDataset out = ds;
    out.domain = Domain::target;
    // Whole turns keep the inputs bit-identical.
    if (ds.size() == 0 || std::fmod(degrees, 360.0) == 0.0) return out;

    double cx = 0.0;
    double cy = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        cx += ds.inputs(i, 0);
        cy += ds.inputs(i, 1);
    }
    cx /= static_cast<double>(ds.size());
    cy /= static_cast<double>(ds.size());

    const double rad = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(rad);
    const double s = std::sin(rad);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double dx = ds.inputs(i, 0) - cx;
        const double dy = ds.inputs(i, 1) - cy;
        out.inputs(i, 0) = cx + c * dx - s * dy;
        out.inputs(i, 1) = cy + s * dx + c * dy;
    }
    return out;
}

DomainDataset subset(const DomainDataset& ds, std::span<const std::size_t> indices) {
    DomainDataset out;
    out.domain = ds.domain;
    out.class_count = ds.class_count;
    out.inputs = Matrix(indices.size(), ds.dim());
    out.labels.resize(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const std::size_t i = indices[k];
        if (i >= ds.size()) throw IndexError("subset: index out of range");
        std::copy(ds.inputs.row(i).begin(), ds.inputs.row(i).end(), out.inputs.row(k).begin());
        out.labels[k] = ds.labels[i];
    }
    return out;
}

DomainDataset stratified_subsample(const DomainDataset& ds, std::span<const int> strata,
                                   double rho, Rng& rng) {
    if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("stratified_subsample: rho must be in (0,1]");
    if (strata.size() != ds.size()) throw DimensionError("stratified_subsample: strata length");
    if (rho == 1.0) return ds;

    std::vector<int> keys(strata.begin(), strata.end());
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

    std::vector<std::size_t> keep;
    for (int key : keys) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < strata.size(); ++i)
            if (strata[i] == key) members.push_back(i);
        const auto want = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(rho * static_cast<double>(members.size()))));
        std::shuffle(members.begin(), members.end(), rng);
        members.resize(std::min(want, members.size()));
        keep.insert(keep.end(), members.begin(), members.end());
    }
    std::sort(keep.begin(), keep.end());
    return subset(ds, keep);
}

std::vector<std::size_t> sample_batch(std::size_t n, std::size_t batch_size, Rng& rng) {
    if (n == 0) throw EmptyDataset("sample_batch: empty dataset");
    if (batch_size == 0) throw ConfigError("sample_batch: batch_size must be >= 1");
    std::vector<std::size_t> out;
    out.reserve(batch_size);
    if (batch_size <= n) {
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        // Partial Fisher-Yates.
        for (std::size_t i = 0; i < batch_size; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n - 1);
            std::swap(pool[i], pool[pick(rng)]);
            out.push_back(pool[i]);
        }
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (std::size_t i = 0; i < batch_size; ++i) out.push_back(pick(rng));
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

double parse_real(std::string_view s, std::size_t line) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw ParseError(line, "invalid number '" + std::string(s) + "'");
    }
    return v;
}

int parse_label(std::string_view s, std::size_t line) {
    if (s.empty()) return kUnlabeled;
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v < kUnlabeled) {
        throw ParseError(line, "invalid label '" + std::string(s) + "'");
    }
    return v;
}

struct RowBuffer {
    std::vector<double> values;
    std::vector<int> labels;
};

}  // namespace

DomainTask parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    std::size_t dim = 0;
    bool have_header = false;
    RowBuffer src;
    RowBuffer tgt;

    while (std::getline(in, raw)) {
        ++line_no;
        const std::string_view line = trim(raw);
        if (line.empty()) continue;
        const auto fields = split_commas(line);
        if (!have_header) {
            if (fields.size() < 3 || trim(fields[0]) != "domain" || trim(fields[1]) != "label") {
                throw ParseError(line_no, "expected header 'domain,label,x1,...,xd'");
            }
            dim = fields.size() - 2;
            have_header = true;
            continue;
        }
        if (fields.size() != dim + 2) {
            throw ParseError(line_no, "expected " + std::to_string(dim + 2) + " fields, got " +
                                          std::to_string(fields.size()));
        }
        const auto tag = trim(fields[0]);
        RowBuffer* dest = nullptr;
        if (tag == "source") {
            dest = &src;
        } else if (tag == "target") {
            dest = &tgt;
        } else {
            throw ParseError(line_no, "unknown domain tag '" + std::string(tag) + "'");
        }
        const int label = parse_label(trim(fields[1]), line_no);
        if (dest == &src && label == kUnlabeled) {
            throw ParseError(line_no, "source rows must be labeled");
        }
        dest->labels.push_back(label);
        for (std::size_t k = 0; k < dim; ++k)
            dest->values.push_back(parse_real(trim(fields[k + 2]), line_no));
    }
    if (!have_header) throw EmptyDataset("CSV has no header");
    if (src.labels.empty() && tgt.labels.empty()) throw EmptyDataset("CSV has no data rows");

    int max_label = -1;
    for (int y : src.labels) max_label = std::max(max_label, y);
    for (int y : tgt.labels) max_label = std::max(max_label, y);

    DomainTask task;
    auto build = [&](RowBuffer& buf, Domain d) {
        DomainDataset ds;
        const std::size_t n = buf.labels.size();
        ds.inputs = Matrix(n, dim, std::move(buf.values));
        ds.labels = std::move(buf.labels);
        ds.domain = d;
        ds.class_count = max_label + 1;
        return ds;
    };
    if (!src.labels.empty()) task.source = build(src, Domain::source);
    if (!tgt.labels.empty()) task.target = build(tgt, Domain::target);
    return task;
}

DomainTask load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

std::string serialize_csv(const DomainTask& task) {
    std::size_t dim = 0;
    if (task.source) dim = task.source->dim();
    else if (task.target) dim = task.target->dim();

    std::string out = "domain,label";
    for (std::size_t k = 0; k < dim; ++k) out += ",x" + std::to_string(k + 1);
    out += '\n';
    auto emit = [&](const DomainDataset& ds) {
        for (std::size_t i = 0; i < ds.size(); ++i) {
            out += to_string(ds.domain);
            out += ',';
            out += std::to_string(ds.labels[i]);
            for (double v : ds.inputs.row(i)) {
                out += ',';
                out += format_double(v);
            }
            out += '\n';
        }
    };
    if (task.source) emit(*task.source);
    if (task.target) emit(*task.target);
    return out;
}

void save_csv(const DomainTask& task, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << serialize_csv(task);
}

}  // namespace tsa
