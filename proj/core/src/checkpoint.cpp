// Text checkpoint:
//
//   tsa-model 1
//   extractor <L>
//   layer <rows> <cols>        (repeated L times, each followed by
//   <rows lines of weights>     the weight rows and one bias line)
//   <bias values>
//   head <C> <K>
//   <C lines of head weights>
//   <head bias values>
//
// Values are written in shortest round-trip form, so parse(serialize(p))
// reproduces every double exactly.

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "tsa/dataset.hpp"
#include "tsa/errors.hpp"
#include "tsa/network.hpp"

namespace tsa {

namespace {

void write_row(std::string& out, std::span<const double> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ' ';
        out += format_double(values[i]);
    }
    out += '\n';
}

class TokenReader {
public:
    explicit TokenReader(const std::string& text) : in_(text) {}

    std::string word() {
        std::string w;
        if (!(in_ >> w)) throw ParseError(line(), "unexpected end of checkpoint");
        return w;
    }

    void expect(const std::string& keyword) {
        const auto w = word();
        if (w != keyword) throw ParseError(line(), "expected '" + keyword + "', got '" + w + "'");
    }

    std::size_t count() {
        const auto w = word();
        std::size_t v = 0;
        const auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
        if (ec != std::errc() || p != w.data() + w.size())
            throw ParseError(line(), "invalid count '" + w + "'");
        return v;
    }

    double real() {
        const auto w = word();
        double v = 0.0;
        const auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
        if (ec != std::errc() || p != w.data() + w.size())
            throw ParseError(line(), "invalid value '" + w + "'");
        return v;
    }

    void fill(std::span<double> dst) {
        for (double& v : dst) v = real();
    }

    bool at_end() {
        in_ >> std::ws;
        return in_.eof();
    }

private:
    // Line numbers are approximate for token streams; enough to locate a
    // corrupted header.
    std::size_t line() {
        const auto pos = in_.tellg();
        const std::string& s = in_.str();
        const auto end = pos < 0 ? s.size() : static_cast<std::size_t>(pos);
        return 1 + static_cast<std::size_t>(std::count(s.begin(), s.begin() + end, '\n'));
    }

    std::istringstream in_;
};

}  // namespace

std::string serialize_model(const ModelParams& params) {
    params.validate();
    std::string out = "tsa-model 1\n";
    out += "extractor " + std::to_string(params.extractor.size()) + "\n";
    for (const auto& l : params.extractor) {
        out += "layer " + std::to_string(l.weight.rows()) + " " + std::to_string(l.weight.cols()) +
               "\n";
        for (std::size_t r = 0; r < l.weight.rows(); ++r) write_row(out, l.weight.row(r));
        write_row(out, l.bias);
    }
    out += "head " + std::to_string(params.head_w.rows()) + " " +
           std::to_string(params.head_w.cols()) + "\n";
    for (std::size_t r = 0; r < params.head_w.rows(); ++r) write_row(out, params.head_w.row(r));
    write_row(out, params.head_b);
    return out;
}

ModelParams parse_model(const std::string& text) {
    TokenReader in(text);
    in.expect("tsa-model");
    if (in.count() != 1) throw ParseError(1, "unsupported checkpoint version");
    in.expect("extractor");
    const std::size_t depth = in.count();
    ModelParams p;
    for (std::size_t i = 0; i < depth; ++i) {
        in.expect("layer");
        const std::size_t rows = in.count();
        const std::size_t cols = in.count();
        DenseLayer layer{Matrix(rows, cols), Vector(rows)};
        in.fill(layer.weight.data());
        in.fill(layer.bias);
        p.extractor.push_back(std::move(layer));
    }
    in.expect("head");
    const std::size_t classes = in.count();
    const std::size_t k = in.count();
    p.head_w = Matrix(classes, k);
    p.head_b = Vector(classes);
    in.fill(p.head_w.data());
    in.fill(p.head_b);
    if (!in.at_end()) throw ParseError(0, "trailing data after checkpoint");
    p.validate();
    return p;
}

void save_model(const ModelParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << serialize_model(params);
}

ModelParams load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_model(ss.str());
}

}  // namespace tsa
