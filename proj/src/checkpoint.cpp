#include "gisd/checkpoint.hpp"

#include <cstdio>
#include <limits>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gisd {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

void expect_word(std::istream& in, const std::string& word) {
    std::string got;
    if (!(in >> got) || got != word) {
        throw std::runtime_error("checkpoint: expected '" + word + "', found '" + got + "'");
    }
}

double read_double(std::istream& in) {
    std::string tok;
    if (!(in >> tok)) throw std::runtime_error("checkpoint: truncated value list");
    try {
        std::size_t pos = 0;
        const double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        // stod rejects "inf"/"nan" spellings from some writers
        if (tok == "inf") return std::numeric_limits<double>::infinity();
        if (tok == "-inf") return -std::numeric_limits<double>::infinity();
        throw std::runtime_error("checkpoint: bad number '" + tok + "'");
    }
}

}  // namespace

void write_net(std::ostream& out, const std::string& tag, const DiffNet& net) {
    out << "net " << tag << "\nlayers";
    for (int s : net.sizes()) out << ' ' << s;
    out << "\nparams " << net.num_params() << '\n';
    for (double v : net.params()) out << format_double(v) << '\n';
}

void read_net(std::istream& in, const std::string& tag, DiffNet& net) {
    expect_word(in, "net");
    expect_word(in, tag);
    expect_word(in, "layers");
    std::string line;
    std::getline(in, line);
    std::istringstream ls(line);
    std::vector<int> sizes;
    for (int s; ls >> s;) sizes.push_back(s);
    if (sizes != net.sizes()) throw std::runtime_error("checkpoint: layer sizes of '" + tag + "' differ");
    expect_word(in, "params");
    std::size_t n = 0;
    in >> n;
    if (n != net.num_params()) throw std::runtime_error("checkpoint: parameter count mismatch");
    for (auto& v : net.params()) v = read_double(in);
}

void write_vector(std::ostream& out, const std::string& tag, const Vec& v) {
    out << "vec " << tag << ' ' << v.size() << '\n';
    for (double x : v) out << format_double(x) << '\n';
}

Vec read_vector(std::istream& in, const std::string& tag) {
    expect_word(in, "vec");
    expect_word(in, tag);
    std::size_t n = 0;
    if (!(in >> n)) throw std::runtime_error("checkpoint: missing size for '" + tag + "'");
    Vec v(n);
    for (auto& x : v) x = read_double(in);
    return v;
}

void save_feature_map(const std::filesystem::path& path, const EquivariantFeatureMap& map) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << "gisd-feature-map v1\n";
    out << "group " << map.group().order() << '\n';
    out << "input_rep " << map.input_rep().spec() << '\n';
    out << "rep " << map.rep().spec() << '\n';
    out << "hidden";
    const auto& sizes = map.net().sizes();
    for (std::size_t i = 1; i + 1 < sizes.size(); ++i) out << ' ' << sizes[i];
    out << "\nsymmetric " << (map.symmetric() ? 1 : 0) << '\n';
    write_vector(out, "mask", map.mask().weights());
    write_net(out, "phi", map.net());
}

EquivariantFeatureMap load_feature_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line != "gisd-feature-map v1") throw std::runtime_error("not a feature-map file: " + path.string());
    int order = 0;
    std::string input_spec, rep_spec;
    expect_word(in, "group");
    in >> order;
    expect_word(in, "input_rep");
    in >> input_spec;
    expect_word(in, "rep");
    in >> rep_spec;
    expect_word(in, "hidden");
    std::getline(in, line);
    std::istringstream hs(line);
    std::vector<int> hidden;
    for (int h; hs >> h;) hidden.push_back(h);
    int sym = 1;
    expect_word(in, "symmetric");
    in >> sym;
    const Vec mask = read_vector(in, "mask");
    const auto group = make_cyclic_group(order);
    EquivariantFeatureMap map(DirectSumRep::from_spec(group, input_spec),
                              DirectSumRep::from_spec(group, rep_spec),
                              FrequencyMask::per_coordinate(mask), hidden, sym != 0);
    read_net(in, "phi", map.net());
    return map;
}

}  // namespace gisd
