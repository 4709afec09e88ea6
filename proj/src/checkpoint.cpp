#include "h3gnn/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "h3gnn/encoder.hpp"

namespace h3gnn {

static_assert(std::endian::native == std::endian::little,
              "archive format assumes a little-endian host");

void TensorArchive::put(const std::string& name, const Tensor& t) {
    if (name.empty() || name.find_first_of(" \n\t") != std::string::npos)
        throw ArgumentError("TensorArchive: bad tensor name '" + name + "'");
    for (auto& [n, v] : entries_) {
        if (n == name) {
            v = t;
            return;
        }
    }
    entries_.emplace_back(name, t);
}

bool TensorArchive::has(const std::string& name) const {
    for (const auto& [n, v] : entries_)
        if (n == name) return true;
    return false;
}

Tensor TensorArchive::get(const std::string& name) const {
    for (const auto& [n, v] : entries_)
        if (n == name) return v;
    throw StateError("TensorArchive: no tensor named '" + name + "'");
}

void TensorArchive::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StateError("TensorArchive: cannot write " + path);
    out << "h3ar 1\n";
    for (const auto& [name, t] : entries_)
        out << name << " " << t.rows() << " " << t.cols() << "\n";
    out << "data\n";
    for (const auto& [name, t] : entries_)
        out.write(reinterpret_cast<const char*>(t.data()),
                  std::streamsize(t.size() * sizeof(double)));
    if (!out) throw StateError("TensorArchive: write failed for " + path);
}

TensorArchive TensorArchive::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("TensorArchive: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "h3ar 1")
        throw IntegrityError("TensorArchive: bad magic/version in " + path);
    std::vector<std::pair<std::string, std::pair<int, int>>> manifest;
    while (std::getline(in, line)) {
        if (line == "data") break;
        std::istringstream ls(line);
        std::string name;
        int rows, cols;
        if (!(ls >> name >> rows >> cols) || rows <= 0 || cols <= 0)
            throw IntegrityError("TensorArchive: bad manifest line '" + line + "'");
        manifest.emplace_back(name, std::make_pair(rows, cols));
    }
    TensorArchive ar;
    for (const auto& [name, shape] : manifest) {
        Tensor t = Tensor::zeros(shape.first, shape.second);
        in.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.size() * sizeof(double)));
        if (!in) throw IntegrityError("TensorArchive: truncated data in " + path);
        ar.put(name, t);
    }
    return ar;
}

void archive_params(TensorArchive& ar, const std::string& prefix, const EncoderParams& params) {
    for (const auto& [name, t] : params.named()) ar.put(prefix + "." + name, t);
}

EncoderParams params_from_archive(const TensorArchive& ar, const std::string& prefix,
                                  const EncoderConfig& cfg, bool requires_grad) {
    // template of the right shapes, then overwrite from the archive
    NormalizedAdjacency dummy;
    const Tensor probe = ar.get(prefix + ".wgcn1_edge");
    dummy.pattern.n = 1;
    dummy.pattern.row_ptr = {0, 1};
    dummy.pattern.col_idx = {0};
    dummy.values = {1.0};
    std::mt19937_64 rng(0);
    EncoderParams p = EncoderParams::init(cfg, dummy, rng);
    // edge tensors must match the archived nnz, not the dummy pattern
    p.wgcn1_edge = Tensor::zeros(1, probe.cols(), requires_grad);
    p.wgcn2_edge_a = Tensor::zeros(1, probe.cols(), requires_grad);
    p.wgcn2_edge_b = Tensor::zeros(1, probe.cols(), requires_grad);
    for (auto& [name, t] : p.named()) {
        Tensor src = ar.get(prefix + "." + name);
        if (src.rows() != t.rows() || src.cols() != t.cols())
            throw IntegrityError("checkpoint: shape mismatch for " + prefix + "." + name);
        std::copy(src.data(), src.data() + src.size(), t.data());
        t.set_requires_grad(requires_grad);
    }
    return p;
}

void archive_encoder_config(TensorArchive& ar, const EncoderConfig& cfg) {
    auto put1 = [&](const char* name, double v) { ar.put(name, Tensor::full(1, 1, v)); };
    put1("meta.format", 1.0);
    put1("meta.input_dim", cfg.input_dim);
    put1("meta.token_dim", cfg.token_dim);
    put1("meta.heads", cfg.heads);
    put1("meta.wgcn_hidden", cfg.wgcn_hidden);
    put1("meta.dropout_filters", cfg.dropout_filters);
    put1("meta.dropout_attention", cfg.dropout_attention);
    put1("meta.fuse_mlp", cfg.fuse == EncoderConfig::Fuse::mlp ? 1.0 : 0.0);
}

EncoderConfig encoder_config_from_archive(const TensorArchive& ar) {
    auto get1 = [&](const char* name) { return ar.get(name).data()[0]; };
    EncoderConfig cfg;
    cfg.input_dim = int(get1("meta.input_dim"));
    cfg.token_dim = int(get1("meta.token_dim"));
    cfg.heads = int(get1("meta.heads"));
    cfg.wgcn_hidden = int(get1("meta.wgcn_hidden"));
    cfg.dropout_filters = get1("meta.dropout_filters");
    cfg.dropout_attention = get1("meta.dropout_attention");
    cfg.fuse = get1("meta.fuse_mlp") > 0.5 ? EncoderConfig::Fuse::mlp
                                           : EncoderConfig::Fuse::attention;
    return cfg;
}

}  // namespace h3gnn
