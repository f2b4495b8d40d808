#include "c2f/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>

#include "c2f/errors.hpp"

namespace c2f {

void ModelConfig::validate() const {
    if (d_in < 1) throw ConfigError("model: d_in must be >= 1");
    for (int w : enc_widths)
        if (w < 1) throw ConfigError("model: encoder widths must be >= 1");
    if (dec_width < 1) throw ConfigError("model: dec_width must be >= 1");
    if (tpp_windows.empty()) throw ConfigError("model: tpp_windows must be nonempty");
    for (int w : tpp_windows)
        if (w < 2) throw ConfigError("model: tpp windows must be >= 2");
    if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
    if (num_activities < 1) throw ConfigError("model: num_activities must be >= 1");
    if (mlp_hidden < 1) throw ConfigError("model: mlp_hidden must be >= 1");
}

namespace {

Matrix he_init(std::mt19937_64& rng, int rows, int cols, int fan_in) {
    std::normal_distribution<double> d(0.0, std::sqrt(2.0 / fan_in));
    Matrix m(rows, cols);
    for (double& v : m.v) v = d(rng);
    return m;
}

DoubleConv make_double_conv(std::mt19937_64& rng, int cin, int cout) {
    DoubleConv dc;
    dc.cin = cin;
    dc.cout = cout;
    dc.w1 = ag::param(he_init(rng, cout, cin * 3, cin * 3));
    dc.b1 = ag::param(Matrix(1, cout, 0.0));
    dc.w2 = ag::param(he_init(rng, cout, cout * 3, cout * 3));
    dc.b2 = ag::param(Matrix(1, cout, 0.0));
    dc.bn1 = ag::BatchNormState(cout);
    dc.bn2 = ag::BatchNormState(cout);
    return dc;
}

void collect_double_conv(const std::string& prefix, const DoubleConv& dc,
                         std::vector<std::pair<std::string, ag::NodePtr>>& out) {
    out.emplace_back(prefix + ".conv1.w", dc.w1);
    out.emplace_back(prefix + ".conv1.b", dc.b1);
    out.emplace_back(prefix + ".bn1.gamma", dc.bn1.gamma);
    out.emplace_back(prefix + ".bn1.beta", dc.bn1.beta);
    out.emplace_back(prefix + ".conv2.w", dc.w2);
    out.emplace_back(prefix + ".conv2.b", dc.b2);
    out.emplace_back(prefix + ".bn2.gamma", dc.bn2.gamma);
    out.emplace_back(prefix + ".bn2.beta", dc.bn2.beta);
}

long long count_with_prefixes(const std::vector<std::pair<std::string, ag::NodePtr>>& named,
                              std::initializer_list<const char*> prefixes) {
    long long n = 0;
    for (const auto& [name, node] : named)
        for (const char* p : prefixes)
            if (name.rfind(p, 0) == 0) {
                n += static_cast<long long>(node->value.size());
                break;
            }
    return n;
}

}  // namespace

ModelParams::ModelParams(const ModelConfig& config, std::uint64_t seed) : cfg(config) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    phi0 = make_double_conv(rng, cfg.d_in, cfg.enc_widths[0]);
    for (int i = 0; i < 6; ++i) phi[i] = make_double_conv(rng, cfg.enc_widths[i], cfg.enc_widths[i + 1]);
    tpp_w = ag::param(he_init(rng, 1, cfg.enc_widths[6], cfg.enc_widths[6]));
    tpp_b = ag::param(Matrix(1, 1, 0.0));
    const int bc = cfg.bottleneck_channels();
    bott_w = ag::param(he_init(rng, bc, bc * 3, bc * 3));
    bott_b = ag::param(Matrix(1, bc, 0.0));
    for (int i = 0; i < 6; ++i) psi[i] = make_double_conv(rng, cfg.psi_in(i), cfg.dec_width);
    for (int i = 0; i < 6; ++i) {
        head_w[i] = ag::param(he_init(rng, cfg.num_classes, cfg.dec_width, cfg.dec_width));
        head_b[i] = ag::param(Matrix(1, cfg.num_classes, 0.0));
    }
    mlp_w1 = ag::param(he_init(rng, cfg.mlp_hidden, cfg.num_classes, cfg.num_classes));
    mlp_b1 = ag::param(Matrix(1, cfg.mlp_hidden, 0.0));
    mlp_w2 = ag::param(he_init(rng, cfg.num_activities, cfg.mlp_hidden, cfg.mlp_hidden));
    mlp_b2 = ag::param(Matrix(1, cfg.num_activities, 0.0));
}

std::vector<std::pair<std::string, ag::NodePtr>> ModelParams::named_parameters() const {
    std::vector<std::pair<std::string, ag::NodePtr>> out;
    collect_double_conv("phi0", phi0, out);
    for (int i = 0; i < 6; ++i) collect_double_conv("phi" + std::to_string(i + 1), phi[i], out);
    out.emplace_back("tpp.collapse.w", tpp_w);
    out.emplace_back("tpp.collapse.b", tpp_b);
    out.emplace_back("tpp.out.w", bott_w);
    out.emplace_back("tpp.out.b", bott_b);
    for (int i = 0; i < 6; ++i) collect_double_conv("psi" + std::to_string(i + 1), psi[i], out);
    for (int i = 0; i < 6; ++i) {
        out.emplace_back("head" + std::to_string(i + 1) + ".w", head_w[i]);
        out.emplace_back("head" + std::to_string(i + 1) + ".b", head_b[i]);
    }
    out.emplace_back("rec.fc1.w", mlp_w1);
    out.emplace_back("rec.fc1.b", mlp_b1);
    out.emplace_back("rec.fc2.w", mlp_w2);
    out.emplace_back("rec.fc2.b", mlp_b2);
    return out;
}

std::vector<ag::NodePtr> ModelParams::parameters() const {
    std::vector<ag::NodePtr> out;
    for (auto& [name, node] : named_parameters()) out.push_back(node);
    return out;
}

std::vector<ag::BatchNormState*> ModelParams::bn_states() {
    std::vector<ag::BatchNormState*> out;
    out.push_back(&phi0.bn1);
    out.push_back(&phi0.bn2);
    for (auto& dc : phi) {
        out.push_back(&dc.bn1);
        out.push_back(&dc.bn2);
    }
    for (auto& dc : psi) {
        out.push_back(&dc.bn1);
        out.push_back(&dc.bn2);
    }
    return out;
}

long long ModelParams::core_param_count() const {
    return count_with_prefixes(named_parameters(), {"phi", "tpp", "psi"});
}

long long ModelParams::head_param_count() const { return count_with_prefixes(named_parameters(), {"head"}); }

long long ModelParams::total_param_count() const {
    long long n = 0;
    for (const auto& [name, node] : named_parameters()) n += static_cast<long long>(node->value.size());
    return n;
}

int padded_length(int t) {
    if (t < 1) throw ShapeError("pad_to_multiple: empty sequence");
    int blocks = (t + 63) / 64;
    return std::max(64, blocks * 64);
}

Padded pad_to_multiple(const Matrix& f) {
    const int T = f.rows, Tp = padded_length(T);
    Padded out;
    out.mask.assign(Tp, 0);
    for (int t = 0; t < T; ++t) out.mask[t] = 1;
    if (Tp == T) {
        out.features = f;
        return out;
    }
    out.features = Matrix(Tp, f.cols);
    for (int t = 0; t < Tp; ++t) {
        const int src = std::min(t, T - 1);
        for (int c = 0; c < f.cols; ++c) out.features(t, c) = f(src, c);
    }
    return out;
}

Mask pool_mask(const Mask& m, int window) {
    const int T = static_cast<int>(m.size());
    const int To = T / window;
    Mask out(To, 0);
    for (int i = 0; i < To; ++i)
        for (int t = i * window; t < (i + 1) * window; ++t)
            if (m[t]) {
                out[i] = 1;
                break;
            }
    return out;
}

namespace {

using Batch = std::vector<ag::NodePtr>;

// BatchNorm across the whole batch: concatenate rows, normalize once so
// statistics pool every member's valid frames, then slice back apart.
Batch batch_bn(const Batch& xs, const std::vector<Mask>& masks, ag::BatchNormState& st, bool training) {
    if (xs.size() == 1) return {ag::batchnorm(xs[0], masks[0], st, training)};
    Mask big;
    std::vector<int> offsets;
    int total = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        offsets.push_back(total);
        big.insert(big.end(), masks[i].begin(), masks[i].end());
        total += xs[i]->value.rows;
    }
    auto packed = ag::batchnorm(ag::concat_rows(xs), big, st, training);
    Batch out;
    for (size_t i = 0; i < xs.size(); ++i)
        out.push_back(ag::slice_rows(packed, offsets[i], offsets[i] + xs[i]->value.rows));
    return out;
}

Batch double_conv_fwd(DoubleConv& dc, const Batch& xs, const std::vector<Mask>& masks, bool training) {
    Batch h;
    for (const auto& x : xs) h.push_back(ag::conv1d(x, dc.w1, dc.b1, dc.cin, dc.cout, 3, 1));
    h = batch_bn(h, masks, dc.bn1, training);
    for (auto& x : h) x = ag::relu(x);
    for (auto& x : h) x = ag::conv1d(x, dc.w2, dc.b2, dc.cout, dc.cout, 3, 1);
    h = batch_bn(h, masks, dc.bn2, training);
    for (auto& x : h) x = ag::relu(x);
    return h;
}

}  // namespace

ForwardOutputs forward_batch(ModelParams& P, const std::vector<Matrix>& features,
                             const std::vector<Mask>& masks, bool training) {
    const int B = static_cast<int>(features.size());
    if (B == 0) throw ShapeError("forward: empty batch");
    if (masks.size() != features.size()) throw ShapeError("forward: mask count mismatch");
    const int T = features[0].rows;
    if (T % 64 != 0 || T == 0)
        throw ShapeError("forward: sequence length " + std::to_string(T) +
                         " is not a positive multiple of 64 (pad_to_multiple first)");
    for (int v = 0; v < B; ++v) {
        if (features[v].rows != T) throw ShapeError("forward: batch members must share one padded length");
        if (features[v].cols != P.cfg.d_in) throw ShapeError("forward: feature width != d_in");
        if (static_cast<int>(masks[v].size()) != T) throw ShapeError("forward: mask length mismatch");
    }

    ForwardOutputs out;
    out.enc.resize(B);
    out.bottleneck.resize(B);
    out.dec.resize(B);
    out.probs.resize(B);
    out.level_masks.resize(B);

    // Per-level masks.
    for (int v = 0; v < B; ++v) {
        out.level_masks[v][0] = masks[v];
        for (int l = 1; l <= 6; ++l) out.level_masks[v][l] = pool_mask(out.level_masks[v][l - 1], 2);
    }
    auto masks_at = [&](int level) {
        std::vector<Mask> ms;
        for (int v = 0; v < B; ++v) ms.push_back(out.level_masks[v][level]);
        return ms;
    };

    // Encoder.
    Batch cur;
    for (int v = 0; v < B; ++v) cur.push_back(ag::constant(features[v]));
    cur = double_conv_fwd(P.phi0, cur, masks_at(0), training);
    for (int v = 0; v < B; ++v) out.enc[v][0] = cur[v];
    for (int l = 1; l <= 6; ++l) {
        for (auto& x : cur) x = ag::maxpool1d(x, 2);
        cur = double_conv_fwd(P.phi[l - 1], cur, masks_at(l), training);
        for (int v = 0; v < B; ++v) out.enc[v][l] = cur[v];
    }

    // Bottleneck: shared-collapse pyramid pooling, concat, then k=3 conv.
    const int en_ch = P.cfg.enc_widths[6];
    const int bc = P.cfg.bottleneck_channels();
    for (int v = 0; v < B; ++v) {
        auto f_en = out.enc[v][6];
        const int t_en = f_en->value.rows;
        auto cat = f_en;
        for (int w : P.cfg.tpp_windows) {
            int eff = std::min(w, t_en);
            auto pooled = ag::maxpool1d(f_en, eff);
            auto collapsed = ag::conv1d(pooled, P.tpp_w, P.tpp_b, en_ch, 1, 1, 0);
            cat = ag::concat_cols(cat, ag::upsample_linear(collapsed, t_en));
        }
        out.bottleneck[v] = ag::conv1d(cat, P.bott_w, P.bott_b, bc, bc, 3, 1);
    }

    // Decoder with skip connections: psi_{i+1} consumes phi_{5-i}.
    Batch d = out.bottleneck;
    for (int i = 0; i < 6; ++i) {
        const int level = 5 - i;
        Batch up;
        for (int v = 0; v < B; ++v) {
            auto u = ag::upsample_linear(d[v], d[v]->value.rows * 2);
            up.push_back(ag::concat_cols(u, out.enc[v][level]));
        }
        d = double_conv_fwd(P.psi[i], up, masks_at(level), training);
        for (int v = 0; v < B; ++v) {
            out.dec[v][i] = d[v];
            auto logits = ag::conv1d(d[v], P.head_w[i], P.head_b[i], P.cfg.dec_width, P.cfg.num_classes, 1, 0);
            out.probs[v][i] = ag::softmax_rows(logits);
        }
    }
    return out;
}

ag::NodePtr recognition_forward(const ModelParams& P, const ag::NodePtr& p, const Mask& mask) {
    if (p->value.cols != P.cfg.num_classes) throw ShapeError("recognition: class count mismatch");
    auto z = ag::temporal_max(ag::log_floor(p), mask);  // 1 x C
    auto h = ag::relu(ag::conv1d(z, P.mlp_w1, P.mlp_b1, P.cfg.num_classes, P.cfg.mlp_hidden, 1, 0));
    auto o = ag::conv1d(h, P.mlp_w2, P.mlp_b2, P.cfg.mlp_hidden, P.cfg.num_activities, 1, 0);
    return ag::softmax_rows(o);
}

namespace {

constexpr char kMagic[4] = {'C', '2', 'F', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(FILE* f, std::uint32_t v) { std::fwrite(&v, sizeof v, 1, f); }
void put_i32(FILE* f, std::int32_t v) { std::fwrite(&v, sizeof v, 1, f); }

std::uint32_t get_u32(FILE* f, const std::string& path) {
    std::uint32_t v;
    if (std::fread(&v, sizeof v, 1, f) != 1) throw FormatError(path + ": truncated checkpoint");
    return v;
}

std::int32_t get_i32(FILE* f, const std::string& path) {
    std::int32_t v;
    if (std::fread(&v, sizeof v, 1, f) != 1) throw FormatError(path + ": truncated checkpoint");
    return v;
}

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

// Named tensors persisted beyond the trainable set: BN running statistics.
std::vector<std::pair<std::string, std::vector<double>*>> running_stats(ModelParams& p) {
    std::vector<std::pair<std::string, std::vector<double>*>> out;
    auto add = [&](const std::string& prefix, ag::BatchNormState& st) {
        out.emplace_back(prefix + ".running_mean", &st.running_mean);
        out.emplace_back(prefix + ".running_var", &st.running_var);
    };
    add("phi0.bn1", p.phi0.bn1);
    add("phi0.bn2", p.phi0.bn2);
    for (int i = 0; i < 6; ++i) {
        add("phi" + std::to_string(i + 1) + ".bn1", p.phi[i].bn1);
        add("phi" + std::to_string(i + 1) + ".bn2", p.phi[i].bn2);
    }
    for (int i = 0; i < 6; ++i) {
        add("psi" + std::to_string(i + 1) + ".bn1", p.psi[i].bn1);
        add("psi" + std::to_string(i + 1) + ".bn2", p.psi[i].bn2);
    }
    return out;
}

void write_tensor(FILE* f, const std::string& name, const double* data, int rows, int cols) {
    put_u32(f, static_cast<std::uint32_t>(name.size()));
    std::fwrite(name.data(), 1, name.size(), f);
    put_i32(f, rows);
    put_i32(f, cols);
    std::fwrite(data, sizeof(double), static_cast<size_t>(rows) * cols, f);
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw FormatError(path + ": cannot open for writing");
    std::fwrite(kMagic, 1, 4, f.get());
    put_u32(f.get(), kVersion);
    const auto& cfg = params.cfg;
    put_i32(f.get(), cfg.d_in);
    for (int w : cfg.enc_widths) put_i32(f.get(), w);
    put_i32(f.get(), cfg.dec_width);
    put_i32(f.get(), static_cast<std::int32_t>(cfg.tpp_windows.size()));
    for (int w : cfg.tpp_windows) put_i32(f.get(), w);
    put_i32(f.get(), cfg.num_classes);
    put_i32(f.get(), cfg.num_activities);
    put_i32(f.get(), cfg.mlp_hidden);

    auto named = params.named_parameters();
    auto stats = running_stats(const_cast<ModelParams&>(params));
    put_u32(f.get(), static_cast<std::uint32_t>(named.size() + stats.size()));
    for (const auto& [name, node] : named)
        write_tensor(f.get(), name, node->value.v.data(), node->value.rows, node->value.cols);
    for (const auto& [name, vec] : stats)
        write_tensor(f.get(), name, vec->data(), 1, static_cast<int>(vec->size()));
    if (std::fflush(f.get()) != 0) throw FormatError(path + ": write failed");
}

ModelParams load_checkpoint(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw FormatError(path + ": cannot open");
    char magic[4];
    if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(path + ": bad checkpoint magic");
    if (get_u32(f.get(), path) != kVersion) throw FormatError(path + ": unsupported checkpoint version");

    ModelConfig cfg;
    cfg.d_in = get_i32(f.get(), path);
    for (int& w : cfg.enc_widths) w = get_i32(f.get(), path);
    cfg.dec_width = get_i32(f.get(), path);
    int nw = get_i32(f.get(), path);
    if (nw < 1 || nw > 64) throw FormatError(path + ": implausible tpp window count");
    cfg.tpp_windows.assign(nw, 0);
    for (int& w : cfg.tpp_windows) w = get_i32(f.get(), path);
    cfg.num_classes = get_i32(f.get(), path);
    cfg.num_activities = get_i32(f.get(), path);
    cfg.mlp_hidden = get_i32(f.get(), path);

    ModelParams params(cfg, 0);
    std::vector<std::pair<std::string, Matrix*>> slots;
    for (auto& [name, node] : params.named_parameters()) slots.emplace_back(name, &node->value);
    // Running stats are plain vectors; adapt via temporary matrices after reading.
    auto stats = running_stats(params);

    const std::uint32_t count = get_u32(f.get(), path);
    if (count != slots.size() + stats.size())
        throw FormatError(path + ": tensor count mismatch (expected " +
                          std::to_string(slots.size() + stats.size()) + ", found " + std::to_string(count) + ")");
    size_t filled = 0;
    std::vector<std::string> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = get_u32(f.get(), path);
        if (len > 256) throw FormatError(path + ": implausible tensor name length");
        std::string name(len, '\0');
        if (std::fread(name.data(), 1, len, f.get()) != len) throw FormatError(path + ": truncated checkpoint");
        if (std::find(seen.begin(), seen.end(), name) != seen.end())
            throw FormatError(path + ": duplicate tensor " + name);
        seen.push_back(name);
        const int rows = get_i32(f.get(), path), cols = get_i32(f.get(), path);
        if (rows < 1 || cols < 1) throw FormatError(path + ": bad tensor shape for " + name);
        std::vector<double> buf(static_cast<size_t>(rows) * cols);
        if (std::fread(buf.data(), sizeof(double), buf.size(), f.get()) != buf.size())
            throw FormatError(path + ": truncated tensor payload for " + name);
        bool matched = false;
        for (auto& [n, m] : slots)
            if (n == name) {
                if (m->rows != rows || m->cols != cols) throw FormatError(path + ": shape mismatch for " + name);
                std::copy(buf.begin(), buf.end(), m->v.begin());
                matched = true;
                break;
            }
        if (!matched)
            for (auto& [n, vec] : stats)
                if (n == name) {
                    if (rows != 1 || static_cast<size_t>(cols) != vec->size())
                        throw FormatError(path + ": shape mismatch for " + name);
                    *vec = buf;
                    matched = true;
                    break;
                }
        if (!matched) throw FormatError(path + ": unknown tensor " + name);
        ++filled;
    }
    if (filled != slots.size() + stats.size()) throw FormatError(path + ": missing tensors");
    return params;
}

}  // namespace c2f
