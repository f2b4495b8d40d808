#include "c2f/data.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace c2f {

namespace {

constexpr char kMagic[4] = {'C', '2', 'F', 'F'};
constexpr std::uint32_t kVersion = 1;
constexpr size_t kHeaderBytes = 16;

std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u32(std::string& out, std::uint32_t x) {
    out.push_back(static_cast<char>(x & 0xff));
    out.push_back(static_cast<char>((x >> 8) & 0xff));
    out.push_back(static_cast<char>((x >> 16) & 0xff));
    out.push_back(static_cast<char>((x >> 24) & 0xff));
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Strips a trailing '\r' so CRLF files parse the same as LF files.
std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(path + ": cannot open file");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

void write_text(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(path + ": cannot open file for writing");
    out << body;
    if (!out) throw FormatError(path + ": write failed");
}

bool is_blank(const std::string& s) {
    return s.find_first_not_of(" \t") == std::string::npos;
}

int parse_int_token(const std::string& tok, const std::string& path, int line,
                    const std::string& what) {
    size_t pos = 0;
    int value = 0;
    try {
        value = std::stoi(tok, &pos);
    } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(line) + ": bad " + what + " '" + tok + "'");
    }
    if (pos != tok.size())
        throw FormatError(path + ":" + std::to_string(line) + ": bad " + what + " '" + tok + "'");
    return value;
}

}  // namespace

int ClassMapping::require(const std::string& name, int line) const {
    auto it = index.find(name);
    if (it == index.end())
        throw FormatError("line " + std::to_string(line) + ": unknown action '" + name + "'");
    return it->second;
}

Matrix load_features(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    if (bytes.size() < kHeaderBytes)
        throw FormatError(path + ": truncated header: expected " + std::to_string(kHeaderBytes) +
                          " bytes, got " + std::to_string(bytes.size()));
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (std::memcmp(p, kMagic, 4) != 0) throw FormatError(path + ": bad magic at byte offset 0");
    const std::uint32_t version = read_u32(p + 4);
    if (version != kVersion)
        throw FormatError(path + ": unsupported version " + std::to_string(version) +
                          " at byte offset 4");
    const std::uint32_t t = read_u32(p + 8);
    const std::uint32_t d = read_u32(p + 12);
    if (t == 0 || d == 0)
        throw FormatError(path + ": empty tensor (T=" + std::to_string(t) +
                          ", d=" + std::to_string(d) + ") in header");
    const size_t payload = static_cast<size_t>(t) * d * 4;
    const size_t actual = bytes.size() - kHeaderBytes;
    if (actual < payload)
        throw FormatError(path + ": truncated payload at byte offset " +
                          std::to_string(kHeaderBytes + actual) + ": expected " +
                          std::to_string(payload) + " bytes, got " + std::to_string(actual));
    if (actual > payload)
        throw FormatError(path + ": trailing data at byte offset " +
                          std::to_string(kHeaderBytes + payload) + ": expected " +
                          std::to_string(payload) + " payload bytes, got " + std::to_string(actual));

    Matrix f(static_cast<int>(t), static_cast<int>(d));
    const unsigned char* q = p + kHeaderBytes;
    for (std::uint32_t r = 0; r < t; ++r) {
        for (std::uint32_t c = 0; c < d; ++c) {
            const size_t off = kHeaderBytes + (static_cast<size_t>(r) * d + c) * 4;
            const float x = std::bit_cast<float>(read_u32(q));
            q += 4;
            if (!std::isfinite(x))
                throw FormatError(path + ": non-finite value at frame " + std::to_string(r) +
                                  ", channel " + std::to_string(c) + " (byte offset " +
                                  std::to_string(off) + ")");
            f(static_cast<int>(r), static_cast<int>(c)) = static_cast<double>(x);
        }
    }
    return f;
}

void write_features(const std::string& path, const Matrix& f) {
    if (f.rows == 0 || f.cols == 0) throw ShapeError("write_features: empty matrix");
    if (!f.all_finite()) throw ValidationError("write_features: non-finite value");
    std::string out;
    out.reserve(kHeaderBytes + f.size() * 4);
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(f.rows));
    put_u32(out, static_cast<std::uint32_t>(f.cols));
    for (int r = 0; r < f.rows; ++r)
        for (int c = 0; c < f.cols; ++c)
            put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(f(r, c))));
    write_text(path, out);
}

ClassMapping load_mapping(const std::string& path) {
    const auto lines = read_lines(path);
    std::map<int, std::string> by_index;
    ClassMapping m;
    for (size_t i = 0; i < lines.size(); ++i) {
        const int line = static_cast<int>(i) + 1;
        if (is_blank(lines[i])) {
            // A blank line is only legal as a trailing artifact of the final newline.
            for (size_t j = i; j < lines.size(); ++j)
                if (!is_blank(lines[j]))
                    throw FormatError(path + ":" + std::to_string(line) + ": blank line");
            break;
        }
        std::istringstream ss(lines[i]);
        std::string idx_tok, name, extra;
        ss >> idx_tok >> name;
        if (name.empty())
            throw FormatError(path + ":" + std::to_string(line) +
                              ": expected '<index> <name>', got '" + lines[i] + "'");
        if (ss >> extra)
            throw FormatError(path + ":" + std::to_string(line) + ": trailing token '" + extra +
                              "'");
        const int idx = parse_int_token(idx_tok, path, line, "class index");
        if (idx < 0) throw FormatError(path + ":" + std::to_string(line) + ": negative class index");
        if (by_index.count(idx))
            throw FormatError(path + ":" + std::to_string(line) + ": duplicate class index " +
                              std::to_string(idx));
        if (m.index.count(name))
            throw FormatError(path + ":" + std::to_string(line) + ": duplicate class name '" +
                              name + "'");
        by_index[idx] = name;
        m.index[name] = idx;
    }
    if (by_index.empty()) throw FormatError(path + ": empty mapping");
    const int n = static_cast<int>(by_index.size());
    if (by_index.rbegin()->first != n - 1)
        throw FormatError(path + ": class indices must cover 0.." + std::to_string(n - 1) +
                          " exactly; highest is " + std::to_string(by_index.rbegin()->first));
    m.names.resize(static_cast<size_t>(n));
    for (const auto& [idx, name] : by_index) m.names[static_cast<size_t>(idx)] = name;
    return m;
}

void write_mapping(const std::string& path, const std::vector<std::string>& names) {
    std::string body;
    for (size_t i = 0; i < names.size(); ++i)
        body += std::to_string(i) + " " + names[i] + "\n";
    write_text(path, body);
}

std::vector<int> load_labels(const std::string& path, const ClassMapping& mapping) {
    const auto lines = read_lines(path);
    std::vector<int> labels;
    labels.reserve(lines.size());
    for (size_t i = 0; i < lines.size(); ++i) {
        const int line = static_cast<int>(i) + 1;
        if (is_blank(lines[i])) {
            for (size_t j = i; j < lines.size(); ++j)
                if (!is_blank(lines[j]))
                    throw FormatError(path + ":" + std::to_string(line) + ": blank line");
            break;
        }
        try {
            labels.push_back(mapping.require(lines[i], line));
        } catch (const FormatError& e) {
            throw FormatError(path + ":" + e.what());
        }
    }
    if (labels.empty()) throw FormatError(path + ": empty label file");
    return labels;
}

void write_labels(const std::string& path, const std::vector<int>& labels,
                  const ClassMapping& mapping) {
    std::string body;
    for (int y : labels) {
        if (y < 0 || y >= mapping.size())
            throw ValidationError("write_labels: label " + std::to_string(y) + " out of range");
        body += mapping.names[static_cast<size_t>(y)] + "\n";
    }
    write_text(path, body);
}

std::vector<std::string> load_split(const std::string& path) {
    const auto lines = read_lines(path);
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (size_t i = 0; i < lines.size(); ++i) {
        const int line = static_cast<int>(i) + 1;
        if (is_blank(lines[i])) continue;
        std::istringstream ss(lines[i]);
        std::string id, extra;
        ss >> id;
        if (ss >> extra)
            throw FormatError(path + ":" + std::to_string(line) + ": trailing token '" + extra +
                              "'");
        if (!seen.insert(id).second)
            throw FormatError(path + ":" + std::to_string(line) + ": duplicate id '" + id + "'");
        ids.push_back(id);
    }
    if (ids.empty()) throw FormatError(path + ": empty split file");
    return ids;
}

void write_split(const std::string& path, const std::vector<std::string>& ids) {
    std::string body;
    for (const auto& id : ids) body += id + "\n";
    write_text(path, body);
}

std::map<std::string, int> load_activities(const std::string& path) {
    const auto lines = read_lines(path);
    std::map<std::string, int> out;
    for (size_t i = 0; i < lines.size(); ++i) {
        const int line = static_cast<int>(i) + 1;
        if (is_blank(lines[i])) continue;
        std::istringstream ss(lines[i]);
        std::string id, k_tok, extra;
        ss >> id >> k_tok;
        if (k_tok.empty())
            throw FormatError(path + ":" + std::to_string(line) +
                              ": expected '<id> <activity index>'");
        if (ss >> extra)
            throw FormatError(path + ":" + std::to_string(line) + ": trailing token '" + extra +
                              "'");
        const int k = parse_int_token(k_tok, path, line, "activity index");
        if (k < 0)
            throw FormatError(path + ":" + std::to_string(line) + ": negative activity index");
        if (out.count(id))
            throw FormatError(path + ":" + std::to_string(line) + ": duplicate id '" + id + "'");
        out[id] = k;
    }
    if (out.empty()) throw FormatError(path + ": empty activities file");
    return out;
}

void write_activities(const std::string& path, const std::vector<VideoRecord>& records) {
    std::string body;
    for (const auto& r : records) body += r.id + " " + std::to_string(r.activity) + "\n";
    write_text(path, body);
}

void SyntheticSpec::validate() const {
    if (num_videos < 1) throw ConfigError("synthetic: num_videos must be >= 1");
    if (num_classes < 2) throw ConfigError("synthetic: num_classes must be >= 2");
    if (num_activities < 1) throw ConfigError("synthetic: num_activities must be >= 1");
    if (d < 1) throw ConfigError("synthetic: d must be >= 1");
    if (actions_min < 1 || actions_max < actions_min)
        throw ConfigError("synthetic: need 1 <= actions_min <= actions_max");
    if (t_min < actions_max || t_max < t_min)
        throw ConfigError("synthetic: need actions_max <= t_min <= t_max");
    if (noise_scale < 0.0) throw ConfigError("synthetic: noise_scale must be >= 0");
    if (static_cast<int>(activity_subsets.size()) != num_activities)
        throw ConfigError("synthetic: need one action subset per activity");
    for (const auto& sub : activity_subsets) {
        if (sub.empty()) throw ConfigError("synthetic: empty activity subset");
        for (int c : sub)
            if (c < 0 || c >= num_classes)
                throw ConfigError("synthetic: subset class " + std::to_string(c) +
                                  " out of range");
        if (std::set<int>(sub.begin(), sub.end()).size() != sub.size())
            throw ConfigError("synthetic: duplicate class in activity subset");
    }
    if (static_cast<int>(class_means.size()) != num_classes)
        throw ConfigError("synthetic: need one mean vector per class");
    for (const auto& mu : class_means)
        if (static_cast<int>(mu.size()) != d)
            throw ConfigError("synthetic: class mean has wrong dimension");
    for (size_t a = 0; a < class_means.size(); ++a)
        for (size_t b = a + 1; b < class_means.size(); ++b)
            if (class_means[a] == class_means[b])
                throw ConfigError("synthetic: class means " + std::to_string(a) + " and " +
                                  std::to_string(b) + " coincide");
}

SyntheticSpec default_synthetic_spec(int num_videos, int num_classes, int num_activities, int d,
                                     std::uint64_t seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.num_videos = num_videos;
    spec.num_classes = num_classes;
    spec.num_activities = num_activities;
    spec.d = d;
    if (num_activities >= 1 && num_classes >= num_activities) {
        spec.activity_subsets.assign(static_cast<size_t>(num_activities), {});
        for (int c = 0; c < num_classes; ++c)
            spec.activity_subsets[static_cast<size_t>(c % num_activities)].push_back(c);
    }
    // Orthogonal-ish means: a strong hot dimension per class plus a weaker
    // secondary one so classes stay distinct even when C > d.
    spec.class_means.assign(static_cast<size_t>(std::max(num_classes, 0)),
                            std::vector<double>(static_cast<size_t>(std::max(d, 1)), 0.0));
    for (int c = 0; c < num_classes && d >= 1; ++c) {
        spec.class_means[static_cast<size_t>(c)][static_cast<size_t>(c % d)] += 1.0;
        spec.class_means[static_cast<size_t>(c)][static_cast<size_t>((c / d + c) % d)] += 0.5;
    }
    return spec;
}

std::vector<VideoRecord> make_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<int> t_dist(spec.t_min, spec.t_max);
    std::uniform_int_distribution<int> n_dist(spec.actions_min, spec.actions_max);
    std::uniform_real_distribution<double> weight(1.0, 2.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<VideoRecord> out;
    out.reserve(static_cast<size_t>(spec.num_videos));
    int width = 1;
    for (int n = spec.num_videos - 1; n >= 10; n /= 10) ++width;

    for (int v = 0; v < spec.num_videos; ++v) {
        VideoRecord rec;
        std::string num = std::to_string(v);
        rec.id = "vid" + std::string(static_cast<size_t>(width) - num.size(), '0') + num;
        rec.activity = v % spec.num_activities;  // round-robin keeps activities balanced
        const auto& subset = spec.activity_subsets[static_cast<size_t>(rec.activity)];

        const int t = t_dist(rng);
        const int n_seg = std::min(n_dist(rng), t);

        std::vector<int> actions(static_cast<size_t>(n_seg));
        std::uniform_int_distribution<size_t> pick(0, subset.size() - 1);
        for (int s = 0; s < n_seg; ++s) {
            int a = subset[pick(rng)];
            while (subset.size() > 1 && s > 0 && a == actions[static_cast<size_t>(s - 1)])
                a = subset[pick(rng)];
            actions[static_cast<size_t>(s)] = a;
        }

        // Partition t frames into n_seg runs, each at least one frame long.
        std::vector<double> w(static_cast<size_t>(n_seg));
        double total = 0.0;
        for (auto& x : w) {
            x = weight(rng);
            total += x;
        }
        std::vector<int> len(static_cast<size_t>(n_seg));
        int assigned = 0;
        for (int s = 0; s < n_seg; ++s) {
            len[static_cast<size_t>(s)] =
                1 + static_cast<int>(std::floor(w[static_cast<size_t>(s)] / total * (t - n_seg)));
            assigned += len[static_cast<size_t>(s)];
        }
        for (int r = 0; r < t - assigned; ++r) ++len[static_cast<size_t>(r % n_seg)];

        rec.frame_labels.reserve(static_cast<size_t>(t));
        for (int s = 0; s < n_seg; ++s)
            rec.frame_labels.insert(rec.frame_labels.end(), static_cast<size_t>(len[static_cast<size_t>(s)]),
                                    actions[static_cast<size_t>(s)]);

        rec.features = Matrix(t, spec.d);
        for (int r = 0; r < t; ++r) {
            const auto& mu = spec.class_means[static_cast<size_t>(rec.frame_labels[static_cast<size_t>(r)])];
            for (int c = 0; c < spec.d; ++c) {
                const double x = mu[static_cast<size_t>(c)] + spec.noise_scale * gauss(rng);
                // Quantize like the on-disk format so a save/load round trip is exact.
                rec.features(r, c) = static_cast<double>(static_cast<float>(x));
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

void write_dataset(const std::string& dir, const std::vector<VideoRecord>& records,
                   const ClassMapping& mapping) {
    fs::create_directories(fs::path(dir) / "features");
    fs::create_directories(fs::path(dir) / "labels");
    write_mapping((fs::path(dir) / "mapping.txt").string(), mapping.names);
    write_activities((fs::path(dir) / "activities.txt").string(), records);
    for (const auto& r : records) {
        write_features((fs::path(dir) / "features" / (r.id + ".bin")).string(), r.features);
        write_labels((fs::path(dir) / "labels" / (r.id + ".txt")).string(), r.frame_labels,
                     mapping);
    }
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    ds.mapping = load_mapping((fs::path(dir) / "mapping.txt").string());
    const auto activities = load_activities((fs::path(dir) / "activities.txt").string());

    const fs::path feat_dir = fs::path(dir) / "features";
    if (!fs::is_directory(feat_dir))
        throw FormatError(feat_dir.string() + ": not a directory");
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(feat_dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".bin") continue;
        ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw FormatError(feat_dir.string() + ": no feature files");

    int max_k = 0;
    for (const auto& id : ids) {
        VideoRecord rec;
        rec.id = id;
        rec.features = load_features((feat_dir / (id + ".bin")).string());
        rec.frame_labels =
            load_labels((fs::path(dir) / "labels" / (id + ".txt")).string(), ds.mapping);
        if (static_cast<int>(rec.frame_labels.size()) != rec.features.rows)
            throw FormatError(id + ": " + std::to_string(rec.features.rows) +
                              " feature frames but " + std::to_string(rec.frame_labels.size()) +
                              " label lines");
        auto it = activities.find(id);
        if (it == activities.end())
            throw FormatError("activities.txt: missing entry for '" + id + "'");
        rec.activity = it->second;
        max_k = std::max(max_k, rec.activity);
        ds.videos.push_back(std::move(rec));
    }
    ds.num_activities = max_k + 1;
    return ds;
}

std::vector<Fold> kfold_splits(const std::vector<std::string>& ids, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("kfold: k must be >= 2");
    if (k > static_cast<int>(ids.size()))
        throw ConfigError("kfold: k=" + std::to_string(k) + " exceeds " +
                          std::to_string(ids.size()) + " ids");
    std::set<std::string> uniq(ids.begin(), ids.end());
    if (uniq.size() != ids.size()) throw ValidationError("kfold: duplicate ids");

    std::vector<std::string> order(ids);
    std::sort(order.begin(), order.end());  // independent of caller's ordering
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<Fold> folds(static_cast<size_t>(k));
    for (size_t i = 0; i < order.size(); ++i)
        folds[i % static_cast<size_t>(k)].test.push_back(order[i]);
    for (auto& f : folds) {
        std::sort(f.test.begin(), f.test.end());
        for (const auto& id : order)
            if (!std::binary_search(f.test.begin(), f.test.end(), id)) f.train.push_back(id);
        std::sort(f.train.begin(), f.train.end());
    }
    return folds;
}

}  // namespace c2f
