#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpfed/model.hpp"
#include "dpfed/numeric.hpp"
#include "dpfed/rng.hpp"

namespace dpfed {

enum class Provenance { SyntheticBlobs, Csv, RawGray8 };

struct NormalizeParams {
    std::vector<double> mean;
    std::vector<double> scale;  // 1/stddev, 0 for constant features
};

struct Dataset {
    Matrix features;
    std::vector<int> labels;
    int class_count = 0;
    Provenance provenance = Provenance::SyntheticBlobs;
    std::vector<std::string> label_names;  // dense index -> original label
    std::optional<NormalizeParams> normalization;

    std::size_t n() const { return features.rows; }
    std::size_t feature_dim() const { return features.cols; }

    void validate() const {
        if (features.rows != labels.size())
            throw std::invalid_argument("Dataset: rows and labels differ");
        for (int y : labels)
            if (y < 0 || y >= class_count)
                throw std::invalid_argument("Dataset: label out of range");
        if (!all_finite(features.data))
            throw std::invalid_argument("Dataset: non-finite feature");
    }
};

enum class PartitionMode { Iid, LabelSkew };

struct PartitionPlan {
    PartitionMode mode = PartitionMode::Iid;
    double concentration = 0.5;  // Dirichlet alpha for LabelSkew
    std::size_t client_count = 1;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i)
        std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
}

// Marsaglia-Tsang gamma sampler (shape alpha, unit scale). Clamped away
// from zero so Dirichlet proportions never collapse to an all-zero vector.
inline double gamma_sample(double alpha, Rng& rng) {
    if (alpha < 1.0) {
        const double u = rng.uniform_open01();
        return std::max(gamma_sample(alpha + 1.0, rng) *
                            std::pow(u, 1.0 / alpha),
                        1e-300);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = rng.gaussian();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        const double u = rng.uniform_open01();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v))
            return d * v;
    }
}

}  // namespace detail

// Gaussian clusters, one per class, centered on a seeded integer lattice
// scaled well apart. Deterministic per seed.
inline Dataset generate_blobs(int class_count, int samples_per_class,
                              int feature_dim, double spread,
                              std::uint64_t seed) {
    if (class_count < 2 || samples_per_class < 1 || feature_dim < 1)
        throw std::invalid_argument("generate_blobs: invalid counts");
    if (!(spread >= 0.0))
        throw std::invalid_argument("generate_blobs: negative spread");

    Rng rng(derive_seed(seed, {stream::kData}));

    // Lattice points in row-major order over a grid wide enough for all
    // classes, spaced 4 units apart, assigned to classes in seeded order.
    const auto side = static_cast<std::size_t>(std::ceil(
        std::pow(static_cast<double>(class_count),
                 1.0 / static_cast<double>(feature_dim))));
    std::vector<std::vector<double>> centers;
    for (int c = 0; c < class_count; ++c) {
        std::vector<double> center(static_cast<std::size_t>(feature_dim));
        std::size_t rem = static_cast<std::size_t>(c);
        for (int d = 0; d < feature_dim; ++d) {
            center[static_cast<std::size_t>(d)] =
                4.0 * static_cast<double>(rem % side);
            rem /= side;
        }
        centers.push_back(std::move(center));
    }
    const auto order =
        detail::shuffled_indices(static_cast<std::size_t>(class_count), rng);

    Dataset ds;
    ds.class_count = class_count;
    ds.provenance = Provenance::SyntheticBlobs;
    ds.features = Matrix(
        static_cast<std::size_t>(class_count) *
            static_cast<std::size_t>(samples_per_class),
        static_cast<std::size_t>(feature_dim));
    ds.labels.reserve(ds.features.rows);
    std::size_t row = 0;
    for (int c = 0; c < class_count; ++c) {
        const auto& center = centers[order[static_cast<std::size_t>(c)]];
        for (int s = 0; s < samples_per_class; ++s, ++row) {
            double* out = ds.features.row(row);
            for (int d = 0; d < feature_dim; ++d)
                out[d] = center[static_cast<std::size_t>(d)] +
                         spread * rng.gaussian();
            ds.labels.push_back(c);
        }
    }
    return ds;
}

// ---- CSV (RFC-4180-style, header row required) ----

namespace detail {

inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    char ch;
    while (in.get(ch)) {
        any = true;
        if (quoted) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    field.push_back('"');
                    in.get();
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (ch == '\n') {
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
        } else if (ch != '\r') {
            field.push_back(ch);
        }
    }
    if (quoted) throw std::invalid_argument("csv: unterminated quote");
    if (any && (!field.empty() || !row.empty())) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline double parse_number(const std::string& s, std::size_t line,
                           const std::string& column) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != s.size() || s.empty())
        throw std::invalid_argument("csv: non-numeric value '" + s +
                                    "' in column '" + column + "' at line " +
                                    std::to_string(line));
    return v;
}

}  // namespace detail

// Load a numeric-feature dataset. `label_column` is a header name, or a
// 0-based column index if it parses as an integer and no header matches.
// Labels are mapped to dense indices in first-appearance order.
inline Dataset load_csv(const std::string& path,
                        const std::string& label_column) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("csv: cannot open " + path);
    const auto rows = detail::parse_csv(in);
    if (rows.size() < 2)
        throw std::invalid_argument("csv: need a header row and data rows");

    const auto& header = rows.front();
    std::size_t label_idx = header.size();
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == label_column) label_idx = i;
    if (label_idx == header.size()) {
        try {
            std::size_t pos = 0;
            const long v = std::stol(label_column, &pos);
            if (pos == label_column.size() && v >= 0 &&
                static_cast<std::size_t>(v) < header.size())
                label_idx = static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
    }
    if (label_idx == header.size())
        throw std::invalid_argument("csv: unknown label column '" +
                                    label_column + "'");

    Dataset ds;
    ds.provenance = Provenance::Csv;
    ds.features = Matrix(rows.size() - 1, header.size() - 1);
    ds.labels.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        if (cells.size() != header.size())
            throw std::invalid_argument(
                "csv: ragged row at line " + std::to_string(r + 1) + " (" +
                std::to_string(cells.size()) + " fields, expected " +
                std::to_string(header.size()) + ")");
        std::size_t f = 0;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c == label_idx) continue;
            ds.features.at(r - 1, f++) =
                detail::parse_number(cells[c], r + 1, header[c]);
        }
        const std::string& name = cells[label_idx];
        auto it = std::find(ds.label_names.begin(), ds.label_names.end(), name);
        if (it == ds.label_names.end()) {
            ds.label_names.push_back(name);
            ds.labels.push_back(static_cast<int>(ds.label_names.size()) - 1);
        } else {
            ds.labels.push_back(
                static_cast<int>(it - ds.label_names.begin()));
        }
    }
    ds.class_count = static_cast<int>(ds.label_names.size());
    ds.validate();
    return ds;
}

// Inverse of load_csv for datasets with numeric features. Doubles are
// written with 17 significant digits so a round trip is bit exact.
inline void write_csv(const Dataset& ds, const std::string& path,
                      const std::string& label_column = "label") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("csv: cannot write " + path);
    char buf[64];
    for (std::size_t c = 0; c < ds.feature_dim(); ++c)
        out << "f" << c << ",";
    out << label_column << "\n";
    for (std::size_t r = 0; r < ds.n(); ++r) {
        for (std::size_t c = 0; c < ds.feature_dim(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", ds.features.at(r, c));
            out << buf << ",";
        }
        const auto y = static_cast<std::size_t>(ds.labels[r]);
        out << (y < ds.label_names.size() ? ds.label_names[y]
                                          : std::to_string(y))
            << "\n";
    }
}

// Per-feature affine map to zero mean and unit variance; constant features
// map to zero. The fitted parameters ride along in the returned dataset so
// they can be reapplied to evaluation data.
inline Dataset normalize(const Dataset& ds) {
    if (ds.n() == 0) throw std::invalid_argument("normalize: empty dataset");
    NormalizeParams p;
    p.mean.resize(ds.feature_dim());
    p.scale.resize(ds.feature_dim());
    const auto n = static_cast<double>(ds.n());
    for (std::size_t c = 0; c < ds.feature_dim(); ++c) {
        double m = 0.0;
        for (std::size_t r = 0; r < ds.n(); ++r) m += ds.features.at(r, c);
        m /= n;
        double var = 0.0;
        for (std::size_t r = 0; r < ds.n(); ++r) {
            const double d = ds.features.at(r, c) - m;
            var += d * d;
        }
        var /= n;
        p.mean[c] = m;
        p.scale[c] = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    }
    Dataset out = ds;
    for (std::size_t r = 0; r < ds.n(); ++r)
        for (std::size_t c = 0; c < ds.feature_dim(); ++c)
            out.features.at(r, c) =
                (ds.features.at(r, c) - p.mean[c]) * p.scale[c];
    out.normalization = std::move(p);
    return out;
}

inline Dataset apply_normalization(const Dataset& ds,
                                   const NormalizeParams& p) {
    if (p.mean.size() != ds.feature_dim())
        throw std::invalid_argument("apply_normalization: dim mismatch");
    Dataset out = ds;
    for (std::size_t r = 0; r < ds.n(); ++r)
        for (std::size_t c = 0; c < ds.feature_dim(); ++c)
            out.features.at(r, c) =
                (ds.features.at(r, c) - p.mean[c]) * p.scale[c];
    out.normalization = p;
    return out;
}

// Classic cumulative-histogram equalization of an 8-bit grayscale buffer.
inline std::vector<std::uint8_t> equalize_gray8(
    const std::vector<std::uint8_t>& image, std::size_t width,
    std::size_t height) {
    if (image.size() != width * height)
        throw std::invalid_argument("equalize_gray8: buffer size mismatch");
    std::array<std::size_t, 256> hist{};
    for (std::uint8_t v : image) ++hist[v];
    std::array<std::size_t, 256> cdf{};
    std::size_t acc = 0;
    std::size_t cdf_min = 0;
    bool seen = false;
    for (std::size_t v = 0; v < 256; ++v) {
        acc += hist[v];
        cdf[v] = acc;
        if (!seen && hist[v] > 0) {
            cdf_min = acc;
            seen = true;
        }
    }
    const std::size_t n = image.size();
    if (n == 0 || cdf_min == n) return image;  // empty or constant image
    std::array<std::uint8_t, 256> lut{};
    const double denom = static_cast<double>(n - cdf_min);
    for (std::size_t v = 0; v < 256; ++v) {
        const double mapped =
            255.0 * (static_cast<double>(cdf[v]) -
                     static_cast<double>(cdf_min)) / denom;
        lut[v] = static_cast<std::uint8_t>(std::lround(std::max(0.0, mapped)));
    }
    std::vector<std::uint8_t> out(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) out[i] = lut[image[i]];
    return out;
}

// Split the dataset into per-client index lists: disjoint, exhaustive,
// every client nonempty. Iid shuffles and slices near-equally; LabelSkew
// draws per-class client proportions from a symmetric Dirichlet.
inline std::vector<std::vector<std::size_t>> partition(
    const Dataset& ds, const PartitionPlan& plan) {
    if (plan.client_count == 0)
        throw std::invalid_argument("partition: need at least one client");
    if (plan.client_count > ds.n())
        throw std::invalid_argument("partition: more clients than samples");
    Rng rng(derive_seed(plan.seed, {stream::kPartition}));
    std::vector<std::vector<std::size_t>> shards(plan.client_count);

    if (plan.mode == PartitionMode::Iid) {
        const auto idx = detail::shuffled_indices(ds.n(), rng);
        const std::size_t base = ds.n() / plan.client_count;
        const std::size_t extra = ds.n() % plan.client_count;
        std::size_t pos = 0;
        for (std::size_t c = 0; c < plan.client_count; ++c) {
            const std::size_t take = base + (c < extra ? 1 : 0);
            shards[c].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                             idx.begin() +
                                 static_cast<std::ptrdiff_t>(pos + take));
            pos += take;
        }
    } else {
        if (!(plan.concentration > 0.0))
            throw std::invalid_argument("partition: concentration must be > 0");
        // Per-class sample pools in seeded-shuffled order.
        std::vector<std::vector<std::size_t>> pools(
            static_cast<std::size_t>(ds.class_count));
        for (std::size_t i = 0; i < ds.n(); ++i)
            pools[static_cast<std::size_t>(ds.labels[i])].push_back(i);
        for (auto& pool : pools) {
            const auto order = detail::shuffled_indices(pool.size(), rng);
            std::vector<std::size_t> shuffled(pool.size());
            for (std::size_t i = 0; i < pool.size(); ++i)
                shuffled[i] = pool[order[i]];
            pool.swap(shuffled);
        }
        for (const auto& pool : pools) {
            // Dirichlet proportions via gamma draws, then largest-remainder
            // rounding of the per-client quotas.
            std::vector<double> g(plan.client_count);
            double gsum = 0.0;
            for (auto& v : g) {
                v = detail::gamma_sample(plan.concentration, rng);
                gsum += v;
            }
            std::vector<std::size_t> counts(plan.client_count, 0);
            std::vector<std::pair<double, std::size_t>> rem;
            std::size_t assigned = 0;
            for (std::size_t c = 0; c < plan.client_count; ++c) {
                const double quota =
                    static_cast<double>(pool.size()) * g[c] / gsum;
                counts[c] = static_cast<std::size_t>(quota);
                assigned += counts[c];
                rem.emplace_back(quota - std::floor(quota), c);
            }
            std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
                return a.first > b.first ||
                       (a.first == b.first && a.second < b.second);
            });
            for (std::size_t k = 0; assigned < pool.size(); ++k, ++assigned)
                ++counts[rem[k % rem.size()].second];
            std::size_t pos = 0;
            for (std::size_t c = 0; c < plan.client_count; ++c) {
                shards[c].insert(shards[c].end(), pool.begin() +
                                                      static_cast<std::ptrdiff_t>(pos),
                                 pool.begin() +
                                     static_cast<std::ptrdiff_t>(pos + counts[c]));
                pos += counts[c];
            }
        }
        // Repair empty clients by taking one sample from the largest shard.
        for (std::size_t c = 0; c < plan.client_count; ++c) {
            while (shards[c].empty()) {
                std::size_t largest = 0;
                for (std::size_t k = 1; k < plan.client_count; ++k)
                    if (shards[k].size() > shards[largest].size()) largest = k;
                if (shards[largest].size() <= 1)
                    throw std::runtime_error("partition: cannot repair shards");
                shards[c].push_back(shards[largest].back());
                shards[largest].pop_back();
            }
        }
        // Mix class order within each shard.
        for (auto& shard : shards) {
            const auto order = detail::shuffled_indices(shard.size(), rng);
            std::vector<std::size_t> mixed(shard.size());
            for (std::size_t i = 0; i < shard.size(); ++i)
                mixed[i] = shard[order[i]];
            shard.swap(mixed);
        }
    }
    return shards;
}

// Materialize a TrainingBatch from dataset rows.
inline TrainingBatch make_batch(const Dataset& ds,
                                const std::vector<std::size_t>& indices) {
    TrainingBatch b;
    b.features = Matrix(indices.size(), ds.feature_dim());
    b.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* src = ds.features.row(indices[i]);
        std::copy(src, src + ds.feature_dim(), b.features.row(i));
        b.labels.push_back(ds.labels[indices[i]]);
    }
    return b;
}

// ---- RawGray8: magic "FG8\0", u32 count/width/height (LE), raw pixels ----

struct Gray8Stack {
    std::uint32_t count = 0;
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<std::uint8_t> pixels;  // count * width * height bytes
};

namespace detail {

inline std::uint32_t read_u32le(std::istream& in) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (!in) throw std::runtime_error("rawgray8: truncated header");
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_u32le(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xff),
                                static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff),
                                static_cast<char>((v >> 24) & 0xff)};
    out.write(b.data(), 4);
}

}  // namespace detail

inline Gray8Stack load_rawgray8(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("rawgray8: cannot open " + path);
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || magic != std::array<char, 4>{'F', 'G', '8', '\0'})
        throw std::runtime_error("rawgray8: bad magic in " + path);
    Gray8Stack s;
    s.count = detail::read_u32le(in);
    s.width = detail::read_u32le(in);
    s.height = detail::read_u32le(in);
    const std::size_t bytes = static_cast<std::size_t>(s.count) * s.width *
                              s.height;
    s.pixels.resize(bytes);
    in.read(reinterpret_cast<char*>(s.pixels.data()),
            static_cast<std::streamsize>(bytes));
    if (!in || in.gcount() != static_cast<std::streamsize>(bytes))
        throw std::runtime_error("rawgray8: truncated pixel data in " + path);
    return s;
}

inline void save_rawgray8(const Gray8Stack& s, const std::string& path) {
    if (s.pixels.size() !=
        static_cast<std::size_t>(s.count) * s.width * s.height)
        throw std::invalid_argument("rawgray8: pixel buffer size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("rawgray8: cannot write " + path);
    out.write("FG8\0", 4);
    detail::write_u32le(out, s.count);
    detail::write_u32le(out, s.width);
    detail::write_u32le(out, s.height);
    out.write(reinterpret_cast<const char*>(s.pixels.data()),
              static_cast<std::streamsize>(s.pixels.size()));
}

// Sidecar label list for RawGray8 stacks: one integer class index per line.
inline std::vector<int> load_label_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("labels: cannot open " + path);
    std::vector<int> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            std::size_t pos = 0;
            const int v = std::stoi(line, &pos);
            if (pos != line.size()) throw std::invalid_argument(line);
            out.push_back(v);
        } catch (const std::exception&) {
            throw std::runtime_error("labels: bad entry at line " +
                                     std::to_string(lineno) + " of " + path);
        }
    }
    return out;
}

// Flatten images to feature vectors (bytes scaled to [0,1]) after optional
// per-image histogram equalization. Labels come from a sidecar list, one
// dense class index per image.
inline Dataset gray8_to_dataset(const Gray8Stack& s,
                                const std::vector<int>& labels,
                                bool equalize) {
    if (labels.size() != s.count)
        throw std::invalid_argument("rawgray8: label count mismatch");
    const std::size_t dim = static_cast<std::size_t>(s.width) * s.height;
    Dataset ds;
    ds.provenance = Provenance::RawGray8;
    ds.features = Matrix(s.count, dim);
    ds.labels = labels;
    int maxy = 0;
    for (int y : labels) {
        if (y < 0) throw std::invalid_argument("rawgray8: negative label");
        maxy = std::max(maxy, y);
    }
    ds.class_count = maxy + 1;
    for (std::size_t i = 0; i < s.count; ++i) {
        std::vector<std::uint8_t> img(s.pixels.begin() +
                                          static_cast<std::ptrdiff_t>(i * dim),
                                      s.pixels.begin() +
                                          static_cast<std::ptrdiff_t>((i + 1) *
                                                                      dim));
        if (equalize) img = equalize_gray8(img, s.width, s.height);
        double* row = ds.features.row(i);
        for (std::size_t j = 0; j < dim; ++j)
            row[j] = static_cast<double>(img[j]) / 255.0;
    }
    return ds;
}

}  // namespace dpfed
