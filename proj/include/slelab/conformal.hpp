#pragma once

// Brownian-motion estimators (walk on spheres) for escape probabilities and
// harmonic measure, boolean raster domains, Whitney square decompositions,
// quasihyperbolic graph distances, and shadow sums along graph geodesics.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"
#include "stats.hpp"

namespace slelab::conformal {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// obstacles

// Axis-aligned-box BVH over line segments for nearest-distance queries.
class SegmentBvh {
public:
    void build(std::vector<std::pair<cplx, cplx>> segs)
    {
        segs_ = std::move(segs);
        index_.resize(segs_.size());
        for (size_t i = 0; i < segs_.size(); ++i) index_[i] = i;
        nodes_.clear();
        if (!segs_.empty()) build_node(0, segs_.size());
    }

    bool empty() const { return segs_.empty(); }

    // squared distance to the nearest segment, early-exiting on best-so-far
    double distance(cplx p) const
    {
        if (segs_.empty()) return std::numeric_limits<double>::infinity();
        double best = std::numeric_limits<double>::infinity();
        query(0, p, best);
        return std::sqrt(best);
    }

private:
    struct Node {
        double x0, y0, x1, y1;
        uint32_t left = 0, right = 0; // children, or begin/end when leaf
        bool leaf = false;
    };

    static double seg_dist2(cplx p, const std::pair<cplx, cplx>& s)
    {
        cplx d = s.second - s.first;
        double l2 = std::norm(d);
        double t = l2 > 0.0 ? std::clamp(((p - s.first) * std::conj(d)).real() / l2, 0.0, 1.0)
                            : 0.0;
        return std::norm(p - (s.first + t * d));
    }

    uint32_t build_node(size_t b, size_t e)
    {
        Node n;
        n.x0 = n.y0 = 1e300;
        n.x1 = n.y1 = -1e300;
        for (size_t i = b; i < e; ++i) {
            const auto& s = segs_[index_[i]];
            n.x0 = std::min({n.x0, s.first.real(), s.second.real()});
            n.x1 = std::max({n.x1, s.first.real(), s.second.real()});
            n.y0 = std::min({n.y0, s.first.imag(), s.second.imag()});
            n.y1 = std::max({n.y1, s.first.imag(), s.second.imag()});
        }
        auto id = static_cast<uint32_t>(nodes_.size());
        nodes_.push_back(n);
        if (e - b <= 8) {
            nodes_[id].leaf = true;
            nodes_[id].left = static_cast<uint32_t>(b);
            nodes_[id].right = static_cast<uint32_t>(e);
            return id;
        }
        bool split_x = (n.x1 - n.x0) > (n.y1 - n.y0);
        auto mid = index_.begin() + static_cast<ptrdiff_t>((b + e) / 2);
        std::nth_element(index_.begin() + static_cast<ptrdiff_t>(b), mid,
                         index_.begin() + static_cast<ptrdiff_t>(e),
                         [&](size_t i, size_t j) {
                             auto key = [&](size_t k) {
                                 const auto& s = segs_[k];
                                 return split_x ? s.first.real() + s.second.real()
                                                : s.first.imag() + s.second.imag();
                             };
                             return key(i) < key(j);
                         });
        uint32_t l = build_node(b, (b + e) / 2);
        uint32_t r = build_node((b + e) / 2, e);
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    void query(uint32_t id, cplx p, double& best) const
    {
        const Node& n = nodes_[id];
        double dx = std::max({n.x0 - p.real(), 0.0, p.real() - n.x1});
        double dy = std::max({n.y0 - p.imag(), 0.0, p.imag() - n.y1});
        if (dx * dx + dy * dy >= best) return;
        if (n.leaf) {
            for (uint32_t i = n.left; i < n.right; ++i)
                best = std::min(best, seg_dist2(p, segs_[index_[i]]));
            return;
        }
        query(n.left, p, best);
        query(n.right, p, best);
    }

    std::vector<std::pair<cplx, cplx>> segs_;
    std::vector<size_t> index_;
    std::vector<Node> nodes_;
};

enum class WallKind { none, half_plane, strip, disk };

// Absorbing geometry for walk-on-spheres: optional analytic walls plus any
// number of polyline groups (each group is one harmonic-measure part).
struct ObstacleSet {
    WallKind wall = WallKind::none;
    double strip_height = M_PI;
    cplx disk_center{0.0, 0.0};
    double disk_radius = 1.0;
    double delta_abs = 1e-6;

    std::vector<SegmentBvh> groups;
    std::vector<std::string> group_names;

    void add_polyline(const std::vector<cplx>& pts, const std::string& name)
    {
        if (pts.size() < 2) throw std::invalid_argument("polyline needs >= 2 points");
        std::vector<std::pair<cplx, cplx>> segs;
        segs.reserve(pts.size() - 1);
        for (size_t i = 0; i + 1 < pts.size(); ++i) segs.emplace_back(pts[i], pts[i + 1]);
        groups.emplace_back();
        groups.back().build(std::move(segs));
        group_names.push_back(name);
    }

    double wall_distance(cplx p) const
    {
        switch (wall) {
        case WallKind::none: return std::numeric_limits<double>::infinity();
        case WallKind::half_plane: return p.imag();
        case WallKind::strip: return std::min(p.imag(), strip_height - p.imag());
        case WallKind::disk: return disk_radius - std::abs(p - disk_center);
        }
        return std::numeric_limits<double>::infinity();
    }

    // distance to the nearest absorbing piece and which piece it is;
    // part index: 0..groups-1 for polylines, groups.size() for the wall
    std::pair<double, size_t> distance(cplx p) const
    {
        double best = wall_distance(p);
        size_t part = groups.size();
        for (size_t g = 0; g < groups.size(); ++g) {
            double d = groups[g].distance(p);
            if (d < best) { best = d; part = g; }
        }
        return {best, part};
    }
};

// ---------------------------------------------------------------------------
// walk on spheres

struct EscapeEstimate {
    double p = 0.0;
    stats::Interval ci;
    uint64_t successes = 0;
    uint64_t walks = 0;
};

// success predicate: reach distance R_macro from a center before absorption
struct SuccessDisk {
    cplx center{0.0, 0.0};
    double radius = 1.0;
};

namespace stream_id {
constexpr uint32_t walks = 20;
} // namespace stream_id

// One walk; returns {success, absorbed part index}.
inline std::pair<bool, size_t> walk_on_spheres(const ObstacleSet& obs, cplx z,
                                               const SuccessDisk& target,
                                               rng::Stream& rs, uint64_t& step)
{
    for (;;) {
        auto [d, part] = obs.distance(z);
        if (d < obs.delta_abs) return {false, part};
        double d_goal = target.radius - std::abs(z - target.center);
        if (d_goal <= 0.0) return {true, 0};
        double r = std::min(d, d_goal + obs.delta_abs);
        double angle = 2.0 * M_PI * rs.uniform(step++);
        z += std::polar(r, angle);
        if (std::abs(z - target.center) >= target.radius) return {true, 0};
    }
}

inline EscapeEstimate escape_probability(const ObstacleSet& obs, cplx start,
                                         const SuccessDisk& target, uint64_t walks,
                                         uint64_t seed)
{
    if (obs.distance(start).first <= obs.delta_abs)
        throw std::invalid_argument("escape_probability: start on or inside an obstacle");
    uint64_t succ = 0;
    for (uint64_t w = 0; w < walks; ++w) {
        rng::Stream rs{seed, stream_id::walks, w};
        uint64_t step = 0;
        if (walk_on_spheres(obs, start, target, rs, step).first) ++succ;
    }
    EscapeEstimate e;
    e.successes = succ;
    e.walks = walks;
    e.p = static_cast<double>(succ) / static_cast<double>(walks);
    e.ci = stats::wilson_interval(succ, walks);
    return e;
}

// Empirical hitting distribution over absorbing parts.  The classifier maps
// (part index, absorption point) to a final category; by default each
// polyline group is its own part and the wall is the last one.
struct HarmonicMeasure {
    std::vector<double> mass;      // sums to 1 over parts
    std::vector<uint64_t> counts;
    uint64_t walks = 0;
};

inline HarmonicMeasure harmonic_measure(
    const ObstacleSet& obs, cplx start, uint64_t walks, uint64_t seed,
    const std::function<size_t(size_t, cplx)>& classify = {}, size_t n_parts = 0)
{
    if (obs.distance(start).first <= obs.delta_abs)
        throw std::invalid_argument("harmonic_measure: start on or inside an obstacle");
    size_t parts = n_parts ? n_parts : obs.groups.size() + 1;
    HarmonicMeasure hm;
    hm.counts.assign(parts, 0);
    hm.walks = walks;
    for (uint64_t w = 0; w < walks; ++w) {
        rng::Stream rs{seed, stream_id::walks, w};
        uint64_t step = 0;
        cplx z = start;
        for (;;) {
            auto [d, part] = obs.distance(z);
            if (d < obs.delta_abs) {
                size_t c = classify ? classify(part, z) : part;
                ++hm.counts[std::min(c, parts - 1)];
                break;
            }
            double angle = 2.0 * M_PI * rs.uniform(step++);
            z += std::polar(d, angle);
        }
    }
    hm.mass.assign(parts, 0.0);
    for (size_t i = 0; i < parts; ++i)
        hm.mass[i] = static_cast<double>(hm.counts[i]) / static_cast<double>(walks);
    return hm;
}

// ---------------------------------------------------------------------------
// rasters

// Boolean raster: free pixels are the domain, blocked pixels (and anything
// outside the image) are the complement.
struct Raster {
    int nx = 0, ny = 0;
    double x0 = 0.0, y0 = 0.0; // center of pixel (0,0)
    double pixel = 1.0;
    std::vector<uint8_t> free_; // 1 = free

    bool inside(int i, int j) const { return i >= 0 && i < nx && j >= 0 && j < ny; }
    bool is_free(int i, int j) const { return inside(i, j) && free_[static_cast<size_t>(j) * nx + i]; }
    void set_free(int i, int j, bool f)
    {
        free_[static_cast<size_t>(j) * nx + i] = f ? 1 : 0;
    }
    cplx center(int i, int j) const { return {x0 + i * pixel, y0 + j * pixel}; }
    std::pair<int, int> locate(cplx p) const
    {
        return {static_cast<int>(std::lround((p.real() - x0) / pixel)),
                static_cast<int>(std::lround((p.imag() - y0) / pixel))};
    }
};

inline Raster make_raster(double x_lo, double y_lo, double x_hi, double y_hi, int nx)
{
    Raster r;
    r.nx = nx;
    r.pixel = (x_hi - x_lo) / (nx - 1);
    r.ny = static_cast<int>(std::lround((y_hi - y_lo) / r.pixel)) + 1;
    r.x0 = x_lo;
    r.y0 = y_lo;
    r.free_.assign(static_cast<size_t>(r.nx) * r.ny, 1);
    return r;
}

// Stamp a polyline as blocked pixels, thickened by `thicken` pixels.
inline void rasterize_polyline(Raster& r, const std::vector<cplx>& pts, int thicken = 1)
{
    auto stamp = [&](cplx p) {
        auto [i, j] = r.locate(p);
        for (int dj = -thicken; dj <= thicken; ++dj)
            for (int di = -thicken; di <= thicken; ++di)
                if (r.inside(i + di, j + dj)) r.set_free(i + di, j + dj, false);
    };
    for (size_t k = 0; k + 1 < pts.size(); ++k) {
        double len = std::abs(pts[k + 1] - pts[k]);
        int sub = std::max(1, static_cast<int>(len / (r.pixel * 0.5)));
        for (int s = 0; s <= sub; ++s)
            stamp(pts[k] + (pts[k + 1] - pts[k]) * (static_cast<double>(s) / sub));
    }
}

// PGM (P5) export/import: blocked = 0, free = 255.
inline void write_pgm(const Raster& r, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "P5\n" << r.nx << ' ' << r.ny << "\n255\n";
    for (int j = 0; j < r.ny; ++j)
        for (int i = 0; i < r.nx; ++i)
            out.put(r.is_free(i, j) ? char(255) : char(0));
}

inline Raster read_pgm(const std::string& path, double x0 = 0.0, double y0 = 0.0,
                       double pixel = 1.0)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw std::runtime_error("not a P5 pgm: " + path);
    int nx, ny, maxv;
    in >> nx >> ny >> maxv;
    in.get();
    Raster r;
    r.nx = nx;
    r.ny = ny;
    r.x0 = x0;
    r.y0 = y0;
    r.pixel = pixel;
    r.free_.assign(static_cast<size_t>(nx) * ny, 0);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) r.set_free(i, j, in.get() > 127);
    return r;
}

// Packed-bit binary raster: magic, dims, geometry, then rows padded to bytes.
inline void write_raster_bits(const Raster& r, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out.write("SLRASTER", 8);
    out.write(reinterpret_cast<const char*>(&r.nx), 4);
    out.write(reinterpret_cast<const char*>(&r.ny), 4);
    out.write(reinterpret_cast<const char*>(&r.x0), 8);
    out.write(reinterpret_cast<const char*>(&r.y0), 8);
    out.write(reinterpret_cast<const char*>(&r.pixel), 8);
    int stride = (r.nx + 7) / 8;
    std::vector<char> row(static_cast<size_t>(stride));
    for (int j = 0; j < r.ny; ++j) {
        std::fill(row.begin(), row.end(), 0);
        for (int i = 0; i < r.nx; ++i)
            if (r.is_free(i, j)) row[static_cast<size_t>(i / 8)] |= static_cast<char>(1 << (i % 8));
        out.write(row.data(), stride);
    }
}

inline Raster read_raster_bits(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (std::string(magic, 8) != "SLRASTER") throw std::runtime_error("bad raster magic");
    Raster r;
    in.read(reinterpret_cast<char*>(&r.nx), 4);
    in.read(reinterpret_cast<char*>(&r.ny), 4);
    in.read(reinterpret_cast<char*>(&r.x0), 8);
    in.read(reinterpret_cast<char*>(&r.y0), 8);
    in.read(reinterpret_cast<char*>(&r.pixel), 8);
    r.free_.assign(static_cast<size_t>(r.nx) * r.ny, 0);
    int stride = (r.nx + 7) / 8;
    std::vector<char> row(static_cast<size_t>(stride));
    for (int j = 0; j < r.ny; ++j) {
        in.read(row.data(), stride);
        for (int i = 0; i < r.nx; ++i)
            r.set_free(i, j, (row[static_cast<size_t>(i / 8)] >> (i % 8)) & 1);
    }
    return r;
}

// Exact Euclidean distance transform (Felzenszwalb-Huttenlocher), distance
// from each free pixel to the nearest non-free pixel, in pixel units.
// Pixels outside the image count as boundary.
inline std::vector<float> distance_transform(const Raster& r)
{
    const int nx = r.nx, ny = r.ny;
    const float INF = 1e20f;
    std::vector<float> f(static_cast<size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            f[static_cast<size_t>(j) * nx + i] = r.is_free(i, j) ? INF : 0.0f;

    auto dt1d = [](std::vector<float>& src, std::vector<float>& dst, int n) {
        static thread_local std::vector<int> v;
        static thread_local std::vector<float> z;
        v.assign(static_cast<size_t>(n), 0);
        z.assign(static_cast<size_t>(n) + 1, 0.0f);
        int k = 0;
        v[0] = 0;
        z[0] = -1e20f;
        z[1] = 1e20f;
        for (int q = 1; q < n; ++q) {
            float s;
            for (;;) {
                int p = v[static_cast<size_t>(k)];
                s = ((src[static_cast<size_t>(q)] + q * q) - (src[static_cast<size_t>(p)] + p * p)) /
                    (2.0f * (q - p));
                if (s <= z[static_cast<size_t>(k)]) { --k; continue; }
                break;
            }
            ++k;
            v[static_cast<size_t>(k)] = q;
            z[static_cast<size_t>(k)] = s;
            z[static_cast<size_t>(k) + 1] = 1e20f;
        }
        k = 0;
        for (int q = 0; q < n; ++q) {
            while (z[static_cast<size_t>(k) + 1] < static_cast<float>(q)) ++k;
            int p = v[static_cast<size_t>(k)];
            dst[static_cast<size_t>(q)] = static_cast<float>((q - p) * (q - p)) + src[static_cast<size_t>(p)];
        }
    };

    // columns then rows, on squared distances; image border is boundary too
    std::vector<float> col(static_cast<size_t>(ny)), colo(static_cast<size_t>(ny));
    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < ny; ++j) col[static_cast<size_t>(j)] = f[static_cast<size_t>(j) * nx + i];
        dt1d(col, colo, ny);
        for (int j = 0; j < ny; ++j) f[static_cast<size_t>(j) * nx + i] = colo[static_cast<size_t>(j)];
    }
    std::vector<float> row(static_cast<size_t>(nx)), rowo(static_cast<size_t>(nx));
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) row[static_cast<size_t>(i)] = f[static_cast<size_t>(j) * nx + i];
        dt1d(row, rowo, nx);
        for (int i = 0; i < nx; ++i) {
            float d = std::sqrt(rowo[static_cast<size_t>(i)]);
            // the image frame acts as boundary
            float frame = static_cast<float>(std::min(std::min(i, nx - 1 - i), std::min(j, ny - 1 - j)) + 1);
            f[static_cast<size_t>(j) * nx + i] = std::min(d, frame);
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// Whitney decomposition

struct WhitneyCell {
    double cx = 0.0, cy = 0.0; // center, domain units
    int level = 0;             // side = pixel * 2^(depth - level), see below
    double side = 0.0;         // domain units
    double dist = 0.0;         // Euclidean distance to the boundary
    double shadow_diam = 0.0;  // filled by shadow computation
    int i0 = 0, j0 = 0, cells = 0; // pixel anchor and width in pixels
};

struct WhitneyDecomposition {
    std::vector<WhitneyCell> cells;
    std::vector<std::vector<uint32_t>> adjacency;        // cells sharing an edge segment
    std::vector<std::vector<uint32_t>> corner_adjacency; // cells sharing only a corner
    double pixel = 1.0;
    int max_level = 0;
    // boundary-distance field (pixel units) kept for quasihyperbolic length
    std::vector<float> dist_field;
    int nx = 0, ny = 0;
    double x0 = 0.0, y0 = 0.0;

    double boundary_distance(double x, double y) const
    {
        double u = (x - x0) / pixel, v = (y - y0) / pixel;
        int i = std::clamp(static_cast<int>(u), 0, nx - 2);
        int j = std::clamp(static_cast<int>(v), 0, ny - 2);
        double fu = std::clamp(u - i, 0.0, 1.0), fv = std::clamp(v - j, 0.0, 1.0);
        auto at = [&](int a, int b) {
            return static_cast<double>(dist_field[static_cast<size_t>(b) * nx + a]);
        };
        double d = (1 - fu) * (1 - fv) * at(i, j) + fu * (1 - fv) * at(i + 1, j) +
                   (1 - fu) * fv * at(i, j + 1) + fu * fv * at(i + 1, j + 1);
        return std::max(d, 0.5) * pixel;
    }

    // cell containing a point, or -1
    int find(cplx p) const
    {
        for (size_t c = 0; c < cells.size(); ++c) {
            const auto& q = cells[c];
            if (p.real() >= q.cx - q.side / 2 && p.real() < q.cx + q.side / 2 &&
                p.imag() >= q.cy - q.side / 2 && p.imag() < q.cy + q.side / 2)
                return static_cast<int>(c);
        }
        return -1;
    }
};

namespace detail {

// min-pyramid over the distance transform for O(1) square minima
struct MinPyramid {
    std::vector<std::vector<float>> levels; // level l: blocks of 2^l pixels
    std::vector<int> w, h;

    void build(const std::vector<float>& base, int nx, int ny, int depth)
    {
        levels.assign(static_cast<size_t>(depth) + 1, {});
        w.assign(static_cast<size_t>(depth) + 1, 0);
        h.assign(static_cast<size_t>(depth) + 1, 0);
        levels[0] = base;
        w[0] = nx;
        h[0] = ny;
        for (int l = 1; l <= depth; ++l) {
            int pw = w[static_cast<size_t>(l) - 1], ph = h[static_cast<size_t>(l) - 1];
            int cw = (pw + 1) / 2, ch = (ph + 1) / 2;
            w[static_cast<size_t>(l)] = cw;
            h[static_cast<size_t>(l)] = ch;
            auto& cur = levels[static_cast<size_t>(l)];
            auto& prev = levels[static_cast<size_t>(l) - 1];
            cur.assign(static_cast<size_t>(cw) * ch, 1e20f);
            for (int j = 0; j < ph; ++j)
                for (int i = 0; i < pw; ++i) {
                    auto& c = cur[static_cast<size_t>(j / 2) * cw + i / 2];
                    c = std::min(c, prev[static_cast<size_t>(j) * pw + i]);
                }
        }
    }
    float block_min(int l, int bi, int bj) const
    {
        if (bi >= w[static_cast<size_t>(l)] || bj >= h[static_cast<size_t>(l)]) return 1e20f;
        return levels[static_cast<size_t>(l)][static_cast<size_t>(bj) * w[static_cast<size_t>(l)] + bi];
    }
};

} // namespace detail

// Dyadic Whitney decomposition of the free region of a raster.  Every emitted
// cell satisfies diam(Q) <= dist(Q, boundary) < 4 diam(Q).  `max_level` sets
// the coarsest requested resolution: cells are refined two extra dyadic
// levels below 2^-max_level relative to the raster extent, so that every free
// pixel farther than extent * 2^-max_level from the boundary is covered.
inline WhitneyDecomposition whitney_decompose(const Raster& r, int max_level)
{
    WhitneyDecomposition dec;
    dec.pixel = r.pixel;
    dec.max_level = max_level;
    dec.nx = r.nx;
    dec.ny = r.ny;
    dec.x0 = r.x0;
    dec.y0 = r.y0;
    auto dist = distance_transform(r);

    // depth: dyadic levels between the full extent and the pixel
    int extent = std::max(r.nx, r.ny);
    int depth = 0;
    while ((1 << depth) < extent) ++depth;
    int min_side_log = std::max(0, depth - max_level - 2); // two safety levels
    detail::MinPyramid pyr;
    pyr.build(dist, r.nx, r.ny, depth);

    // recursive quadtree: accept when sqrt(2) * side <= dist(Q)
    std::function<void(int, int, int)> visit = [&](int lvl_log, int bi, int bj) {
        int side_px = 1 << lvl_log;
        int i0 = bi * side_px, j0 = bj * side_px;
        if (i0 >= r.nx || j0 >= r.ny) return;
        float dmin = pyr.block_min(lvl_log, bi, bj);
        double diam = std::sqrt(2.0) * side_px;
        if (dmin >= diam && dmin < 1e19f) {
            WhitneyCell c;
            c.i0 = i0;
            c.j0 = j0;
            c.cells = side_px;
            c.side = side_px * r.pixel;
            c.level = depth - lvl_log;
            c.cx = r.x0 + (i0 + 0.5 * (side_px - 1)) * r.pixel;
            c.cy = r.y0 + (j0 + 0.5 * (side_px - 1)) * r.pixel;
            c.dist = dmin * r.pixel;
            dec.cells.push_back(c);
            return;
        }
        if (lvl_log <= min_side_log) return; // below resolution: collar, dropped
        for (int dj = 0; dj < 2; ++dj)
            for (int di = 0; di < 2; ++di)
                visit(lvl_log - 1, bi * 2 + di, bj * 2 + dj);
    };
    visit(depth, 0, 0);

    // adjacency: cells sharing a positive-length edge segment
    std::sort(dec.cells.begin(), dec.cells.end(), [](const WhitneyCell& a, const WhitneyCell& b) {
        if (a.level != b.level) return a.level < b.level;
        if (a.j0 != b.j0) return a.j0 < b.j0;
        return a.i0 < b.i0;
    });
    dec.adjacency.assign(dec.cells.size(), {});
    // grid hash of pixel -> cell for edge probing
    std::vector<int32_t> owner(static_cast<size_t>(r.nx) * r.ny, -1);
    for (size_t c = 0; c < dec.cells.size(); ++c) {
        const auto& q = dec.cells[c];
        for (int j = q.j0; j < q.j0 + q.cells; ++j)
            for (int i = q.i0; i < q.i0 + q.cells; ++i)
                owner[static_cast<size_t>(j) * r.nx + i] = static_cast<int32_t>(c);
    }
    auto link = [&](size_t a, int32_t b) {
        if (b < 0 || static_cast<size_t>(b) == a) return;
        auto& v = dec.adjacency[a];
        if (std::find(v.begin(), v.end(), static_cast<uint32_t>(b)) == v.end())
            v.push_back(static_cast<uint32_t>(b));
    };
    for (size_t c = 0; c < dec.cells.size(); ++c) {
        const auto& q = dec.cells[c];
        for (int i = q.i0; i < q.i0 + q.cells; ++i) {
            if (q.j0 > 0) link(c, owner[static_cast<size_t>(q.j0 - 1) * r.nx + i]);
            if (q.j0 + q.cells < r.ny) link(c, owner[static_cast<size_t>(q.j0 + q.cells) * r.nx + i]);
        }
        for (int j = q.j0; j < q.j0 + q.cells; ++j) {
            if (q.i0 > 0) link(c, owner[static_cast<size_t>(j) * r.nx + q.i0 - 1]);
            if (q.i0 + q.cells < r.nx) link(c, owner[static_cast<size_t>(j) * r.nx + q.i0 + q.cells]);
        }
    }
    for (auto& v : dec.adjacency) std::sort(v.begin(), v.end());

    // corner contacts (for the weighted metric; the hop graph stays edge-only)
    dec.corner_adjacency.assign(dec.cells.size(), {});
    {
        std::map<std::pair<int, int>, std::vector<uint32_t>> corners;
        for (size_t c = 0; c < dec.cells.size(); ++c) {
            const auto& q = dec.cells[c];
            corners[{q.i0, q.j0}].push_back(static_cast<uint32_t>(c));
            corners[{q.i0 + q.cells, q.j0}].push_back(static_cast<uint32_t>(c));
            corners[{q.i0, q.j0 + q.cells}].push_back(static_cast<uint32_t>(c));
            corners[{q.i0 + q.cells, q.j0 + q.cells}].push_back(static_cast<uint32_t>(c));
        }
        for (auto& [pt, list] : corners)
            for (size_t a = 0; a < list.size(); ++a)
                for (size_t b = a + 1; b < list.size(); ++b) {
                    uint32_t ca = list[a], cb = list[b];
                    const auto& va = dec.adjacency[ca];
                    if (std::find(va.begin(), va.end(), cb) != va.end()) continue;
                    auto& wa = dec.corner_adjacency[ca];
                    if (std::find(wa.begin(), wa.end(), cb) == wa.end()) {
                        wa.push_back(cb);
                        dec.corner_adjacency[cb].push_back(ca);
                    }
                }
        for (auto& v : dec.corner_adjacency) std::sort(v.begin(), v.end());
    }
    dec.dist_field = std::move(dist);
    return dec;
}

// unit-weight hop distances from a source cell (the graph metric)
inline std::vector<int32_t> hop_distances(const WhitneyDecomposition& dec, uint32_t source)
{
    std::vector<int32_t> d(dec.cells.size(), -1);
    std::queue<uint32_t> q;
    d[source] = 0;
    q.push(source);
    while (!q.empty()) {
        uint32_t c = q.front();
        q.pop();
        for (uint32_t n : dec.adjacency[c])
            if (d[n] < 0) {
                d[n] = d[c] + 1;
                q.push(n);
            }
    }
    return d;
}

// quasihyperbolic edge length between adjacent cell centers: midpoint-rule
// line integral of 1/dist along the center-to-center segment
inline double qh_edge(const WhitneyDecomposition& dec, uint32_t a, uint32_t b)
{
    const auto& A = dec.cells[a];
    const auto& B = dec.cells[b];
    double len = std::hypot(A.cx - B.cx, A.cy - B.cy);
    const int m = 6;
    double acc = 0.0;
    for (int k = 0; k < m; ++k) {
        double t = (k + 0.5) / m;
        acc += 1.0 / dec.boundary_distance(A.cx + t * (B.cx - A.cx), A.cy + t * (B.cy - A.cy));
    }
    return len * acc / m;
}

// weighted shortest-path distances in quasihyperbolic units
inline std::vector<double> qh_distances(const WhitneyDecomposition& dec, uint32_t source)
{
    std::vector<double> d(dec.cells.size(), std::numeric_limits<double>::infinity());
    using Item = std::pair<double, uint32_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    d[source] = 0.0;
    pq.push({0.0, source});
    auto relax = [&](double dist, uint32_t c, uint32_t n) {
        double nd = dist + qh_edge(dec, c, n);
        if (nd < d[n]) {
            d[n] = nd;
            pq.push({nd, n});
        }
    };
    while (!pq.empty()) {
        auto [dist, c] = pq.top();
        pq.pop();
        if (dist > d[c]) continue;
        for (uint32_t n : dec.adjacency[c]) relax(dist, c, n);
        for (uint32_t n : dec.corner_adjacency[c]) relax(dist, c, n);
    }
    return d;
}

// graph quasihyperbolic distance between two points (unit edge weights, with
// same-cell handling)
inline double quasihyperbolic_distance(const WhitneyDecomposition& dec, cplx z, cplx w)
{
    int a = dec.find(z), b = dec.find(w);
    if (a < 0 || b < 0) throw std::invalid_argument("quasihyperbolic_distance: point outside all cells");
    if (a == b) {
        const auto& q = dec.cells[static_cast<size_t>(a)];
        return std::min(1.0, std::abs(z - w) / q.dist);
    }
    auto d = hop_distances(dec, static_cast<uint32_t>(a));
    if (d[static_cast<size_t>(b)] < 0) return std::numeric_limits<double>::infinity();
    return static_cast<double>(d[static_cast<size_t>(b)]);
}

// ---------------------------------------------------------------------------
// shadow sums

struct ShadowSum {
    double sum_s2 = 0.0;      // sum of shadow diameters squared
    double qh_integral = 0.0; // cell quadrature of dist_qh(., base)
    uint32_t base_cell = 0;
    size_t boundary_cells = 0;
};

// Geodesic family: BFS-tree shortest paths from the base cell (deterministic
// tie-breaking by cell order: level, then position).  Boundary-adjacent cells
// are those with an uncovered side; the shadow of Q is the bounding box of
// the boundary anchors of all geodesics through Q, accumulated up the tree.
inline ShadowSum js_shadow_sum(WhitneyDecomposition& dec, const Raster& raster, cplx base)
{
    int b = dec.find(base);
    if (b < 0) throw std::invalid_argument("js_shadow_sum: base outside all cells");
    auto source = static_cast<uint32_t>(b);
    const size_t n = dec.cells.size();

    // BFS tree with deterministic parent choice (adjacency lists are sorted)
    std::vector<int32_t> parent(n, -1);
    std::vector<int32_t> hops(n, -1);
    std::vector<uint32_t> order;
    order.reserve(n);
    std::queue<uint32_t> q;
    hops[source] = 0;
    q.push(source);
    while (!q.empty()) {
        uint32_t c = q.front();
        q.pop();
        order.push_back(c);
        for (uint32_t nb : dec.adjacency[c])
            if (hops[nb] < 0) {
                hops[nb] = hops[c] + 1;
                parent[nb] = static_cast<int32_t>(c);
                q.push(nb);
            }
    }

    // boundary-adjacent cells: some side not fully covered by neighbors
    std::vector<uint8_t> is_boundary(n, 0);
    for (size_t c = 0; c < n; ++c) {
        const auto& Q = dec.cells[c];
        int covered[4] = {0, 0, 0, 0}; // -x, +x, -y, +y, in pixel lengths
        for (uint32_t nb : dec.adjacency[c]) {
            const auto& P = dec.cells[nb];
            int ov_x = std::min(Q.i0 + Q.cells, P.i0 + P.cells) - std::max(Q.i0, P.i0);
            int ov_y = std::min(Q.j0 + Q.cells, P.j0 + P.cells) - std::max(Q.j0, P.j0);
            if (P.i0 + P.cells == Q.i0 && ov_y > 0) covered[0] += ov_y;
            if (P.i0 == Q.i0 + Q.cells && ov_y > 0) covered[1] += ov_y;
            if (P.j0 + P.cells == Q.j0 && ov_x > 0) covered[2] += ov_x;
            if (P.j0 == Q.j0 + Q.cells && ov_x > 0) covered[3] += ov_x;
        }
        for (int s = 0; s < 4; ++s)
            if (covered[s] < Q.cells) { is_boundary[c] = 1; break; }
    }

    // shadow anchor of a boundary cell: nearest blocked pixel to its center
    struct Box {
        double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
        bool any = false;
        void add(double x, double y)
        {
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
            any = true;
        }
        void merge(const Box& o)
        {
            if (!o.any) return;
            add(o.x0, o.y0);
            add(o.x1, o.y1);
        }
        double diam() const { return any ? std::hypot(x1 - x0, y1 - y0) : 0.0; }
    };
    std::vector<Box> shadow(n);
    ShadowSum out;
    out.base_cell = source;
    for (size_t c = 0; c < n; ++c) {
        if (!is_boundary[c] || hops[c] < 0) continue;
        ++out.boundary_cells;
        const auto& Q = dec.cells[c];
        // walk outward from the center to the nearest blocked pixel
        double best = 1e300, bx = Q.cx, by = Q.cy;
        int ic = Q.i0 + Q.cells / 2, jc = Q.j0 + Q.cells / 2;
        int R = 7 * Q.cells + 8;
        for (int dj = -R; dj <= R; ++dj)
            for (int di = -R; di <= R; ++di) {
                int i = ic + di, j = jc + dj;
                if (raster.is_free(i, j)) continue;
                double d2 = static_cast<double>(di) * di + static_cast<double>(dj) * dj;
                if (d2 < best) {
                    best = d2;
                    bx = raster.x0 + i * raster.pixel;
                    by = raster.y0 + j * raster.pixel;
                }
            }
        shadow[c].add(bx, by);
    }
    // accumulate up the BFS tree: reverse order visits children first
    for (size_t k = order.size(); k-- > 0;) {
        uint32_t c = order[k];
        if (parent[c] >= 0) shadow[static_cast<size_t>(parent[c])].merge(shadow[c]);
    }
    auto qh = qh_distances(dec, source);
    for (size_t c = 0; c < n; ++c) {
        dec.cells[c].shadow_diam = shadow[c].diam();
        out.sum_s2 += shadow[c].diam() * shadow[c].diam();
        if (hops[c] >= 0 && std::isfinite(qh[c]))
            out.qh_integral += dec.cells[c].side * dec.cells[c].side * qh[c];
    }
    return out;
}

inline void write_whitney_csv(const WhitneyDecomposition& dec, const std::string& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "cx,cy,level,shadow_diam\n";
    out.precision(17);
    for (const auto& c : dec.cells)
        out << c.cx << ',' << c.cy << ',' << c.level << ',' << c.shadow_diam << '\n';
}

} // namespace slelab::conformal
