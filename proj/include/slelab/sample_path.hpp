#pragma once

// SamplePath: a uniformly sampled scalar (or planar) process together with
// the parameters that produced it.

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace slelab::stochastic {

enum class PathKind { brownian, bessel, radial_bessel, custom };

struct SamplePath {
    std::vector<double> times;      // strictly increasing, uniform spacing dt
    std::vector<double> values;
    std::vector<double> values_im;  // second coordinate for planar paths, else empty
    PathKind kind = PathKind::custom;
    std::map<std::string, double> params;
    uint64_t seed = 0;
    double dt = 0.0;
    bool boundary_hit = false;      // a barrier clamp fired at least once

    size_t size() const { return times.size(); }
    bool planar() const { return !values_im.empty(); }

    double value_at(double t) const // linear interpolation
    {
        if (times.empty()) throw std::invalid_argument("empty path");
        if (t <= times.front()) return values.front();
        if (t >= times.back()) return values.back();
        double u = (t - times.front()) / dt;
        size_t i = static_cast<size_t>(u);
        double f = u - static_cast<double>(i);
        return values[i] * (1.0 - f) + values[i + 1] * f;
    }
};

// CSV header: t,value[,value_im]
inline void write_csv(const SamplePath& p, const std::string& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << (p.planar() ? "t,value,value_im\n" : "t,value\n");
    out.precision(17);
    for (size_t i = 0; i < p.size(); ++i) {
        out << p.times[i] << ',' << p.values[i];
        if (p.planar()) out << ',' << p.values_im[i];
        out << '\n';
    }
}

} // namespace slelab::stochastic
