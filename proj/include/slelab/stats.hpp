#pragma once

// Statistics helpers shared by the samplers, experiments and tests:
// mergeable moment accumulators, confidence intervals, KS / chi-square /
// normality tests, weighted least squares and basic quadrature.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace slelab::stats {

// Online mean/variance with pairwise merge.  Merging in a fixed order keeps
// parallel reductions deterministic.
struct Moments {
    uint64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x)
    {
        ++n;
        double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    void merge(const Moments& o)
    {
        if (o.n == 0) return;
        if (n == 0) { *this = o; return; }
        double d = o.mean - mean;
        uint64_t t = n + o.n;
        mean += d * static_cast<double>(o.n) / static_cast<double>(t);
        m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n)
                         / static_cast<double>(t);
        n = t;
    }
    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
    double stderr_mean() const
    {
        return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
    }
};

struct Interval {
    double lo = 0.0, hi = 0.0;
    bool contains(double x) const { return x >= lo && x <= hi; }
};

// Wilson score interval for a binomial proportion.
inline Interval wilson_interval(uint64_t successes, uint64_t trials, double z = 1.96)
{
    if (trials == 0) return {0.0, 1.0};
    double n = static_cast<double>(trials);
    double p = static_cast<double>(successes) / n;
    double z2 = z * z;
    double denom = 1.0 + z2 / n;
    double center = (p + z2 / (2.0 * n)) / denom;
    double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

// ---------------------------------------------------------------------------
// special functions

// Regularized lower incomplete gamma P(a,x); series for x < a+1, continued
// fraction otherwise.
inline double gamma_p(double a, double x)
{
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p: bad args");
    if (x == 0.0) return 0.0;
    const double gln = std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
        }
        return sum * std::exp(-x + a * std::log(x) - gln);
    }
    // Lentz continued fraction for Q(a,x)
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    double q = std::exp(-x + a * std::log(x) - gln) * h;
    return 1.0 - q;
}

inline double gamma_q(double a, double x) { return 1.0 - gamma_p(a, x); }

inline double chi2_sf(double stat, double dof) { return gamma_q(dof / 2.0, stat / 2.0); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Kolmogorov distribution tail Q_KS(lambda) = 2 sum (-1)^{k-1} exp(-2k^2 l^2).
inline double kolmogorov_sf(double lambda)
{
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0, sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += sign * term;
        sign = -sign;
        if (term < 1e-12) break;
    }
    return std::min(1.0, std::max(0.0, 2.0 * sum));
}

// ---------------------------------------------------------------------------
// hypothesis tests

// One-sample KS test against a cdf.  Sorts a copy of the data.
inline double ks_test(std::vector<double> xs, const std::function<double(double)>& cdf)
{
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        double f = cdf(xs[i]);
        d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
        d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
    }
    double en = std::sqrt(n);
    return kolmogorov_sf((en + 0.12 + 0.11 / en) * d);
}

inline double ks_two_sample(std::vector<double> a, std::vector<double> b)
{
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    size_t i = 0, j = 0;
    double d = 0.0;
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    while (i < a.size() && j < b.size()) {
        double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    double en = std::sqrt(na * nb / (na + nb));
    return kolmogorov_sf((en + 0.12 + 0.11 / en) * d);
}

// Chi-square goodness of fit from observed counts and expected counts.
inline double chi2_test(const std::vector<double>& observed,
                        const std::vector<double>& expected, int fitted_params = 0)
{
    if (observed.size() != expected.size() || observed.empty())
        throw std::invalid_argument("chi2_test: size mismatch");
    double stat = 0.0;
    int used = 0;
    for (size_t i = 0; i < observed.size(); ++i) {
        if (expected[i] < 5.0) continue; // fold sparse bins out
        double d = observed[i] - expected[i];
        stat += d * d / expected[i];
        ++used;
    }
    int dof = used - 1 - fitted_params;
    if (dof < 1) return 1.0;
    return chi2_sf(stat, static_cast<double>(dof));
}

// Jarque-Bera normality test p-value.
inline double jarque_bera(const std::vector<double>& xs)
{
    const double n = static_cast<double>(xs.size());
    if (n < 8) return 1.0;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : xs) {
        double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n; m3 /= n; m4 /= n;
    double s = m3 / std::pow(m2, 1.5);
    double k = m4 / (m2 * m2);
    double jb = n / 6.0 * (s * s + (k - 3.0) * (k - 3.0) / 4.0);
    return std::exp(-jb / 2.0);
}

inline double correlation(const std::vector<double>& a, const std::vector<double>& b)
{
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("correlation: size mismatch");
    double ma = 0.0, mb = 0.0;
    const double n = static_cast<double>(a.size());
    for (size_t i = 0; i < a.size(); ++i) { ma += a[i]; mb += b[i]; }
    ma /= n; mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

// L1 distance between a histogram of samples on [lo,hi] and a density.
inline double histogram_l1(const std::vector<double>& samples, double lo, double hi,
                           int bins, const std::function<double(double)>& density)
{
    std::vector<double> counts(static_cast<size_t>(bins), 0.0);
    uint64_t inside = 0;
    for (double x : samples) {
        if (x < lo || x >= hi) continue;
        int b = static_cast<int>((x - lo) / (hi - lo) * bins);
        counts[static_cast<size_t>(std::min(b, bins - 1))] += 1.0;
        ++inside;
    }
    const double w = (hi - lo) / bins;
    double l1 = 0.0;
    for (int b = 0; b < bins; ++b) {
        double x = lo + (b + 0.5) * w;
        double emp = counts[static_cast<size_t>(b)] / (static_cast<double>(inside) * w);
        l1 += std::fabs(emp - density(x)) * w;
    }
    return l1;
}

// ---------------------------------------------------------------------------
// fitting

struct LineFit {
    double slope = 0.0, intercept = 0.0;
    double slope_se = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;
    double r2 = 0.0;
    std::vector<double> residuals;
};

// Weighted least squares for y = a + b x; weights default to 1.
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y,
                        std::vector<double> w = {})
{
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("fit_line: need >= 2 points");
    if (w.empty()) w.assign(x.size(), 1.0);
    double sw = 0.0, swx = 0.0, swy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) { sw += w[i]; swx += w[i] * x[i]; swy += w[i] * y[i]; }
    double xbar = swx / sw, ybar = swy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxx += w[i] * (x[i] - xbar) * (x[i] - xbar);
        sxy += w[i] * (x[i] - xbar) * (y[i] - ybar);
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = ybar - f.slope * xbar;
    double ss_res = 0.0, ss_tot = 0.0, wsum = 0.0;
    f.residuals.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        double r = y[i] - (f.intercept + f.slope * x[i]);
        f.residuals[i] = r;
        ss_res += w[i] * r * r;
        ss_tot += w[i] * (y[i] - ybar) * (y[i] - ybar);
        wsum += w[i];
    }
    f.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    // residual-scaled standard error; falls back to weight-only if n == 2
    double dof = static_cast<double>(x.size()) - 2.0;
    double s2 = dof > 0.0 ? ss_res / dof * (static_cast<double>(x.size()) / wsum) : 0.0;
    f.slope_se = std::sqrt(std::max(s2, 0.0) / sxx);
    f.ci_lo = f.slope - 1.96 * f.slope_se;
    f.ci_hi = f.slope + 1.96 * f.slope_se;
    return f;
}

// ---------------------------------------------------------------------------
// quadrature and root finding

inline double simpson(const std::function<double(double)>& f, double a, double b, int n)
{
    if (n % 2) ++n;
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * ((i % 2) ? 4.0 : 2.0);
    return s * h / 3.0;
}

namespace detail {
inline double adapt(const std::function<double(double)>& f, double a, double b,
                    double fa, double fm, double fb, double whole, double tol, int depth)
{
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adapt(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
           adapt(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}
} // namespace detail

// Adaptive Simpson over an initial uniform split, so narrow peaks inside a
// wide interval are not missed by the first coarse estimate.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-10, int max_depth = 40, int panels = 64)
{
    double total = 0.0;
    const double h = (b - a) / panels;
    for (int i = 0; i < panels; ++i) {
        double x0 = a + i * h, x1 = (i == panels - 1) ? b : x0 + h;
        double fa = f(x0), fb = f(x1), fm = f(0.5 * (x0 + x1));
        double whole = (x1 - x0) / 6.0 * (fa + 4.0 * fm + fb);
        total += detail::adapt(f, x0, x1, fa, fm, fb, whole, tol / panels, max_depth);
    }
    return total;
}

// Bisection for monotone f; returns x with f(x) ~ target.
inline double bisect(const std::function<double(double)>& f, double lo, double hi,
                     double target, int iters = 200)
{
    double flo = f(lo) - target;
    for (int i = 0; i < iters; ++i) {
        double mid = 0.5 * (lo + hi);
        double fm = f(mid) - target;
        if ((fm > 0.0) == (flo > 0.0)) { lo = mid; flo = fm; }
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace slelab::stats
