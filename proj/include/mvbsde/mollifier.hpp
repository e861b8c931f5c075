// Smooth bump on the unit ball and deterministic quadrature rules used by the
// mollifier approximation of the generators: Gauss-Legendre (mapped to the
// ball for m = 2), Halton points for m >= 3. Rules self-normalize by the
// discrete bump mass so that constants mollify exactly.
#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "mvbsde/core.hpp"

namespace mvbsde {

namespace quad {

// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration on Legendre
// polynomials. Deterministic; cached per order.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    const int mhalf = (n + 1) / 2;
    for (int i = 0; i < mhalf; ++i) {
        double z = std::cos(3.14159265358979323846 * (i + 0.75) / (n + 0.5));
        double pp = 0;
        for (int it = 0; it < 100; ++it) {
            double p1 = 1, p2 = 0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
            }
            pp = n * (z * p1 - p2) / (z * z - 1.0);
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::fabs(z - z1) < 1e-15) break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
}

}  // namespace quad

// The standard cutoff exp(-1/(1-|u|^2)) normalized to unit integral over the
// ball, per dimension. Normalization constants and the gradient bound kappa
// are computed numerically once and cached.
class Bump {
public:
    explicit Bump(int dim) : dim_(dim) {
        if (dim < 1) throw DomainError("bump dimension must be positive");
        norm_ = normalization(dim);
    }

    int dim() const { return dim_; }

    double operator()(const Vec& u) const { return norm_ * raw(norm2sq(u)); }
    double value_r2(double r2) const { return norm_ * raw(r2); }

    // kappa with int |grad rho| <= kappa and |grad rho| <= kappa on the ball
    double kappa() const {
        static thread_local std::vector<double> cache;
        if (static_cast<int>(cache.size()) >= dim_ && cache[dim_ - 1] > 0)
            return cache[dim_ - 1];
        // |grad rho(u)| = rho(u) * 2|u| / (1-|u|^2)^2, radially symmetric
        const int n = 4096;
        double sup = 0, integral = 0;
        for (int i = 0; i < n; ++i) {
            const double r = (i + 0.5) / n;
            const double r2 = r * r;
            const double g = norm_ * raw(r2) * 2.0 * r / ((1.0 - r2) * (1.0 - r2));
            sup = std::max(sup, g);
            integral += g * surface_area(dim_, r) / n;
        }
        const double k = std::max(sup, integral);
        if (static_cast<int>(cache.size()) < dim_) cache.resize(dim_, 0.0);
        cache[dim_ - 1] = k;
        return k;
    }

private:
    static double raw(double r2) {
        if (r2 >= 1.0) return 0.0;
        return std::exp(-1.0 / (1.0 - r2));
    }

    static double surface_area(int dim, double r) {
        // |S^{d-1}| r^{d-1}
        static const double pi = 3.14159265358979323846;
        double s;
        switch (dim) {
            case 1: s = 2; break;
            case 2: s = 2 * pi; break;
            case 3: s = 4 * pi; break;
            default: {
                double g = std::tgamma(dim / 2.0);
                s = 2.0 * std::pow(pi, dim / 2.0) / g;
            }
        }
        return s * std::pow(r, dim - 1);
    }

    static double normalization(int dim) {
        static thread_local std::vector<double> cache;
        if (static_cast<int>(cache.size()) >= dim && cache[dim - 1] > 0)
            return cache[dim - 1];
        // int rho = |S^{d-1}| int_0^1 raw(r^2) r^{d-1} dr by dense GL
        std::vector<double> x, w;
        quad::gauss_legendre(512, x, w);
        double s = 0;
        for (int i = 0; i < 512; ++i) {
            const double r = 0.5 * (x[i] + 1.0);
            s += 0.5 * w[i] * raw(r * r) * surface_area(dim, r);
        }
        if (static_cast<int>(cache.size()) < dim) cache.resize(dim, 0.0);
        cache[dim - 1] = 1.0 / s;
        return cache[dim - 1];
    }

    int dim_;
    double norm_;
};

enum class QuadScheme { GaussLegendre1D, PolarTensor2D, HaltonBall };

// Node/weight set on the closed unit ball carrying the bump weight; the raw
// weights sum to ~1 (unit bump mass) within the scheme's tolerance.
struct MollifierConfig {
    double eps = 0.1;
    int nodes = 64;     // GL order per segment (m<=2); total points (m>=3)
    int min_nodes = 8;
    int dim = 1;
    QuadScheme scheme = QuadScheme::GaussLegendre1D;

    std::vector<Vec> points;     // quadrature nodes in the ball
    std::vector<double> weights; // raw quadrature weight x bump value

    static MollifierConfig make(double eps, int dim, int nodes = 64) {
        if (!(eps > 0)) throw DomainError("mollifier eps must be positive");
        MollifierConfig c;
        c.eps = eps;
        c.dim = dim;
        c.nodes = nodes;
        c.scheme = dim == 1 ? QuadScheme::GaussLegendre1D
                            : (dim == 2 ? QuadScheme::PolarTensor2D
                                        : QuadScheme::HaltonBall);
        c.build();
        return c;
    }

    double weight_sum() const {
        double s = 0;
        for (double w : weights) s += w;
        return s;
    }

    double kappa() const { return Bump(dim).kappa(); }

    void build() {
        if (nodes < min_nodes)
            throw DomainError("mollifier node count " + std::to_string(nodes) +
                              " below minimum " + std::to_string(min_nodes));
        points.clear();
        weights.clear();
        Bump bump(dim);
        if (dim == 1) {
            std::vector<double> x, w;
            quad::gauss_legendre(nodes, x, w);
            for (int i = 0; i < nodes; ++i) {
                points.push_back(Vec{x[i]});
                weights.push_back(w[i] * bump(points.back()));
            }
        } else if (dim == 2) {
            std::vector<double> xr, wr;
            quad::gauss_legendre(nodes, xr, wr);
            const int ntheta = 2 * nodes;
            const double pi = 3.14159265358979323846;
            for (int i = 0; i < nodes; ++i) {
                const double r = 0.5 * (xr[i] + 1.0);
                const double wrad = 0.5 * wr[i] * r;
                for (int j = 0; j < ntheta; ++j) {
                    const double th = 2.0 * pi * (j + 0.5) / ntheta;
                    Vec u{r * std::cos(th), r * std::sin(th)};
                    const double w = wrad * (2.0 * pi / ntheta) * bump(u);
                    points.push_back(std::move(u));
                    weights.push_back(w);
                }
            }
        } else {
            // Halton points in the cube, rejected to the ball
            const double vol_cube = std::pow(2.0, dim);
            int accepted = 0, total = 0;
            while (accepted < nodes) {
                ++total;
                Vec u(dim);
                for (int d = 0; d < dim; ++d) u[d] = 2.0 * halton(total, prime(d)) - 1.0;
                if (norm2sq(u) < 1.0) {
                    weights.push_back(bump(u));
                    points.push_back(std::move(u));
                    ++accepted;
                }
            }
            const double w0 = vol_cube / total;
            for (double& w : weights) w *= w0;
        }
    }

private:
    static int prime(int i) {
        static const std::array<int, 8> ps{2, 3, 5, 7, 11, 13, 17, 19};
        return ps[i % 8];
    }
    static double halton(int index, int base) {
        double f = 1.0, r = 0.0;
        while (index > 0) {
            f /= base;
            r += f * (index % base);
            index /= base;
        }
        return r;
    }
};

}  // namespace mvbsde
