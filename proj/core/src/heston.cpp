#include <cmath>
#include <complex>

#include "covar/errors.hpp"
#include "covar/pricing.hpp"

namespace covar {

namespace {

using cplx = std::complex<double>;

// Characteristic function f_j of ln S_T; j = 1 uses (u=1/2, b=kappa+lambda-rho*sigma),
// j = 2 uses (u=-1/2, b=kappa+lambda). Evaluated on the decaying branch of d
// (exp(-d*ttm) stays bounded and the (a/sigma^2) bracket keeps O(sigma^2)
// terms, which avoids cancellation when the vol of variance is tiny).
cplx heston_cf(double phi, double ln_s, double v0, double ttm, double r, double u, double bj,
               double kappa_theta, double sigma, double rho) {
    const cplx i(0.0, 1.0);
    const cplx ip = i * phi;
    const cplx beta = bj - rho * sigma * phi * i;
    const cplx d = std::sqrt(beta * beta - sigma * sigma * (2.0 * u * ip - phi * phi));
    const cplx gg = (beta - d) / (beta + d);
    const cplx emdt = std::exp(-d * ttm);
    const cplx c = r * ip * ttm +
                   (kappa_theta / (sigma * sigma)) *
                       ((beta - d) * ttm - 2.0 * std::log((1.0 - gg * emdt) / (1.0 - gg)));
    const cplx dd = ((beta - d) / (sigma * sigma)) * ((1.0 - emdt) / (1.0 - gg * emdt));
    return std::exp(c + dd * v0 + ip * ln_s);
}

struct GaussKronrod15 {
    // Standard 15-point Kronrod nodes/weights with the embedded 7-point Gauss rule.
    static constexpr double nodes[15] = {
        -0.991455371120812639206854697526329, -0.949107912342758524526189684047851,
        -0.864864423359769072789712788640926, -0.741531185599394439863864773280788,
        -0.586087235467691130294144838258730, -0.405845151377397166906606412076961,
        -0.207784955007898467600689403773245, 0.0,
        0.207784955007898467600689403773245,  0.405845151377397166906606412076961,
        0.586087235467691130294144838258730,  0.741531185599394439863864773280788,
        0.864864423359769072789712788640926,  0.949107912342758524526189684047851,
        0.991455371120812639206854697526329};
    static constexpr double wk[15] = {
        0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
        0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
        0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
        0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
        0.204432940075298892414161999234649, 0.190350578064785409913256402421014,
        0.169004726639267902826583426598550, 0.140653259715525918745189590510238,
        0.104790010322250183839876322541518, 0.063092092629978553290700663189204,
        0.022935322010529224963732008058970};
    static constexpr double wg[7] = {
        0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
        0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
        0.381830050505118944950369775488975, 0.279705391489276667901467771423780,
        0.129484966168869693270611432679082};
};

template <typename F>
void gk15(const F& f, double a, double b, double& value, double& error) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    double sk = 0.0, sg = 0.0;
    for (int i = 0; i < 15; ++i) {
        const double y = f(c + h * GaussKronrod15::nodes[i]);
        sk += GaussKronrod15::wk[i] * y;
        if (i % 2 == 1) sg += GaussKronrod15::wg[i / 2] * y;
    }
    value = sk * h;
    error = std::fabs((sk - sg) * h);
}

// Adaptive bisection on [a,b] to absolute tolerance.
template <typename F>
double integrate_adaptive(const F& f, double a, double b, double abs_tol, int max_splits) {
    struct Segment {
        double a, b, value, error;
    };
    std::vector<Segment> segs;
    double v, e;
    gk15(f, a, b, v, e);
    segs.push_back({a, b, v, e});
    int splits = 0;
    while (true) {
        double total_err = 0.0;
        std::size_t worst = 0;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            total_err += segs[i].error;
            if (segs[i].error > segs[worst].error) worst = i;
        }
        if (total_err <= abs_tol) break;
        if (++splits > max_splits)
            throw IntegrationFailure("pricing quadrature did not reach tolerance");
        const Segment s = segs[worst];
        const double m = 0.5 * (s.a + s.b);
        Segment left{s.a, m, 0, 0}, right{m, s.b, 0, 0};
        gk15(f, left.a, left.b, left.value, left.error);
        gk15(f, right.a, right.b, right.value, right.error);
        segs[worst] = left;
        segs.push_back(right);
    }
    double total = 0.0;
    for (const auto& s : segs) total += s.value;
    return total;
}

}  // namespace

HestonProbabilities heston_call_probabilities(double s, const HestonParams& p, double k,
                                              double r, double ttm) {
    if (!(s > 0.0) || !(k > 0.0) || !(ttm > 0.0))
        throw DomainError("spot, strike and ttm must be positive");
    if (!(p.kappa > 0.0) || !(p.theta > 0.0) || !(p.sigma_v > 0.0) || !(p.v0 > 0.0))
        throw DomainError("kappa, theta, sigma_v and v0 must be positive");
    if (!(std::fabs(p.rho) < 1.0)) throw DomainError("|rho| must be < 1");

    const double ln_s = std::log(s);
    const double ln_k = std::log(k);
    const double a = p.kappa * p.theta;
    const double u[2] = {0.5, -0.5};
    const double bj[2] = {p.kappa + p.lambda_h - p.rho * p.sigma_v, p.kappa + p.lambda_h};

    HestonProbabilities out;
    double prob[2];
    for (int j = 0; j < 2; ++j) {
        auto integrand = [&](double phi) {
            const cplx i(0.0, 1.0);
            const cplx f =
                heston_cf(phi, ln_s, p.v0, ttm, r, u[j], bj[j], a, p.sigma_v, p.rho);
            return std::real(std::exp(-i * phi * ln_k) * f / (i * phi));
        };
        // The integrand has a finite phi -> 0 limit; Kronrod nodes are interior
        // so phi = 0 is never evaluated. Truncation doubles until the tail is
        // below 1e-10 of the peak (probed near the origin).
        double peak = std::fabs(integrand(1e-3));
        for (double phi = 0.5; phi <= 8.0; phi *= 2.0)
            peak = std::max(peak, std::fabs(integrand(phi)));
        double phi_max = 200.0;
        int doublings = 0;
        while (std::fabs(integrand(phi_max)) > 1e-10 * peak) {
            phi_max *= 2.0;
            if (++doublings > 16)
                throw IntegrationFailure("Heston integrand tail does not decay");
        }
        const double integral = integrate_adaptive(integrand, 0.0, phi_max, 1e-8, 2000);
        prob[j] = 0.5 + integral / 3.14159265358979323846;
        out.phi_max = std::max(out.phi_max, phi_max);
        out.tail_ratio = std::max(out.tail_ratio, std::fabs(integrand(phi_max)) / peak);
    }
    out.p1 = prob[0];
    out.p2 = prob[1];
    return out;
}

double heston_call_price(double s, const HestonParams& p, double k, double r, double ttm) {
    const HestonProbabilities prob = heston_call_probabilities(s, p, k, r, ttm);
    return s * prob.p1 - k * std::exp(-r * ttm) * prob.p2;
}

}  // namespace covar
