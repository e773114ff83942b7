#include "mvlab/models.hpp"

#include "mvlab/conditions.hpp"
#include "mvlab/search.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mvlab {

const char* to_string(Hypothesis h) {
    switch (h) {
        case Hypothesis::H1: return "H1";
        case Hypothesis::H2: return "H2";
        case Hypothesis::H3: return "H3";
        case Hypothesis::H4: return "H4";
    }
    return "?";
}

LawFeatures ModelSpec::law_features(const EmpiricalMeasure& mu) const {
    if (!features) return {};
    if (law_dependent && mu.empty()) throw std::invalid_argument(name + ": coefficients need a measure argument");
    return features(mu);
}

StateVector ModelSpec::drift_at(const Segment& seg, const EmpiricalMeasure& mu) const {
    if (seg.dim() != dim) throw std::invalid_argument(name + ": segment dimension mismatch");
    StateVector out(dim);
    drift(seg, law_features(mu), out.span());
    return out;
}

Matrix ModelSpec::diffusion_at(const EmpiricalMeasure& mu) const { return diffusion(law_features(mu)); }

double ModelSpec::param(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end()) throw std::out_of_range(name + ": missing constant '" + key + "'");
    return it->second;
}

std::optional<double> ModelSpec::find_param(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end()) return std::nullopt;
    return it->second;
}

ReferenceModel freeze_reference(const ModelSpec& model, const EmpiricalMeasure& mu_bar) {
    if (mu_bar.empty()) throw std::invalid_argument("freeze_reference: empty measure");
    if (mu_bar.dim() != model.dim) {
        throw std::invalid_argument("freeze_reference: measure dimension " + std::to_string(mu_bar.dim()) +
                                    " does not match model dimension " + std::to_string(model.dim));
    }
    if (mu_bar.atom(0).r0() != model.r0) throw std::invalid_argument("freeze_reference: delay mismatch");
    ReferenceModel ref{model, mu_bar, model.law_features(mu_bar), model};
    ref.model.name = model.name + "/reference";
    ref.model.law_dependent = false;
    ref.model.features = [frozen = ref.frozen_features](const EmpiricalMeasure&) { return frozen; };
    return ref;
}

namespace {

// Law-independent models may be stepped without a measure; they never read the features.
LawFeatures mean_features(const EmpiricalMeasure& mu) {
    if (mu.empty()) return {};
    return mu.mean_current().coords();
}

}  // namespace

ModelSpec make_example_2_1(std::size_t d, double eps, DriftVariant variant, double c, double theta) {
    if (d == 0) throw std::invalid_argument("example_2_1: d must be >= 1");
    if (!(eps >= 0.0)) throw std::invalid_argument("example_2_1: eps must be >= 0");
    if (variant == DriftVariant::superlinear && !(c > 0.0 && theta > 0.0)) {
        throw std::invalid_argument("example_2_1: superlinear drift needs c > 0 and theta > 0");
    }
    ModelSpec m;
    m.name = "example_2_1";
    m.hypothesis = Hypothesis::H1;
    m.dim = d;
    m.noise_dim = d;
    m.law_dependent = eps > 0.0;
    m.features = mean_features;
    if (variant == DriftVariant::linear) {
        m.drift = [](const Segment& seg, const LawFeatures&, std::span<double> out) {
            auto x = seg.current();
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = -0.5 * x[i];
        };
    } else {
        m.drift = [c, theta](const Segment& seg, const LawFeatures&, std::span<double> out) {
            auto x = seg.current();
            const double g = 1.0 + c * std::pow(euclidean_norm(x), theta);
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = -g * x[i];
        };
    }
    m.diffusion = [d, eps](const LawFeatures& f) {
        Matrix s = Matrix::identity(d);
        if (eps > 0.0) {
            for (std::size_t i = 0; i < d; ++i) s(i, i) += eps * std::atan(f[i]);
        }
        return s;
    };
    // 2<b(x)-b(y), x-y> = -|x-y|^2 (linear) or <= -2|x-y|^2 (monotone superlinear part);
    // ||sigma(mu)-sigma(nu)||_HS^2 <= eps^2 |mean diff|^2 <= eps^2 W2^2.
    const double kappa1 = variant == DriftVariant::linear ? 1.0 : 2.0;
    const double kappa2 = eps * eps;
    m.params = {{"d", static_cast<double>(d)}, {"eps", eps},         {"kappa1", kappa1},
                {"kappa2", kappa2},            {"p", 2.0},           {"contraction_rate", 0.5 * (kappa1 - kappa2)}};
    if (variant == DriftVariant::linear) {
        m.params["lipschitz_K"] = std::max(0.5, eps);
    } else {
        m.params["c"] = c;
        m.params["theta"] = theta;
        // <x, b(x)> = -|x|^2 - c |x|^(2+theta) <= 0 - c |x|^(2+theta)
        m.params["abc_c1"] = 0.0;
        m.params["abc_c2"] = c;
        m.params["abc_eps"] = theta;
    }
    return m;
}

ModelSpec make_example_2_2(std::size_t mdim, double lambda, double a1, double a2, double a3, const Matrix& sigma) {
    if (mdim == 0) throw std::invalid_argument("example_2_2: m must be >= 1");
    if (!(lambda > 0.0)) throw std::invalid_argument("example_2_2: lambda must be positive");
    if (a1 < 0.0 || a2 < 0.0 || a3 < 0.0) throw std::invalid_argument("example_2_2: a1, a2, a3 must be >= 0");
    if (sigma.rows() != mdim || sigma.cols() != mdim) throw std::invalid_argument("example_2_2: sigma must be m x m");
    double scale = 0.0;
    for (double v : sigma.data()) scale = std::max(scale, std::abs(v));
    if (scale == 0.0 || std::abs(determinant(sigma)) <= 1e-12 * std::pow(scale, static_cast<double>(mdim))) {
        throw std::invalid_argument("example_2_2: sigma is singular");
    }

    ModelSpec m;
    m.name = "example_2_2";
    m.hypothesis = Hypothesis::H1;
    m.dim = 2 * mdim;
    m.noise_dim = mdim;
    m.law_dependent = a3 > 0.0;
    m.features = mean_features;
    m.drift = [mdim, lambda, a1, a2, a3](const Segment& seg, const LawFeatures& f, std::span<double> out) {
        auto x = seg.current();
        for (std::size_t i = 0; i < mdim; ++i) {
            const double x1 = x[i];
            const double x2 = x[mdim + i];
            const double z = -a1 * x1 - a2 * x2 + (a3 > 0.0 ? a3 * std::clamp(f[i], -1.0, 1.0) : 0.0);
            out[i] = x2 - lambda * x1;
            out[mdim + i] = z - lambda * x2;
        }
    };
    m.diffusion = [mdim, sigma](const LawFeatures&) {
        Matrix s(2 * mdim, mdim);
        for (std::size_t i = 0; i < mdim; ++i) {
            for (std::size_t j = 0; j < mdim; ++j) s(mdim + i, j) = sigma(i, j);
        }
        return s;
    };

    // Constants from the bound chain at the s minimizing the condition objective.
    double s_star = 1.0;
    if (a3 > 0.0) {
        s_star = two_stage_minimize([&](double s) { return conditions::hamiltonian_objective(s, a1, a2, a3); },
                                    1e-8, 1e8, true)
                     .location;
    }
    const double delta = conditions::hamiltonian_delta(s_star, a1, a2, a3);
    const double kappa1 = std::min(2.0 * lambda - delta * (1.0 + a1),
                                   2.0 * lambda - 2.0 * a2 - (1.0 + a1) / delta - a3 / s_star);
    const double kappa2 = a3 * s_star;
    m.params = {{"m", static_cast<double>(mdim)},
                {"lambda", lambda},
                {"a1", a1},
                {"a2", a2},
                {"a3", a3},
                {"s_star", s_star},
                {"delta_star", delta},
                {"kappa1", kappa1},
                {"kappa2", kappa2},
                {"p", 2.0},
                {"lipschitz_K", std::max(1.0 + lambda + a1 + a2, a3)}};
    if (kappa1 > kappa2) m.params["contraction_rate"] = 0.5 * (kappa1 - kappa2);
    return m;
}

ModelSpec make_example_2_3(std::size_t modes, double alpha, std::size_t d, double diameter, double a1, double a2,
                           double r0, const std::vector<DelayAtom>& theta) {
    if (modes == 0) throw std::invalid_argument("example_2_3: modes must be >= 1");
    if (d == 0) throw std::invalid_argument("example_2_3: d must be >= 1");
    if (!(alpha > 0.5 * static_cast<double>(d))) {
        throw std::invalid_argument("example_2_3: alpha must exceed d/2 for a summable spectrum");
    }
    if (!(diameter > 0.0)) throw std::invalid_argument("example_2_3: diameter must be positive");
    if (a1 < 0.0 || a2 < 0.0) throw std::invalid_argument("example_2_3: a1, a2 must be >= 0");
    if (!(r0 >= 0.0)) throw std::invalid_argument("example_2_3: r0 must be >= 0");
    double tv = 0.0;
    for (const auto& atom : theta) {
        if (atom.offset < -r0 - 1e-12 || atom.offset > 1e-12) {
            throw std::invalid_argument("example_2_3: Theta atom outside [-r0, 0]");
        }
        tv += std::abs(atom.weight);
    }
    if (std::abs(tv - 1.0) > 1e-12) {
        throw std::invalid_argument("example_2_3: Theta must have total variation 1, got " + std::to_string(tv));
    }

    const double dd = static_cast<double>(d);
    const double c = std::pow(dd * std::numbers::pi * std::numbers::pi, alpha) / std::pow(diameter, 2.0 * alpha);
    const double q = 2.0 * alpha / dd;

    ModelSpec m;
    m.name = "example_2_3";
    m.hypothesis = Hypothesis::H3;
    m.dim = modes;
    m.noise_dim = modes;
    m.r0 = r0;
    m.spectrum = power_law_spectrum(modes, c, q);
    m.linear_rates = m.spectrum;
    m.law_dependent = a2 > 0.0;
    m.features = mean_features;
    m.drift = [modes, a1, a2, theta](const Segment& seg, const LawFeatures& f, std::span<double> out) {
        for (std::size_t i = 0; i < modes; ++i) out[i] = a2 > 0.0 ? a2 * std::atan(f[i]) : 0.0;
        if (a1 == 0.0) return;
        for (const auto& atom : theta) {
            const StateVector v = seg.at(atom.offset);
            for (std::size_t i = 0; i < modes; ++i) out[i] += a1 * atom.weight * v[i];
        }
    };
    m.diffusion = [modes](const LawFeatures&) { return Matrix::identity(modes); };

    const auto kp = conditions::kappa_p(1.0, a1 + a2, r0, m.spectrum.front());
    m.params = {{"modes", static_cast<double>(modes)},
                {"alpha", alpha},
                {"d", dd},
                {"diameter", diameter},
                {"alpha1", a1},
                {"alpha2", a2},
                {"r0", r0},
                {"p", 1.0},
                {"lambda1", m.spectrum.front()},
                {"lambda_lower_bound", c},
                {"spectrum_c", c},
                {"spectrum_q", q},
                {"kappa_p", kp.kappa},
                {"theta_star", kp.theta}};
    if (kp.kappa > 0.0) m.params["contraction_rate"] = kp.kappa;
    if (std::max(a1, a2) > 0.0) m.params["lipschitz_K"] = std::max(a1, a2);
    return m;
}

ModelSpec make_example_2_4(std::size_t modes, double a1, double a2, double a3, const std::vector<double>& spectrum,
                           double r0) {
    if (modes == 0) throw std::invalid_argument("example_2_4: modes must be >= 1");
    if (a1 == 0.0) throw std::invalid_argument("example_2_4: a1 must be nonzero");
    if (a2 < 0.0 || a3 < 0.0) throw std::invalid_argument("example_2_4: a2, a3 must be >= 0");
    if (!(r0 >= 0.0)) throw std::invalid_argument("example_2_4: r0 must be >= 0");
    if (spectrum.size() != modes) throw std::invalid_argument("example_2_4: spectrum must have `modes` entries");
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        if (!(spectrum[i] > 0.0)) throw std::invalid_argument("example_2_4: spectrum must be positive");
        if (i > 0 && spectrum[i] < spectrum[i - 1]) throw std::invalid_argument("example_2_4: spectrum must be nondecreasing");
    }
    const double lambda1 = spectrum.front();

    ModelSpec m;
    m.name = "example_2_4";
    m.hypothesis = Hypothesis::H4;
    m.dim = 2 * modes;
    m.noise_dim = modes;
    m.r0 = r0;
    m.spectrum = spectrum;
    m.linear_rates.assign(modes, lambda1);
    m.linear_rates.insert(m.linear_rates.end(), spectrum.begin(), spectrum.end());
    m.law_dependent = a3 > 0.0;
    m.features = mean_features;
    m.drift = [modes, a1, a2, a3](const Segment& seg, const LawFeatures& f, std::span<double> out) {
        auto x = seg.current();
        auto delayed = seg.value(0);
        for (std::size_t i = 0; i < modes; ++i) {
            out[i] = a1 * x[modes + i];
            out[modes + i] = -a2 * delayed[i] + (a3 > 0.0 ? a3 * std::clamp(f[i], -1.0, 1.0) : 0.0);
        }
    };
    m.diffusion = [modes](const LawFeatures&) {
        Matrix s(2 * modes, modes);
        for (std::size_t i = 0; i < modes; ++i) s(modes + i, i) = 1.0;
        return s;
    };

    const double weight = conditions::paired_block_weight(a1, a2);
    double k3 = 0.0;
    if (a3 > 0.0) k3 = weight > 0.0 ? a3 / std::min(1.0, weight) : std::numeric_limits<double>::infinity();
    m.params = {{"modes", static_cast<double>(modes)},
                {"alpha1", a1},
                {"alpha2", a2},
                {"alpha3", a3},
                {"r0", r0},
                {"p", 2.0},
                {"lambda1", lambda1},
                {"alpha_weight", weight},
                {"delta", 0.0},
                {"normB", std::abs(a1)},
                {"K1", a2},
                {"K2", a2},
                {"K3", k3},
                {"lipschitz_K", std::max({std::abs(a1), a2, a3})}};
    return m;
}

ModelSpec make_ou(std::size_t d, double theta, double sigma) {
    if (d == 0) throw std::invalid_argument("ou: d must be >= 1");
    if (!(theta > 0.0)) throw std::invalid_argument("ou: theta must be positive");
    if (!(sigma >= 0.0)) throw std::invalid_argument("ou: sigma must be >= 0");
    ModelSpec m;
    m.name = "ou";
    m.hypothesis = Hypothesis::H1;
    m.dim = d;
    m.noise_dim = d;
    m.drift = [theta](const Segment& seg, const LawFeatures&, std::span<double> out) {
        auto x = seg.current();
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = -theta * x[i];
    };
    m.diffusion = [d, sigma](const LawFeatures&) {
        Matrix s = Matrix::identity(d);
        for (std::size_t i = 0; i < d; ++i) s(i, i) = sigma;
        return s;
    };
    m.params = {{"d", static_cast<double>(d)}, {"theta", theta}, {"sigma", sigma},  {"kappa1", 2.0 * theta},
                {"kappa2", 0.0},               {"p", 2.0},       {"lipschitz_K", theta}, {"contraction_rate", theta}};
    return m;
}

ModelSpec make_linear_spectral(const std::vector<double>& spectrum) {
    if (spectrum.empty()) throw std::invalid_argument("linear_spectral: empty spectrum");
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        if (!(spectrum[i] > 0.0)) throw std::invalid_argument("linear_spectral: spectrum must be positive");
        if (i > 0 && spectrum[i] < spectrum[i - 1]) {
            throw std::invalid_argument("linear_spectral: spectrum must be nondecreasing");
        }
    }
    const std::size_t n = spectrum.size();
    ModelSpec m;
    m.name = "linear_spectral";
    m.hypothesis = Hypothesis::H2;
    m.dim = n;
    m.noise_dim = n;
    m.spectrum = spectrum;
    m.linear_rates = spectrum;
    m.drift = [](const Segment&, const LawFeatures&, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
    m.diffusion = [n](const LawFeatures&) { return Matrix::identity(n); };
    m.params = {{"modes", static_cast<double>(n)},
                {"alpha1", 0.0},
                {"alpha2", 0.0},
                {"lambda1", spectrum.front()},
                {"p", 2.0},
                {"contraction_rate", spectrum.front()}};
    return m;
}

std::vector<double> power_law_spectrum(std::size_t modes, double c, double q) {
    std::vector<double> out(modes);
    for (std::size_t i = 0; i < modes; ++i) out[i] = c * std::pow(static_cast<double>(i + 1), q);
    return out;
}

}  // namespace mvlab
