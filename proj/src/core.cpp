#include "mvlab/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mvlab {

namespace {

// Philox4x32-10 (Salmon et al., SC'11).
constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr, std::uint32_t k0,
                                           std::uint32_t k1) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
        mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
        k0 += kPhiloxW0;
        k1 += kPhiloxW1;
    }
    return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Two 53-bit uniforms on the open interval (0, 1).
inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

// ---------------------------------------------------------------- StateVector

StateVector::StateVector(std::size_t dim, double fill) : coords_(dim, fill) {}
StateVector::StateVector(std::vector<double> coords) : coords_(std::move(coords)) {}
StateVector::StateVector(std::initializer_list<double> coords) : coords_(coords) {}

double euclidean_norm(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

double euclidean_distance(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("euclidean_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        s += d * d;
    }
    return std::sqrt(s);
}

std::size_t grid_length(double r0, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("grid spacing must be positive");
    if (!(r0 >= 0.0) || !std::isfinite(r0)) throw std::invalid_argument("delay r0 must be nonnegative");
    if (r0 == 0.0) return 1;
    const double ratio = r0 / dt;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
        throw std::invalid_argument("dt=" + std::to_string(dt) + " does not divide r0=" +
                                    std::to_string(r0));
    }
    return static_cast<std::size_t>(rounded) + 1;
}

// -------------------------------------------------------------------- Segment

Segment::Segment(const StateVector& fill, double r0, double dt_grid)
    : dim_(fill.dim()), len_(grid_length(r0, dt_grid)), r0_(r0), dt_(dt_grid) {
    if (dim_ == 0) throw std::invalid_argument("Segment: zero dimension");
    for (double v : fill.span()) {
        if (!std::isfinite(v)) throw std::invalid_argument("Segment: non-finite coordinate");
    }
    data_.resize(dim_ * len_);
    for (std::size_t k = 0; k < len_; ++k) std::copy(fill.span().begin(), fill.span().end(), data_.begin() + k * dim_);
}

Segment Segment::point(const StateVector& x) { return Segment(x, 0.0, 1.0); }

Segment Segment::from_values(const std::vector<StateVector>& values, double r0, double dt_grid) {
    const std::size_t len = grid_length(r0, dt_grid);
    if (values.size() != len) {
        throw std::invalid_argument("Segment: expected " + std::to_string(len) + " grid values, got " +
                                    std::to_string(values.size()));
    }
    Segment s(values.front(), r0, dt_grid);
    for (std::size_t k = 0; k < len; ++k) {
        if (values[k].dim() != s.dim_) throw std::invalid_argument("Segment: inconsistent dimension");
        for (double v : values[k].span()) {
            if (!std::isfinite(v)) throw std::invalid_argument("Segment: non-finite coordinate");
        }
        std::copy(values[k].span().begin(), values[k].span().end(), s.data_.begin() + k * s.dim_);
    }
    return s;
}

std::span<const double> Segment::value(std::size_t k) const {
    const std::size_t slot = (head_ + k) % len_;
    return {data_.data() + slot * dim_, dim_};
}

StateVector Segment::state(std::size_t k) const {
    auto v = value(k);
    return StateVector(std::vector<double>(v.begin(), v.end()));
}

StateVector Segment::at(double theta) const {
    if (len_ == 1) return state(0);
    const double pos = std::clamp((theta + r0_) / dt_, 0.0, static_cast<double>(len_ - 1));
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    if (lo + 1 >= len_) return state(len_ - 1);
    const double w = pos - static_cast<double>(lo);
    auto a = value(lo);
    auto b = value(lo + 1);
    StateVector out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) out[i] = (1.0 - w) * a[i] + w * b[i];
    return out;
}

void Segment::push(std::span<const double> v) {
    if (v.size() != dim_) throw std::invalid_argument("segment_shift: dimension mismatch");
    // The slot of the oldest value becomes the slot of the new current value.
    std::copy(v.begin(), v.end(), data_.begin() + head_ * dim_);
    head_ = (head_ + 1) % len_;
}

bool operator==(const Segment& a, const Segment& b) {
    if (a.dim_ != b.dim_ || a.len_ != b.len_ || a.r0_ != b.r0_ || (a.len_ > 1 && a.dt_ != b.dt_)) return false;
    for (std::size_t k = 0; k < a.len_; ++k) {
        auto x = a.value(k);
        auto y = b.value(k);
        if (!std::equal(x.begin(), x.end(), y.begin())) return false;
    }
    return true;
}

Segment segment_shift(const Segment& seg, const StateVector& new_value) {
    Segment out = seg;
    out.push(new_value.span());
    return out;
}

double sup_norm(const Segment& seg) {
    double m = 0.0;
    for (std::size_t k = 0; k < seg.grid_size(); ++k) m = std::max(m, euclidean_norm(seg.value(k)));
    return m;
}

double sup_distance(const Segment& a, const Segment& b) {
    if (a.dim() != b.dim() || a.grid_size() != b.grid_size()) {
        throw std::invalid_argument("sup_distance: incompatible segments");
    }
    double m = 0.0;
    for (std::size_t k = 0; k < a.grid_size(); ++k) {
        auto x = a.value(k);
        auto y = b.value(k);
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - y[i];
            s += d * d;
        }
        m = std::max(m, s);
    }
    return std::sqrt(m);
}

// ----------------------------------------------------------- EmpiricalMeasure

EmpiricalMeasure::EmpiricalMeasure(std::vector<Segment> atoms) : atoms_(std::move(atoms)) { validate(); }

EmpiricalMeasure::EmpiricalMeasure(std::vector<Segment> atoms, std::vector<double> weights)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {
    if (weights_.size() != atoms_.size()) throw std::invalid_argument("EmpiricalMeasure: weight count mismatch");
    double total = 0.0;
    for (double w : weights_) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("EmpiricalMeasure: negative weight");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw std::invalid_argument("EmpiricalMeasure: weights sum to " + std::to_string(total));
    }
    validate();
}

EmpiricalMeasure EmpiricalMeasure::dirac(const Segment& atom) { return EmpiricalMeasure(std::vector<Segment>{atom}); }

EmpiricalMeasure EmpiricalMeasure::from_points(const std::vector<StateVector>& points) {
    std::vector<Segment> atoms;
    atoms.reserve(points.size());
    for (const auto& p : points) atoms.push_back(Segment::point(p));
    return EmpiricalMeasure(std::move(atoms));
}

void EmpiricalMeasure::validate() const {
    if (atoms_.empty()) return;
    const auto& first = atoms_.front();
    for (const auto& a : atoms_) {
        if (a.dim() != first.dim() || a.grid_size() != first.grid_size()) {
            throw std::invalid_argument("EmpiricalMeasure: atoms must share dimension and grid");
        }
    }
}

std::size_t EmpiricalMeasure::dim() const { return atoms_.empty() ? 0 : atoms_.front().dim(); }
std::size_t EmpiricalMeasure::grid_size() const { return atoms_.empty() ? 0 : atoms_.front().grid_size(); }

double EmpiricalMeasure::weight(std::size_t i) const {
    return weights_.empty() ? 1.0 / static_cast<double>(atoms_.size()) : weights_[i];
}

std::vector<double> EmpiricalMeasure::weights() const {
    if (!weights_.empty()) return weights_;
    return std::vector<double>(atoms_.size(), 1.0 / static_cast<double>(atoms_.size()));
}

StateVector EmpiricalMeasure::mean_current() const {
    if (atoms_.empty()) throw std::invalid_argument("mean of an empty measure");
    const std::size_t d = dim();
    StateVector m(d);
    if (weights_.empty()) {
        for (const auto& a : atoms_) {
            auto v = a.current();
            for (std::size_t i = 0; i < d; ++i) m[i] += v[i];
        }
        for (std::size_t i = 0; i < d; ++i) m[i] /= static_cast<double>(atoms_.size());
    } else {
        for (std::size_t k = 0; k < atoms_.size(); ++k) {
            auto v = atoms_[k].current();
            for (std::size_t i = 0; i < d; ++i) m[i] += weights_[k] * v[i];
        }
    }
    return m;
}

std::vector<double> EmpiricalMeasure::covariance_current() const {
    const StateVector m = mean_current();
    const std::size_t d = dim();
    std::vector<double> c(d * d, 0.0);
    for (std::size_t k = 0; k < atoms_.size(); ++k) {
        auto v = atoms_[k].current();
        const double w = weight(k);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) c[i * d + j] += w * (v[i] - m[i]) * (v[j] - m[j]);
        }
    }
    return c;
}

// ---------------------------------------------------------------- NoiseStream

NoiseStream::NoiseStream(std::uint64_t master_seed, std::uint64_t stream_id, double dt, Domain domain,
                         bool antithetic)
    : seed_(master_seed), id_(stream_id), dt_(dt), domain_(domain), sign_(antithetic ? -1.0 : 1.0) {
    if (!(dt > 0.0)) throw std::invalid_argument("NoiseStream: dt must be positive");
    const std::uint64_t key = splitmix64(master_seed ^ splitmix64(0x5EEDull + static_cast<std::uint64_t>(domain)));
    key_[0] = static_cast<std::uint32_t>(key);
    key_[1] = static_cast<std::uint32_t>(key >> 32);
}

NoiseStream NoiseStream::with_domain(Domain d) const { return NoiseStream(seed_, id_, dt_, d, sign_ < 0.0); }

namespace {

// One Philox block yields two 53-bit uniforms and hence one Box-Muller pair.
std::array<double, 2> normal_pair(std::uint64_t block, std::uint64_t id, std::uint32_t k0, std::uint32_t k1) {
    const auto r = philox4x32_10({static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                                  static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32)},
                                 k0, k1);
    const double radius = std::sqrt(-2.0 * std::log(to_unit(r[0], r[1])));
    const double angle = 2.0 * std::numbers::pi * to_unit(r[2], r[3]);
    return {radius * std::cos(angle), radius * std::sin(angle)};
}

}  // namespace

double NoiseStream::normal(std::uint64_t k) const {
    const auto z = normal_pair(k >> 1, id_, key_[0], key_[1]);
    return sign_ * z[k & 1u];
}

double NoiseStream::uniform(std::uint64_t k) const {
    // Counter words 2-3 carry the stream id with the top bit set, disjoint from normal().
    const auto r = philox4x32_10({static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32),
                                  static_cast<std::uint32_t>(id_),
                                  static_cast<std::uint32_t>(id_ >> 32) | 0x80000000u},
                                 key_[0], key_[1]);
    return to_unit(r[0], r[1]);
}

void NoiseStream::increment(std::uint64_t step, std::span<double> out) const {
    const double scale = sign_ * std::sqrt(dt_);
    const std::uint64_t base = step * out.size();
    std::size_t i = 0;
    while (i < out.size()) {
        const std::uint64_t k = base + i;
        const auto z = normal_pair(k >> 1, id_, key_[0], key_[1]);
        out[i] = scale * z[k & 1u];
        ++i;
        if ((k & 1u) == 0 && i < out.size()) {
            out[i] = scale * z[1];
            ++i;
        }
    }
}

std::vector<StateVector> gaussian_increments(const NoiseStream& stream, std::size_t n_steps, std::size_t dim) {
    if (n_steps == 0 || dim == 0) throw std::invalid_argument("gaussian_increments: n_steps and dim must be >= 1");
    std::vector<StateVector> out;
    out.reserve(n_steps);
    for (std::size_t s = 0; s < n_steps; ++s) {
        StateVector v(dim);
        stream.increment(s, v.span());
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace mvlab
