#include "annuity/surface.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <charconv>
#include <cstring>
#include <istream>
#include <ostream>

namespace annuity {

namespace {

constexpr std::array<char, 4> kMagic = {'A', 'N', 'S', 'F'};
constexpr std::uint32_t kVersion = 1;

class ChecksumWriter {
public:
    explicit ChecksumWriter(std::ostream& out) : out_(out) {}
    template <typename T>
    void put(const T& v) {
        bytes(&v, sizeof(T));
    }
    void bytes(const void* p, std::size_t n) {
        hash_ = fnv1a64(p, n, hash_);
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    std::uint64_t hash() const { return hash_; }

private:
    std::ostream& out_;
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

class ChecksumReader {
public:
    explicit ChecksumReader(std::istream& in) : in_(in) {}
    template <typename T>
    T get() {
        T v{};
        bytes(&v, sizeof(T));
        return v;
    }
    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!in_) throw ConfigError("surface cache is truncated");
        hash_ = fnv1a64(p, n, hash_);
    }
    std::uint64_t hash() const { return hash_; }

private:
    std::istream& in_;
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace

// Shortest round-trip representation, so re-runs give byte-identical CSV bodies.
std::string format_number(double v) {
    std::array<char, 32> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string to_string(SurfaceLabel label) {
    switch (label) {
        case SurfaceLabel::annuity: return "annuity";
        case SurfaceLabel::pure_endowment: return "pure_endowment";
        case SurfaceLabel::beta: return "beta";
        case SurfaceLabel::limit: return "limit";
        case SurfaceLabel::indifference: return "indifference";
        case SurfaceLabel::indifference_quadratic: return "indifference_quadratic";
        case SurfaceLabel::bond: return "bond";
        case SurfaceLabel::generic: return "generic";
    }
    return "generic";
}

SurfaceLabel surface_label_from_string(const std::string& name) {
    for (auto l : {SurfaceLabel::annuity, SurfaceLabel::pure_endowment, SurfaceLabel::beta, SurfaceLabel::limit,
                   SurfaceLabel::indifference, SurfaceLabel::indifference_quadratic, SurfaceLabel::bond,
                   SurfaceLabel::generic})
        if (to_string(l) == name) return l;
    throw ConfigError("unknown surface label '" + name + "'");
}

template <typename Scalar>
void BasicSurface<Scalar>::write_csv(std::ostream& out, bool header) const {
    if (header) out << "r,lambda,t,value,label\n";
    std::string tag = to_string(label_);
    if (label_ == SurfaceLabel::annuity || label_ == SurfaceLabel::pure_endowment)
        tag += "(" + std::to_string(level_) + ")";
    for (std::size_t k = 0; k < slices_.size(); ++k) {
        const std::string t = format_number(times_[k]);
        for (Eigen::Index ir = 0; ir < rates_.size(); ++ir) {
            const std::string r = rates_.axis() == RateAxis::none ? std::string() : format_number(rates_.r(ir));
            for (Eigen::Index iy = 0; iy < hazard_.size(); ++iy) {
                out << r << ',';
                if (hazard_.present()) out << format_number(hazard_.lambda(iy));
                out << ',' << t << ',' << format_number(slices_[k](ir, iy)) << ',' << tag << '\n';
            }
        }
    }
}

template <typename Scalar>
void BasicSurface<Scalar>::save_binary(std::ostream& out) const {
    ChecksumWriter w(out);
    w.bytes(kMagic.data(), kMagic.size());
    w.put(kVersion);
    w.put(static_cast<std::uint32_t>(label_));
    w.put(static_cast<std::int32_t>(level_));
    w.put(static_cast<std::uint32_t>(rates_.axis()));
    w.put(static_cast<std::uint64_t>(rates_.size()));
    w.put(static_cast<double>(rates_.r(0)));
    w.put(static_cast<double>(rates_.r(rates_.size() - 1)));
    w.put(static_cast<std::uint32_t>(hazard_.present() ? 1 : 0));
    w.put(static_cast<double>(hazard_.floor()));
    w.put(static_cast<std::uint64_t>(hazard_.size()));
    w.put(static_cast<double>(hazard_.y_min()));
    w.put(static_cast<double>(hazard_.y_max()));
    w.put(static_cast<std::uint64_t>(times_.size()));
    for (auto t : times_) w.put(static_cast<double>(t));
    for (const auto& s : slices_)
        for (Eigen::Index j = 0; j < s.cols(); ++j)
            for (Eigen::Index i = 0; i < s.rows(); ++i) w.put(static_cast<double>(s(i, j)));
    const std::uint64_t sum = w.hash();
    out.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
}

template <typename Scalar>
BasicSurface<Scalar> BasicSurface<Scalar>::load_binary(std::istream& in) {
    ChecksumReader rd(in);
    std::array<char, 4> magic{};
    rd.bytes(magic.data(), magic.size());
    if (magic != kMagic) throw ConfigError("not a surface cache (bad magic)");
    if (rd.get<std::uint32_t>() != kVersion) throw ConfigError("unsupported surface cache version");
    auto label = static_cast<SurfaceLabel>(rd.get<std::uint32_t>());
    auto level = rd.get<std::int32_t>();
    auto axis = static_cast<RateAxis>(rd.get<std::uint32_t>());
    auto nr = static_cast<Eigen::Index>(rd.get<std::uint64_t>());
    double r_lo = rd.get<double>();
    double r_hi = rd.get<double>();
    bool has_hazard = rd.get<std::uint32_t>() != 0;
    double floor = rd.get<double>();
    auto ny = static_cast<Eigen::Index>(rd.get<std::uint64_t>());
    double y_lo = rd.get<double>();
    double y_hi = rd.get<double>();
    auto nt = rd.get<std::uint64_t>();
    if (nt == 0 || nt > (1u << 28) || nr <= 0 || ny <= 0) throw ConfigError("corrupt surface cache header");

    BasicRateGrid<Scalar> rates = axis == RateAxis::grid    ? BasicRateGrid<Scalar>::uniform(r_lo, r_hi, nr)
                                  : axis == RateAxis::fixed ? BasicRateGrid<Scalar>::fixed(r_lo)
                                                            : BasicRateGrid<Scalar>::none();
    BasicHazardGrid<Scalar> hazard =
        has_hazard ? BasicHazardGrid<Scalar>::uniform(floor, y_lo, y_hi, ny) : BasicHazardGrid<Scalar>::none();
    if (rates.size() != nr || hazard.size() != ny) throw ConfigError("corrupt surface cache grid");

    std::vector<Scalar> times(nt);
    for (auto& t : times) t = static_cast<Scalar>(rd.get<double>());
    std::vector<Slice> slices(nt, Slice(nr, ny));
    for (auto& s : slices)
        for (Eigen::Index j = 0; j < ny; ++j)
            for (Eigen::Index i = 0; i < nr; ++i) s(i, j) = static_cast<Scalar>(rd.get<double>());
    const std::uint64_t expected = rd.hash();
    std::uint64_t stored = 0;
    in.read(reinterpret_cast<char*>(&stored), sizeof(stored));
    if (!in || stored != expected) throw ConfigError("surface cache checksum mismatch");
    return BasicSurface(label, level, std::move(rates), std::move(hazard), std::move(times), std::move(slices));
}

template class BasicSurface<double>;

LocalDerivatives local_derivatives(const Surface& s, double r, double lambda, double t) {
    LocalDerivatives d;
    d.value = s(r, lambda, t);

    const auto& times = s.times();
    if (times.size() >= 3) {
        double w;
        std::size_t k = s.locate_time(t, w);
        k = std::min(k, times.size() - 2);
        if (k == 0) {
            // second-order one-sided at the first slice
            const double h = times[1] - times[0];
            d.d_t = (-3 * s(r, lambda, times[0]) + 4 * s(r, lambda, times[1]) - s(r, lambda, times[2])) / (2 * h);
            if (t > times[0]) d.d_t = (s(r, lambda, times[1]) - s(r, lambda, times[0])) / h;
        } else {
            const double h = times[k + 1] - times[k - 1];
            d.d_t = (s(r, lambda, times[k + 1]) - s(r, lambda, times[k - 1])) / h;
        }
    } else if (times.size() == 2) {
        d.d_t = (s(r, lambda, times[1]) - s(r, lambda, times[0])) / (times[1] - times[0]);
    }

    const bool has_r = s.rates().axis() == RateAxis::grid;
    const bool has_y = s.hazard().present();
    const double hr = has_r ? s.rates().spacing() : 0.0;
    const double hy = has_y ? s.hazard().spacing() : 0.0;
    const double x = has_y ? lambda - s.hazard().floor() : 0.0;
    auto at = [&](double dr, double dy) {
        const double l = has_y ? s.hazard().floor() + x * std::exp(dy) : lambda;
        return s(r + dr, l, t);
    };
    if (has_r) {
        const double up = at(hr, 0), dn = at(-hr, 0);
        d.d_r = (up - dn) / (2 * hr);
        d.d_rr = (up - 2 * d.value + dn) / (hr * hr);
    }
    if (has_y) {
        const double up = at(0, hy), dn = at(0, -hy);
        const double ay = (up - dn) / (2 * hy);
        const double ayy = (up - 2 * d.value + dn) / (hy * hy);
        d.d_y = ay;
        d.d_lambda = ay / x;
        d.d_lambdalambda = (ayy - ay) / (x * x);
    }
    if (has_r && has_y) {
        const double ary = (at(hr, hy) - at(hr, -hy) - at(-hr, hy) + at(-hr, -hy)) / (4 * hr * hy);
        d.d_rlambda = ary / x;
    }
    return d;
}

}  // namespace annuity
