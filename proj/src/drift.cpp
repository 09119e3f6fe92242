#include "driftwave/drift.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "driftwave/error.hpp"
#include "driftwave/rng.hpp"

namespace driftwave {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Stream tags for the keyed generator, one per random ingredient.
enum Stream : std::uint64_t { kPhase = 1, kFourierPhase = 2, kFourierWavelength = 3, kBlockHeight = 4 };

const std::map<DriftKind, std::set<std::string>>& allowed_params() {
    static const std::map<DriftKind, std::set<std::string>> table{
        {DriftKind::constant, {"b0"}},
        {DriftKind::randomized_phase_periodic, {"mean", "amplitude", "period"}},
        {DriftKind::random_fourier,
         {"mean", "amplitude", "modes", "wavelength_min", "wavelength_max"}},
        {DriftKind::interp_iid_blocks, {"low", "high", "width"}},
    };
    return table;
}

void validate(const DriftSpec& spec) {
    const auto& allowed = allowed_params().at(spec.kind);
    for (const auto& [name, value] : spec.params) {
        if (!allowed.contains(name)) {
            throw InvalidArgument(fmt::format("drift kind '{}' does not take parameter '{}'",
                                              to_string(spec.kind), name));
        }
        if (!std::isfinite(value)) {
            throw InvalidArgument(fmt::format("drift parameter '{}' is not finite", name));
        }
    }
    if (!(spec.bound_B > 0.0) || !std::isfinite(spec.bound_B)) {
        throw InvalidArgument("bound_B must be positive and finite");
    }
    const double B = spec.bound_B;
    switch (spec.kind) {
        case DriftKind::constant: {
            double b0 = spec.param("b0");
            if (std::abs(b0) > B) {
                throw InvalidArgument(fmt::format("|b0| = {} exceeds bound_B = {}", std::abs(b0), B));
            }
            break;
        }
        case DriftKind::randomized_phase_periodic:
        case DriftKind::random_fourier: {
            double mean = spec.param("mean");
            double amp = spec.param("amplitude");
            if (amp < 0.0) throw InvalidArgument("amplitude must be nonnegative");
            if (std::abs(mean) + amp > B) {
                throw InvalidArgument(fmt::format(
                    "|mean| + amplitude = {} exceeds bound_B = {}", std::abs(mean) + amp, B));
            }
            if (spec.kind == DriftKind::randomized_phase_periodic) {
                if (!(spec.param_or("period", 1.0) > 0.0)) throw InvalidArgument("period must be positive");
            } else {
                double modes = spec.param_or("modes", 4.0);
                if (modes < 1.0 || modes != std::floor(modes)) {
                    throw InvalidArgument("modes must be a positive integer");
                }
                double wmin = spec.param_or("wavelength_min", 1.0);
                double wmax = spec.param_or("wavelength_max", 8.0);
                if (!(wmin > 0.0) || wmax < wmin) {
                    throw InvalidArgument("need 0 < wavelength_min <= wavelength_max");
                }
            }
            break;
        }
        case DriftKind::interp_iid_blocks: {
            double lo = spec.param("low");
            double hi = spec.param("high");
            if (hi < lo) throw InvalidArgument("interp-iid-blocks needs low <= high");
            if (std::max(std::abs(lo), std::abs(hi)) > B) {
                throw InvalidArgument(fmt::format("block heights in [{}, {}] exceed bound_B = {}", lo, hi, B));
            }
            if (!(spec.param_or("width", 1.0) > 0.0)) throw InvalidArgument("width must be positive");
            break;
        }
    }
}

// Pointwise generator for the underlying (pre-tabulation) realization.
class Realization {
public:
    explicit Realization(const DriftSpec& spec) : spec_(spec) {
        switch (spec.kind) {
            case DriftKind::constant:
                mean_ = spec.param("b0");
                break;
            case DriftKind::randomized_phase_periodic:
                mean_ = spec.param("mean");
                period_ = spec.param_or("period", 1.0);
                phase_ = period_ * rng::uniform(spec.seed, kPhase, 0);
                modes_.push_back({spec.param("amplitude"), kTwoPi / period_, kTwoPi * phase_ / period_});
                break;
            case DriftKind::random_fourier: {
                mean_ = spec.param("mean");
                auto m = static_cast<std::uint64_t>(spec.param_or("modes", 4.0));
                double wmin = spec.param_or("wavelength_min", 1.0);
                double wmax = spec.param_or("wavelength_max", 8.0);
                double a = spec.param("amplitude") / static_cast<double>(m);
                for (std::uint64_t j = 0; j < m; ++j) {
                    double lambda = wmin + (wmax - wmin) * rng::uniform(spec.seed, kFourierWavelength, j);
                    double theta = kTwoPi * rng::uniform(spec.seed, kFourierPhase, j);
                    // Cosine written as a phase-shifted sine.
                    modes_.push_back({a, kTwoPi / lambda, theta + std::numbers::pi / 2});
                }
                break;
            }
            case DriftKind::interp_iid_blocks:
                low_ = spec.param("low");
                high_ = spec.param("high");
                width_ = spec.param_or("width", 1.0);
                phase_ = width_ * rng::uniform(spec.seed, kPhase, 0);
                break;
        }
    }

    double operator()(double x) const {
        if (spec_.kind == DriftKind::interp_iid_blocks) {
            double s = (x - phase_) / width_;
            double n = std::floor(s);
            double t = s - n;
            double h0 = height(static_cast<std::int64_t>(n));
            double h1 = height(static_cast<std::int64_t>(n) + 1);
            return h0 + t * (h1 - h0);
        }
        double b = mean_;
        for (const auto& mode : modes_) b += mode.amplitude * std::sin(mode.wavenumber * x + mode.phase);
        return b;
    }

private:
    struct Mode {
        double amplitude;
        double wavenumber;
        double phase;
    };

    double height(std::int64_t n) const {
        return low_ + (high_ - low_) * rng::uniform(spec_.seed, kBlockHeight, static_cast<std::uint64_t>(n));
    }

    const DriftSpec& spec_;
    double mean_ = 0.0;
    double period_ = 1.0;
    double phase_ = 0.0;
    double low_ = 0.0, high_ = 0.0, width_ = 1.0;
    std::vector<Mode> modes_;
};

}  // namespace

std::string_view to_string(DriftKind kind) {
    switch (kind) {
        case DriftKind::constant: return "constant";
        case DriftKind::randomized_phase_periodic: return "randomized-phase-periodic";
        case DriftKind::random_fourier: return "random-fourier";
        case DriftKind::interp_iid_blocks: return "interp-iid-blocks";
    }
    return "unknown";
}

DriftKind parse_drift_kind(std::string_view name) {
    for (auto kind : {DriftKind::constant, DriftKind::randomized_phase_periodic,
                      DriftKind::random_fourier, DriftKind::interp_iid_blocks}) {
        if (to_string(kind) == name) return kind;
    }
    throw InvalidArgument(fmt::format("unknown drift kind '{}'", name));
}

double DriftSpec::param(std::string_view name) const {
    auto it = params.find(std::string(name));
    if (it == params.end()) {
        throw InvalidArgument(fmt::format("drift kind '{}' requires parameter '{}'", to_string(kind), name));
    }
    return it->second;
}

double DriftSpec::param_or(std::string_view name, double fallback) const {
    auto it = params.find(std::string(name));
    return it == params.end() ? fallback : it->second;
}

DriftSpec DriftSpec::constant(double b0, double bound_B) {
    DriftSpec spec;
    spec.kind = DriftKind::constant;
    spec.params["b0"] = b0;
    spec.bound_B = bound_B;
    return spec;
}

DriftField::DriftField(DriftSpec spec, Interval window, double pitch, double origin,
                       std::vector<double> samples)
    : spec_(std::move(spec)),
      window_(window),
      pitch_(pitch),
      inv_pitch_(1.0 / pitch),
      origin_(origin),
      samples_(std::move(samples)) {
    if (samples_.size() < 2) throw InvalidArgument("drift field needs at least two samples");
    cumulative_.resize(samples_.size());
    cumulative_[0] = 0.0;
    for (std::size_t i = 1; i < samples_.size(); ++i) {
        cumulative_[i] = cumulative_[i - 1] + 0.5 * pitch_ * (samples_[i - 1] + samples_[i]);
    }
    mean_ = integral(window_.lo, window_.hi) / window_.length();
}

double DriftField::operator()(double x) const {
    if (!window_.contains(x)) {
        throw OutOfWindow(fmt::format("drift evaluated at x = {} outside window [{}, {}]", x,
                                      window_.lo, window_.hi));
    }
    return value_unchecked(x);
}

double DriftField::primitive(double x) const {
    double s = (x - origin_) * inv_pitch_;
    auto i = static_cast<std::ptrdiff_t>(std::floor(s));
    i = std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(samples_.size()) - 2);
    double t = s - static_cast<double>(i);
    double b0 = samples_[i];
    double b1 = samples_[i + 1];
    return cumulative_[i] + pitch_ * (t * b0 + 0.5 * t * t * (b1 - b0));
}

double DriftField::integral(double a, double b) const {
    if (!window_.contains(a) || !window_.contains(b)) {
        throw OutOfWindow(fmt::format("integral over [{}, {}] leaves window [{}, {}]", a, b,
                                      window_.lo, window_.hi));
    }
    return primitive(b) - primitive(a);
}

double DriftField::max_abs() const noexcept {
    double m = 0.0;
    for (double v : samples_) m = std::max(m, std::abs(v));
    return m;
}

DriftField sample_drift(const DriftSpec& spec_in, Interval window, std::uint64_t seed, double pitch) {
    if (!(window.hi > window.lo) || !std::isfinite(window.lo) || !std::isfinite(window.hi)) {
        throw InvalidArgument(fmt::format("drift window [{}, {}] is empty", window.lo, window.hi));
    }
    if (!(pitch > 0.0)) throw InvalidArgument("drift pitch must be positive");
    DriftSpec spec = spec_in;
    spec.seed = seed;
    validate(spec);

    auto first = static_cast<std::int64_t>(std::floor(window.lo / pitch));
    auto last = static_cast<std::int64_t>(std::ceil(window.hi / pitch));
    if (last == first) ++last;
    Realization realization(spec);
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(last - first + 1));
    for (std::int64_t i = first; i <= last; ++i) {
        double b = realization(static_cast<double>(i) * pitch);
        samples.push_back(std::clamp(b, -spec.bound_B, spec.bound_B));
    }
    return DriftField(std::move(spec), window, pitch, static_cast<double>(first) * pitch,
                      std::move(samples));
}

DriftField sample_drift(const DriftSpec& spec, Interval window, double pitch) {
    return sample_drift(spec, window, spec.seed, pitch);
}

double spatial_mean(const DriftField& field, Interval sub_window) {
    if (!(sub_window.hi > sub_window.lo)) throw InvalidArgument("spatial_mean needs a nonempty sub-window");
    if (!field.window().contains(sub_window)) {
        throw OutOfWindow(fmt::format("sub-window [{}, {}] outside field window [{}, {}]", sub_window.lo,
                                      sub_window.hi, field.window().lo, field.window().hi));
    }
    return field.integral(sub_window.lo, sub_window.hi) / sub_window.length();
}

namespace {

// log ∫ exp(g(y)) dy over [0, L] (sign = +1) or [-L, 0] (sign = -1) with
// g(y) = -2∫_0^y b, composite Simpson on the field pitch.
double log_scale_integral(const DriftField& field, double L, double sign) {
    const double h = field.pitch();
    const auto n = static_cast<std::size_t>(std::ceil(L / h));
    const double step = L / static_cast<double>(n);
    std::vector<double> g(2 * n + 1);
    for (std::size_t j = 0; j <= 2 * n; ++j) {
        double y = sign * 0.5 * step * static_cast<double>(j);
        g[j] = -2.0 * field.integral(0.0, y);
    }
    double gmax = *std::max_element(g.begin(), g.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum += std::exp(g[2 * i] - gmax) + 4.0 * std::exp(g[2 * i + 1] - gmax) + std::exp(g[2 * i + 2] - gmax);
    }
    return gmax + std::log(sum * step / 6.0);
}

}  // namespace

ScaleIntegralReport scale_integral_check(const DriftField& field, std::span<const double> L_list) {
    ScaleIntegralReport report;
    for (double L : L_list) {
        if (!(L > 0.0) || !field.window().contains(L) || !field.window().contains(-L)) {
            throw OutOfWindow(fmt::format("scale integral length {} leaves window [{}, {}]", L,
                                          field.window().lo, field.window().hi));
        }
        report.rows.push_back({L, log_scale_integral(field, L, 1.0), log_scale_integral(field, L, -1.0)});
    }
    if (report.rows.size() >= 2) {
        const auto& a = report.rows[report.rows.size() - 2];
        const auto& b = report.rows.back();
        report.positive_plateau = std::abs(std::expm1(a.log_positive - b.log_positive)) < 1e-3;
        report.negative_grows = true;
        for (std::size_t i = 1; i < report.rows.size(); ++i) {
            if (report.rows[i].log_negative - report.rows[i - 1].log_negative < std::log(1.5)) {
                report.negative_grows = false;
            }
        }
    }
    return report;
}

DriftConfig drift_config_from_json(const nlohmann::json& j) {
    DriftConfig config;
    config.spec.kind = parse_drift_kind(j.at("kind").get<std::string>());
    if (j.contains("params")) {
        for (const auto& [name, value] : j.at("params").items()) {
            config.spec.params[name] = value.get<double>();
        }
    }
    config.spec.bound_B = j.at("bound_B").get<double>();
    config.spec.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("window")) {
        const auto& w = j.at("window");
        if (!w.is_array() || w.size() != 2) throw InvalidArgument("drift window must be [x_min, x_max]");
        config.window = Interval{w[0].get<double>(), w[1].get<double>()};
    }
    validate(config.spec);
    return config;
}

nlohmann::json to_json(const DriftSpec& spec) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [name, value] : spec.params) params[name] = value;
    return {{"kind", std::string(to_string(spec.kind))},
            {"params", params},
            {"bound_B", spec.bound_B},
            {"seed", spec.seed}};
}

void write_drift_csv(const DriftField& field, std::ostream& out, std::size_t stride) {
    if (stride == 0) stride = 1;
    out << "x,b\n";
    auto samples = field.samples();
    for (std::size_t i = 0; i < samples.size(); i += stride) {
        double x = field.origin() + static_cast<double>(i) * field.pitch();
        if (!field.window().contains(x)) continue;
        out << fmt::format("{:.17g},{:.17g}\n", x, samples[i]);
    }
}

}  // namespace driftwave
