#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace driftwave {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double length() const noexcept { return hi - lo; }
    bool contains(double x) const noexcept { return lo <= x && x <= hi; }
    bool contains(const Interval& other) const noexcept {
        return lo <= other.lo && other.hi <= hi;
    }
};

enum class DriftKind { constant, randomized_phase_periodic, random_fourier, interp_iid_blocks };

std::string_view to_string(DriftKind kind);
DriftKind parse_drift_kind(std::string_view name);

// Recipe for a stationary ergodic drift environment.
//
// Parameters by kind (drift units unless noted):
//   constant                   b0
//   randomized-phase-periodic  mean, amplitude, period (space units, default 1)
//   random-fourier             mean, amplitude (sum over modes), modes (default 4),
//                              wavelength_min, wavelength_max (space units, default 1 and 8)
//   interp-iid-blocks          low, high, width (space units, default 1)
struct DriftSpec {
    DriftKind kind = DriftKind::constant;
    std::map<std::string, double> params;
    double bound_B = 1.0;
    std::uint64_t seed = 0;

    double param(std::string_view name) const;
    double param_or(std::string_view name, double fallback) const;

    static DriftSpec constant(double b0, double bound_B);
};

// One realization b(x) of a DriftSpec, stored as samples on a uniform grid
// aligned to multiples of the pitch and linearly interpolated between them.
// Immutable after construction.
class DriftField {
public:
    static constexpr double kDefaultPitch = 1.0 / 64.0;

    DriftField(DriftSpec spec, Interval window, double pitch, double origin,
               std::vector<double> samples);

    const DriftSpec& spec() const noexcept { return spec_; }
    Interval window() const noexcept { return window_; }
    double pitch() const noexcept { return pitch_; }

    // Grid nodes: x_i = origin() + i * pitch(), i = 0 .. samples().size() - 1.
    double origin() const noexcept { return origin_; }
    std::span<const double> samples() const noexcept { return samples_; }

    // b(x); throws OutOfWindow outside window().
    double operator()(double x) const;

    // b(x) without the window check; x must lie in the sample table.
    double value_unchecked(double x) const noexcept {
        double s = (x - origin_) * inv_pitch_;
        auto i = static_cast<std::ptrdiff_t>(s);
        if (i >= static_cast<std::ptrdiff_t>(samples_.size()) - 1) i = static_cast<std::ptrdiff_t>(samples_.size()) - 2;
        if (i < 0) i = 0;
        double t = s - static_cast<double>(i);
        return samples_[i] + t * (samples_[i + 1] - samples_[i]);
    }

    // Exact integral of the interpolant over [a, b] (a may exceed b).
    double integral(double a, double b) const;

    // Cached mean over the whole window.
    double mean() const noexcept { return mean_; }

    double max_abs() const noexcept;

private:
    double primitive(double x) const;

    DriftSpec spec_;
    Interval window_;
    double pitch_;
    double inv_pitch_;
    double origin_;
    std::vector<double> samples_;
    std::vector<double> cumulative_;
    double mean_ = 0.0;
};

// Realizes `spec` on `window` with the given seed (spec.seed is replaced).
// Throws InvalidArgument for an empty window or parameters inconsistent with
// bound_B.
DriftField sample_drift(const DriftSpec& spec, Interval window, std::uint64_t seed,
                        double pitch = DriftField::kDefaultPitch);
DriftField sample_drift(const DriftSpec& spec, Interval window,
                        double pitch = DriftField::kDefaultPitch);

// Trapezoid average of b over sub_window.
double spatial_mean(const DriftField& field, Interval sub_window);

struct ScaleIntegralRow {
    double L = 0.0;
    // log of ∫_0^{L} exp(-2∫_0^y b) dy, and of its mirror ∫_{-L}^0 exp(2∫_y^0 b) dy.
    double log_positive = 0.0;
    double log_negative = 0.0;
};

struct ScaleIntegralReport {
    std::vector<ScaleIntegralRow> rows;
    bool positive_plateau = false;  // last two positive values agree to 1e-3
    bool negative_grows = false;    // every step multiplies the negative value by >= 1.5
};

// Scale-function integrals in both directions from the origin.
ScaleIntegralReport scale_integral_check(const DriftField& field, std::span<const double> L_list);

// JSON drift config: {kind, params, bound_B, seed, window?}.
struct DriftConfig {
    DriftSpec spec;
    std::optional<Interval> window;
};

DriftConfig drift_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DriftSpec& spec);

// CSV columns: x,b. Every `stride`-th node is written.
void write_drift_csv(const DriftField& field, std::ostream& out, std::size_t stride = 1);

}  // namespace driftwave
