#include "driftwave/pdefront.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include <fmt/format.h>

#include "driftwave/error.hpp"

namespace driftwave {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kFlush = 1e-300;

// Van Leer limited face weight: with a the upwind slope and b the slope
// across the face, the face value is u_up + s (u_down - u_up), s in [0, 1].
inline double face_weight(double a, double b) noexcept { return a * b > 0.0 ? a / (a + b) : 0.0; }

void check_dx(double dx, double beta) {
    const double limit = std::min(0.02, 1.0 / (4.0 * std::sqrt(2.0 * beta)));
    if (!(dx > 0.0) || dx > limit * (1.0 + 1e-12)) {
        throw InvalidArgument(fmt::format("dx = {} does not resolve the front; need 0 < dx <= {}", dx, limit));
    }
}

Interval snap(Interval d, double dx) { return {std::floor(d.lo / dx) * dx, std::ceil(d.hi / dx) * dx}; }

struct Attempt {
    FrontRun run;
    bool left_edge = false;
    bool right_edge = false;
};

Attempt attempt(const DriftField& field, const Reaction& reaction, const InitialData& u0, double T_end,
                const PdeNumerics& num, Interval domain, double dt, long n_sub) {
    if (!field.window().contains(domain)) {
        throw OutOfWindow(fmt::format("PDE domain [{}, {}] exceeds the drift window [{}, {}]", domain.lo, domain.hi,
                                      field.window().lo, field.window().hi));
    }
    Attempt out;
    FrontRun& run = out.run;
    run.domain = domain;
    run.dx = num.dx;
    run.dt = dt;
    run.T_end = T_end;
    for (double level : num.levels) run.traces.push_back(FrontTrace{.level = level});

    PdeState state = init(domain, num.dx, u0);
    Stepper stepper(field, reaction, state);
    const auto stride = static_cast<std::size_t>(std::max(1L, std::lround(num.history_pitch / num.dx)));
    run.history.x_lo = state.x_lo;
    run.history.pitch = num.dx * static_cast<double>(stride);

    std::vector<double> pending = num.snapshot_times;
    std::sort(pending.begin(), pending.end());
    auto record = [&] {
        for (auto& tr : run.traces) {
            auto pos = front_positions(state, tr.level);
            tr.times.push_back(state.t);
            tr.left.push_back(pos ? pos->first : kNaN);
            tr.right.push_back(pos ? pos->second : kNaN);
        }
        std::vector<double> row;
        row.reserve(state.u.size() / stride + 1);
        for (std::size_t i = 0; i < state.u.size(); i += stride) row.push_back(state.u[i]);
        run.history.times.push_back(state.t);
        run.history.rows.push_back(std::move(row));
        while (!pending.empty() && pending.front() <= state.t + 0.5 * dt) {
            run.snapshots.push_back({state.t, state});
            pending.erase(pending.begin());
        }
    };

    record();
    const long outputs = std::lround(T_end / num.output_interval);
    long steps = 0;
    for (long k = 0; k < outputs; ++k) {
        for (long j = 0; j < n_sub; ++j, ++steps) {
            if (steps < num.rannacher_steps) {
                const double t0 = state.t;
                stepper.step(state, 0.5 * dt, true);
                stepper.step(state, 0.5 * dt, true);
                state.t = t0 + dt;
            } else {
                const double t0 = state.t;
                stepper.step(state, dt);
                state.t = t0 + dt;
            }
            if (stepper.max_bound_violation() > num.bound_tol) {
                throw Error(fmt::format("solution left [0, 1] by {} at t = {}; reduce dt",
                                        stepper.max_bound_violation(), state.t));
            }
            out.left_edge = state.u.front() > num.edge_tol;
            out.right_edge = state.u.back() > num.edge_tol;
            if (out.left_edge || out.right_edge) return out;
        }
        // Avoid drift of t from repeated summation.
        state.t = static_cast<double>(k + 1) * num.output_interval;
        record();
    }
    for (auto& tr : run.traces) {
        tr.left_fit = fit_speed(tr.times, tr.left, 0.5 * T_end, T_end);
        tr.right_fit = fit_speed(tr.times, tr.right, 0.5 * T_end, T_end);
    }
    run.max_bound_violation = stepper.max_bound_violation();
    run.final_max = *std::max_element(state.u.begin(), state.u.end());
    return out;
}

}  // namespace

std::string_view to_string(Profile p) { return p == Profile::plateau ? "plateau" : "cosine"; }

Profile parse_profile(std::string_view name) {
    if (name == "plateau") return Profile::plateau;
    if (name == "cosine") return Profile::cosine;
    throw InvalidArgument(fmt::format("unknown profile '{}' (expected plateau or cosine)", name));
}

PdeState init(Interval domain, double dx, const InitialData& u0) {
    if (!(u0.amplitude >= 0.0 && u0.amplitude <= 1.0)) {
        throw InvalidArgument(fmt::format("amplitude {} outside [0, 1]", u0.amplitude));
    }
    if (!(u0.delta > 0.0)) throw InvalidArgument("support half-width delta must be positive");
    if (!(dx > 0.0)) throw InvalidArgument("dx must be positive");
    if (!(domain.lo < -u0.delta && u0.delta < domain.hi)) {
        throw OutOfWindow(fmt::format("initial support (-{0}, {0}) exceeds the domain [{1}, {2}]", u0.delta,
                                      domain.lo, domain.hi));
    }
    PdeState s;
    s.x_lo = domain.lo;
    s.dx = dx;
    const auto n = static_cast<std::size_t>(std::lround((domain.hi - domain.lo) / dx)) + 1;
    s.u.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = s.x(i);
        if (std::abs(x) >= u0.delta) continue;
        s.u[i] = u0.profile == Profile::plateau
                     ? u0.amplitude
                     : u0.amplitude * 0.5 * (1.0 + std::cos(std::numbers::pi * x / u0.delta));
    }
    return s;
}

Reaction Reaction::logistic(double beta) { return Reaction{beta, {}}; }

void Reaction::validate() const {
    if (!(beta > 0.0)) throw InvalidArgument(fmt::format("reaction rate beta must be positive, got {}", beta));
    if (!f) return;
    if (f(0.0) != 0.0 || std::abs(f(1.0)) > 1e-14) throw InvalidArgument("reaction needs f(0) = f(1) = 0");
    for (int i = 0; i <= 1000; ++i) {
        const double u = i / 1000.0;
        const double v = f(u);
        if (v < -1e-14 || v > beta * u * (1.0 + 1e-12) + 1e-14) {
            throw InvalidArgument(fmt::format("reaction violates 0 <= f(u) <= beta u at u = {} (f = {})", u, v));
        }
    }
}

void react(std::span<double> u, const Reaction& r, double dt) {
    if (!r.f) {
        const double e = std::exp(r.beta * dt);
        for (double& v : u) {
            if (v != 1.0) v = v * e / (1.0 + v * (e - 1.0));
        }
        return;
    }
    const int n = std::max(1, static_cast<int>(std::ceil(r.beta * dt / 0.05)));
    const double h = dt / n;
    for (double& v : u) {
        if (v == 0.0 || v == 1.0) continue;
        for (int i = 0; i < n; ++i) {
            const double k1 = r.f(v);
            const double k2 = r.f(v + 0.5 * h * k1);
            const double k3 = r.f(v + 0.5 * h * k2);
            const double k4 = r.f(v + h * k3);
            v = std::clamp(v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), 0.0, 1.0);
        }
    }
}

Stepper::Stepper(const DriftField& field, Reaction reaction, const PdeState& layout)
    : reaction_(std::move(reaction)), dx_(layout.dx), max_abs_b_(0.0) {
    reaction_.validate();
    const std::size_t n = layout.u.size();
    if (n < 3) throw InvalidArgument("PDE grid needs at least three nodes");
    b_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        b_[i] = field(layout.x(i));
        max_abs_b_ = std::max(max_abs_b_, std::abs(b_[i]));
    }
    rhs_.resize(n);
    sup_.resize(n);
}

void Stepper::transport(std::vector<double>& u, double dt, double theta) {
    const std::size_t n = u.size();
    const double D = 0.5 / (dx_ * dx_);
    const double inv_dx = 1.0 / dx_;
    const double c = theta * dt;
    // d(k) = u[k+1] - u[k], zero beyond the edges (zero-flux ghosts).
    scratch_.assign(n + 3, 0.0);
    for (std::size_t k = 0; k + 1 < n; ++k) scratch_[k + 2] = u[k + 1] - u[k];
    auto d = [&](std::size_t k) { return scratch_[k + 2]; };

    // Forward sweep of the Thomas algorithm for (I - θ dt L) δ = dt L u, with
    // L u = P d(k) - Q d(k-1); sup_ holds the scaled super-diagonal.
    double prev_sup = 0.0, prev_rhs = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dp = d(k), dm = d(k - 1);
        double w_plus, w_minus;
        if (b_[k] >= 0.0) {
            // information arrives from the right
            w_plus = 1.0 - face_weight(d(k + 1), dp);
            w_minus = face_weight(dp, dm);
        } else {
            w_plus = face_weight(dm, dp);
            w_minus = 1.0 - face_weight(d(k - 2), dm);
        }
        const double P = k + 1 < n ? D + b_[k] * w_plus * inv_dx : 0.0;
        const double Q = k > 0 ? D - b_[k] * w_minus * inv_dx : 0.0;
        const double sub = -c * Q;
        const double pivot = 1.0 + c * (P + Q) - sub * prev_sup;
        if (!(pivot > 0.0) || !std::isfinite(pivot)) {
            throw Error(fmt::format("tridiagonal solve broke down at node {} (pivot {})", k, pivot));
        }
        prev_sup = sup_[k] = -c * P / pivot;
        prev_rhs = rhs_[k] = (dt * (P * dp - Q * dm) - sub * prev_rhs) / pivot;
    }
    for (std::size_t k = n - 1; k-- > 0;) rhs_[k] -= sup_[k] * rhs_[k + 1];

    for (std::size_t k = 0; k < n; ++k) {
        double v = u[k] + rhs_[k];
        if (v < 0.0) {
            max_violation_ = std::max(max_violation_, -v);
            v = 0.0;
        } else if (v > 1.0) {
            max_violation_ = std::max(max_violation_, v - 1.0);
            v = 1.0;
        }
        u[k] = v < kFlush ? 0.0 : v;
    }
}

void Stepper::step(PdeState& state, double dt, bool implicit_euler) {
    if (state.u.size() != b_.size()) throw InvalidArgument("state does not match the stepper grid");
    if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
    if (max_abs_b_ > 0.0 && dt > dx_ / max_abs_b_ * (1.0 + 1e-12)) {
        throw InvalidArgument(fmt::format("dt = {} violates the advection CFL bound dx / max|b| = {}", dt,
                                          dx_ / max_abs_b_));
    }
    react(state.u, reaction_, 0.5 * dt);
    transport(state.u, dt, implicit_euler ? 1.0 : 0.5);
    react(state.u, reaction_, 0.5 * dt);
    state.t += dt;
}

void step(PdeState& state, const DriftField& field, const Reaction& reaction, double dt) {
    Stepper stepper(field, reaction, state);
    stepper.step(state, dt);
}

double History::x_hi() const noexcept {
    return rows.empty() ? x_lo : x_lo + pitch * static_cast<double>(rows.front().size() - 1);
}

double History::at(std::size_t row, double x) const {
    const auto& r = rows.at(row);
    const double s = (x - x_lo) / pitch;
    if (s < 0.0 || s > static_cast<double>(r.size() - 1)) {
        throw OutOfWindow(fmt::format("x = {} outside the stored domain [{}, {}]", x, x_lo, x_hi()));
    }
    const auto i = std::min(static_cast<std::size_t>(s), r.size() - 2);
    const double w = s - static_cast<double>(i);
    return (1.0 - w) * r[i] + w * r[i + 1];
}

const FrontTrace& FrontRun::trace(double level) const {
    for (const auto& t : traces) {
        if (t.level == level) return t;
    }
    throw InvalidArgument(fmt::format("no trace recorded at level {}", level));
}

SpeedGuess default_guess(const DriftField& field, double beta) {
    const double c = std::sqrt(2.0 * beta) + field.max_abs();
    return {c, c};
}

std::optional<std::pair<double, double>> front_positions(const PdeState& s, double level) {
    const auto& u = s.u;
    auto first = std::find_if(u.begin(), u.end(), [&](double v) { return v >= level; });
    if (first == u.end()) return std::nullopt;
    auto last = std::find_if(u.rbegin(), u.rend(), [&](double v) { return v >= level; });
    const auto i = static_cast<std::size_t>(first - u.begin());
    const auto j = static_cast<std::size_t>(u.rend() - last) - 1;
    double left = s.x(i), right = s.x(j);
    if (i > 0) left = s.x(i - 1) + s.dx * (level - u[i - 1]) / (u[i] - u[i - 1]);
    if (j + 1 < u.size()) right = s.x(j) + s.dx * (u[j] - level) / (u[j] - u[j + 1]);
    return std::pair{left, right};
}

SpeedFit fit_speed(std::span<const double> times, std::span<const double> positions, double t_from, double t_to) {
    double st = 0.0, sx = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < t_from || times[i] > t_to || std::isnan(positions[i])) continue;
        st += times[i];
        sx += positions[i];
        ++n;
    }
    SpeedFit fit;
    fit.points = n;
    if (n < 3) {
        fit.speed = fit.half_width = kNaN;
        return fit;
    }
    const double tm = st / n, xm = sx / n;
    double stt = 0.0, stx = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < t_from || times[i] > t_to || std::isnan(positions[i])) continue;
        stt += (times[i] - tm) * (times[i] - tm);
        stx += (times[i] - tm) * (positions[i] - xm);
    }
    fit.speed = stx / stt;
    double ssr = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < t_from || times[i] > t_to || std::isnan(positions[i])) continue;
        const double r = positions[i] - xm - fit.speed * (times[i] - tm);
        ssr += r * r;
    }
    fit.half_width = 1.96 * std::sqrt(ssr / static_cast<double>(n - 2) / stt);
    return fit;
}

FrontRun run_front(const DriftField& field, const Reaction& reaction, const InitialData& u0, double T_end,
                   const PdeNumerics& num, std::optional<SpeedGuess> guess) {
    reaction.validate();
    check_dx(num.dx, reaction.beta);
    if (!(T_end > 0.0)) throw InvalidArgument("T_end must be positive");
    if (!(num.output_interval > 0.0) || num.output_interval > T_end) {
        throw InvalidArgument("output interval must lie in (0, T_end]");
    }
    const SpeedGuess g = guess.value_or(default_guess(field, reaction.beta));
    Interval domain = snap({-(g.c1 + 2.0) * T_end, (std::max(g.c2, 0.0) + 2.0) * T_end}, num.dx);

    double dt = num.dt_max;
    if (field.max_abs() > 0.0) dt = std::min(dt, num.dx / field.max_abs());
    const long n_sub = std::max(1L, static_cast<long>(std::ceil(num.output_interval / dt - 1e-9)));
    dt = num.output_interval / static_cast<double>(n_sub);

    for (int expansions = 0;; ++expansions) {
        Attempt a = attempt(field, reaction, u0, T_end, num, domain, dt, n_sub);
        if (!a.left_edge && !a.right_edge) {
            a.run.expansions = expansions;
            return std::move(a.run);
        }
        if (expansions == 1) {
            throw Error(fmt::format("front reached the edge of the expanded domain [{}, {}]", domain.lo, domain.hi));
        }
        if (a.left_edge) domain.lo *= 2.0;
        if (a.right_edge) domain.hi *= 2.0;
        domain = snap(domain, num.dx);
    }
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::to_zero:
            return "to_zero";
        case Verdict::to_one:
            return "to_one";
        case Verdict::undecided:
            break;
    }
    return "undecided";
}

std::vector<RayProbe> ray_probe(const History& h, std::span<const double> c_list) {
    if (h.times.empty()) throw InvalidArgument("empty history");
    const double T = h.times.back();
    std::vector<RayProbe> out;
    for (double c : c_list) {
        if (c * T < h.x_lo || c * T > h.x_hi()) {
            throw OutOfWindow(fmt::format("ray c = {} leaves the simulated domain [{}, {}] by t = {}", c, h.x_lo,
                                          h.x_hi(), T));
        }
        RayProbe p;
        p.c = c;
        double sum = 0.0;
        int n = 0;
        for (std::size_t k = 0; k < h.times.size(); ++k) {
            const double v = h.at(k, c * h.times[k]);
            p.times.push_back(h.times[k]);
            p.u.push_back(v);
            if (h.times[k] >= 0.75 * T) {
                sum += v;
                ++n;
            }
        }
        p.final_mean = sum / n;
        p.verdict = p.final_mean < 0.05 ? Verdict::to_zero : p.final_mean > 0.95 ? Verdict::to_one : Verdict::undecided;
        out.push_back(std::move(p));
    }
    return out;
}

void write_trace_csv(const FrontTrace& tr, std::ostream& out) {
    out << "t,left,right\n";
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        out << fmt::format("{:.17g},{:.17g},{:.17g}\n", tr.times[i], tr.left[i], tr.right[i]);
    }
}

void write_rays_csv(std::span<const RayProbe> rays, std::ostream& out) {
    out << "t,c,u\n";
    for (const auto& r : rays) {
        for (std::size_t i = 0; i < r.times.size(); ++i) {
            out << fmt::format("{:.17g},{:.17g},{:.17g}\n", r.times[i], r.c, r.u[i]);
        }
    }
}

void write_snapshot_csv(const PdeState& s, std::ostream& out, std::size_t stride) {
    out << "x,u\n";
    for (std::size_t i = 0; i < s.u.size(); i += std::max<std::size_t>(1, stride)) {
        out << fmt::format("{:.17g},{:.17g}\n", s.x(i), s.u[i]);
    }
}

}  // namespace driftwave
