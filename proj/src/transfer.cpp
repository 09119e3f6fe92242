#include "driftwave/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "driftwave/error.hpp"

namespace driftwave {

namespace {

struct Vec2 {
    double u = 0.0;
    double du = 0.0;

    void normalize() noexcept {
        double s = std::max(std::abs(u), std::abs(du));
        if (s > 0.0) {
            u /= s;
            du /= s;
        }
    }
};

Vec2 apply(const Mat2& m, Vec2 v) noexcept { return {m.a * v.u + m.b * v.du, m.c * v.u + m.d * v.du}; }

Vec2 apply_inverse(const Mat2& m, Vec2 v) noexcept {
    const double inv_det = 1.0 / m.det();
    return {inv_det * (m.d * v.u - m.b * v.du), inv_det * (-m.c * v.u + m.a * v.du)};
}

// One RK4 step of Y' = A(x) Y, A = [[0, 1], [-2η, -2b(x)]], written as the
// step matrix S with Y <- S Y.
Mat2 rk4_step_matrix(double eta, double b0, double bh, double b1, double h) noexcept {
    // A_i = [[0, 1], [-2η, -2b_i]]
    const Mat2 A0{0.0, 1.0, -2.0 * eta, -2.0 * b0};
    const Mat2 Ah{0.0, 1.0, -2.0 * eta, -2.0 * bh};
    const Mat2 A1{0.0, 1.0, -2.0 * eta, -2.0 * b1};
    const Mat2 I = Mat2::identity();
    auto axpy = [](const Mat2& x, double s, const Mat2& y) {
        return Mat2{x.a + s * y.a, x.b + s * y.b, x.c + s * y.c, x.d + s * y.d};
    };
    Mat2 K1 = A0;
    Mat2 K2 = Ah * axpy(I, 0.5 * h, K1);
    Mat2 K3 = Ah * axpy(I, 0.5 * h, K2);
    Mat2 K4 = A1 * axpy(I, h, K3);
    Mat2 sum{K1.a + 2.0 * K2.a + 2.0 * K3.a + K4.a, K1.b + 2.0 * K2.b + 2.0 * K3.b + K4.b,
             K1.c + 2.0 * K2.c + 2.0 * K3.c + K4.c, K1.d + 2.0 * K2.d + 2.0 * K3.d + K4.d};
    return axpy(I, h / 6.0, sum);
}

bool finite(const Mat2& m) noexcept {
    return std::isfinite(m.a) && std::isfinite(m.b) && std::isfinite(m.c) && std::isfinite(m.d);
}

// Propagates `m` across [y, x] in n equal steps, renormalizing each unit length.
TransferMatrix integrate(const DriftField& field, double y, double x, double eta, double step) {
    TransferMatrix out;
    out.from = y;
    out.to = x;
    out.eta = eta;
    if (x == y) return out;
    const double length = std::abs(x - y);
    const auto n = static_cast<std::int64_t>(std::ceil(length / step - 1e-9));
    const double h = (x - y) / static_cast<double>(n);
    const std::int64_t per_unit = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(1.0 / std::abs(h))));

    Mat2 m = Mat2::identity();
    double log_scale = 0.0;
    double b_prev = field.value_unchecked(y);
    for (std::int64_t i = 0; i < n; ++i) {
        double x0 = y + h * static_cast<double>(i);
        double x1 = (i + 1 == n) ? x : y + h * static_cast<double>(i + 1);
        double bh = field.value_unchecked(0.5 * (x0 + x1));
        double b1 = field.value_unchecked(x1);
        m = rk4_step_matrix(eta, b_prev, bh, b1, x1 - x0) * m;
        b_prev = b1;
        if ((i + 1) % per_unit == 0 || i + 1 == n) {
            if (!finite(m)) {
                throw Divergence(fmt::format("transfer matrix entries not finite near x = {} (eta = {})", x1, eta), x1);
            }
            double s = m.max_abs();
            if (s > 0.0) {
                m = Mat2{m.a / s, m.b / s, m.c / s, m.d / s};
                log_scale += std::log(s);
            }
        }
    }
    out.entries = m;
    out.log_scale = log_scale;
    return out;
}

}  // namespace

std::string_view to_string(Direction d) { return d == Direction::backward ? "backward" : "forward"; }

Direction parse_direction(std::string_view name) {
    if (name == "backward" || name == "bwd") return Direction::backward;
    if (name == "forward" || name == "fwd") return Direction::forward;
    throw InvalidArgument(fmt::format("unknown direction '{}'", name));
}

double Mat2::max_abs() const noexcept {
    return std::max({std::abs(a), std::abs(b), std::abs(c), std::abs(d)});
}

Mat2 TransferMatrix::value() const {
    double s = std::exp(log_scale);
    return {entries.a * s, entries.b * s, entries.c * s, entries.d * s};
}

double TransferMatrix::det() const { return entries.det() * std::exp(2.0 * log_scale); }

TransferMatrix propagate_wronskian(const DriftField& field, double y, double x, double eta, double step) {
    if (!(step > 0.0)) throw InvalidArgument("propagation step must be positive");
    if (!field.window().contains(x) || !field.window().contains(y)) {
        throw OutOfWindow(fmt::format("propagation interval [{}, {}] leaves window [{}, {}]", std::min(x, y),
                                      std::max(x, y), field.window().lo, field.window().hi));
    }
    return integrate(field, y, x, eta, step);
}

TransferMatrix compose(const TransferMatrix& later, const TransferMatrix& earlier) {
    if (later.eta != earlier.eta) throw InvalidArgument("composed transfer matrices differ in eta");
    if (std::abs(later.from - earlier.to) > 1e-12) {
        throw InvalidArgument("composed transfer matrices do not share an endpoint");
    }
    TransferMatrix out;
    out.entries = later.entries * earlier.entries;
    out.log_scale = later.log_scale + earlier.log_scale;
    double s = out.entries.max_abs();
    if (s > 0.0) {
        out.entries = Mat2{out.entries.a / s, out.entries.b / s, out.entries.c / s, out.entries.d / s};
        out.log_scale += std::log(s);
    }
    out.from = earlier.from;
    out.to = later.to;
    out.eta = later.eta;
    return out;
}

Mat2 wronskian(const TransferMatrix& m) {
    constexpr Mat2 W0{0.0, 1.0, 1.0, 0.0};
    return m.value() * W0;
}

CellChain::CellChain(const DriftField& field, double eta, double step)
    : field_(&field), eta_(eta), step_(step) {
    if (!(step > 0.0)) throw InvalidArgument("propagation step must be positive");
    first_ = static_cast<std::int64_t>(std::ceil(field.window().lo));
    last_ = static_cast<std::int64_t>(std::floor(field.window().hi)) - 1;
    if (last_ < first_) throw OutOfWindow("drift window holds no complete unit cell");
    cache_.resize(static_cast<std::size_t>(last_ - first_ + 1));
}

const Mat2& CellChain::cell(std::int64_t j) const {
    if (j < first_ || j > last_) {
        throw OutOfWindow(fmt::format("cell [{}, {}] outside drift window [{}, {}]", j, j + 1,
                                      field_->window().lo, field_->window().hi));
    }
    auto& slot = cache_[static_cast<std::size_t>(j - first_)];
    if (!slot) {
        slot = integrate(*field_, static_cast<double>(j), static_cast<double>(j + 1), eta_, step_).value();
    }
    return *slot;
}

double truncated_cell_mgf(const CellChain& chain, std::int64_t k, Direction direction, int L) {
    if (L < 0) throw InvalidArgument("truncation length must be nonnegative");
    auto lost_positivity = [&](std::int64_t at) {
        return Divergence(fmt::format("boundary value solution not positive at x = {} (k = {}, eta = {}, L = {})", at,
                                      k, chain.eta(), L),
                          static_cast<double>(at));
    };
    if (direction == Direction::backward) {
        // u(k+1+L) = 0, shoot leftward; u > 0 just inside the far end.
        const std::int64_t far = k + 1 + L;
        Vec2 v{0.0, -1.0};
        for (std::int64_t j = far - 1; j >= k + 1; --j) {
            v = apply_inverse(chain.cell(j), v);
            if (!(v.u > 0.0)) throw lost_positivity(j);
            v.normalize();
        }
        const double u1 = v.u;
        const Vec2 v0 = apply_inverse(chain.cell(k), v);
        if (!(v0.u > 0.0)) throw lost_positivity(k);
        return u1 / v0.u;
    }
    // u(k-L) = 0, shoot rightward.
    const std::int64_t far = k - L;
    Vec2 v{0.0, 1.0};
    for (std::int64_t j = far; j <= k - 1; ++j) {
        v = apply(chain.cell(j), v);
        if (!(v.u > 0.0)) throw lost_positivity(j + 1);
        v.normalize();
    }
    const double u0 = v.u;
    const Vec2 v1 = apply(chain.cell(k), v);
    if (!(v1.u > 0.0)) throw lost_positivity(k + 1);
    return u0 / v1.u;
}

MgfEvaluation evaluate_cell_mgf(const CellChain& chain, std::int64_t k, Direction direction,
                                const TruncationOptions& options) {
    if (options.L0 < 1 || options.L_max < 2 * options.L0 || !(options.rel_tol > 0.0)) {
        throw InvalidArgument("truncation options need L0 >= 1, L_max >= 2 L0, rel_tol > 0");
    }
    MgfEvaluation result;
    result.mgf.k = k;
    result.mgf.eta = chain.eta();
    result.mgf.direction = direction;
    try {
        int L = options.L0;
        double value = truncated_cell_mgf(chain, k, direction, L);
        while (2 * L <= options.L_max) {
            double doubled = truncated_cell_mgf(chain, k, direction, 2 * L);
            result.mgf.value = doubled;
            result.mgf.truncation_L = 2 * L;
            if (std::abs(doubled - value) <= options.rel_tol * std::abs(doubled)) {
                result.mgf.converged = true;
                result.status = MgfStatus::converged;
                return result;
            }
            value = doubled;
            L *= 2;
        }
        result.status = MgfStatus::not_converged;
    } catch (const Divergence& e) {
        result.status = MgfStatus::sign_change;
        result.blowup_position = e.position();
    }
    return result;
}

CellMgf cell_mgf(const CellChain& chain, std::int64_t k, Direction direction, const TruncationOptions& options) {
    MgfEvaluation ev = evaluate_cell_mgf(chain, k, direction, options);
    switch (ev.status) {
        case MgfStatus::converged:
            return ev.mgf;
        case MgfStatus::not_converged:
            throw Divergence(fmt::format("{} MGF of cell {} at eta = {} does not settle up to L = {}",
                                         to_string(direction), k, chain.eta(), options.L_max),
                             static_cast<double>(k));
        case MgfStatus::sign_change:
            break;
    }
    throw Divergence(fmt::format("{} MGF of cell {} at eta = {} diverges (solution changes sign near x = {})",
                                 to_string(direction), k, chain.eta(), ev.blowup_position),
                     ev.blowup_position);
}

CellMgf cell_mgf(const DriftField& field, std::int64_t k, double eta, Direction direction,
                 const TruncationOptions& options, double step) {
    CellChain chain(field, eta, step);
    return cell_mgf(chain, k, direction, options);
}

double rho(const CellChain& chain, std::int64_t k) {
    auto fail = [&](std::int64_t at) {
        return Divergence(fmt::format("exit-split problem on [{}, {}] not well posed at eta = {}", k, k + 2,
                                      chain.eta()),
                          static_cast<double>(at));
    };
    // u_L: u(k) = 1, u(k+2) = 0.
    Vec2 v{0.0, -1.0};
    v = apply_inverse(chain.cell(k + 1), v);
    const double left_mid = v.u;
    const Vec2 v0 = apply_inverse(chain.cell(k), v);
    if (!(left_mid > 0.0) || !(v0.u > 0.0)) throw fail(k + 1);
    // u_R: u(k) = 0, u(k+2) = 1.
    Vec2 w{0.0, 1.0};
    w = apply(chain.cell(k), w);
    const double right_mid = w.u;
    const Vec2 w2 = apply(chain.cell(k + 1), w);
    if (!(right_mid > 0.0) || !(w2.u > 0.0)) throw fail(k + 1);
    return (left_mid / v0.u) / (right_mid / w2.u);
}

double rho(const DriftField& field, std::int64_t k, double eta, double step) {
    CellChain chain(field, eta, step);
    return rho(chain, k);
}

double abel_residual(const DriftField& field, std::int64_t k, double eta, double step) {
    const double y = static_cast<double>(k);
    TransferMatrix m = propagate_wronskian(field, y, y + 1.0, eta, step);
    return std::abs(m.det() - std::exp(-2.0 * field.integral(y, y + 1.0)));
}

void write_cell_mgf_csv(std::span<const CellMgf> rows, std::ostream& out) {
    out << "k,eta,direction,value,L,converged\n";
    for (const auto& r : rows) {
        out << fmt::format("{},{:.17g},{},{:.17g},{},{}\n", r.k, r.eta, to_string(r.direction), r.value,
                           r.truncation_L, r.converged ? 1 : 0);
    }
}

void write_abel_csv(std::span<const AbelRow> rows, std::ostream& out) {
    out << "k,eta,residual\n";
    for (const auto& r : rows) out << fmt::format("{},{:.17g},{:.17g}\n", r.k, r.eta, r.residual);
}

}  // namespace driftwave
