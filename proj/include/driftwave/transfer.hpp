#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "driftwave/drift.hpp"

namespace driftwave {

// Transfer matrices for ½u'' + b(x)u' + ηu = 0 acting on the state (u, u').
//
// The propagator M(x, y) maps the state at y to the state at x. Per unit cell
// its determinant is exp(-2∫_y^x b) (Abel), and the Wronskian of the
// fundamental pair u_0(y) = 0, u_0'(y) = 1 and u_1(y) = 1, u_1'(y) = 0 is
// W(x) = M(x, y) W_0 with W_0 = [[0, 1], [1, 0]], so det W(x) = -exp(-2∫b).

inline constexpr double kDefaultStep = 1.0 / 1024.0;

enum class Direction { backward, forward };
std::string_view to_string(Direction d);
Direction parse_direction(std::string_view name);

// Row-major 2x2 matrix [[a, b], [c, d]].
struct Mat2 {
    double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

    static constexpr Mat2 identity() { return {}; }
    double det() const noexcept { return a * d - b * c; }
    double max_abs() const noexcept;
    Mat2 operator*(const Mat2& o) const noexcept {
        return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
    }
};

// Scaled matrix: actual value = exp(log_scale) * entries.
struct TransferMatrix {
    Mat2 entries;
    double log_scale = 0.0;
    double from = 0.0;  // y
    double to = 0.0;    // x
    double eta = 0.0;

    Mat2 value() const;
    double det() const;
};

// Integrates the propagator from the identity at y to x with a fixed-step
// classical RK4, renormalizing every unit length. Throws Divergence carrying
// the position where entries stop being finite.
TransferMatrix propagate_wronskian(const DriftField& field, double y, double x, double eta,
                                   double step = kDefaultStep);

// M(z, y) * M(y, x); both must share eta and the middle point.
TransferMatrix compose(const TransferMatrix& later, const TransferMatrix& earlier);

// Fundamental-solution matrix W(x) = M(x, y) W_0.
Mat2 wronskian(const TransferMatrix& m);

// Unit-cell propagators M(j + 1, j) for one field and one eta, computed on
// first use and cached. Not safe for concurrent use; give each thread its
// own chain.
class CellChain {
public:
    CellChain(const DriftField& field, double eta, double step = kDefaultStep);

    const DriftField& field() const noexcept { return *field_; }
    double eta() const noexcept { return eta_; }
    double step() const noexcept { return step_; }

    // Propagator M(j + 1, j).
    const Mat2& cell(std::int64_t j) const;

    // Range of admissible cell indices within the field window.
    std::int64_t first_cell() const noexcept { return first_; }
    std::int64_t last_cell() const noexcept { return last_; }

private:
    const DriftField* field_;
    double eta_;
    double step_;
    std::int64_t first_;
    std::int64_t last_;
    mutable std::vector<std::optional<Mat2>> cache_;
};

struct TruncationOptions {
    int L0 = 64;           // first truncation length, cells
    int L_max = 1024;      // largest truncation tried, cells
    double rel_tol = 1e-8; // doubling test
};

// Hitting-time MGF of a unit cell: backward is E^W[e^{ηT} 1{T<∞}] for the
// passage k+1 -> k, forward for the passage k -> k+1.
struct CellMgf {
    std::int64_t k = 0;
    double eta = 0.0;
    Direction direction = Direction::backward;
    double value = 0.0;
    int truncation_L = 0;
    bool converged = false;
};

enum class MgfStatus { converged, not_converged, sign_change };

struct MgfEvaluation {
    CellMgf mgf;
    MgfStatus status = MgfStatus::not_converged;
    double blowup_position = 0.0;  // where the solution lost positivity
};

// Dirichlet-truncated MGF with fixed truncation L (cells): the solution of the
// boundary value problem on [k, k+1+L] (backward) or [k-L, k+1] (forward).
// Throws Divergence when the solution is not positive on the interval.
double truncated_cell_mgf(const CellChain& chain, std::int64_t k, Direction direction, int L);

// L-doubling evaluation that reports instead of throwing.
MgfEvaluation evaluate_cell_mgf(const CellChain& chain, std::int64_t k, Direction direction,
                                const TruncationOptions& options = {});

// As evaluate_cell_mgf, but throws Divergence unless the doubling test passes.
CellMgf cell_mgf(const CellChain& chain, std::int64_t k, Direction direction,
                 const TruncationOptions& options = {});
CellMgf cell_mgf(const DriftField& field, std::int64_t k, double eta, Direction direction,
                 const TruncationOptions& options = {}, double step = kDefaultStep);

// Ratio of exponentially weighted exit probabilities of [k, k+2] started at
// k+1: exit through k over exit through k+2. Throws Divergence when either
// boundary value problem loses positivity.
double rho(const CellChain& chain, std::int64_t k);
double rho(const DriftField& field, std::int64_t k, double eta, double step = kDefaultStep);

// |det M(k+1, k) - exp(-2∫_k^{k+1} b)|.
double abel_residual(const DriftField& field, std::int64_t k, double eta, double step = kDefaultStep);

// CSV columns: k,eta,direction,value,L,converged
void write_cell_mgf_csv(std::span<const CellMgf> rows, std::ostream& out);

struct AbelRow {
    std::int64_t k = 0;
    double eta = 0.0;
    double residual = 0.0;
};

// CSV columns: k,eta,residual
void write_abel_csv(std::span<const AbelRow> rows, std::ostream& out);

}  // namespace driftwave
