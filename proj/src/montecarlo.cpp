#include "driftwave/montecarlo.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <ostream>

#include <boost/random/normal_distribution.hpp>
#include <fmt/format.h>

#include "driftwave/error.hpp"
#include "driftwave/rng.hpp"

namespace driftwave {

namespace {

constexpr double kMaxExponent = 700.0;

// One Euler-Maruyama walker; `advance` consumes one Gaussian increment.
class Walker {
public:
    Walker(const DriftField& field, double x0, double lower, double upper, double dt, double M)
        : field_(field), x_(x0), lower_(lower), upper_(upper), dt_(dt), sqrt_dt_(std::sqrt(dt)), M_(M),
          check_window_(!std::isfinite(lower) || !std::isfinite(upper)) {
        sample_.truncation_M = M;
    }

    bool done() const noexcept { return done_; }
    const HittingSample& sample() const noexcept { return sample_; }

    void advance(double z) {
        const double x_old = x_;
        const double t_old = t_;
        x_ = x_old + field_.value_unchecked(x_old) * dt_ + sqrt_dt_ * z;
        t_ = t_old + dt_;
        if (x_ <= lower_) {
            finish(ExitSide::lower, t_old + dt_ * (x_old - lower_) / (x_old - x_));
        } else if (x_ >= upper_) {
            finish(ExitSide::upper, t_old + dt_ * (upper_ - x_old) / (x_ - x_old));
        } else if (t_ >= M_) {
            done_ = true;
        } else if (check_window_ && !field_.window().contains(x_)) {
            throw OutOfWindow(fmt::format("path left the drift window at x = {} before exiting; widen the window",
                                          x_));
        }
    }

private:
    void finish(ExitSide side, double tau) {
        done_ = true;
        if (tau < M_) {
            sample_.tau = tau;
            sample_.exit_side = side;
        }
    }

    const DriftField& field_;
    double x_;
    double t_ = 0.0;
    double lower_, upper_;
    double dt_, sqrt_dt_, M_;
    bool check_window_;
    bool done_ = false;
    HittingSample sample_;
};

struct Passage {
    double x0, lower, upper;
    ExitSide target;
};

Passage passage_for(const DriftField& field, const McQuery& q) {
    const double inf = std::numeric_limits<double>::infinity();
    const double k = static_cast<double>(q.k);
    Passage p{};
    if (q.direction == Direction::backward) {
        p = {k + 1.0, k, q.truncation_L < 0 ? inf : k + 1.0 + q.truncation_L, ExitSide::lower};
    } else {
        p = {k, q.truncation_L < 0 ? -inf : k - q.truncation_L, k + 1.0, ExitSide::upper};
    }
    const Interval w = field.window();
    if (!w.contains(p.x0) || (std::isfinite(p.lower) && !w.contains(p.lower)) ||
        (std::isfinite(p.upper) && !w.contains(p.upper))) {
        throw OutOfWindow(fmt::format("passage for cell {} leaves drift window [{}, {}]", q.k, w.lo, w.hi));
    }
    return p;
}

void validate(const McQuery& q, const McOptions& o) {
    if (o.n < 1000) throw InvalidArgument("Monte Carlo needs at least 1000 samples");
    if (!(o.dt > 0.0) || !(o.M > 0.0)) throw InvalidArgument("dt and M must be positive");
    if (q.eta * o.M > kMaxExponent) {
        throw InvalidArgument(fmt::format(
            "eta * M = {} overflows the exponential weight; use a smaller M or eta", q.eta * o.M));
    }
}

std::uint64_t query_stream(const McQuery& q) {
    std::uint64_t h = rng::splitmix64(static_cast<std::uint64_t>(q.k));
    h = rng::splitmix64(h ^ std::bit_cast<std::uint64_t>(q.eta));
    h = rng::splitmix64(h ^ (q.direction == Direction::backward ? 0x1ULL : 0x2ULL));
    return rng::splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(q.truncation_L)));
}

double weight(const HittingSample& s, ExitSide target, double eta) {
    return s.exit_side == target ? std::exp(eta * s.tau) : 0.0;
}

// Running mean and variance.
struct Moments {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) noexcept {
        ++n;
        double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double std_error() const noexcept {
        return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    }
};

McEstimate make_estimate(const Moments& m, std::size_t censored, double dt, const McQuery& q, const McOptions& o) {
    McEstimate e;
    e.mean = m.mean;
    e.std_error = m.std_error();
    e.n = m.n;
    e.dt = dt;
    e.M = o.M;
    e.seed = o.seed;
    e.censored_fraction = static_cast<double>(censored) / static_cast<double>(m.n);
    e.query = q;
    return e;
}

}  // namespace

HittingSample simulate_exit(const DriftField& field, double x0, double lower, double upper, double dt, double M,
                            rng::SplitMixEngine& engine) {
    if (!(lower < x0 && x0 < upper)) throw InvalidArgument("simulate_exit needs lower < x0 < upper");
    if (!(dt > 0.0) || !(M > 0.0)) throw InvalidArgument("dt and M must be positive");
    const Interval w = field.window();
    if (!w.contains(x0) || (std::isfinite(lower) && !w.contains(lower)) || (std::isfinite(upper) && !w.contains(upper))) {
        throw OutOfWindow("exit interval leaves the drift window");
    }
    boost::random::normal_distribution<double> normal;
    Walker walker(field, x0, lower, upper, dt, M);
    while (!walker.done()) walker.advance(normal(engine));
    return walker.sample();
}

McEstimate mc_cell_mgf(const DriftField& field, const McQuery& query, const McOptions& options) {
    validate(query, options);
    const Passage p = passage_for(field, query);
    const std::uint64_t stream = query_stream(query);
    boost::random::normal_distribution<double> normal;
    Moments moments;
    std::size_t censored = 0;
    for (std::size_t i = 0; i < options.n; ++i) {
        auto engine = rng::stream_engine(options.seed, stream, i);
        Walker walker(field, p.x0, p.lower, p.upper, options.dt, options.M);
        while (!walker.done()) walker.advance(normal(engine));
        if (walker.sample().exit_side == ExitSide::censored) ++censored;
        moments.add(weight(walker.sample(), p.target, query.eta));
    }
    return make_estimate(moments, censored, options.dt, query, options);
}

DtHalvingCheck mc_dt_halving(const DriftField& field, const McQuery& query, const McOptions& options) {
    validate(query, options);
    const Passage p = passage_for(field, query);
    const std::uint64_t stream = query_stream(query);
    boost::random::normal_distribution<double> normal;
    const double dt = options.dt;
    Moments fine, coarse, diff;
    std::size_t fine_censored = 0, coarse_censored = 0;
    for (std::size_t i = 0; i < options.n; ++i) {
        auto engine = rng::stream_engine(options.seed, stream, i);
        Walker f(field, p.x0, p.lower, p.upper, dt, options.M);
        Walker c(field, p.x0, p.lower, p.upper, 2.0 * dt, options.M);
        while (!f.done() || !c.done()) {
            double z1 = normal(engine);
            double z2 = normal(engine);
            if (!f.done()) f.advance(z1);
            if (!f.done()) f.advance(z2);
            if (!c.done()) c.advance((z1 + z2) * std::numbers::sqrt2 / 2.0);
        }
        double wf = weight(f.sample(), p.target, query.eta);
        double wc = weight(c.sample(), p.target, query.eta);
        fine.add(wf);
        coarse.add(wc);
        diff.add(wf - wc);
        if (f.sample().exit_side == ExitSide::censored) ++fine_censored;
        if (c.sample().exit_side == ExitSide::censored) ++coarse_censored;
    }
    DtHalvingCheck check;
    check.fine = make_estimate(fine, fine_censored, dt, query, options);
    check.coarse = make_estimate(coarse, coarse_censored, 2.0 * dt, query, options);
    check.difference = diff.mean;
    check.difference_stderr = diff.std_error();
    check.bias_allowance = (std::abs(diff.mean) + diff.std_error()) / (std::numbers::sqrt2 - 1.0);
    check.passed = std::abs(check.difference) < 2.0 * check.fine.std_error;
    return check;
}

void write_mc_csv(std::span<const McEstimate> rows, std::ostream& out) {
    out << "k,eta,direction,mean,stderr,n,dt,M,seed\n";
    for (const auto& r : rows) {
        out << fmt::format("{},{:.17g},{},{:.17g},{:.17g},{},{:.17g},{:.17g},{}\n", r.query.k, r.query.eta,
                           to_string(r.query.direction), r.mean, r.std_error, r.n, r.dt, r.M, r.seed);
    }
}

}  // namespace driftwave
