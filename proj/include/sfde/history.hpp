#pragma once

#include <sfde/errors.hpp>
#include <sfde/measures.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace sfde {

// ---------------------------------------------------------------------------
// Initial path segments.  Segments are closed-form per-component evaluators
// so that refining the grid re-samples the history exactly instead of
// interpolating stored arrays.
// ---------------------------------------------------------------------------

struct ScalarSegment {
    enum class Kind { ExpScaled, Constant, Polynomial };
    Kind kind = Kind::Constant;
    double coeff = 1.0;               // ExpScaled: coeff * e^{rate*u}
    double rate = 1.0;
    double value = 0.0;               // Constant
    std::vector<double> poly;         // Polynomial: poly[0] + poly[1]*u + ...

    double eval(double u) const {
        switch (kind) {
            case Kind::ExpScaled: return coeff * std::exp(rate * u);
            case Kind::Constant: return value;
            case Kind::Polynomial: {
                double acc = 0.0;
                for (auto it = poly.rbegin(); it != poly.rend(); ++it) acc = acc * u + *it;
                return acc;
            }
        }
        return 0.0; // unreachable
    }

    static ScalarSegment exp_scaled(double coeff, double rate) {
        ScalarSegment s;
        s.kind = Kind::ExpScaled;
        s.coeff = coeff;
        s.rate = rate;
        return s;
    }
    static ScalarSegment constant(double v) {
        ScalarSegment s;
        s.kind = Kind::Constant;
        s.value = v;
        return s;
    }
    static ScalarSegment polynomial(std::vector<double> coeffs) {
        ScalarSegment s;
        s.kind = Kind::Polynomial;
        s.poly = std::move(coeffs);
        return s;
    }
};

/// Initial data for the path on u <= 0: one closed-form evaluator per
/// component plus the fading rate of the phase space it lives in.  The
/// claimed Holder exponent is metadata only.
struct InitialSegment {
    std::vector<ScalarSegment> components;
    double fading_rate = 0.2;
    double holder_exponent = 1.0;

    int dim() const { return static_cast<int>(components.size()); }

    Eigen::VectorXd eval(double u) const {
        Eigen::VectorXd x(dim());
        for (int i = 0; i < dim(); ++i) x(i) = components[static_cast<std::size_t>(i)].eval(u);
        return x;
    }
};

// ---------------------------------------------------------------------------
// Delay aggregates: a measure paired with a pointwise transform of the
// path values, covering both plain averages and squared-path integrands.
// ---------------------------------------------------------------------------

enum class Transform { Identity, Square };

inline Eigen::VectorXd apply_transform(Transform t, const Eigen::VectorXd& v) {
    return t == Transform::Identity ? v : v.array().square().matrix();
}

struct DelayAggregateSpec {
    DelayMeasure measure;
    Transform transform = Transform::Identity;
};

// ---------------------------------------------------------------------------
// HistoryWindow: exactly k*k1 + 1 grid samples of the path over the moving
// window [t - k, t], stored in a ring buffer.  Samples at grid times <= 0
// are the initial segment; push() advances the window one grid step.
// ---------------------------------------------------------------------------

class HistoryWindow {
public:
    HistoryWindow(int dim, int k1, int horizon_k)
        : dim_(dim), k1_(k1), horizon_(horizon_k),
          span_(static_cast<Eigen::Index>(horizon_k) * k1),
          buf_(Eigen::MatrixXd::Zero(dim, span_ + 1)) {
        if (dim < 1 || k1 < 1 || horizon_k < 1)
            throw ConfigError("HistoryWindow requires dim, k1, horizon >= 1");
    }

    /// Samples the initial segment at u = -k, ..., -dt, 0 and resets the
    /// newest absolute index to 0.
    void fill(const InitialSegment& xi) {
        if (xi.dim() != dim_) throw ConfigError("initial segment dimension mismatch");
        for (Eigen::Index i = 0; i <= span_; ++i) {
            const double u = -static_cast<double>(span_ - i) * dt();
            buf_.col(i) = xi.eval(i == 0 ? -static_cast<double>(horizon_) : u);
            if (!buf_.col(i).allFinite())
                throw NonFiniteError("initial segment is not finite at u=" + std::to_string(u));
        }
        head_ = span_;
        newest_abs_ = 0;
    }

    int dim() const { return dim_; }
    int k1() const { return k1_; }
    int horizon() const { return horizon_; }
    double dt() const { return 1.0 / static_cast<double>(k1_); }
    Eigen::Index span() const { return span_; }
    long newest_index() const { return newest_abs_; }

    /// Sample at offset h grid steps behind the newest one, h in [-span, 0].
    Eigen::Ref<const Eigen::VectorXd> at_offset(Eigen::Index h) const {
        return buf_.col(col_of(h));
    }

    Eigen::Ref<const Eigen::VectorXd> newest() const { return buf_.col(head_); }
    Eigen::Ref<const Eigen::VectorXd> oldest() const { return buf_.col(col_of(-span_)); }

    void push(const Eigen::VectorXd& x) {
        head_ = (head_ + 1) % (span_ + 1);
        buf_.col(head_) = x;
        ++newest_abs_;
    }

private:
    Eigen::Index col_of(Eigen::Index h) const {
        // h in [-span, 0]; ring index relative to head.
        return (head_ + h + span_ + 1) % (span_ + 1);
    }

    int dim_, k1_, horizon_;
    Eigen::Index span_;
    Eigen::MatrixXd buf_;
    Eigen::Index head_ = 0;
    long newest_abs_ = 0;
};

/// Grid restriction of the fading-memory norm: max over window samples of
/// e^{r*u} |X(t+u)|, u in [-k, 0].  An under-approximation of the continuum
/// supremum by construction.
inline double fading_norm(const HistoryWindow& w, double r) {
    if (!(r > 0.0)) throw ConfigError("fading_norm requires r > 0");
    double best = 0.0;
    for (Eigen::Index h = -w.span(); h <= 0; ++h) {
        const double u = static_cast<double>(h) * w.dt();
        best = std::max(best, std::exp(r * u) * w.at_offset(h).norm());
    }
    return best;
}

/// Discrete delay aggregate: sum over window cells of w_h * T(X(t_{j+h}))
/// for h = -k*k1 .. -1 plus the lumped tail times T of the oldest sample.
/// The newest sample (h = 0) is never read, which keeps the one-step
/// recursion explicit.
inline Eigen::VectorXd aggregate_naive(const HistoryWindow& w, const DiscretizedMeasure& d,
                                       const DelayAggregateSpec& spec) {
    if (d.k1 != w.k1() || d.horizon != w.horizon())
        throw GridMismatchError("discretized measure grid (k1=" + std::to_string(d.k1) + ", k=" +
                                std::to_string(d.horizon) + ") does not match window (k1=" +
                                std::to_string(w.k1()) + ", k=" + std::to_string(w.horizon()) + ")");
    const Eigen::Index span = w.span();
    Eigen::VectorXd acc(w.dim());
    if (spec.transform == Transform::Identity) {
        acc = d.tail * w.at_offset(-span);
        for (Eigen::Index i = 0; i < span; ++i)
            if (d.weights(i) != 0.0) acc.noalias() += d.weights(i) * w.at_offset(-span + i);
    } else {
        acc = d.tail * w.at_offset(-span).array().square().matrix();
        for (Eigen::Index i = 0; i < span; ++i)
            if (d.weights(i) != 0.0)
                acc += d.weights(i) * w.at_offset(-span + i).array().square().matrix();
    }
    return acc;
}

// ---------------------------------------------------------------------------
// O(1) sliding update of the aggregate for exponential-density measures.
// The cell weights form a geometric sequence w_{-i} = (1-q) q^{i-1} with
// q = e^{-a*dt}, so the running sum
//     carry_j = sum_{i=1..span} q^{i-1} T(X(t_{j-i}))
// advances in constant time per push and the aggregate is
//     (1-q) * carry + q^span * T(oldest).
// ---------------------------------------------------------------------------

struct ExpAggregateCarry {
    double q = 0.0;       // e^{-a*dt}
    double q_span = 0.0;  // e^{-a*k}
    Eigen::VectorXd carry;
    long synced_at = 0;   // absolute window index of the last full resync
};

inline ExpAggregateCarry init_exp_carry(const HistoryWindow& w, double rate,
                                        const DelayAggregateSpec& spec) {
    if (spec.measure.kind() != MeasureKind::ExponentialDensity || spec.measure.rate() != rate)
        throw FastPathUnavailableError("fast aggregation requires a pure exponential density");
    ExpAggregateCarry c;
    c.q = std::exp(-rate * w.dt());
    c.q_span = std::exp(-rate * static_cast<double>(w.horizon()));
    c.carry = Eigen::VectorXd::Zero(w.dim());
    // One naive geometric pass, oldest to newest so the recurrence
    // accumulates the same way the incremental updates do.
    for (Eigen::Index h = -w.span(); h <= -1; ++h)
        c.carry = apply_transform(spec.transform, w.at_offset(h)) + c.q * c.carry;
    c.synced_at = w.newest_index();
    return c;
}

/// Aggregate value implied by the carry for the window's current state;
/// equals aggregate_naive up to accumulated round-off.
inline Eigen::VectorXd aggregate_fast_exponential(const HistoryWindow& w,
                                                  const DelayAggregateSpec& spec,
                                                  const ExpAggregateCarry& c) {
    return (1.0 - c.q) * c.carry + c.q_span * apply_transform(spec.transform, w.oldest());
}

/// Advances the carry across a push.  Must be called with the window state
/// *before* push(x_new): it consumes the current newest and oldest samples.
inline void exp_carry_push(ExpAggregateCarry& c, const HistoryWindow& w,
                           const DelayAggregateSpec& spec) {
    c.carry = apply_transform(spec.transform, w.newest()) + c.q * c.carry -
              c.q_span * apply_transform(spec.transform, w.oldest());
}

} // namespace sfde
