#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <memory>
#include <span>
#include <utility>

#include "nohd/errors.hpp"
#include "nohd/matrix.hpp"

namespace nohd {

/// Second-order forward-mode number: value, gradient against k active
/// directions, and the full k×k Hessian.
///
/// Null gradient/Hessian buffers stand for exact zeros, so constants and
/// affine combinations of seeds never touch k² storage. The Hessian of any
/// result is symmetric by construction: every rule below writes entry (i,j)
/// and (j,i) from commuted sums of identical products.
class Dual2 {
  public:
    Dual2() = default;

    static Dual2 constant(double value, std::size_t dims) {
        Dual2 d;
        d.value_ = value;
        d.dims_ = dims;
        return d;
    }

    /// Active variable for direction `index`.
    static Dual2 seed(double value, std::size_t dims, std::size_t index) {
        Dual2 d = constant(value, dims);
        d.ensure_grad();
        d.grad_[index] = 1.0;
        return d;
    }

    Dual2(const Dual2& o) : value_(o.value_), dims_(o.dims_) {
        if (o.grad_) {
            ensure_grad_raw();
            std::memcpy(grad_.get(), o.grad_.get(), dims_ * sizeof(double));
        }
        if (o.hess_) {
            ensure_hess_raw();
            std::memcpy(hess_.get(), o.hess_.get(), dims_ * dims_ * sizeof(double));
        }
    }
    Dual2(Dual2&&) noexcept = default;
    Dual2& operator=(const Dual2& o) {
        if (this != &o) *this = Dual2(o);
        return *this;
    }
    Dual2& operator=(Dual2&&) noexcept = default;

    double value() const { return value_; }
    std::size_t dims() const { return dims_; }
    double grad(std::size_t i) const { return grad_ ? grad_[i] : 0.0; }
    double hess(std::size_t i, std::size_t j) const {
        return hess_ ? hess_[i * dims_ + j] : 0.0;
    }

    Dual2 operator-() const {
        Dual2 r(*this);
        r.value_ = -r.value_;
        if (r.grad_)
            for (std::size_t i = 0; i < dims_; ++i) r.grad_[i] = -r.grad_[i];
        if (r.hess_)
            for (std::size_t k = 0; k < dims_ * dims_; ++k) r.hess_[k] = -r.hess_[k];
        return r;
    }

    Dual2& operator+=(const Dual2& o) {
        check_dims(o);
        value_ += o.value_;
        if (o.grad_) {
            ensure_grad();
            for (std::size_t i = 0; i < dims_; ++i) grad_[i] += o.grad_[i];
        }
        if (o.hess_) {
            ensure_hess();
            for (std::size_t k = 0; k < dims_ * dims_; ++k) hess_[k] += o.hess_[k];
        }
        return *this;
    }
    Dual2& operator-=(const Dual2& o) {
        check_dims(o);
        value_ -= o.value_;
        if (o.grad_) {
            ensure_grad();
            for (std::size_t i = 0; i < dims_; ++i) grad_[i] -= o.grad_[i];
        }
        if (o.hess_) {
            ensure_hess();
            for (std::size_t k = 0; k < dims_ * dims_; ++k) hess_[k] -= o.hess_[k];
        }
        return *this;
    }
    Dual2& operator+=(double c) {
        value_ += c;
        return *this;
    }
    Dual2& operator-=(double c) {
        value_ -= c;
        return *this;
    }
    Dual2& operator*=(double c) {
        value_ *= c;
        if (grad_)
            for (std::size_t i = 0; i < dims_; ++i) grad_[i] *= c;
        if (hess_)
            for (std::size_t k = 0; k < dims_ * dims_; ++k) hess_[k] *= c;
        return *this;
    }
    Dual2& operator/=(double c) { return *this *= 1.0 / c; }

    friend Dual2 operator+(Dual2 a, const Dual2& b) { return a += b; }
    friend Dual2 operator-(Dual2 a, const Dual2& b) { return a -= b; }
    friend Dual2 operator+(Dual2 a, double c) { return a += c; }
    friend Dual2 operator+(double c, Dual2 a) { return a += c; }
    friend Dual2 operator-(Dual2 a, double c) { return a -= c; }
    friend Dual2 operator-(double c, const Dual2& a) { return -a + c; }
    friend Dual2 operator*(Dual2 a, double c) { return a *= c; }
    friend Dual2 operator*(double c, Dual2 a) { return a *= c; }
    friend Dual2 operator/(Dual2 a, double c) { return a /= c; }
    friend Dual2 operator/(double c, const Dual2& a) { return reciprocal(a) * c; }

    // Product rule: (uw)'' = u w'' + w u'' + u' w'ᵀ + w' u'ᵀ.
    friend Dual2 operator*(const Dual2& u, const Dual2& w) {
        u.check_dims(w);
        const std::size_t n = u.dims_;
        Dual2 r = constant(u.value_ * w.value_, n);
        if (u.grad_ || w.grad_) {
            r.ensure_grad_raw();
            for (std::size_t i = 0; i < n; ++i)
                r.grad_[i] = u.value_ * w.grad(i) + w.value_ * u.grad(i);
        }
        if (u.grad_ || w.grad_ || u.hess_ || w.hess_) {
            r.ensure_hess_raw();
            for (std::size_t i = 0; i < n; ++i) {
                const double ugi = u.grad(i);
                const double wgi = w.grad(i);
                double* out = r.hess_.get() + i * n;
                const double* uh = u.hess_ ? u.hess_.get() + i * n : nullptr;
                const double* wh = w.hess_ ? w.hess_.get() + i * n : nullptr;
                for (std::size_t j = 0; j < n; ++j) {
                    double acc = ugi * w.grad(j) + wgi * u.grad(j);
                    if (uh) acc += w.value_ * uh[j];
                    if (wh) acc += u.value_ * wh[j];
                    out[j] = acc;
                }
            }
        }
        return r;
    }

    friend Dual2 operator/(const Dual2& u, const Dual2& w) { return u * reciprocal(w); }

    friend Dual2 reciprocal(const Dual2& u) {
        const double inv = 1.0 / u.value_;
        return chain(u, inv, -inv * inv, 2.0 * inv * inv * inv);
    }

    friend Dual2 exp(const Dual2& u) {
        const double e = std::exp(u.value_);
        return chain(u, e, e, e);
    }

    friend Dual2 log(const Dual2& u) {
        if (!(u.value_ > 0.0)) throw DomainError("log of a non-positive value");
        const double inv = 1.0 / u.value_;
        return chain(u, std::log(u.value_), inv, -inv * inv);
    }

    friend Dual2 tanh(const Dual2& u) {
        const double t = std::tanh(u.value_);
        const double sech2 = 1.0 - t * t;
        return chain(u, t, sech2, -2.0 * t * sech2);
    }

  private:
    // f(u): result'' = f'(u) u'' + f''(u) u' u'ᵀ.
    static Dual2 chain(const Dual2& u, double f, double df, double ddf) {
        const std::size_t n = u.dims_;
        Dual2 r = constant(f, n);
        if (u.grad_) {
            r.ensure_grad_raw();
            for (std::size_t i = 0; i < n; ++i) r.grad_[i] = df * u.grad_[i];
        }
        if (u.grad_ || u.hess_) {
            r.ensure_hess_raw();
            for (std::size_t i = 0; i < n; ++i) {
                const double gi = u.grad(i);
                double* out = r.hess_.get() + i * n;
                const double* uh = u.hess_ ? u.hess_.get() + i * n : nullptr;
                for (std::size_t j = 0; j < n; ++j) {
                    double acc = ddf * gi * u.grad(j);
                    if (uh) acc += df * uh[j];
                    out[j] = acc;
                }
            }
        }
        return r;
    }

    void check_dims(const Dual2& o) const {
        if (dims_ != o.dims_) throw DimensionError("Dual2 direction count mismatch");
    }

    void ensure_grad_raw() { grad_ = std::make_unique_for_overwrite<double[]>(dims_); }
    void ensure_hess_raw() {
        hess_ = std::make_unique_for_overwrite<double[]>(dims_ * dims_);
    }
    void ensure_grad() {
        if (!grad_) {
            ensure_grad_raw();
            std::memset(grad_.get(), 0, dims_ * sizeof(double));
        }
    }
    void ensure_hess() {
        if (!hess_) {
            ensure_hess_raw();
            std::memset(hess_.get(), 0, dims_ * dims_ * sizeof(double));
        }
    }

    double value_ = 0.0;
    std::size_t dims_ = 0;
    std::unique_ptr<double[]> grad_;  // null means exactly zero
    std::unique_ptr<double[]> hess_;  // null means exactly zero
};

struct GradHess {
    double value = 0.0;
    Vec grad;
    Matrix hess;
};

/// Exact value, gradient and Hessian of a scalar map at x. The callable must
/// accept std::span<const Dual2> and return Dual2 (generic lambdas work for
/// both this and fd_check).
template <class F>
GradHess grad_hess(F&& f, std::span<const double> x) {
    const std::size_t k = x.size();
    std::vector<Dual2> seeds;
    seeds.reserve(k);
    for (std::size_t i = 0; i < k; ++i) seeds.push_back(Dual2::seed(x[i], k, i));
    const Dual2 y = f(std::span<const Dual2>(seeds));

    GradHess out;
    out.value = y.value();
    out.grad.resize(k);
    out.hess = Matrix(k, k);
    for (std::size_t i = 0; i < k; ++i) {
        out.grad[i] = y.grad(i);
        out.hess(i, i) = y.hess(i, i);
        for (std::size_t j = i + 1; j < k; ++j) {
            const double v = y.hess(i, j);
            out.hess(i, j) = v;
            out.hess(j, i) = v;
        }
    }
    return out;
}

struct FdResult {
    Vec grad;
    Matrix hess;
};

/// Central-difference gradient and Hessian, O(h²) accurate. Test oracle for
/// grad_hess; not meant for production use.
template <class F>
FdResult fd_check(F&& f, std::span<const double> x, double h = 1e-4) {
    if (!(h > 0.0)) throw ParameterError("fd_check step must be positive");
    const std::size_t k = x.size();
    Vec p(x.begin(), x.end());
    const auto eval = [&]() { return f(std::span<const double>(p)); };

    FdResult out;
    out.grad.resize(k);
    out.hess = Matrix(k, k);
    const double f0 = eval();

    for (std::size_t i = 0; i < k; ++i) {
        p[i] = x[i] + h;
        const double fp = eval();
        p[i] = x[i] - h;
        const double fm = eval();
        p[i] = x[i];
        out.grad[i] = (fp - fm) / (2.0 * h);
        out.hess(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
    }
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            p[i] = x[i] + h;
            p[j] = x[j] + h;
            const double fpp = eval();
            p[j] = x[j] - h;
            const double fpm = eval();
            p[i] = x[i] - h;
            p[j] = x[j] + h;
            const double fmp = eval();
            p[j] = x[j] - h;
            const double fmm = eval();
            p[i] = x[i];
            p[j] = x[j];
            const double v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            out.hess(i, j) = v;
            out.hess(j, i) = v;
        }
    }
    return out;
}

}  // namespace nohd
