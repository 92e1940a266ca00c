#include "siamdff/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace siamdff {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                    ", got shape " + shape_str(t.shape()));
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    if (a.extent(1) != b.extent(0)) {
        throw std::invalid_argument("matmul: inner extents differ: " + shape_str(a.shape()) +
                                    " x " + shape_str(b.shape()));
    }
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const real_t av = a(i, p);
            if (av == real_t{0}) continue;
            for (std::size_t j = 0; j < n; ++j) {
                out(i, j) += av * b(p, j);
            }
        }
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out(j, i) = a(i, j);
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    require_rank(x, 2, "softmax_rows");
    const std::size_t m = x.extent(0), n = x.extent(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        real_t rowmax = x(i, 0);
        for (std::size_t j = 1; j < n; ++j) rowmax = std::max(rowmax, x(i, j));
        real_t denom = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const real_t e = std::exp(x(i, j) - rowmax);
            out(i, j) = e;
            denom += e;
        }
        for (std::size_t j = 0; j < n; ++j) out(i, j) /= denom;
    }
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.at(i) = real_t{1} / (real_t{1} + std::exp(-out.at(i)));
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.at(i) = std::max(real_t{0}, out.at(i));
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& shift, real_t eps) {
    if (x.rank() == 0) throw std::invalid_argument("layer_norm: scalar input");
    if (eps < real_t{0}) throw std::invalid_argument("layer_norm: eps must be >= 0");
    const std::size_t d = x.shape().back();
    if (scale.size() != d || shift.size() != d) {
        throw std::invalid_argument("layer_norm: scale/shift length " +
                                    std::to_string(scale.size()) + "/" +
                                    std::to_string(shift.size()) + " vs last axis " +
                                    std::to_string(d));
    }
    const std::size_t rows = x.size() / d;
    Tensor out = x;
    for (std::size_t r = 0; r < rows; ++r) {
        real_t mean = 0;
        for (std::size_t j = 0; j < d; ++j) mean += x.at(r * d + j);
        mean /= static_cast<real_t>(d);
        real_t var = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const real_t dev = x.at(r * d + j) - mean;
            var += dev * dev;
        }
        var /= static_cast<real_t>(d);
        const real_t inv = real_t{1} / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            out.at(r * d + j) = (x.at(r * d + j) - mean) * inv * scale.at(j) + shift.at(j);
        }
    }
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t padding) {
    require_rank(x, 3, "conv2d");
    require_rank(kernel, 4, "conv2d");
    const std::size_t cin = x.extent(0), h = x.extent(1), w = x.extent(2);
    const std::size_t cout = kernel.extent(0), kcin = kernel.extent(1);
    const std::size_t kh = kernel.extent(2), kw = kernel.extent(3);
    if (kcin != cin) {
        throw std::invalid_argument("conv2d: channel mismatch, input " + shape_str(x.shape()) +
                                    " vs kernel " + shape_str(kernel.shape()));
    }
    if (kh != kw || kh % 2 == 0) {
        throw std::invalid_argument("conv2d: kernel must be square with odd size, got " +
                                    shape_str(kernel.shape()));
    }
    if (h + 2 * padding < kh || w + 2 * padding < kw) {
        throw std::invalid_argument("conv2d: kernel larger than padded input");
    }
    const std::size_t oh = h + 2 * padding - kh + 1;
    const std::size_t ow = w + 2 * padding - kw + 1;
    Tensor out({cout, oh, ow});
    for (std::size_t oc = 0; oc < cout; ++oc) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                real_t acc = 0;
                for (std::size_t ic = 0; ic < cin; ++ic) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(padding);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) -
                                                      static_cast<std::ptrdiff_t>(padding);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                            acc += x(ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                                   kernel(oc, ic, ky, kx);
                        }
                    }
                }
                out(oc, oy, ox) = acc;
            }
        }
    }
    return out;
}

Tensor conv1d_channels(const Tensor& v, const Tensor& kernel) {
    require_rank(v, 1, "conv1d_channels");
    require_rank(kernel, 1, "conv1d_channels");
    const std::size_t c = v.extent(0), k = kernel.extent(0);
    if (k % 2 == 0) {
        throw std::invalid_argument("conv1d_channels: kernel size must be odd, got " +
                                    std::to_string(k));
    }
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
    Tensor out({c});
    for (std::size_t i = 0; i < c; ++i) {
        real_t acc = 0;
        for (std::size_t t = 0; t < k; ++t) {
            const std::ptrdiff_t j =
                static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(t) - half;
            if (j < 0 || j >= static_cast<std::ptrdiff_t>(c)) continue;
            acc += v.at(static_cast<std::size_t>(j)) * kernel.at(t);
        }
        out.at(i) = acc;
    }
    return out;
}

Tensor pool_over_channels(const Tensor& x, PoolMode mode) {
    require_rank(x, 3, "pool_over_channels");
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    Tensor out({1, h, w});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t z = 0; z < w; ++z) {
            if (mode == PoolMode::kMax) {
                real_t best = x(0, y, z);
                for (std::size_t ic = 1; ic < c; ++ic) best = std::max(best, x(ic, y, z));
                out(0, y, z) = best;
            } else {
                real_t acc = 0;
                for (std::size_t ic = 0; ic < c; ++ic) acc += x(ic, y, z);
                out(0, y, z) = acc / static_cast<real_t>(c);
            }
        }
    }
    return out;
}

Tensor subsample2(const Tensor& x) {
    require_rank(x, 3, "subsample2");
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    if (h % 2 != 0 || w % 2 != 0) {
        throw std::invalid_argument("subsample2: spatial extents must be even, got " +
                                    shape_str(x.shape()));
    }
    Tensor out({c, h / 2, w / 2});
    for (std::size_t ic = 0; ic < c; ++ic) {
        for (std::size_t y = 0; y < h / 2; ++y) {
            for (std::size_t z = 0; z < w / 2; ++z) {
                out(ic, y, z) = x(ic, 2 * y, 2 * z);
            }
        }
    }
    return out;
}

void matmul_vjp(const Tensor& a, const Tensor& b, const Tensor& gout, Tensor& ga, Tensor& gb) {
    ga = matmul(gout, transpose(b));
    gb = matmul(transpose(a), gout);
}

Tensor softmax_rows_vjp(const Tensor& y, const Tensor& gout) {
    const std::size_t m = y.extent(0), n = y.extent(1);
    Tensor gx({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        real_t dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += gout(i, j) * y(i, j);
        for (std::size_t j = 0; j < n; ++j) gx(i, j) = y(i, j) * (gout(i, j) - dot);
    }
    return gx;
}

Tensor sigmoid_vjp(const Tensor& y, const Tensor& gout) {
    Tensor gx = gout;
    for (std::size_t i = 0; i < gx.size(); ++i) {
        gx.at(i) *= y.at(i) * (real_t{1} - y.at(i));
    }
    return gx;
}

Tensor relu_vjp(const Tensor& x, const Tensor& gout) {
    Tensor gx = gout;
    for (std::size_t i = 0; i < gx.size(); ++i) {
        if (x.at(i) <= real_t{0}) gx.at(i) = 0;
    }
    return gx;
}

void layer_norm_vjp(const Tensor& x, const Tensor& scale, real_t eps, const Tensor& gout,
                    Tensor& gx, Tensor& gscale, Tensor& gshift) {
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.size() / d;
    gx = Tensor::zeros(x.shape());
    gscale = Tensor::zeros({d});
    gshift = Tensor::zeros({d});
    for (std::size_t r = 0; r < rows; ++r) {
        real_t mean = 0;
        for (std::size_t j = 0; j < d; ++j) mean += x.at(r * d + j);
        mean /= static_cast<real_t>(d);
        real_t var = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const real_t dev = x.at(r * d + j) - mean;
            var += dev * dev;
        }
        var /= static_cast<real_t>(d);
        const real_t inv = real_t{1} / std::sqrt(var + eps);

        // ghat = gout * scale; gx = inv * (ghat - mean(ghat) - xhat * mean(ghat*xhat))
        real_t mean_g = 0, mean_gx = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const real_t xhat = (x.at(r * d + j) - mean) * inv;
            const real_t ghat = gout.at(r * d + j) * scale.at(j);
            mean_g += ghat;
            mean_gx += ghat * xhat;
            gscale.at(j) += gout.at(r * d + j) * xhat;
            gshift.at(j) += gout.at(r * d + j);
        }
        mean_g /= static_cast<real_t>(d);
        mean_gx /= static_cast<real_t>(d);
        for (std::size_t j = 0; j < d; ++j) {
            const real_t xhat = (x.at(r * d + j) - mean) * inv;
            const real_t ghat = gout.at(r * d + j) * scale.at(j);
            gx.at(r * d + j) = inv * (ghat - mean_g - xhat * mean_gx);
        }
    }
}

void conv2d_vjp(const Tensor& x, const Tensor& kernel, std::size_t padding, const Tensor& gout,
                Tensor& gx, Tensor& gkernel) {
    const std::size_t cin = x.extent(0), h = x.extent(1), w = x.extent(2);
    const std::size_t cout = kernel.extent(0);
    const std::size_t kh = kernel.extent(2), kw = kernel.extent(3);
    const std::size_t oh = gout.extent(1), ow = gout.extent(2);
    gx = Tensor::zeros(x.shape());
    gkernel = Tensor::zeros(kernel.shape());
    for (std::size_t oc = 0; oc < cout; ++oc) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const real_t g = gout(oc, oy, ox);
                if (g == real_t{0}) continue;
                for (std::size_t ic = 0; ic < cin; ++ic) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(padding);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) -
                                                      static_cast<std::ptrdiff_t>(padding);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                            const auto yy = static_cast<std::size_t>(iy);
                            const auto xx = static_cast<std::size_t>(ix);
                            gx(ic, yy, xx) += g * kernel(oc, ic, ky, kx);
                            gkernel(oc, ic, ky, kx) += g * x(ic, yy, xx);
                        }
                    }
                }
            }
        }
    }
}

void conv1d_channels_vjp(const Tensor& v, const Tensor& kernel, const Tensor& gout, Tensor& gv,
                         Tensor& gkernel) {
    const std::size_t c = v.extent(0), k = kernel.extent(0);
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
    gv = Tensor::zeros({c});
    gkernel = Tensor::zeros({k});
    for (std::size_t i = 0; i < c; ++i) {
        const real_t g = gout.at(i);
        for (std::size_t t = 0; t < k; ++t) {
            const std::ptrdiff_t j =
                static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(t) - half;
            if (j < 0 || j >= static_cast<std::ptrdiff_t>(c)) continue;
            gv.at(static_cast<std::size_t>(j)) += g * kernel.at(t);
            gkernel.at(t) += g * v.at(static_cast<std::size_t>(j));
        }
    }
}

Tensor pool_over_channels_vjp(const Tensor& x, PoolMode mode, const Tensor& gout) {
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    Tensor gx = Tensor::zeros(x.shape());
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t z = 0; z < w; ++z) {
            if (mode == PoolMode::kMax) {
                // Gradient goes to the first channel attaining the max.
                std::size_t arg = 0;
                real_t best = x(0, y, z);
                for (std::size_t ic = 1; ic < c; ++ic) {
                    if (x(ic, y, z) > best) {
                        best = x(ic, y, z);
                        arg = ic;
                    }
                }
                gx(arg, y, z) = gout(0, y, z);
            } else {
                const real_t g = gout(0, y, z) / static_cast<real_t>(c);
                for (std::size_t ic = 0; ic < c; ++ic) gx(ic, y, z) = g;
            }
        }
    }
    return gx;
}

Tensor subsample2_vjp(const Tensor& x, const Tensor& gout) {
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    Tensor gx = Tensor::zeros(x.shape());
    for (std::size_t ic = 0; ic < c; ++ic) {
        for (std::size_t y = 0; y < h / 2; ++y) {
            for (std::size_t z = 0; z < w / 2; ++z) {
                gx(ic, 2 * y, 2 * z) = gout(ic, y, z);
            }
        }
    }
    return gx;
}

}  // namespace siamdff
