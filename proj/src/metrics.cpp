#include "ixn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ixn {

namespace {

void check_same(const Tensor<float>& a, const Tensor<float>& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() +
                             " vs " + b.shape().str());
    if (a.numel() == 0) throw ContractError(std::string(op) + ": empty image");
}

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_kernel() {
    std::vector<double> k(kWin);
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - (kWin - 1) / 2.0;
        k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += k[static_cast<std::size_t>(i)];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Separable valid-mode Gaussian filter of one (H, W) plane.
std::vector<double> gauss_valid(const std::vector<double>& img, int h, int w,
                                const std::vector<double>& k, int& oh, int& ow) {
    oh = h - kWin + 1;
    ow = w - kWin + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWin; ++i) acc += k[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWin; ++i) acc += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

}  // namespace

double mse(const Tensor<float>& a, const Tensor<float>& b) {
    check_same(a, b, "mse");
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.numel());
}

double mae(const Tensor<float>& a, const Tensor<float>& b) {
    check_same(a, b, "mae");
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        acc += std::abs(static_cast<double>(a[i]) - b[i]);
    return acc / static_cast<double>(a.numel());
}

double psnr_from_mse(double mse_mean) {
    if (mse_mean <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse_mean));
}

double ssim(const Tensor<float>& a, const Tensor<float>& b) {
    check_same(a, b, "ssim");
    const Shape s = a.shape();
    if (s.h < kWin || s.w < kWin)
        throw DimensionError("ssim: image smaller than the 11x11 window");
    const auto k = gaussian_kernel();

    double total = 0.0;
    std::int64_t count = 0;
    const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            std::vector<double> xa(static_cast<std::size_t>(plane)), xb(static_cast<std::size_t>(plane));
            std::vector<double> xaa(static_cast<std::size_t>(plane)), xbb(static_cast<std::size_t>(plane)),
                xab(static_cast<std::size_t>(plane));
            const std::int64_t base = a.index(n, c, 0, 0);
            for (std::int64_t i = 0; i < plane; ++i) {
                xa[static_cast<std::size_t>(i)] = a[base + i];
                xb[static_cast<std::size_t>(i)] = b[base + i];
                xaa[static_cast<std::size_t>(i)] = static_cast<double>(a[base + i]) * a[base + i];
                xbb[static_cast<std::size_t>(i)] = static_cast<double>(b[base + i]) * b[base + i];
                xab[static_cast<std::size_t>(i)] = static_cast<double>(a[base + i]) * b[base + i];
            }
            int oh = 0, ow = 0;
            const auto mu_a = gauss_valid(xa, s.h, s.w, k, oh, ow);
            const auto mu_b = gauss_valid(xb, s.h, s.w, k, oh, ow);
            const auto m_aa = gauss_valid(xaa, s.h, s.w, k, oh, ow);
            const auto m_bb = gauss_valid(xbb, s.h, s.w, k, oh, ow);
            const auto m_ab = gauss_valid(xab, s.h, s.w, k, oh, ow);
            for (std::size_t i = 0; i < mu_a.size(); ++i) {
                const double va = m_aa[i] - mu_a[i] * mu_a[i];
                const double vb = m_bb[i] - mu_b[i] * mu_b[i];
                const double cov = m_ab[i] - mu_a[i] * mu_b[i];
                const double num = (2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2);
                const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2);
                total += num / den;
                ++count;
            }
        }
    return total / static_cast<double>(count);
}

}  // namespace ixn
