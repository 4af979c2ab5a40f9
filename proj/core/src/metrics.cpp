#include "acla/metrics.hpp"

#include <array>
#include <cmath>

namespace acla {

Tensor luminance(const Tensor& image) {
    if (image.channels() == 1) return image;
    if (image.channels() != 3)
        throw DimensionError("luminance expects 1 or 3 channels");
    Tensor out = Tensor::map(image.height(), image.width(), 1);
    const std::int64_t n = static_cast<std::int64_t>(image.height()) * image.width();
    const double* src = image.values().data();
    double* dst = out.values().data();
    for (std::int64_t i = 0; i < n; ++i)
        dst[i] = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
    return out;
}

double psnr(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) throw DimensionError("psnr: shapes differ");
    double acc = 0.0;
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double d = pa[i] - pb[i];
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(a.size());
    if (mse <= 0.0) return kPsnrCap;
    const double v = 10.0 * std::log10(1.0 / mse);
    return v > kPsnrCap ? kPsnrCap : v;
}

namespace {

constexpr int kWin = 11;

std::array<double, kWin> gaussian_window() {
    std::array<double, kWin> w{};
    const double sigma = 1.5;
    double total = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double x = i - (kWin - 1) / 2.0;
        w[i] = std::exp(-x * x / (2.0 * sigma * sigma));
        total += w[i];
    }
    for (auto& v : w) v /= total;
    return w;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) throw DimensionError("ssim: shapes differ");
    if (a.channels() != 1) throw DimensionError("ssim expects a single (luminance) channel");
    const int h = a.height(), w = a.width();
    if (h < kWin || w < kWin) throw DimensionError("ssim: image smaller than the 11x11 window");

    static const std::array<double, kWin> win = gaussian_window();
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;

    // Separable Gaussian filtering of the five moment maps, valid region only.
    const int hw = w;  // source stride
    const int vw = w - kWin + 1;
    const int vh = h - kWin + 1;
    const double* pa = a.values().data();
    const double* pb = b.values().data();

    auto filter = [&](auto&& point) {
        // horizontal pass into (h x vw), then vertical into (vh x vw)
        std::vector<double> tmp(static_cast<std::size_t>(h) * vw);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < vw; ++c) {
                double acc = 0.0;
                for (int t = 0; t < kWin; ++t) acc += win[t] * point(r, c + t);
                tmp[static_cast<std::size_t>(r) * vw + c] = acc;
            }
        std::vector<double> out(static_cast<std::size_t>(vh) * vw);
        for (int r = 0; r < vh; ++r)
            for (int c = 0; c < vw; ++c) {
                double acc = 0.0;
                for (int t = 0; t < kWin; ++t)
                    acc += win[t] * tmp[static_cast<std::size_t>(r + t) * vw + c];
                out[static_cast<std::size_t>(r) * vw + c] = acc;
            }
        return out;
    };

    const auto mu_a = filter([&](int r, int c) { return pa[r * hw + c]; });
    const auto mu_b = filter([&](int r, int c) { return pb[r * hw + c]; });
    const auto aa = filter([&](int r, int c) { return pa[r * hw + c] * pa[r * hw + c]; });
    const auto bb = filter([&](int r, int c) { return pb[r * hw + c] * pb[r * hw + c]; });
    const auto ab = filter([&](int r, int c) { return pa[r * hw + c] * pb[r * hw + c]; });

    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = aa[i] - ma * ma;
        const double vb = bb[i] - mb * mb;
        const double cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                 ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return total / static_cast<double>(mu_a.size());
}

}  // namespace acla
