#include "acla/degrade.hpp"

#include <cmath>
#include <vector>

namespace acla {

Tensor degrade_awgn(const Tensor& clean, double sigma, Rng& rng) {
    if (sigma < 0.0) throw DomainError("awgn: sigma must be non-negative");
    Tensor out = clean;
    if (sigma == 0.0) return out;
    for (auto& v : out.values()) {
        v += sigma * rng.gaussian();
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
    }
    return out;
}

namespace {

// Keys' cubic convolution kernel, a = -0.5.
double cubic(double x) {
    const double a = -0.5;
    x = std::fabs(x);
    if (x <= 1.0) return (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0;
    if (x < 2.0) return a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a;
    return 0.0;
}

struct TapSet {
    int first;                   // first source index (clamped later)
    std::vector<double> weight;  // normalized
};

// Per-output-pixel taps of the anti-aliased kernel cubic(x/s)/s.
std::vector<TapSet> build_taps(int out_len, int scale) {
    std::vector<TapSet> taps(static_cast<std::size_t>(out_len));
    const double s = scale;
    const int support = 2 * scale;
    for (int o = 0; o < out_len; ++o) {
        const double center = (o + 0.5) * s - 0.5;
        const int first = static_cast<int>(std::ceil(center - support + 0.5));
        TapSet t;
        t.first = first;
        t.weight.resize(static_cast<std::size_t>(2 * support));
        double total = 0.0;
        for (int k = 0; k < 2 * support; ++k) {
            const double w = cubic((center - (first + k)) / s);
            t.weight[static_cast<std::size_t>(k)] = w;
            total += w;
        }
        for (auto& w : t.weight) w /= total;  // partition of unity
        taps[static_cast<std::size_t>(o)] = std::move(t);
    }
    return taps;
}

}  // namespace

Tensor degrade_bicubic_down(const Tensor& clean, int scale) {
    if (scale < 2 || scale > 4) throw DomainError("bicubic downsample scale must be 2, 3 or 4");
    const int h = clean.height(), w = clean.width(), c = clean.channels();
    if (h % scale != 0 || w % scale != 0)
        throw DimensionError("bicubic downsample: dimensions must divide by the scale");
    const int oh = h / scale, ow = w / scale;
    const auto col_taps = build_taps(ow, scale);
    const auto row_taps = build_taps(oh, scale);

    // horizontal pass
    Tensor tmp = Tensor::map(h, ow, c);
    for (int r = 0; r < h; ++r)
        for (int oc = 0; oc < ow; ++oc) {
            const TapSet& t = col_taps[static_cast<std::size_t>(oc)];
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t k = 0; k < t.weight.size(); ++k) {
                    int src = t.first + static_cast<int>(k);
                    if (src < 0) src = 0;
                    if (src >= w) src = w - 1;
                    acc += t.weight[k] * clean.at(r, src, ch);
                }
                tmp.at(r, oc, ch) = acc;
            }
        }
    // vertical pass
    Tensor out = Tensor::map(oh, ow, c);
    for (int orow = 0; orow < oh; ++orow)
        for (int oc = 0; oc < ow; ++oc) {
            const TapSet& t = row_taps[static_cast<std::size_t>(orow)];
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t k = 0; k < t.weight.size(); ++k) {
                    int src = t.first + static_cast<int>(k);
                    if (src < 0) src = 0;
                    if (src >= h) src = h - 1;
                    acc += t.weight[k] * tmp.at(src, oc, ch);
                }
                out.at(orow, oc, ch) = acc;
            }
        }
    return out;
}

Tensor degrade_mosaic(const Tensor& clean) {
    if (clean.channels() != 3) throw DimensionError("mosaic expects a 3-channel image");
    Tensor out = Tensor::map(clean.height(), clean.width(), 3);
    for (int r = 0; r < clean.height(); ++r)
        for (int c = 0; c < clean.width(); ++c) {
            // RGGB: (even,even)->R, (even,odd)/(odd,even)->G, (odd,odd)->B
            int keep;
            if (r % 2 == 0)
                keep = c % 2 == 0 ? 0 : 1;
            else
                keep = c % 2 == 0 ? 1 : 2;
            out.at(r, c, keep) = clean.at(r, c, keep);
        }
    return out;
}

Tensor apply_dihedral(const Tensor& patch, Dihedral t) {
    const int h = patch.height(), w = patch.width(), c = patch.channels();
    const bool rotates = t == Dihedral::Rot90 || t == Dihedral::Rot270 ||
                         t == Dihedral::FlipRot90 || t == Dihedral::FlipRot270;
    if (rotates && h != w) throw DimensionError("rotation requires a square patch");
    Tensor out = Tensor::map(rotates ? w : h, rotates ? h : w, c);
    for (int r = 0; r < h; ++r)
        for (int cc = 0; cc < w; ++cc) {
            int sr = r, sc = cc;
            switch (t) {
                case Dihedral::Id: break;
                case Dihedral::Rot90: sr = h - 1 - cc; sc = r; break;
                case Dihedral::Rot180: sr = h - 1 - r; sc = w - 1 - cc; break;
                case Dihedral::Rot270: sr = cc; sc = w - 1 - r; break;
                case Dihedral::Flip: sc = w - 1 - cc; break;
                case Dihedral::FlipRot90: sr = h - 1 - cc; sc = w - 1 - r; break;
                case Dihedral::FlipRot180: sr = h - 1 - r; break;
                case Dihedral::FlipRot270: sr = cc; sc = r; break;
            }
            for (int ch = 0; ch < c; ++ch) out.at(r, cc, ch) = patch.at(sr, sc, ch);
        }
    return out;
}

Dihedral random_dihedral(Rng& rng) {
    return static_cast<Dihedral>(rng.below(8));
}

}  // namespace acla
