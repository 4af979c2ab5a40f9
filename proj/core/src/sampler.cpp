#include "acla/sampler.hpp"

#include <cmath>

namespace acla {

BilinearFootprint resolve_footprint(int height, int width, Position pos) {
    if (!std::isfinite(pos.row) || !std::isfinite(pos.col))
        throw DomainError("sample position must be finite");
    if (height < 1 || width < 1) throw DimensionError("cannot sample an empty map");

    BilinearFootprint fp{};
    double r = pos.row;
    double c = pos.col;
    fp.clamped_row = r < 0.0 || r > height - 1;
    fp.clamped_col = c < 0.0 || c > width - 1;
    if (r < 0.0) r = 0.0;
    if (r > height - 1) r = height - 1;
    if (c < 0.0) c = 0.0;
    if (c > width - 1) c = width - 1;

    fp.r0 = static_cast<int>(std::floor(r));
    fp.c0 = static_cast<int>(std::floor(c));
    if (fp.r0 > height - 2) fp.r0 = height - 2 < 0 ? 0 : height - 2;
    if (fp.c0 > width - 2) fp.c0 = width - 2 < 0 ? 0 : width - 2;
    fp.r1 = height == 1 ? fp.r0 : fp.r0 + 1;
    fp.c1 = width == 1 ? fp.c0 : fp.c0 + 1;

    fp.fr = r - fp.r0;
    fp.fc = c - fp.c0;
    fp.w00 = (1.0 - fp.fr) * (1.0 - fp.fc);
    fp.w01 = (1.0 - fp.fr) * fp.fc;
    fp.w10 = fp.fr * (1.0 - fp.fc);
    fp.w11 = fp.fr * fp.fc;
    return fp;
}

void sample_bilinear(const Tensor& map, Position pos, std::span<double> out) {
    const int ch = map.channels();
    if (static_cast<int>(out.size()) != ch)
        throw DimensionError("output span length must equal channel count");
    const BilinearFootprint fp = resolve_footprint(map.height(), map.width(), pos);
    const double* d = map.values().data();
    const int w = map.width();
    const double* p00 = d + (static_cast<std::int64_t>(fp.r0) * w + fp.c0) * ch;
    const double* p01 = d + (static_cast<std::int64_t>(fp.r0) * w + fp.c1) * ch;
    const double* p10 = d + (static_cast<std::int64_t>(fp.r1) * w + fp.c0) * ch;
    const double* p11 = d + (static_cast<std::int64_t>(fp.r1) * w + fp.c1) * ch;
    for (int k = 0; k < ch; ++k)
        out[k] = fp.w00 * p00[k] + fp.w01 * p01[k] + fp.w10 * p10[k] + fp.w11 * p11[k];
}

std::vector<double> sample_bilinear(const Tensor& map, Position pos) {
    std::vector<double> out(static_cast<std::size_t>(map.channels()));
    sample_bilinear(map, pos, out);
    return out;
}

PositionGrad sample_bilinear_backward(const Tensor& map, const BilinearFootprint& fp,
                                      std::span<const double> upstream,
                                      std::span<double> map_grad) {
    const int ch = map.channels();
    const int w = map.width();
    const double* d = map.values().data();
    const std::int64_t i00 = (static_cast<std::int64_t>(fp.r0) * w + fp.c0) * ch;
    const std::int64_t i01 = (static_cast<std::int64_t>(fp.r0) * w + fp.c1) * ch;
    const std::int64_t i10 = (static_cast<std::int64_t>(fp.r1) * w + fp.c0) * ch;
    const std::int64_t i11 = (static_cast<std::int64_t>(fp.r1) * w + fp.c1) * ch;

    PositionGrad g;
    for (int k = 0; k < ch; ++k) {
        const double u = upstream[k];
        if (!map_grad.empty()) {
            map_grad[i00 + k] += fp.w00 * u;
            map_grad[i01 + k] += fp.w01 * u;
            map_grad[i10 + k] += fp.w10 * u;
            map_grad[i11 + k] += fp.w11 * u;
        }
        // d(sample)/d(fr) = (p10 - p00)(1-fc) + (p11 - p01)fc, and analogously
        // for fc; zero along any clamped axis.
        const double v00 = d[i00 + k], v01 = d[i01 + k], v10 = d[i10 + k], v11 = d[i11 + k];
        if (!fp.clamped_row)
            g.d_row += u * ((v10 - v00) * (1.0 - fp.fc) + (v11 - v01) * fp.fc);
        if (!fp.clamped_col)
            g.d_col += u * ((v01 - v00) * (1.0 - fp.fr) + (v11 - v10) * fp.fr);
    }
    return g;
}

}  // namespace acla
