#include "acla/visualize.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "acla/dataset.hpp"
#include "acla/image_io.hpp"
#include "acla/metrics.hpp"

namespace acla {

namespace {

void draw_cross(Tensor& img, int r, int c, double red, double green, double blue) {
    for (int d = -2; d <= 2; ++d) {
        const int rr = r + d, cc = c + d;
        if (rr >= 0 && rr < img.height()) {
            img.at(rr, c, 0) = red;
            img.at(rr, c, 1) = green;
            img.at(rr, c, 2) = blue;
        }
        if (cc >= 0 && cc < img.width()) {
            img.at(r, cc, 0) = red;
            img.at(r, cc, 1) = green;
            img.at(r, cc, 2) = blue;
        }
    }
}

void draw_circle(Tensor& img, int r, int c, double intensity) {
    static const int ring[][2] = {{-2, -1}, {-2, 0}, {-2, 1}, {2, -1}, {2, 0},  {2, 1},
                                  {-1, -2}, {0, -2}, {1, -2}, {-1, 2}, {0, 2},  {1, 2}};
    for (const auto& d : ring) {
        const int rr = r + d[0], cc = c + d[1];
        if (rr < 0 || rr >= img.height() || cc < 0 || cc >= img.width()) continue;
        img.at(rr, cc, 0) = intensity;
        img.at(rr, cc, 1) = 0.0;
        img.at(rr, cc, 2) = 0.0;
    }
}

}  // namespace

VisualizeResult visualize_keys(RestorationModel& model, const ExperimentConfig& cfg,
                               const Tensor& image, int query_row, int query_col,
                               const std::string& out_dir, bool force_masks_on) {
    if (model.variant() != AttentionVariant::Cla && model.variant() != AttentionVariant::Acla)
        throw ContractError("key visualization needs a cla or acla model");
    if (model.positions().empty())
        throw ContractError("the model contains no attention modules");
    const Tensor input = to_rgb(image);
    if (query_row < 0 || query_row >= input.height() || query_col < 0 ||
        query_col >= input.width())
        throw DomainError("query position outside the image bounds");

    Tape tape;
    std::vector<KeyTrace> traces;
    ForwardOptions opt;
    opt.mask_mode = GateMode::Infer;
    opt.tau = cfg.tau_end;
    opt.force_masks_on = force_masks_on;
    opt.traces = &traces;
    model.forward(tape, tape.constant(input), opt);

    std::filesystem::create_directories(out_dir);
    VisualizeResult res;
    res.csv_file = (std::filesystem::path(out_dir) / "keys.csv").string();
    std::ofstream csv(res.csv_file);
    if (!csv) throw IoError("cannot write " + res.csv_file);
    csv << "module,layer,key,row,col,weight,beta,m\n";

    // dimmed luminance backdrop
    const Tensor lum = luminance(input);
    const std::size_t qi =
        static_cast<std::size_t>(query_row) * static_cast<std::size_t>(input.width()) +
        static_cast<std::size_t>(query_col);

    char buf[256];
    for (std::size_t m = 0; m < traces.size(); ++m) {
        const int module_pos = model.positions()[m];
        const QueryTrace& qt = traces[m].at(qi);
        double max_w = 0.0;
        for (const KeySample& ks : qt.keys)
            if (ks.mask == 1 && ks.weight > max_w) max_w = ks.weight;
        if (max_w <= 0.0) max_w = 1.0;

        for (std::size_t li = 0; li <= m; ++li) {
            const int layer_pos = model.positions()[li];
            Tensor canvas = Tensor::map(input.height(), input.width(), 3);
            for (int r = 0; r < input.height(); ++r)
                for (int c = 0; c < input.width(); ++c)
                    for (int ch = 0; ch < 3; ++ch)
                        canvas.at(r, c, ch) = 0.6 * lum.at(r, c, 0);

            // cross first: key rings stay visible when a key sits on the query
            draw_cross(canvas, query_row, query_col, 0.0, 1.0, 0.0);
            for (const KeySample& ks : qt.keys) {
                if (ks.layer != static_cast<int>(li) || ks.mask != 1) continue;
                const int kr = static_cast<int>(std::lround(ks.position.row));
                const int kc = static_cast<int>(std::lround(ks.position.col));
                draw_circle(canvas, kr, kc, 0.25 + 0.75 * ks.weight / max_w);
                std::snprintf(buf, sizeof buf, "%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%d\n",
                              module_pos, layer_pos, ks.key, ks.position.row, ks.position.col,
                              ks.weight, ks.beta, ks.mask);
                csv << buf;
                ++res.csv_rows;
            }

            std::snprintf(buf, sizeof buf, "keys_m%02d_l%02d.ppm", module_pos, layer_pos);
            const std::string file = (std::filesystem::path(out_dir) / buf).string();
            write_image(file, canvas);
            res.image_files.push_back(file);
        }
    }
    return res;
}

}  // namespace acla
