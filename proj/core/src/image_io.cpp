#include "acla/image_io.hpp"

#include <cmath>
#include <fstream>

namespace acla {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) continue;
        tok.push_back(static_cast<char>(c));
        while ((c = in.peek()) != EOF && !std::isspace(c) && c != '#')
            tok.push_back(static_cast<char>(in.get()));
        return tok;
    }
    throw IoError("unexpected end of image header");
}

}  // namespace

Tensor read_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image '" + path + "'");
    const std::string magic = next_token(in);
    int channels;
    if (magic == "P5") channels = 1;
    else if (magic == "P6") channels = 3;
    else throw IoError("unsupported image format '" + magic + "' in " + path);
    const int w = std::stoi(next_token(in));
    const int h = std::stoi(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (w < 1 || h < 1) throw IoError("degenerate image dimensions in " + path);
    if (maxval != 255) throw IoError("only 8-bit images are supported: " + path);
    in.get();  // single whitespace after maxval

    const std::size_t bytes = static_cast<std::size_t>(w) * h * channels;
    std::vector<unsigned char> buf(bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes)
        throw IoError("truncated image payload in " + path);

    Tensor img = Tensor::map(h, w, channels);
    auto vals = img.values();
    for (std::size_t i = 0; i < bytes; ++i) vals[i] = buf[i] / 255.0;
    return img;
}

void write_image(const std::string& path, const Tensor& image) {
    const int ch = image.channels();
    if (ch != 1 && ch != 3) throw DimensionError("images must have 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image '" + path + "'");
    out << (ch == 1 ? "P5" : "P6") << "\n"
        << image.width() << " " << image.height() << "\n255\n";
    std::vector<unsigned char> buf(static_cast<std::size_t>(image.size()));
    auto vals = image.values();
    for (std::size_t i = 0; i < buf.size(); ++i) {
        double v = std::round(vals[i] * 255.0);
        if (v < 0.0) v = 0.0;
        if (v > 255.0) v = 255.0;
        buf[i] = static_cast<unsigned char>(v);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing image payload to " + path);
}

}  // namespace acla
