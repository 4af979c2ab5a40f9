#include "acla/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "acla/error.hpp"

namespace acla {

namespace {

// little-endian primitives

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u64(out, bits);
}
void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}
void put_f64s(std::string& out, const std::vector<double>& v) {
    put_u64(out, v.size());
    for (double d : v) put_f64(out, d);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw IoError("truncated checkpoint");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    std::vector<double> f64s() {
        const std::uint64_t n = u64();
        need(n * 8);
        std::vector<double> v(static_cast<std::size_t>(n));
        for (auto& d : v) d = f64();
        return v;
    }
};

std::string encode_arrays(const std::vector<Checkpoint::Array>& arrays) {
    std::string s;
    put_u32(s, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
        put_str(s, a.name);
        put_u32(s, static_cast<std::uint32_t>(a.shape.d0));
        put_u32(s, static_cast<std::uint32_t>(a.shape.d1));
        put_u32(s, static_cast<std::uint32_t>(a.shape.d2));
        put_u32(s, static_cast<std::uint32_t>(a.shape.d3));
        put_f64s(s, a.data);
    }
    return s;
}

std::vector<Checkpoint::Array> decode_arrays(Reader& r) {
    const std::uint32_t n = r.u32();
    std::vector<Checkpoint::Array> out(n);
    for (auto& a : out) {
        a.name = r.str();
        a.shape.d0 = static_cast<int>(r.u32());
        a.shape.d1 = static_cast<int>(r.u32());
        a.shape.d2 = static_cast<int>(r.u32());
        a.shape.d3 = static_cast<int>(r.u32());
        a.data = r.f64s();
        if (static_cast<std::int64_t>(a.data.size()) != a.shape.count())
            throw IoError("checkpoint array '" + a.name + "' has inconsistent shape");
    }
    return out;
}

std::string encode_adam(const Checkpoint::AdamSnapshot& s) {
    std::string out;
    put_u64(out, s.t);
    put_u32(out, static_cast<std::uint32_t>(s.m.size()));
    for (std::size_t i = 0; i < s.m.size(); ++i) {
        put_f64s(out, s.m[i]);
        put_f64s(out, s.v[i]);
    }
    return out;
}

Checkpoint::AdamSnapshot decode_adam(Reader& r) {
    Checkpoint::AdamSnapshot s;
    s.t = r.u64();
    const std::uint32_t n = r.u32();
    s.m.resize(n);
    s.v.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        s.m[i] = r.f64s();
        s.v[i] = r.f64s();
    }
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string body;

    auto section = [&body](const std::string& name, const std::string& payload) {
        put_str(body, name);
        put_u64(body, payload.size());
        body.append(payload);
    };

    section("config", ckpt.config_text);
    {
        std::string s;
        put_u64(s, ckpt.epoch);
        section("epoch", s);
    }
    section("weights", encode_arrays(ckpt.weights));
    {
        std::string s;
        put_f64s(s, ckpt.alpha);
        section("arch", s);
    }
    section("adam.w", encode_adam(ckpt.adam_weights));
    section("adam.a", encode_adam(ckpt.adam_arch));
    {
        std::string s;
        put_u32(s, static_cast<std::uint32_t>(ckpt.rng_streams.size()));
        for (const auto& st : ckpt.rng_streams) {
            put_str(s, st.name);
            for (std::uint64_t w : st.state) put_u64(s, w);
        }
        section("rng", s);
    }
    if (ckpt.has_derived) {
        std::string s;
        put_u32(s, static_cast<std::uint32_t>(ckpt.derived_positions.size()));
        for (int p : ckpt.derived_positions) put_u32(s, static_cast<std::uint32_t>(p));
        section("derived", s);
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + path + "'");
    out.write("ACLA", 4);
    std::string ver;
    put_u32(ver, Checkpoint::kVersion);
    out.write(ver.data(), 4);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw IoError("failed writing checkpoint payload to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string buf = ss.str();

    if (buf.size() < 8 || buf.compare(0, 4, "ACLA") != 0)
        throw IoError("not an ACLA checkpoint: " + path);
    Reader r{buf, 4};
    const std::uint32_t version = r.u32();
    if (version != Checkpoint::kVersion)
        throw IoError("checkpoint format version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(Checkpoint::kVersion) + ")");

    Checkpoint ckpt;
    while (r.pos < buf.size()) {
        const std::string name = r.str();
        const std::uint64_t len = r.u64();
        r.need(len);
        const std::size_t end = r.pos + len;
        if (name == "config") {
            ckpt.config_text = buf.substr(r.pos, len);
            r.pos = end;
        } else if (name == "epoch") {
            ckpt.epoch = r.u64();
        } else if (name == "weights") {
            ckpt.weights = decode_arrays(r);
        } else if (name == "arch") {
            ckpt.alpha = r.f64s();
        } else if (name == "adam.w") {
            ckpt.adam_weights = decode_adam(r);
        } else if (name == "adam.a") {
            ckpt.adam_arch = decode_adam(r);
        } else if (name == "rng") {
            const std::uint32_t n = r.u32();
            ckpt.rng_streams.resize(n);
            for (auto& st : ckpt.rng_streams) {
                st.name = r.str();
                for (auto& w : st.state) w = r.u64();
            }
        } else if (name == "derived") {
            ckpt.has_derived = true;
            const std::uint32_t n = r.u32();
            ckpt.derived_positions.resize(n);
            for (auto& p : ckpt.derived_positions) p = static_cast<int>(r.u32());
        } else {
            r.pos = end;  // unknown sections are skipped, framing still checked
        }
        if (r.pos != end) throw IoError("checkpoint section '" + name + "' has trailing bytes");
    }
    return ckpt;
}

std::vector<Checkpoint::Array> snapshot_params(const ParamStore& params) {
    std::vector<Checkpoint::Array> out(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        out[i].name = params.name(i);
        out[i].shape = params[i].shape();
        out[i].data = params[i].raw();
    }
    return out;
}

void restore_params(ParamStore& params, const std::vector<Checkpoint::Array>& arrays) {
    if (arrays.size() != params.size())
        throw IoError("checkpoint parameter count does not match the model");
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        if (arrays[i].name != params.name(i))
            throw IoError("checkpoint parameter '" + arrays[i].name +
                          "' does not match model parameter '" + params.name(i) + "'");
        if (!(arrays[i].shape == params[i].shape()))
            throw IoError("checkpoint parameter '" + arrays[i].name + "' has a different shape");
        params[i].raw() = arrays[i].data;
    }
}

Checkpoint::AdamSnapshot snapshot_adam(const Adam& opt) {
    Checkpoint::AdamSnapshot s;
    s.t = static_cast<std::uint64_t>(opt.state().t);
    s.m = opt.state().m;
    s.v = opt.state().v;
    return s;
}

void restore_adam(Adam& opt, const Checkpoint::AdamSnapshot& snap) {
    opt.state().t = static_cast<std::int64_t>(snap.t);
    opt.state().m = snap.m;
    opt.state().v = snap.v;
}

}  // namespace acla
