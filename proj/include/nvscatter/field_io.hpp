#ifndef NVSCATTER_FIELD_IO_HPP
#define NVSCATTER_FIELD_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "nvscatter/field.hpp"

namespace nvscatter {

static_assert(std::endian::native == std::endian::little,
              "field files are little-endian; big-endian hosts unsupported");

/*
 * Field file layout: 64-byte header + raw payload.
 *   bytes 0..3   magic "NVSF"
 *   bytes 4..7   version (u32, currently 1)
 *   bytes 8..11  N (u32)
 *   bytes 12..19 R (f64)
 *   byte  20     kind (0 = real, 1 = complex)
 *   bytes 21..63 zero padding
 * Payload: row-major doubles; complex fields interleave re/im.
 * A JSON sidecar <path>.json records provenance.
 */
namespace fieldio {

inline constexpr uint32_t version = 1;
inline constexpr size_t header_bytes = 64;

struct Header {
    uint32_t N = 0;
    double R = 0.0;
    uint8_t kind = 0;
};

inline void write_header(std::ofstream& out, const Header& hd) {
    char buf[header_bytes] = {};
    std::memcpy(buf, "NVSF", 4);
    uint32_t ver = version;
    std::memcpy(buf + 4, &ver, 4);
    std::memcpy(buf + 8, &hd.N, 4);
    std::memcpy(buf + 12, &hd.R, 8);
    buf[20] = char(hd.kind);
    out.write(buf, header_bytes);
}

inline Header read_header(std::ifstream& in) {
    char buf[header_bytes] = {};
    in.read(buf, header_bytes);
    require(in.gcount() == std::streamsize(header_bytes), "field read: bad header (truncated)");
    require(std::memcmp(buf, "NVSF", 4) == 0, "field read: bad header (magic mismatch)");
    uint32_t ver = 0;
    std::memcpy(&ver, buf + 4, 4);
    require(ver == version, "field read: bad header (unsupported version)");
    Header hd;
    std::memcpy(&hd.N, buf + 8, 4);
    std::memcpy(&hd.R, buf + 12, 8);
    hd.kind = uint8_t(buf[20]);
    require(hd.kind == 0 || hd.kind == 1, "field read: bad header (unknown kind)");
    return hd;
}

inline void write_sidecar(const std::string& path, const nlohmann::json& provenance) {
    std::ofstream side(path + ".json");
    side << provenance.dump(2) << "\n";
}

inline void check_payload(const double* data, size_t n) {
    for (size_t i = 0; i < n; ++i)
        require(std::isfinite(data[i]), "field read: NaN payload");
}

} // namespace fieldio

inline void write_field(const std::string& path, const ComplexField& f,
                        const nlohmann::json& provenance = {}) {
    std::ofstream out(path, std::ios::binary);
    require(bool(out), "field write: cannot open " + path);
    fieldio::write_header(out, {uint32_t(f.grid.N), f.grid.R, 1});
    out.write(reinterpret_cast<const char*>(f.values.data()),
              std::streamsize(f.values.size() * sizeof(cplx)));
    require(bool(out), "field write: short write to " + path);
    if (!provenance.is_null() && !provenance.empty()) fieldio::write_sidecar(path, provenance);
}

inline void write_field(const std::string& path, const RealField& f,
                        const nlohmann::json& provenance = {}) {
    std::ofstream out(path, std::ios::binary);
    require(bool(out), "field write: cannot open " + path);
    fieldio::write_header(out, {uint32_t(f.grid.N), f.grid.R, 0});
    out.write(reinterpret_cast<const char*>(f.values.data()),
              std::streamsize(f.values.size() * sizeof(double)));
    require(bool(out), "field write: short write to " + path);
    if (!provenance.is_null() && !provenance.empty()) fieldio::write_sidecar(path, provenance);
}

inline ComplexField read_complex_field(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(bool(in), "field read: cannot open " + path);
    auto hd = fieldio::read_header(in);
    require(hd.kind == 1, "field read: kind mismatch (expected complex)");
    Grid g = make_grid(hd.R, int(hd.N));
    std::vector<cplx> values(g.size());
    in.read(reinterpret_cast<char*>(values.data()), std::streamsize(g.size() * sizeof(cplx)));
    require(in.gcount() == std::streamsize(g.size() * sizeof(cplx)),
            "field read: size mismatch");
    in.peek();
    require(in.eof(), "field read: size mismatch");
    fieldio::check_payload(reinterpret_cast<const double*>(values.data()), 2 * g.size());
    return ComplexField(g, std::move(values));
}

inline RealField read_real_field(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(bool(in), "field read: cannot open " + path);
    auto hd = fieldio::read_header(in);
    require(hd.kind == 0, "field read: kind mismatch (expected real)");
    Grid g = make_grid(hd.R, int(hd.N));
    std::vector<double> values(g.size());
    in.read(reinterpret_cast<char*>(values.data()), std::streamsize(g.size() * sizeof(double)));
    require(in.gcount() == std::streamsize(g.size() * sizeof(double)),
            "field read: size mismatch");
    in.peek();
    require(in.eof(), "field read: size mismatch");
    fieldio::check_payload(values.data(), g.size());
    return RealField(g, std::move(values));
}

} // namespace nvscatter

#endif
