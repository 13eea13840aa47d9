#pragma once

// File formats shared by every module:
//   * gaussian point-record files (text header line + little-endian f32 records)
//   * camera arrays as JSON
//   * raw f32 image dumps
//   * a tagged binary blob (magic, JSON header, f32 payload) used by checkpoints

#include "animate4d/core/error.hpp"
#include "animate4d/core/types.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace animate4d {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace detail {

inline void write_f32(std::ostream& out, double value)
{
    auto f = static_cast<float>(value);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    out.write(reinterpret_cast<const char*>(&bits), 4);
}

inline float read_f32(const char* bytes)
{
    std::uint32_t bits;
    std::memcpy(&bits, bytes, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

inline void write_u64(std::ostream& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t read_u64(const char* bytes)
{
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    return v;
}

inline std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::ofstream open_for_write(const fs::path& path)
{
    if (path.empty()) throw ValidationError("empty output path");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Gaussian point-record files

inline constexpr std::array<std::string_view, 14> kGaussianAttributes = {
    "x", "y", "z", "r", "g", "b", "opacity", "qw", "qx", "qy", "qz", "sx", "sy", "sz"};

/// Header line: "gaussians <count> <attr> <attr> ...\n", then count records of one
/// little-endian f32 per attribute in header order.
inline void save_gaussians(const GaussianCloud& cloud, const fs::path& path)
{
    if (path.empty()) throw ValidationError("empty output path");
    validate(cloud);
    auto out = detail::open_for_write(path);
    out << "gaussians " << cloud.size();
    for (auto name : kGaussianAttributes) out << ' ' << name;
    out << '\n';
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.positions[i];
        const auto& c = cloud.colors[i];
        const auto& q = cloud.rotations[i];
        const auto& s = cloud.scales[i];
        for (double v : {p.x(), p.y(), p.z(), c.x(), c.y(), c.z(), cloud.opacities[i], q[0], q[1], q[2], q[3], s.x(),
                         s.y(), s.z()})
            detail::write_f32(out, v);
    }
    if (!out) throw IoError("write failed for " + path.string());
}

/// Quaternions whose norm deviates from 1 by more than 1e-6 are renormalized; records
/// already unit within that tolerance load bit-exactly.
inline GaussianCloud load_gaussians(const fs::path& path)
{
    const std::string bytes = detail::read_file(path);
    const auto eol = bytes.find('\n');
    if (eol == std::string::npos) throw ValidationError("gaussian file has no header line: " + path.string());
    std::istringstream header(bytes.substr(0, eol));
    std::string tag;
    long long count = -1;
    header >> tag >> count;
    if (tag != "gaussians" || !header) throw ValidationError("not a gaussian point-record file: " + path.string());
    if (count <= 0) throw ValidationError("zero-points: " + path.string());
    std::vector<std::string> names;
    for (std::string name; header >> name;) names.push_back(name);

    std::array<std::size_t, kGaussianAttributes.size()> column{};
    for (std::size_t a = 0; a < kGaussianAttributes.size(); ++a) {
        auto it = std::find(names.begin(), names.end(), kGaussianAttributes[a]);
        if (it == names.end()) throw ValidationError("missing-attribute: " + std::string(kGaussianAttributes[a]));
        column[a] = static_cast<std::size_t>(it - names.begin());
    }
    const std::size_t stride = names.size() * 4;
    const std::size_t n = static_cast<std::size_t>(count);
    if (bytes.size() - eol - 1 != n * stride)
        throw ValidationError("gaussian file payload size does not match header count: " + path.string());

    GaussianCloud cloud;
    cloud.resize(n);
    const char* base = bytes.data() + eol + 1;
    for (std::size_t i = 0; i < n; ++i) {
        std::array<double, kGaussianAttributes.size()> v{};
        for (std::size_t a = 0; a < v.size(); ++a) {
            v[a] = detail::read_f32(base + i * stride + column[a] * 4);
            if (!std::isfinite(v[a]))
                throw ValidationError("non-finite value in attribute " + std::string(kGaussianAttributes[a]) +
                                      " of point " + std::to_string(i));
        }
        cloud.positions[i] = {v[0], v[1], v[2]};
        cloud.colors[i] = {v[3], v[4], v[5]};
        cloud.opacities[i] = v[6];
        Quat q(v[7], v[8], v[9], v[10]);
        const double norm = q.norm();
        if (norm == 0.0) throw ValidationError("zero quaternion at point " + std::to_string(i));
        if (std::abs(norm - 1.0) > 1e-6) q /= norm;
        cloud.rotations[i] = q;
        cloud.scales[i] = {v[11], v[12], v[13]};
    }
    validate(cloud);
    return cloud;
}

// ---------------------------------------------------------------------------
// Cameras

inline json camera_to_json(const Camera& cam)
{
    json j;
    j["focal"] = {cam.fx, cam.fy};
    j["principal"] = {cam.cx, cam.cy};
    std::vector<double> r(9);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) r[a * 3 + b] = cam.rotation(a, b);
    j["rotation"] = r;
    j["translation"] = {cam.translation.x(), cam.translation.y(), cam.translation.z()};
    j["width"] = cam.width;
    j["height"] = cam.height;
    return j;
}

inline Camera camera_from_json(const json& j)
{
    try {
        Camera cam;
        const auto focal = j.at("focal").get<std::vector<double>>();
        const auto principal = j.at("principal").get<std::vector<double>>();
        const auto rot = j.at("rotation").get<std::vector<double>>();
        const auto trans = j.at("translation").get<std::vector<double>>();
        if (focal.size() != 2 || principal.size() != 2 || rot.size() != 9 || trans.size() != 3)
            throw ValidationError("camera entry has wrong array lengths");
        cam.fx = focal[0];
        cam.fy = focal[1];
        cam.cx = principal[0];
        cam.cy = principal[1];
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) cam.rotation(a, b) = rot[a * 3 + b];
        cam.translation = {trans[0], trans[1], trans[2]};
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
        validate(cam);
        return cam;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed camera entry: ") + e.what());
    }
}

inline void save_cameras(const std::vector<Camera>& cams, const fs::path& path)
{
    json arr = json::array();
    for (const auto& c : cams) arr.push_back(camera_to_json(c));
    auto out = detail::open_for_write(path);
    out << arr.dump(2) << '\n';
}

inline std::vector<Camera> load_cameras(const fs::path& path)
{
    json arr;
    try {
        arr = json::parse(detail::read_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError("cannot parse " + path.string() + ": " + e.what());
    }
    if (!arr.is_array() || arr.empty()) throw ValidationError("camera file must be a non-empty JSON array");
    std::vector<Camera> cams;
    for (const auto& j : arr) cams.push_back(camera_from_json(j));
    return cams;
}

inline json load_json(const fs::path& path)
{
    try {
        return json::parse(detail::read_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError("cannot parse " + path.string() + ": " + e.what());
    }
}

inline void save_json(const json& j, const fs::path& path)
{
    auto out = detail::open_for_write(path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Raw f32 image dumps: "rawimage <width> <height> <channels>\n" + f32 payload.

inline void save_raw_image(const Image& img, const fs::path& path)
{
    auto out = detail::open_for_write(path);
    out << "rawimage " << img.width << ' ' << img.height << ' ' << img.channels << '\n';
    for (double v : img.data) detail::write_f32(out, v);
}

inline Image load_raw_image(const fs::path& path)
{
    const std::string bytes = detail::read_file(path);
    const auto eol = bytes.find('\n');
    std::istringstream header(bytes.substr(0, eol));
    std::string tag;
    Image img;
    header >> tag >> img.width >> img.height >> img.channels;
    if (tag != "rawimage" || !header) throw ValidationError("not a raw image dump: " + path.string());
    const std::size_t count = static_cast<std::size_t>(img.width) * img.height * img.channels;
    if (bytes.size() - eol - 1 != count * 4) throw ValidationError("raw image payload size mismatch");
    img.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) img.data[i] = detail::read_f32(bytes.data() + eol + 1 + 4 * i);
    return img;
}

// ---------------------------------------------------------------------------
// Tagged blob: 8-byte magic, u64 header length, JSON header, little-endian f32 payload.

struct Blob {
    json header;
    std::vector<double> payload;
};

inline void save_blob(const fs::path& path, std::string_view magic, const Blob& blob)
{
    if (magic.size() != 8) throw std::logic_error("blob magic must be 8 bytes");
    auto out = detail::open_for_write(path);
    const std::string header = blob.header.dump();
    out.write(magic.data(), 8);
    detail::write_u64(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (double v : blob.payload) detail::write_f32(out, v);
    if (!out) throw IoError("write failed for " + path.string());
}

inline Blob load_blob(const fs::path& path, std::string_view magic)
{
    const std::string bytes = detail::read_file(path);
    if (bytes.size() < 16 || bytes.compare(0, 8, magic) != 0)
        throw ValidationError("unrecognized checkpoint file: " + path.string());
    const std::uint64_t header_len = detail::read_u64(bytes.data() + 8);
    if (16 + header_len > bytes.size()) throw ValidationError("truncated checkpoint header: " + path.string());
    Blob blob;
    try {
        blob.header = json::parse(bytes.substr(16, header_len));
    } catch (const json::parse_error& e) {
        throw ValidationError("bad checkpoint header in " + path.string() + ": " + e.what());
    }
    const std::size_t offset = 16 + header_len;
    if ((bytes.size() - offset) % 4 != 0) throw ValidationError("checkpoint payload is not f32-aligned");
    blob.payload.resize((bytes.size() - offset) / 4);
    for (std::size_t i = 0; i < blob.payload.size(); ++i) blob.payload[i] = detail::read_f32(bytes.data() + offset + 4 * i);
    return blob;
}

} // namespace animate4d
