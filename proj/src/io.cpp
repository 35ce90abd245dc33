#include "splatforge/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace splatforge {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kFloatsPerGaussian = 14;

void put_f32(std::string& out, float f) {
    const auto u = std::bit_cast<std::uint32_t>(f);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
}

float get_f32(const unsigned char* p) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(p[b]) << (8 * b);
    return std::bit_cast<float>(u);
}

std::string format_double(double x) {
    char buf[64];
    return std::string(buf, std::to_chars(buf, buf + sizeof buf, x).ptr);
}

}  // namespace

const std::vector<std::string>& checkpoint_properties() {
    static const std::vector<std::string> names = {"x",       "y",       "z",       "f_dc_0", "f_dc_1",
                                                    "f_dc_2",  "opacity", "scale_0", "scale_1", "scale_2",
                                                    "rot_0",   "rot_1",   "rot_2",   "rot_3"};
    return names;
}

std::string encode_checkpoint(const GaussianCloud& cloud) {
    std::string out = "ply\nformat binary_little_endian 1.0\ncomment generation " + std::to_string(cloud.generation) +
                      "\nelement vertex " + std::to_string(cloud.size()) + "\n";
    for (const auto& name : checkpoint_properties()) out += "property float " + name + "\n";
    out += "end_header\n";
    out.reserve(out.size() + cloud.size() * kFloatsPerGaussian * 4);
    for (const auto& g : cloud.gaussians)
        for (double x : g.to_params()) put_f32(out, static_cast<float>(x));
    return out;
}

GaussianCloud decode_checkpoint(const std::string& bytes) {
    std::size_t pos = 0;
    auto next_line = [&](const char* what) {
        const std::size_t end = bytes.find('\n', pos);
        if (end == std::string::npos) throw ParseError(std::string("truncated header, expected ") + what, pos);
        std::string line = bytes.substr(pos, end - pos);
        const std::size_t at = pos;
        pos = end + 1;
        return std::pair{line, at};
    };

    if (auto [l, at] = next_line("magic"); l != "ply") throw ParseError("not a PLY file", at);
    if (auto [l, at] = next_line("format"); l != "format binary_little_endian 1.0")
        throw ParseError("unsupported PLY format: " + l, at);

    GaussianCloud cloud;
    std::size_t count = 0;
    bool have_count = false;
    std::size_t prop = 0;
    for (;;) {
        auto [line, at] = next_line("end_header");
        if (line == "end_header") break;
        if (line.rfind("comment generation ", 0) == 0) {
            const std::string v = line.substr(19);
            const auto r = std::from_chars(v.data(), v.data() + v.size(), cloud.generation);
            if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ParseError("bad generation comment", at);
        } else if (line.rfind("comment", 0) == 0) {
            continue;
        } else if (line.rfind("element vertex ", 0) == 0) {
            if (have_count) throw ParseError("duplicate vertex element", at);
            const std::string v = line.substr(15);
            const auto r = std::from_chars(v.data(), v.data() + v.size(), count);
            if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ParseError("bad vertex count", at);
            have_count = true;
        } else if (line.rfind("property ", 0) == 0) {
            if (!have_count) throw ParseError("property before element", at);
            if (prop >= kFloatsPerGaussian || line != "property float " + checkpoint_properties()[prop])
                throw ParseError("unexpected property: " + line, at);
            ++prop;
        } else {
            throw ParseError("unexpected header line: " + line, at);
        }
    }
    if (!have_count) throw ParseError("missing vertex element", pos);
    if (prop != kFloatsPerGaussian) throw ParseError("expected 14 float properties", pos);
    const std::size_t payload = bytes.size() - pos;
    if (payload != count * kFloatsPerGaussian * 4)
        throw ParseError("payload of " + std::to_string(payload) + " bytes does not hold " + std::to_string(count) +
                             " Gaussians",
                         pos);

    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + pos;
    cloud.gaussians.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        GaussianParams params;
        for (std::size_t k = 0; k < kFloatsPerGaussian; ++k, p += 4) {
            params[k] = get_f32(p);
            if (!std::isfinite(params[k]))
                throw ParseError("non-finite value", static_cast<std::size_t>(p - reinterpret_cast<const unsigned char*>(bytes.data())));
        }
        cloud.gaussians.push_back(Gaussian3D::from_params(params));
    }
    return cloud;
}

void save_checkpoint(const GaussianCloud& cloud, const std::string& path) {
    write_file_atomic(path, encode_checkpoint(cloud));
}

GaussianCloud load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

std::uint8_t quantize_channel(double x) {
    const double c = std::isfinite(x) ? std::clamp(x, 0.0, 1.0) : 0.0;
    return static_cast<std::uint8_t>(std::nearbyint(c * 255.0));  // default rounding: half to even
}

void save_png(const ImageRGBA& image, const std::string& path) {
    if (image.empty()) throw ContractViolation("cannot write an empty image: " + path);
    std::vector<std::uint8_t> pixels(image.data().size());
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = quantize_channel(image.data()[i]);

    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width());
    png.height = static_cast<png_uint_32>(image.height());
    png.format = PNG_FORMAT_RGBA;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, pixels.data(), 0, nullptr))
        throw IoError("PNG encoding failed for " + path + ": " + png.message);
    std::string bytes(size, '\0');
    if (!png_image_write_to_memory(&png, bytes.data(), &size, 0, pixels.data(), 0, nullptr))
        throw IoError("PNG encoding failed for " + path + ": " + png.message);
    bytes.resize(size);
    write_file_atomic(path, bytes);
}

ImageRGBA load_png(const std::string& path, bool require_alpha) {
    const std::string bytes = read_file(path);
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
        throw ParseError("not a readable PNG: " + path + " (" + png.message + ")", 0);
    if (require_alpha && !(png.format & PNG_FORMAT_FLAG_ALPHA)) {
        png_image_free(&png);
        throw ContractViolation(path +
                                " has no alpha channel; provide a pre-masked RGBA image (background removal is not "
                                "performed)");
    }
    png.format = PNG_FORMAT_RGBA;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr))
        throw ParseError("corrupt PNG: " + path + " (" + png.message + ")", 0);
    ImageRGBA img(static_cast<int>(png.width), static_cast<int>(png.height));
    for (std::size_t i = 0; i < pixels.size(); ++i) img.data()[i] = pixels[i] / 255.0;
    return img;
}

MeshFiles mesh_paths(const std::string& stem) { return {stem + ".obj", stem + ".mtl", stem + ".png"}; }

MeshFiles save_mesh(const TexturedMesh& mesh, const std::string& stem) {
    if (!mesh.has_texture()) throw ContractViolation("save_mesh needs a textured, UV-mapped mesh");
    if (mesh.normals.size() != mesh.vertices.size()) throw ContractViolation("save_mesh needs per-vertex normals");
    const MeshFiles files = mesh_paths(stem);
    const std::string mtl_name = fs::path(files.mtl).filename().string();
    const std::string png_name = fs::path(files.png).filename().string();

    save_png(mesh.texture, files.png);
    write_file_atomic(files.mtl, "newmtl surface\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1\nmap_Kd " + png_name + "\n");

    std::string obj = "mtllib " + mtl_name + "\nusemtl surface\n";
    for (const auto& v : mesh.vertices)
        obj += "v " + format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z()) + "\n";
    for (const auto& t : mesh.uvs) obj += "vt " + format_double(t.x()) + " " + format_double(t.y()) + "\n";
    for (const auto& n : mesh.normals)
        obj += "vn " + format_double(n.x()) + " " + format_double(n.y()) + " " + format_double(n.z()) + "\n";
    for (const auto& tri : mesh.triangles) {
        obj += "f";
        for (auto i : tri) {
            const std::string s = std::to_string(i + 1);
            obj += " " + s + "/" + s + "/" + s;
        }
        obj += "\n";
    }
    write_file_atomic(files.obj, obj);
    return files;
}

TexturedMesh load_mesh(const std::string& obj_path) {
    const std::string text = read_file(obj_path);
    TexturedMesh mesh;
    std::string mtllib;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::istringstream line(text.substr(pos, end - pos));
        const std::size_t at = pos;
        pos = end + 1;
        std::string tag;
        if (!(line >> tag) || tag[0] == '#') continue;
        auto fail = [&](const std::string& what) { throw ParseError(obj_path + ": " + what, at); };
        if (tag == "v" || tag == "vn") {
            double x, y, z;
            if (!(line >> x >> y >> z)) fail("bad " + tag + " record");
            (tag == "v" ? mesh.vertices : mesh.normals).emplace_back(x, y, z);
        } else if (tag == "vt") {
            double u, v;
            if (!(line >> u >> v)) fail("bad vt record");
            mesh.uvs.emplace_back(u, v);
        } else if (tag == "f") {
            Triangle tri;
            for (int k = 0; k < 3; ++k) {
                std::string corner;
                if (!(line >> corner)) fail("face needs three corners");
                unsigned long v = 0, t = 0, n = 0;
                if (std::sscanf(corner.c_str(), "%lu/%lu/%lu", &v, &t, &n) != 3 || v != t || v != n || v == 0)
                    fail("face corners must be i/i/i");
                tri[k] = static_cast<std::uint32_t>(v - 1);
            }
            std::string extra;
            if (line >> extra) fail("only triangles are supported");
            mesh.triangles.push_back(tri);
        } else if (tag == "mtllib") {
            line >> mtllib;
        }
    }
    for (const auto& t : mesh.triangles)
        for (auto i : t)
            if (i >= mesh.vertices.size()) throw ParseError(obj_path + ": face index out of range", 0);
    if (!mtllib.empty()) {
        const fs::path dir = fs::path(obj_path).parent_path();
        std::istringstream mtl(read_file((dir / mtllib).string()));
        std::string tag, map;
        while (mtl >> tag)
            if (tag == "map_Kd") mtl >> map;
        if (!map.empty()) mesh.texture = load_png((dir / map).string());
    }
    return mesh;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const std::string tmp = path + ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed for " + path);
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

void write_json(const std::string& path, const nlohmann::ordered_json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

}  // namespace splatforge
