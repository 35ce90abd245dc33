#pragma once

#include "splatforge/gaussian.hpp"
#include "splatforge/image.hpp"
#include "splatforge/mesh.hpp"

#include <json.hpp>

#include <string>

namespace splatforge {

/// Names of the 14 per-vertex float32 checkpoint properties, in file order.
const std::vector<std::string>& checkpoint_properties();

/// Binary little-endian PLY; values are written as float32, so clouds that
/// are already float32-representable round-trip bit-exactly.
std::string encode_checkpoint(const GaussianCloud& cloud);
GaussianCloud decode_checkpoint(const std::string& bytes);
void save_checkpoint(const GaussianCloud& cloud, const std::string& path);
GaussianCloud load_checkpoint(const std::string& path);

/// 8-bit RGBA PNG; channels are clamped to [0, 1] and rounded half to even.
void save_png(const ImageRGBA& image, const std::string& path);
/// Reads any PNG as RGBA. Throws ContractViolation when `require_alpha`
/// and the file has no alpha channel.
ImageRGBA load_png(const std::string& path, bool require_alpha = false);
std::uint8_t quantize_channel(double x);

/// Writes `<stem>.obj`, `<stem>.mtl` and `<stem>.png` next to each other.
struct MeshFiles {
    std::string obj, mtl, png;
};
MeshFiles mesh_paths(const std::string& stem);
MeshFiles save_mesh(const TexturedMesh& mesh, const std::string& stem);
/// Reads back what save_mesh wrote (texture through its MTL reference).
TexturedMesh load_mesh(const std::string& obj_path);

/// Whole-file helpers. Writes go through a temporary sibling and a rename,
/// so an interrupted write never replaces an existing artifact.
std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, const std::string& bytes);
void write_json(const std::string& path, const nlohmann::ordered_json& j);

}  // namespace splatforge
