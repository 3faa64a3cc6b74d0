#pragma once

#include <cstdint>
#include <filesystem>

#include "qcdr/image.hpp"

namespace qcdr {

/// Renders a random synthetic scene (gradient background, boxes, straight
/// lines, a checker patch, discs). Straight edges make radial distortion
/// visible, which is all the toy experiments need from source imagery.
ImageBuffer render_scene(int size, std::uint64_t seed);

/// Writes `count` scenes as scene_NNNNNN.png into dir.
void write_scene_folder(const std::filesystem::path& dir, int count, int size,
                        std::uint64_t seed);

}  // namespace qcdr
