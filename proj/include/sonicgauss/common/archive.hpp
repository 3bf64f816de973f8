#pragma once

#include "sonicgauss/common/matrix.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace sonicgauss {

// Binary container: magic "SGCK", u32 version, u64 header length, a JSON
// header, then raw little-endian float64 tensor data. The header's "tensors"
// table lists name, rows, cols and element offset for each entry.
struct Archive {
    nlohmann::json header = nlohmann::json::object();
    std::map<std::string, Matrix> tensors;
};

inline constexpr std::uint32_t kArchiveVersion = 1;

void save_archive(const Archive& archive, const std::filesystem::path& path);
Archive load_archive(const std::filesystem::path& path);

}  // namespace sonicgauss
