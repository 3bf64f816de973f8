#include "sonicgauss/common/archive.hpp"

#include "sonicgauss/common/error.hpp"

#include <cstring>
#include <fstream>

namespace sonicgauss {

using nlohmann::json;

void save_archive(const Archive& archive, const std::filesystem::path& path) {
    json header = archive.header;
    json table = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, m] : archive.tensors) {
        table.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(m.size());
    }
    header["tensors"] = table;
    const std::string text = header.dump();

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("unwritable_path", "cannot write " + path.string(), "path");
        }
        const std::uint32_t version = kArchiveVersion;
        const std::uint64_t len = text.size();
        out.write("SGCK", 4);
        out.write(reinterpret_cast<const char*>(&version), sizeof version);
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& [name, m] : archive.tensors) {
            out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
        }
        if (!out) {
            throw Error("unwritable_path", "short write to " + path.string(), "path");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw Error("unwritable_path", "cannot move archive into place at " + path.string(), "path");
    }
}

Archive load_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("missing_file", "cannot open " + path.string(), "path");
    }
    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || std::memcmp(magic, "SGCK", 4) != 0 || version != kArchiveVersion || len > (1ULL << 32)) {
        throw Error("malformed_header", "not a SonicGauss archive: " + path.string(), "path");
    }
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    Archive a;
    try {
        a.header = json::parse(text);
        const std::streampos data_start = in.tellg();
        for (const auto& entry : a.header.at("tensors")) {
            const auto rows = entry.at("rows").get<Eigen::Index>();
            const auto cols = entry.at("cols").get<Eigen::Index>();
            const auto offset = entry.at("offset").get<std::uint64_t>();
            Matrix m(rows, cols);
            in.seekg(data_start + static_cast<std::streamoff>(offset * sizeof(double)));
            in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
            if (!in) {
                throw Error("malformed_header", "truncated tensor data in " + path.string(), "path");
            }
            a.tensors.emplace(entry.at("name").get<std::string>(), std::move(m));
        }
    } catch (const json::exception& e) {
        throw Error("malformed_header", std::string("archive header error: ") + e.what(), "path");
    }
    a.header.erase("tensors");
    return a;
}

}  // namespace sonicgauss
