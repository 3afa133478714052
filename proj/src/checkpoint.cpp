#include "loopperf/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <unordered_map>

#include "loopperf/errors.hpp"
#include "loopperf/fileio.hpp"

namespace loopperf {

namespace {

constexpr char kMagic[8] = {'L', 'P', 'C', 'K', 'P', 'T', 0, 0};

template <typename T>
void put_le(std::string& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw FormatError("checkpoint truncated");
    char buf[sizeof(T)];
    std::memcpy(buf, in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    pos += sizeof(T);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

struct Parsed {
    Json header;
    std::size_t data_offset = 0;
};

Parsed parse(const std::string& bytes, const std::filesystem::path& path) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw FormatError("'" + path.string() + "' is not a checkpoint");
    std::size_t pos = sizeof(kMagic);
    const auto version = get_le<std::uint32_t>(bytes, pos);
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
    const auto len = get_le<std::uint64_t>(bytes, pos);
    if (pos + len > bytes.size()) throw FormatError("checkpoint truncated");
    Parsed p;
    try {
        p.header = Json::parse(bytes.substr(pos, len));
    } catch (const Json::exception& e) {
        throw FormatError(std::string("checkpoint header: ") + e.what());
    }
    p.data_offset = pos + len;
    return p;
}

std::string shape_str(const std::vector<std::size_t>& s) { return Json(s).dump(); }

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                     const Json& meta) {
    Json table = Json::array();
    for (const auto* p : store.all()) table.push_back({{"name", p->name}, {"shape", p->value.shape}});
    const std::string header = Json{{"meta", meta}, {"params", table}}.dump();

    std::string out(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, header.size());
    out += header;
    out.reserve(out.size() + 8 * store.element_count());
    for (const auto* p : store.all())
        for (double v : p->value.data) put_le<double>(out, v);
    write_file_atomic(path, out);
}

Json read_checkpoint_meta(const std::filesystem::path& path) {
    return parse(read_file(path), path).header.at("meta");
}

Json load_checkpoint(const std::filesystem::path& path, ParameterStore& store,
                     std::string_view prefix) {
    const std::string bytes = read_file(path);
    const Parsed parsed = parse(bytes, path);

    struct Entry {
        std::vector<std::size_t> shape;
        std::size_t offset;
    };
    std::unordered_map<std::string, Entry> entries;
    std::size_t offset = parsed.data_offset;
    for (const auto& e : parsed.header.at("params")) {
        Entry en{e.at("shape").get<std::vector<std::size_t>>(), offset};
        std::size_t n = 1;
        for (auto d : en.shape) n *= d;
        offset += 8 * n;
        entries.emplace(e.at("name").get<std::string>(), std::move(en));
    }
    if (offset != bytes.size()) throw FormatError("checkpoint data size does not match its header");

    for (auto* p : store.with_prefix(prefix)) {
        auto it = entries.find(p->name);
        if (it == entries.end()) throw FormatError("checkpoint lacks parameter '" + p->name + "'");
        if (it->second.shape != p->value.shape)
            throw FormatError("shape mismatch for '" + p->name + "': checkpoint " +
                              shape_str(it->second.shape) + ", model " + shape_str(p->value.shape));
    }
    for (auto* p : store.with_prefix(prefix)) {
        std::size_t pos = entries.at(p->name).offset;
        for (auto& v : p->value.data) v = get_le<double>(bytes, pos);
    }
    return parsed.header.at("meta");
}

}  // namespace loopperf
