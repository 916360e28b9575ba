#include "spav/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace spav {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'A', 'V'};

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T v) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T read_le(std::span<const std::uint8_t> bytes, std::size_t& pos) {
    if (pos + sizeof(T) > bytes.size())
        throw ParseError("checkpoint: truncated at byte " + std::to_string(pos));
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

std::size_t dtype_size(SectionType t) {
    switch (t) {
        case SectionType::F32: return 4;
        case SectionType::U32: return 4;
        case SectionType::U8: return 1;
    }
    return 1;
}

}  // namespace

void Checkpoint::add_f32(const std::string& name, std::span<const double> values,
                         std::vector<std::uint64_t> shape) {
    CheckpointSection s;
    s.name = name;
    s.dtype = SectionType::F32;
    s.shape = std::move(shape);
    if (s.element_count() != values.size())
        throw ShapeMismatch("checkpoint: shape does not match value count for " + name);
    s.data.resize(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const float f = static_cast<float>(values[i]);
        std::memcpy(s.data.data() + i * 4, &f, 4);
    }
    remove(name);
    sections_.push_back(std::move(s));
}

void Checkpoint::add_u32(const std::string& name, std::span<const std::uint32_t> values,
                         std::vector<std::uint64_t> shape) {
    CheckpointSection s;
    s.name = name;
    s.dtype = SectionType::U32;
    s.shape = std::move(shape);
    if (s.element_count() != values.size())
        throw ShapeMismatch("checkpoint: shape does not match value count for " + name);
    s.data.resize(values.size() * 4);
    std::memcpy(s.data.data(), values.data(), s.data.size());
    remove(name);
    sections_.push_back(std::move(s));
}

void Checkpoint::add_bytes(const std::string& name, std::span<const std::uint8_t> bytes) {
    CheckpointSection s;
    s.name = name;
    s.dtype = SectionType::U8;
    s.shape = {bytes.size()};
    s.data.assign(bytes.begin(), bytes.end());
    remove(name);
    sections_.push_back(std::move(s));
}

void Checkpoint::add_text(const std::string& name, const std::string& text) {
    add_bytes(name, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

const CheckpointSection* Checkpoint::find(const std::string& name) const {
    for (const auto& s : sections_)
        if (s.name == name) return &s;
    return nullptr;
}

void Checkpoint::remove(const std::string& name) {
    for (auto it = sections_.begin(); it != sections_.end(); ++it) {
        if (it->name == name) {
            sections_.erase(it);
            return;
        }
    }
}

std::vector<double> Checkpoint::get_f32_as_f64(const std::string& name) const {
    const CheckpointSection* s = find(name);
    if (!s || s->dtype != SectionType::F32) throw ParseError("checkpoint: missing f32 section " + name);
    std::vector<double> out(s->element_count());
    for (std::size_t i = 0; i < out.size(); ++i) {
        float f;
        std::memcpy(&f, s->data.data() + i * 4, 4);
        out[i] = static_cast<double>(f);
    }
    return out;
}

std::vector<std::uint32_t> Checkpoint::get_u32(const std::string& name) const {
    const CheckpointSection* s = find(name);
    if (!s || s->dtype != SectionType::U32) throw ParseError("checkpoint: missing u32 section " + name);
    std::vector<std::uint32_t> out(s->element_count());
    std::memcpy(out.data(), s->data.data(), s->data.size());
    return out;
}

std::vector<std::uint8_t> Checkpoint::get_bytes(const std::string& name) const {
    const CheckpointSection* s = find(name);
    if (!s || s->dtype != SectionType::U8) throw ParseError("checkpoint: missing u8 section " + name);
    return s->data;
}

std::string Checkpoint::get_text(const std::string& name) const {
    auto b = get_bytes(name);
    return std::string(b.begin(), b.end());
}

std::vector<std::uint64_t> Checkpoint::get_shape(const std::string& name) const {
    const CheckpointSection* s = find(name);
    if (!s) throw ParseError("checkpoint: missing section " + name);
    return s->shape;
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    append_le<std::uint32_t>(out, kVersion);
    append_le<std::uint32_t>(out, static_cast<std::uint32_t>(sections_.size()));
    for (const auto& s : sections_) {
        append_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.name.size()));
        out.insert(out.end(), s.name.begin(), s.name.end());
        out.push_back(static_cast<std::uint8_t>(s.dtype));
        append_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.shape.size()));
        for (auto d : s.shape) append_le<std::uint64_t>(out, d);
        append_le<std::uint64_t>(out, static_cast<std::uint64_t>(s.data.size()));
        out.insert(out.end(), s.data.begin(), s.data.end());
    }
    return out;
}

Checkpoint Checkpoint::deserialize(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ParseError("checkpoint: bad magic");
    pos = 4;
    const auto version = read_le<std::uint32_t>(bytes, pos);
    if (version != kVersion)
        throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    const auto count = read_le<std::uint32_t>(bytes, pos);
    Checkpoint ck;
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointSection s;
        const auto name_len = read_le<std::uint32_t>(bytes, pos);
        if (pos + name_len > bytes.size()) throw ParseError("checkpoint: truncated name");
        s.name.assign(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
        pos += name_len;
        const auto dtype = read_le<std::uint8_t>(bytes, pos);
        if (dtype > 2) throw ParseError("checkpoint: unknown dtype " + std::to_string(dtype));
        s.dtype = static_cast<SectionType>(dtype);
        const auto rank = read_le<std::uint32_t>(bytes, pos);
        s.shape.resize(rank);
        for (auto& d : s.shape) d = read_le<std::uint64_t>(bytes, pos);
        const auto payload = read_le<std::uint64_t>(bytes, pos);
        if (payload != s.element_count() * dtype_size(s.dtype))
            throw ParseError("checkpoint: payload size mismatch in " + s.name);
        if (pos + payload > bytes.size()) throw ParseError("checkpoint: truncated payload in " + s.name);
        s.data.assign(bytes.begin() + pos, bytes.begin() + pos + payload);
        pos += payload;
        ck.sections_.push_back(std::move(s));
    }
    return ck;
}

void Checkpoint::write(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

Checkpoint Checkpoint::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace spav
