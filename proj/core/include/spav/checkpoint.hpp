#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spav/error.hpp"

namespace spav {

// Binary checkpoint container: magic "SPAV", version u32, section count u32,
// then per section: name, dtype, shape, little-endian payload. Floating
// payloads are stored as f32; training math stays f64 in memory.
enum class SectionType : std::uint8_t { F32 = 0, U32 = 1, U8 = 2 };

struct CheckpointSection {
    std::string name;
    SectionType dtype = SectionType::F32;
    std::vector<std::uint64_t> shape;
    std::vector<std::uint8_t> data;

    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
};

class Checkpoint {
  public:
    static constexpr std::uint32_t kVersion = 1;

    void add_f32(const std::string& name, std::span<const double> values,
                 std::vector<std::uint64_t> shape);
    void add_u32(const std::string& name, std::span<const std::uint32_t> values,
                 std::vector<std::uint64_t> shape);
    void add_bytes(const std::string& name, std::span<const std::uint8_t> bytes);
    void add_text(const std::string& name, const std::string& text);

    const CheckpointSection* find(const std::string& name) const;
    bool has(const std::string& name) const { return find(name) != nullptr; }

    // Typed readers; throw ParseError when missing or mistyped.
    std::vector<double> get_f32_as_f64(const std::string& name) const;
    std::vector<std::uint32_t> get_u32(const std::string& name) const;
    std::vector<std::uint8_t> get_bytes(const std::string& name) const;
    std::string get_text(const std::string& name) const;
    std::vector<std::uint64_t> get_shape(const std::string& name) const;

    void remove(const std::string& name);

    std::vector<std::uint8_t> serialize() const;
    static Checkpoint deserialize(std::span<const std::uint8_t> bytes);

    void write(const std::filesystem::path& path) const;
    static Checkpoint read(const std::filesystem::path& path);

    const std::vector<CheckpointSection>& sections() const { return sections_; }

  private:
    std::vector<CheckpointSection> sections_;
};

}  // namespace spav
