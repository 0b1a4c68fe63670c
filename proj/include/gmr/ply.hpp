#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gmr::ply {

enum class Type { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

enum class Format { Ascii, BinaryLittleEndian };

struct Property {
    std::string name;
    Type type = Type::Float32;
    bool is_list = false;
    Type count_type = Type::UInt8;

    /// Filled for scalar properties, one entry per element row.
    std::vector<double> values;
    /// Filled for list properties.
    std::vector<std::vector<std::int64_t>> lists;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> properties;
    /// Line of the first row in an ASCII body; 0 for binary files.
    std::size_t first_line = 0;

    const Property *find(const std::string &prop) const;
    Property *find(const std::string &prop);
};

struct Data {
    Format format = Format::Ascii;
    std::vector<std::string> comments;
    std::vector<Element> elements;

    const Element *find(const std::string &element) const;
};

std::optional<Type> parse_type(const std::string &token);
const char *type_name(Type t);

/// Reads ASCII or binary little-endian PLY. Throws ParseError with the
/// offending line number (header and ASCII body) or IoError.
Data read(const std::filesystem::path &path);

/// Writes all elements. Scalar values are converted to each property's
/// declared type; ASCII float64 uses round-trip precision.
void write(const std::filesystem::path &path, const Data &data);

} // namespace gmr::ply
