#include "gmr/ply.hpp"

#include "gmr/error.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gmr::ply {

static_assert(std::endian::native == std::endian::little, "binary PLY IO assumes a little-endian host");

const Property *Element::find(const std::string &prop) const {
    for (const auto &p : properties) {
        if (p.name == prop) {
            return &p;
        }
    }
    return nullptr;
}

Property *Element::find(const std::string &prop) {
    for (auto &p : properties) {
        if (p.name == prop) {
            return &p;
        }
    }
    return nullptr;
}

const Element *Data::find(const std::string &element) const {
    for (const auto &e : elements) {
        if (e.name == element) {
            return &e;
        }
    }
    return nullptr;
}

std::optional<Type> parse_type(const std::string &t) {
    if (t == "char" || t == "int8") return Type::Int8;
    if (t == "uchar" || t == "uint8") return Type::UInt8;
    if (t == "short" || t == "int16") return Type::Int16;
    if (t == "ushort" || t == "uint16") return Type::UInt16;
    if (t == "int" || t == "int32") return Type::Int32;
    if (t == "uint" || t == "uint32") return Type::UInt32;
    if (t == "float" || t == "float32") return Type::Float32;
    if (t == "double" || t == "float64") return Type::Float64;
    return std::nullopt;
}

const char *type_name(Type t) {
    switch (t) {
    case Type::Int8: return "char";
    case Type::UInt8: return "uchar";
    case Type::Int16: return "short";
    case Type::UInt16: return "ushort";
    case Type::Int32: return "int";
    case Type::UInt32: return "uint";
    case Type::Float32: return "float";
    case Type::Float64: return "double";
    }
    return "?";
}

namespace {

template <typename T>
T read_raw(std::istream &in) {
    T v{};
    in.read(reinterpret_cast<char *>(&v), sizeof(T));
    return v;
}

double read_binary(std::istream &in, Type t) {
    switch (t) {
    case Type::Int8: return read_raw<std::int8_t>(in);
    case Type::UInt8: return read_raw<std::uint8_t>(in);
    case Type::Int16: return read_raw<std::int16_t>(in);
    case Type::UInt16: return read_raw<std::uint16_t>(in);
    case Type::Int32: return read_raw<std::int32_t>(in);
    case Type::UInt32: return read_raw<std::uint32_t>(in);
    case Type::Float32: return read_raw<float>(in);
    case Type::Float64: return read_raw<double>(in);
    }
    return 0.0;
}

template <typename T>
void write_raw(std::ostream &out, T v) {
    out.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

void write_binary(std::ostream &out, Type t, double v) {
    switch (t) {
    case Type::Int8: write_raw(out, static_cast<std::int8_t>(std::lround(v))); break;
    case Type::UInt8: write_raw(out, static_cast<std::uint8_t>(std::lround(v))); break;
    case Type::Int16: write_raw(out, static_cast<std::int16_t>(std::lround(v))); break;
    case Type::UInt16: write_raw(out, static_cast<std::uint16_t>(std::lround(v))); break;
    case Type::Int32: write_raw(out, static_cast<std::int32_t>(std::lround(v))); break;
    case Type::UInt32: write_raw(out, static_cast<std::uint32_t>(std::llround(v))); break;
    case Type::Float32: write_raw(out, static_cast<float>(v)); break;
    case Type::Float64: write_raw(out, v); break;
    }
}

bool is_integral(Type t) { return t != Type::Float32 && t != Type::Float64; }

void write_ascii(std::ostream &out, Type t, double v) {
    if (is_integral(t)) {
        out << std::llround(v);
        return;
    }
    char buf[64];
    const auto res = t == Type::Float32 ? std::to_chars(buf, buf + sizeof(buf), static_cast<float>(v))
                                        : std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, res.ptr - buf);
}

double parse_number(const std::string &tok, const std::string &source, std::size_t line) {
    double v = 0.0;
    const char *first = tok.data();
    const char *last = tok.data() + tok.size();
    if (!tok.empty() && tok.front() == '+') {
        ++first;
    }
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) {
        throw ParseError(source, line, "expected a number, got '" + tok + "'");
    }
    return v;
}

} // namespace

Data read(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const std::string src = path.string();
    Data data;
    std::string line;
    std::size_t line_no = 0;

    auto next_line = [&]() {
        if (!std::getline(in, line)) {
            throw ParseError(src, line_no, "unexpected end of header");
        }
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
    };

    next_line();
    if (line != "ply") {
        throw ParseError(src, line_no, "missing 'ply' magic");
    }
    bool have_format = false;
    for (;;) {
        next_line();
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw.empty()) {
            continue;
        }
        if (kw == "end_header") {
            break;
        }
        if (kw == "format") {
            std::string fmt;
            std::string version;
            ls >> fmt >> version;
            if (fmt == "ascii") {
                data.format = Format::Ascii;
            } else if (fmt == "binary_little_endian") {
                data.format = Format::BinaryLittleEndian;
            } else {
                throw ParseError(src, line_no, "unsupported PLY format '" + fmt + "'");
            }
            have_format = true;
        } else if (kw == "comment" || kw == "obj_info") {
            data.comments.push_back(line.size() > kw.size() + 1 ? line.substr(kw.size() + 1) : "");
        } else if (kw == "element") {
            Element e;
            long long count = -1;
            ls >> e.name >> count;
            if (e.name.empty() || count < 0) {
                throw ParseError(src, line_no, "malformed element declaration");
            }
            e.count = static_cast<std::size_t>(count);
            data.elements.push_back(std::move(e));
        } else if (kw == "property") {
            if (data.elements.empty()) {
                throw ParseError(src, line_no, "property declared before any element");
            }
            Property p;
            std::string t;
            ls >> t;
            if (t == "list") {
                std::string ct;
                std::string it;
                ls >> ct >> it >> p.name;
                const auto count_type = parse_type(ct);
                const auto item_type = parse_type(it);
                if (!count_type || !item_type || p.name.empty()) {
                    throw ParseError(src, line_no, "malformed list property");
                }
                p.is_list = true;
                p.count_type = *count_type;
                p.type = *item_type;
            } else {
                const auto type = parse_type(t);
                ls >> p.name;
                if (!type || p.name.empty()) {
                    throw ParseError(src, line_no, "unknown property type '" + t + "'");
                }
                p.type = *type;
            }
            data.elements.back().properties.push_back(std::move(p));
        } else {
            throw ParseError(src, line_no, "unknown header keyword '" + kw + "'");
        }
    }
    if (!have_format) {
        throw ParseError(src, line_no, "missing format line");
    }

    for (auto &e : data.elements) {
        for (auto &p : e.properties) {
            if (p.is_list) {
                p.lists.resize(e.count);
            } else {
                p.values.resize(e.count);
            }
        }
    }

    if (data.format == Format::Ascii) {
        for (auto &e : data.elements) {
            e.first_line = line_no + 1;
            for (std::size_t row = 0; row < e.count; ++row) {
                do {
                    if (!std::getline(in, line)) {
                        throw ParseError(src, line_no + 1,
                                         "unexpected end of file in element '" + e.name + "'");
                    }
                    ++line_no;
                } while (line.find_first_not_of(" \t\r") == std::string::npos);
                std::istringstream ls(line);
                std::string tok;
                auto next_token = [&]() {
                    if (!(ls >> tok)) {
                        throw ParseError(src, line_no, "too few values for element '" + e.name + "'");
                    }
                    return parse_number(tok, src, line_no);
                };
                for (auto &p : e.properties) {
                    if (p.is_list) {
                        const double n = next_token();
                        if (n < 0 || n != std::floor(n)) {
                            throw ParseError(src, line_no, "invalid list length");
                        }
                        auto &items = p.lists[row];
                        items.resize(static_cast<std::size_t>(n));
                        for (auto &item : items) {
                            item = static_cast<std::int64_t>(next_token());
                        }
                    } else {
                        p.values[row] = next_token();
                    }
                }
            }
        }
    } else {
        for (auto &e : data.elements) {
            for (std::size_t row = 0; row < e.count; ++row) {
                for (auto &p : e.properties) {
                    if (p.is_list) {
                        const auto n = static_cast<std::int64_t>(read_binary(in, p.count_type));
                        if (!in || n < 0) {
                            throw ParseError(src, 0, "truncated binary data in element '" + e.name + "'");
                        }
                        auto &items = p.lists[row];
                        items.resize(static_cast<std::size_t>(n));
                        for (auto &item : items) {
                            item = static_cast<std::int64_t>(read_binary(in, p.type));
                        }
                    } else {
                        p.values[row] = read_binary(in, p.type);
                    }
                }
                if (!in) {
                    throw ParseError(src, 0, "truncated binary data in element '" + e.name + "'");
                }
            }
        }
    }
    return data;
}

void write(const std::filesystem::path &path, const Data &data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "ply\n"
        << "format " << (data.format == Format::Ascii ? "ascii" : "binary_little_endian") << " 1.0\n";
    for (const auto &c : data.comments) {
        out << "comment " << c << "\n";
    }
    for (const auto &e : data.elements) {
        out << "element " << e.name << " " << e.count << "\n";
        for (const auto &p : e.properties) {
            if (p.is_list) {
                out << "property list " << type_name(p.count_type) << " " << type_name(p.type) << " "
                    << p.name << "\n";
            } else {
                out << "property " << type_name(p.type) << " " << p.name << "\n";
            }
            const std::size_t rows = p.is_list ? p.lists.size() : p.values.size();
            if (rows != e.count) {
                throw ShapeError("PLY property '" + p.name + "' has " + std::to_string(rows) +
                                 " rows, element '" + e.name + "' declares " +
                                 std::to_string(e.count));
            }
        }
    }
    out << "end_header\n";

    for (const auto &e : data.elements) {
        for (std::size_t row = 0; row < e.count; ++row) {
            bool first = true;
            for (const auto &p : e.properties) {
                if (data.format == Format::Ascii) {
                    auto sep = [&]() {
                        if (!first) {
                            out << ' ';
                        }
                        first = false;
                    };
                    if (p.is_list) {
                        sep();
                        out << p.lists[row].size();
                        for (auto item : p.lists[row]) {
                            out << ' ' << item;
                        }
                    } else {
                        sep();
                        write_ascii(out, p.type, p.values[row]);
                    }
                } else if (p.is_list) {
                    write_binary(out, p.count_type, static_cast<double>(p.lists[row].size()));
                    for (auto item : p.lists[row]) {
                        write_binary(out, p.type, static_cast<double>(item));
                    }
                } else {
                    write_binary(out, p.type, p.values[row]);
                }
            }
            if (data.format == Format::Ascii) {
                out << '\n';
            }
        }
    }
    if (!out) {
        throw IoError("failed while writing " + path.string());
    }
}

} // namespace gmr::ply
