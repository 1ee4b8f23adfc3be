#include "lq/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "lq/half.hpp"

namespace lq {

namespace {

constexpr char kMagic[4] = {'L', 'Q', 'T', 'N'};
constexpr std::uint16_t kVersion = 1;

// --- little-endian stream primitives ----------------------------------------

struct Writer {
    std::ostream& out;
    std::uint64_t offset = 0;

    void bytes(const void* p, std::size_t n) {
        out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out) throw IoError("write failed", offset);
        offset += n;
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) {
        std::uint8_t b[2] = {std::uint8_t(v & 0xFF), std::uint8_t(v >> 8)};
        bytes(b, 2);
    }
    void u32(std::uint32_t v) {
        std::uint8_t b[4];
        for (int i = 0; i < 4; ++i) b[i] = std::uint8_t(v >> (8 * i));
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        std::uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = std::uint8_t(v >> (8 * i));
        bytes(b, 8);
    }
};

struct Reader {
    std::istream& in;
    std::uint64_t offset = 0;

    void bytes(void* p, std::size_t n) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw IoError("unexpected end of stream", offset);
        offset += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint16_t u16() {
        std::uint8_t b[2];
        bytes(b, 2);
        return std::uint16_t(b[0] | (b[1] << 8));
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        bytes(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint8_t b[8];
        bytes(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
        return v;
    }
    void expect_eof() {
        in.peek();
        if (!in.eof()) throw ValidationError("trailing bytes after payload");
    }
};

std::uint64_t element_size_bits(DType dt) {
    switch (dt) {
        case DType::F32: return 32;
        case DType::F16: return 16;
        case DType::I8: return 8;
        case DType::U8: return 8;
        case DType::U4P: return 4;
        case DType::I32: return 32;
    }
    throw ValidationError("unknown dtype");
}

}  // namespace

const char* dtype_name(DType dt) {
    switch (dt) {
        case DType::F32: return "f32";
        case DType::F16: return "f16";
        case DType::I8: return "i8";
        case DType::U8: return "u8";
        case DType::U4P: return "u4p";
        case DType::I32: return "i32";
    }
    return "?";
}

bool dtype_valid(std::uint8_t code) { return code <= 5; }

std::uint64_t payload_bytes(DType dt, std::uint64_t count) {
    if (dt == DType::U4P) return (count + 1) / 2;
    return count * (element_size_bits(dt) / 8);
}

std::uint64_t DenseTensor::element_count() const {
    std::uint64_t n = 1;
    for (std::uint64_t d : dims) {
        if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d)
            throw ValidationError("dimension product overflows");
        n *= d;
    }
    return n;
}

void DenseTensor::validate() const {
    if (dims.empty()) throw ValidationError("tensor has no dimensions");
    for (std::size_t i = 0; i < dims.size(); ++i)
        if (dims[i] < 1)
            throw ValidationError("tensor extent " + std::to_string(i) + " is zero");
    const std::uint64_t want = payload_bytes(dtype, element_count());
    if (data.size() != want)
        throw ValidationError("payload size " + std::to_string(data.size()) +
                              " does not match dims (expected " + std::to_string(want) + ")");
}

DenseTensor DenseTensor::zeros(DType dt, std::vector<std::uint64_t> dims) {
    DenseTensor t;
    t.dtype = dt;
    t.dims = std::move(dims);
    t.data.assign(payload_bytes(dt, t.element_count()), 0);
    t.validate();
    return t;
}

std::uint8_t DenseTensor::u4_at(std::uint64_t i) const {
    const std::uint8_t b = data[i / 2];
    return (i % 2 == 0) ? (b & 0x0F) : (b >> 4);
}

void DenseTensor::set_u4(std::uint64_t i, std::uint8_t v) {
    std::uint8_t& b = data[i / 2];
    if (i % 2 == 0)
        b = static_cast<std::uint8_t>((b & 0xF0) | (v & 0x0F));
    else
        b = static_cast<std::uint8_t>((b & 0x0F) | ((v & 0x0F) << 4));
}

float DenseTensor::f32_at(std::uint64_t i) const {
    if (dtype == DType::F32) {
        float f;
        std::memcpy(&f, data.data() + i * 4, 4);
        return f;
    }
    if (dtype == DType::F16) {
        std::uint16_t h;
        std::memcpy(&h, data.data() + i * 2, 2);
        return f16_to_f32(h);
    }
    throw ValidationError("f32_at on non-float tensor");
}

DenseTensor tensor_from_f32(std::vector<std::uint64_t> dims, std::span<const float> values) {
    DenseTensor t;
    t.dtype = DType::F32;
    t.dims = std::move(dims);
    t.data.resize(values.size() * 4);
    std::memcpy(t.data.data(), values.data(), t.data.size());
    t.validate();
    return t;
}

DenseTensor tensor_from_i8(std::vector<std::uint64_t> dims, std::span<const std::int8_t> values) {
    DenseTensor t;
    t.dtype = DType::I8;
    t.dims = std::move(dims);
    t.data.resize(values.size());
    std::memcpy(t.data.data(), values.data(), t.data.size());
    t.validate();
    return t;
}

std::vector<float> tensor_to_f32(const DenseTensor& t) {
    t.validate();
    const std::uint64_t n = t.element_count();
    std::vector<float> out(n);
    for (std::uint64_t i = 0; i < n; ++i) out[i] = t.f32_at(i);
    return out;
}

void write_tensor(const DenseTensor& t, std::ostream& out) {
    t.validate();
    if (t.dims.size() > 255) throw ValidationError("too many dimensions");
    Writer w{out};
    w.bytes(kMagic, 4);
    w.u16(kVersion);
    w.u8(static_cast<std::uint8_t>(t.dtype));
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (std::uint64_t d : t.dims) w.u64(d);
    if (!t.data.empty()) w.bytes(t.data.data(), t.data.size());
    out.flush();
    if (!out) throw IoError("flush failed", w.offset);
}

DenseTensor read_tensor(std::istream& in) {
    Reader r{in};
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw ValidationError("bad magic (not an LQTN file)");
    const std::uint16_t ver = r.u16();
    if (ver != kVersion)
        throw ValidationError("unsupported version " + std::to_string(ver));
    const std::uint8_t dt_code = r.u8();
    if (!dtype_valid(dt_code))
        throw ValidationError("unknown dtype code " + std::to_string(dt_code));
    const std::uint8_t ndim = r.u8();
    if (ndim == 0) throw ValidationError("tensor has no dimensions");

    DenseTensor t;
    t.dtype = static_cast<DType>(dt_code);
    t.dims.resize(ndim);
    for (std::uint8_t i = 0; i < ndim; ++i) {
        t.dims[i] = r.u64();
        if (t.dims[i] < 1)
            throw ValidationError("tensor extent " + std::to_string(i) + " is zero");
    }
    t.data.resize(payload_bytes(t.dtype, t.element_count()));
    if (!t.data.empty()) r.bytes(t.data.data(), t.data.size());
    r.expect_eof();
    t.validate();
    return t;
}

void save_tensor(const DenseTensor& t, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing", 0);
    write_tensor(t, f);
}

DenseTensor load_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path, 0);
    return read_tensor(f);
}

}  // namespace lq
