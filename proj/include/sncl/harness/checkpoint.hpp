#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sncl/errors.hpp"
#include "sncl/harness/quantize.hpp"
#include "sncl/subnet/mask.hpp"
#include "sncl/tensor.hpp"

namespace sncl::harness {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

enum class DType : std::uint8_t { f32 = 0, q8 = 1 };

inline std::string to_string(DType d) { return d == DType::f32 ? "f32" : "q8"; }

struct MaskRecord {
    int session = 0;
    subnet::BinaryMask mask;
};

/// One named tensor with its payload and any per-session masks.
struct Record {
    std::string name;
    Shape shape;
    DType dtype = DType::f32;
    std::vector<float> f32;
    Q8 q8;
    std::vector<MaskRecord> masks;

    std::size_t size() const { return numel(shape); }

    std::vector<double> values() const {
        if (dtype == DType::q8) return dequantize_q8(q8);
        return {f32.begin(), f32.end()};
    }

    std::size_t payload_bytes() const { return dtype == DType::q8 ? 8 + q8.q.size() : 4 * f32.size(); }
};

namespace detail {

class Writer {
public:
    template <typename T>
    void put(T v) {
        char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        buf_.append(b, sizeof(T));
    }
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void str16(const std::string& s) {
        if (s.size() > 0xFFFF) throw UsageError("record name too long: " + s.substr(0, 32) + "...");
        put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::string take() { return std::move(buf_); }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : d_(data) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, d_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string_view take(std::size_t n) {
        need(n);
        auto s = d_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == d_.size(); }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (d_.size() - pos_ < n)
            throw FormatError("truncated checkpoint: need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_));
    }
    std::string_view d_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Binary container: magic "SNCL", u16 version, u64 config hash, u32-length
/// JSON metadata, then records. All integers little-endian.
///
/// record: u16 name length, name, u8 dtype, u8 rank, rank x u32 dims,
///   payload (f32: n x f32; q8: f32 min, f32 scale, n x u8),
///   u32 mask count, per mask: i32 session, u32 popcount, ceil(n/8) bytes.
class Checkpoint {
public:
    static constexpr char magic[4] = {'S', 'N', 'C', 'L'};
    static constexpr std::uint16_t current_version = 1;

    std::uint16_t version = current_version;
    std::uint64_t config_hash = 0;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<Record> records;

    Record& add_f32(const std::string& name, const Shape& shape, std::span<const double> values) {
        if (numel(shape) != values.size()) throw StructuralError("record '" + name + "': shape does not match values");
        if (find(name)) throw UsageError("duplicate record '" + name + "'");
        Record r;
        r.name = name;
        r.shape = shape;
        r.f32.assign(values.size(), 0.0f);
        for (std::size_t i = 0; i < values.size(); ++i) r.f32[i] = static_cast<float>(values[i]);
        records.push_back(std::move(r));
        return records.back();
    }

    const Record* find(const std::string& name) const {
        for (const auto& r : records)
            if (r.name == name) return &r;
        return nullptr;
    }

    const Record& at(const std::string& name) const {
        if (const auto* r = find(name)) return *r;
        throw LookupError("checkpoint has no record '" + name + "'");
    }

    /// Rewrites every f32 record whose name starts with `prefix` as q8.
    std::size_t compress(const std::string& prefix = "param/") {
        std::size_t n = 0;
        for (auto& r : records) {
            if (r.dtype != DType::f32 || r.name.rfind(prefix, 0) != 0) continue;
            const std::vector<double> v(r.f32.begin(), r.f32.end());
            r.q8 = quantize_q8(v);
            r.f32.clear();
            r.dtype = DType::q8;
            ++n;
        }
        return n;
    }

    std::string serialize() const {
        detail::Writer w;
        w.bytes(magic, 4);
        w.put<std::uint16_t>(version);
        w.put<std::uint64_t>(config_hash);
        const std::string m = meta.dump();
        w.put<std::uint32_t>(static_cast<std::uint32_t>(m.size()));
        w.bytes(m.data(), m.size());
        w.put<std::uint32_t>(static_cast<std::uint32_t>(records.size()));
        for (const auto& r : records) {
            w.str16(r.name);
            w.put<std::uint8_t>(static_cast<std::uint8_t>(r.dtype));
            w.put<std::uint8_t>(static_cast<std::uint8_t>(r.shape.size()));
            for (auto d : r.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
            if (r.dtype == DType::f32) {
                if (r.f32.size() != r.size()) throw StructuralError("record '" + r.name + "': payload size mismatch");
                w.bytes(r.f32.data(), 4 * r.f32.size());
            } else {
                if (r.q8.q.size() != r.size()) throw StructuralError("record '" + r.name + "': payload size mismatch");
                w.put<float>(r.q8.min);
                w.put<float>(r.q8.scale);
                w.bytes(r.q8.q.data(), r.q8.q.size());
            }
            w.put<std::uint32_t>(static_cast<std::uint32_t>(r.masks.size()));
            for (const auto& m : r.masks) {
                if (m.mask.shape() != r.shape) throw StructuralError("checkpoint mask for '" + r.name + "' has the wrong shape");
                w.put<std::int32_t>(m.session);
                w.put<std::uint32_t>(static_cast<std::uint32_t>(m.mask.popcount()));
                const auto packed = subnet::bitpack(m.mask);
                w.bytes(packed.data(), packed.size());
            }
        }
        return w.take();
    }

    static Checkpoint parse(std::string_view data) {
        detail::Reader r(data);
        const auto mg = r.take(4);
        if (std::memcmp(mg.data(), magic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
        Checkpoint c;
        c.version = r.get<std::uint16_t>();
        if (c.version != current_version) throw FormatError("unsupported checkpoint version " + std::to_string(c.version));
        c.config_hash = r.get<std::uint64_t>();
        const auto meta_len = r.get<std::uint32_t>();
        try {
            c.meta = nlohmann::json::parse(r.take(meta_len));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("checkpoint metadata: ") + e.what());
        }
        const auto count = r.get<std::uint32_t>();
        for (std::uint32_t k = 0; k < count; ++k) {
            Record rec;
            const auto name_len = r.get<std::uint16_t>();
            rec.name = std::string(r.take(name_len));
            const auto dt = r.get<std::uint8_t>();
            if (dt > 1) throw FormatError("record '" + rec.name + "': unknown dtype " + std::to_string(dt));
            rec.dtype = static_cast<DType>(dt);
            const auto rank = r.get<std::uint8_t>();
            for (std::uint8_t i = 0; i < rank; ++i) rec.shape.push_back(r.get<std::uint32_t>());
            const std::size_t n = rec.size();
            if (rec.dtype == DType::f32) {
                const auto raw = r.take(4 * n);
                rec.f32.resize(n);
                std::memcpy(rec.f32.data(), raw.data(), raw.size());
            } else {
                rec.q8.min = r.get<float>();
                rec.q8.scale = r.get<float>();
                const auto raw = r.take(n);
                rec.q8.q.assign(raw.begin(), raw.end());
            }
            const auto masks = r.get<std::uint32_t>();
            for (std::uint32_t m = 0; m < masks; ++m) {
                MaskRecord mr;
                mr.session = r.get<std::int32_t>();
                const auto pop = r.get<std::uint32_t>();
                const auto raw = r.take((n + 7) / 8);
                const std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
                if (n % 8 != 0 && (bytes.back() >> (n % 8)) != 0)
                    throw FormatError("record '" + rec.name + "': mask padding bits are set");
                mr.mask = subnet::bitunpack(bytes, rec.shape);
                if (mr.mask.popcount() != pop)
                    throw FormatError("record '" + rec.name + "': mask popcount does not match its bits");
                rec.masks.push_back(std::move(mr));
            }
            c.records.push_back(std::move(rec));
        }
        if (!r.done()) throw FormatError("trailing bytes after the last record");
        return c;
    }

    void save(const std::string& path) const {
        const std::string bytes = serialize();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + path + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed for '" + path + "'");
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open '" + path + "'");
        const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return parse(bytes);
    }
};

}  // namespace sncl::harness
