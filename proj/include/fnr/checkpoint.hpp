#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fnr/adam.hpp"
#include "fnr/errors.hpp"
#include "fnr/rng.hpp"
#include "fnr/tensor.hpp"

namespace fnr {

// Binary checkpoint layout (all integers little-endian):
//   magic "FNRR", u32 format_version,
//   u8 stage tag, u8 dtype bytes (4/8), u64 iteration,
//   u32 optimizer count, u64 step counter per optimizer,
//   rng state (4x u64 + f64 spare + u8 flag),
//   u32 record count, then per record:
//     u32 name length, name bytes, u8 dtype bytes, u32 ndim, u64 dims...,
//     u64 payload bytes, raw little-endian payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'F', 'N', 'R', 'R'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

enum class StageTag : std::uint8_t { Coarse = 1, Refine = 2 };

inline const char* stage_name(StageTag tag) {
    return tag == StageTag::Coarse ? "coarse" : "refine";
}

struct CheckpointHeader {
    std::uint32_t version = 0;
    StageTag stage = StageTag::Coarse;
    int dtype_bytes = 0;
    std::int64_t iteration = 0;
    std::vector<std::int64_t> adam_steps;
};

template <typename T>
struct NamedArray {
    std::string name;
    Shape shape;
    std::span<T> data;
};

// Gathers parameter values plus the optimizer moment buffers under stable
// names, in declaration order.
template <typename T>
std::vector<NamedArray<T>> checkpoint_arrays(ParamList<T>& params, Adam<T>& opt,
                                             const std::string& opt_prefix) {
    std::vector<NamedArray<T>> arrays;
    arrays.reserve(params.size() * 3);
    for (auto& p : params) {
        arrays.push_back({"param." + p.name, p.tensor.shape(), p.tensor.values_mut()});
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        arrays.push_back({opt_prefix + ".m." + params[i].name, params[i].tensor.shape(),
                          std::span<T>(opt.moment1(i))});
        arrays.push_back({opt_prefix + ".v." + params[i].name, params[i].tensor.shape(),
                          std::span<T>(opt.moment2(i))});
    }
    return arrays;
}

namespace detail {

inline void write_bytes(std::ostream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

template <typename I>
void write_int(std::ostream& out, I value) {
    write_bytes(out, &value, sizeof(I));
}

inline void read_bytes(std::istream& in, void* data, std::size_t n, const char* what) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw TruncatedError(std::string("checkpoint truncated while reading ") + what);
    }
}

template <typename I>
I read_int(std::istream& in, const char* what) {
    I value;
    read_bytes(in, &value, sizeof(I), what);
    return value;
}

inline CheckpointHeader read_header(std::istream& in, Rng* rng_out) {
    char magic[4];
    read_bytes(in, magic, 4, "magic");
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw IoError("not a checkpoint file (bad magic)");
    }
    CheckpointHeader header;
    header.version = read_int<std::uint32_t>(in, "version");
    if (header.version != kCheckpointVersion) {
        throw VersionError("checkpoint format version " + std::to_string(header.version) +
                           " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    header.stage = static_cast<StageTag>(read_int<std::uint8_t>(in, "stage"));
    header.dtype_bytes = read_int<std::uint8_t>(in, "dtype");
    header.iteration = static_cast<std::int64_t>(read_int<std::uint64_t>(in, "iteration"));
    const auto n_opt = read_int<std::uint32_t>(in, "optimizer count");
    header.adam_steps.resize(n_opt);
    for (auto& t : header.adam_steps) {
        t = static_cast<std::int64_t>(read_int<std::uint64_t>(in, "optimizer step"));
    }
    if (rng_out) {
        rng_out->load(in);
        if (!in) {
            throw TruncatedError("checkpoint truncated while reading rng state");
        }
    }
    return header;
}

} // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, StageTag stage, std::int64_t iteration, const Rng& rng,
                     std::span<const std::int64_t> adam_steps,
                     const std::vector<NamedArray<T>>& arrays) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    detail::write_bytes(out, kCheckpointMagic, 4);
    detail::write_int<std::uint32_t>(out, kCheckpointVersion);
    detail::write_int<std::uint8_t>(out, static_cast<std::uint8_t>(stage));
    detail::write_int<std::uint8_t>(out, static_cast<std::uint8_t>(sizeof(T)));
    detail::write_int<std::uint64_t>(out, static_cast<std::uint64_t>(iteration));
    detail::write_int<std::uint32_t>(out, static_cast<std::uint32_t>(adam_steps.size()));
    for (auto t : adam_steps) {
        detail::write_int<std::uint64_t>(out, static_cast<std::uint64_t>(t));
    }
    rng.save(out);
    detail::write_int<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
        detail::write_int<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
        detail::write_bytes(out, a.name.data(), a.name.size());
        detail::write_int<std::uint8_t>(out, static_cast<std::uint8_t>(sizeof(T)));
        detail::write_int<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
        for (auto d : a.shape) {
            detail::write_int<std::uint64_t>(out, static_cast<std::uint64_t>(d));
        }
        detail::write_int<std::uint64_t>(out, static_cast<std::uint64_t>(a.data.size() * sizeof(T)));
        detail::write_bytes(out, a.data.data(), a.data.size() * sizeof(T));
    }
    if (!out) {
        throw IoError("write failed for '" + path + "'");
    }
}

inline CheckpointHeader read_checkpoint_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint '" + path + "'");
    }
    return detail::read_header(in, nullptr);
}

// Loads into pre-built arrays. Every expected array must be present with the
// matching shape, and the file must not contain unknown records; both cases
// raise VersionError (profile/checkpoint mismatch).
template <typename T>
CheckpointHeader load_checkpoint(const std::string& path, StageTag expected_stage, Rng& rng,
                                 std::span<std::int64_t> adam_steps,
                                 std::vector<NamedArray<T>>& arrays) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint '" + path + "'");
    }
    CheckpointHeader header = detail::read_header(in, &rng);
    if (header.stage != expected_stage) {
        throw VersionError(std::string("checkpoint stage '") + stage_name(header.stage) +
                           "' does not match expected stage '" + stage_name(expected_stage) + "'");
    }
    if (header.dtype_bytes != static_cast<int>(sizeof(T))) {
        throw VersionError("checkpoint precision f" + std::to_string(header.dtype_bytes * 8) +
                           " does not match requested f" + std::to_string(sizeof(T) * 8));
    }
    if (header.adam_steps.size() != adam_steps.size()) {
        throw VersionError("checkpoint carries " + std::to_string(header.adam_steps.size()) +
                           " optimizer states, expected " + std::to_string(adam_steps.size()));
    }
    for (std::size_t i = 0; i < adam_steps.size(); ++i) {
        adam_steps[i] = header.adam_steps[i];
    }

    const auto n_records = detail::read_int<std::uint32_t>(in, "record count");
    std::map<std::string, std::pair<Shape, std::vector<T>>> records;
    for (std::uint32_t r = 0; r < n_records; ++r) {
        const auto name_len = detail::read_int<std::uint32_t>(in, "record name length");
        std::string name(name_len, '\0');
        detail::read_bytes(in, name.data(), name_len, "record name");
        const auto dtype = detail::read_int<std::uint8_t>(in, "record dtype");
        if (dtype != sizeof(T)) {
            throw VersionError("record '" + name + "' has dtype f" + std::to_string(dtype * 8) +
                               ", expected f" + std::to_string(sizeof(T) * 8));
        }
        const auto ndim = detail::read_int<std::uint32_t>(in, "record rank");
        Shape shape(ndim);
        for (auto& d : shape) {
            d = static_cast<std::int64_t>(detail::read_int<std::uint64_t>(in, "record dim"));
        }
        const auto payload = detail::read_int<std::uint64_t>(in, "record payload size");
        if (payload != static_cast<std::uint64_t>(shape_numel(shape)) * sizeof(T)) {
            throw IoError("record '" + name + "' payload size disagrees with its shape");
        }
        std::vector<T> data(static_cast<std::size_t>(shape_numel(shape)));
        detail::read_bytes(in, data.data(), data.size() * sizeof(T), "record payload");
        records.emplace(std::move(name), std::make_pair(std::move(shape), std::move(data)));
    }

    for (auto& a : arrays) {
        auto it = records.find(a.name);
        if (it == records.end()) {
            throw VersionError("checkpoint is missing tensor '" + a.name +
                               "' (profile/checkpoint mismatch)");
        }
        if (it->second.first != a.shape) {
            throw VersionError("tensor '" + a.name + "' has shape " +
                               shape_to_string(it->second.first) + " in the checkpoint but " +
                               shape_to_string(a.shape) + " in the model (profile mismatch)");
        }
        std::copy(it->second.second.begin(), it->second.second.end(), a.data.begin());
        records.erase(it);
    }
    if (!records.empty()) {
        throw VersionError("checkpoint contains unexpected tensor '" + records.begin()->first +
                           "' (profile/checkpoint mismatch)");
    }
    return header;
}

} // namespace fnr
