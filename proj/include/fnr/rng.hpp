#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>

namespace fnr {

// xoshiro256++ with splitmix64 seeding. Self-contained so that checkpointed
// state is a fixed set of plain integers and stream replay is bit-exact
// across platforms.
class Rng {
public:
    Rng() : Rng(0) {}

    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) {
            x += 0x9e3779b97f4a7c15ull;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            word = z ^ (z >> 31);
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller; the spare value is part of the state.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 <= 0.0) {
            u1 = 0x1.0p-53;
        }
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    void save(std::ostream& out) const {
        write_u64(out, state_[0]);
        write_u64(out, state_[1]);
        write_u64(out, state_[2]);
        write_u64(out, state_[3]);
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(spare_));
        __builtin_memcpy(&bits, &spare_, sizeof(bits));
        write_u64(out, bits);
        const char flag = has_spare_ ? 1 : 0;
        out.write(&flag, 1);
    }

    void load(std::istream& in) {
        state_[0] = read_u64(in);
        state_[1] = read_u64(in);
        state_[2] = read_u64(in);
        state_[3] = read_u64(in);
        const std::uint64_t bits = read_u64(in);
        __builtin_memcpy(&spare_, &bits, sizeof(spare_));
        char flag = 0;
        in.read(&flag, 1);
        has_spare_ = (flag != 0);
    }

    bool operator==(const Rng& other) const {
        return state_[0] == other.state_[0] && state_[1] == other.state_[1] &&
               state_[2] == other.state_[2] && state_[3] == other.state_[3] &&
               has_spare_ == other.has_spare_ && (!has_spare_ || spare_ == other.spare_);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static void write_u64(std::ostream& out, std::uint64_t v) {
        char buf[8];
        for (int i = 0; i < 8; ++i) {
            buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
        }
        out.write(buf, 8);
    }

    static std::uint64_t read_u64(std::istream& in) {
        unsigned char buf[8] = {};
        in.read(reinterpret_cast<char*>(buf), 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
        }
        return v;
    }

    std::uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace fnr
