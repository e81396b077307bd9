#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace stowave {

// Counter-based generator (Philox4x32-10). A stream is fully determined by
// (master seed, stream id); draw position lives in the counter, so streams
// for distinct ids never overlap and results do not depend on scheduling.
class CounterRng {
public:
    CounterRng() : CounterRng(0, 0) {}
    CounterRng(uint64_t master_seed, uint64_t stream_id)
        : key_{static_cast<uint32_t>(master_seed), static_cast<uint32_t>(master_seed >> 32)},
          counter_{0, 0, static_cast<uint32_t>(stream_id), static_cast<uint32_t>(stream_id >> 32)} {}

    // one 64-bit uniform draw in [0,1) with 53 random bits
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    uint64_t next_u64() {
        if (sub_ == 0) {
            block_ = philox(counter_, key_);
            ++counter_[0];
            if (counter_[0] == 0) ++counter_[1];
            sub_ = 2;
            return (static_cast<uint64_t>(block_[1]) << 32) | block_[0];
        }
        sub_ = 0;
        return (static_cast<uint64_t>(block_[3]) << 32) | block_[2];
    }

    // standard normal via Box-Muller on the raw uniform stream
    double gauss() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(th);
        have_spare_ = true;
        return r * std::cos(th);
    }

private:
    using Block = std::array<uint32_t, 4>;
    using Key = std::array<uint32_t, 2>;

    static void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
        const uint64_t p = static_cast<uint64_t>(a) * b;
        hi = static_cast<uint32_t>(p >> 32);
        lo = static_cast<uint32_t>(p);
    }

    static Block philox(Block c, Key k) {
        constexpr uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
        constexpr uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
        for (int round = 0; round < 10; ++round) {
            uint32_t hi0, lo0, hi1, lo1;
            mulhilo(M0, c[0], hi0, lo0);
            mulhilo(M1, c[2], hi1, lo1);
            const Block next = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
            c = next;
            k[0] += W0;
            k[1] += W1;
        }
        return c;
    }

    Key key_;
    Block counter_{0, 0, 0, 0};
    Block block_{};
    int sub_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace stowave
