#pragma once

#include <cstdint>

namespace ganlab {

// Counter-free deterministic random stream: xoshiro256** seeded through
// splitmix64 from (seed, stream_id). Identical (seed, stream_id, draw
// sequence) yields bit-identical output on every platform; distinct
// stream_ids give decorrelated substreams of the same run seed.
class RngStream {
public:
    RngStream() : RngStream(0, 0) {}
    RngStream(uint64_t seed, uint64_t stream_id);

    uint64_t seed() const { return seed_; }
    uint64_t stream_id() const { return stream_id_; }

    // Fresh stream derived from this stream's seed and a caller-chosen id.
    RngStream substream(uint64_t id) const;

    uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Uniform integer in [0, n), n > 0.
    int uniform_int(int n);
    // Standard normal via Box-Muller; the spare draw is cached.
    double normal();

private:
    uint64_t seed_;
    uint64_t stream_id_;
    uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace ganlab
