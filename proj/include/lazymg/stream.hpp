#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lazymg/codec.hpp"
#include "lazymg/element.hpp"
#include "lazymg/mesh.hpp"
#include "lazymg/transfer.hpp"
#include "lazymg/types.hpp"

namespace lazymg {

/// Marker tuple p(c) = (p1, p2, p3). p1: kBottom / n in N+ / kTop.
struct CellMarker {
    static constexpr int32_t kBottom = 0;
    static constexpr int32_t kTop = -1;

    std::atomic<int32_t> p1{kBottom};
    std::atomic<bool> p2{false};
    std::atomic<int8_t> p3{0};

    bool has_payload() const { return p1.load(std::memory_order_acquire) != kBottom; }
    bool converged() const { return p1.load(std::memory_order_acquire) == kTop; }
};

/// Header byte layout: bits 7..6 = p1 class (0 bottom, 1 number, 2 top),
/// bit 5 = p2, bits 3..0 = p3.
uint8_t pack_header(int32_t p1, bool p2, int p3);
void unpack_header(uint8_t h, int& p1_class, bool& p2, int& p3);

struct OperatorSnapshot {
    Mat4 m;
    int32_t n = 0;
    uint64_t checksum = 0;
    uint32_t epoch = 0;
    bool valid = false;  // false while p1 = bottom
};

struct TransferSnapshot {
    TransferBlock P;
    uint32_t epoch = 0;
    bool valid = false;
};

struct CompressionStats {
    // fine grid (leaf cells), the paper's Table 1 accounting
    std::size_t fine_cells = 0;
    std::size_t fine_stored_bytes = 0;
    std::size_t fine_uncompressed_bytes = 0;  // 128 per cell
    double fine_factor_totals = 0.0;          // ratio of totals
    double fine_factor_mean = 0.0;            // mean of per-cell ratios
    int max_n = 0;
    double avg_n = 0.0;
    int max_sample_count = 0;  // samples per axis actually evaluated
    double max_delta = 0.0;    // largest codec error introduced at a publish
    std::array<std::size_t, 9> p3_histogram{};

    // whole stream including refined-cell records (A + P-hat + R-hat)
    std::size_t total_stored_bytes = 0;
    std::size_t total_uncompressed_bytes = 0;
    double total_factor = 0.0;
};

/// Operator storage embedded in the cell stream: per-cell marker header plus
/// compressed hierarchical surpluses of A (and P, R for refined cells).
/// Decoded values are published through a per-cell seqlock so concurrent
/// readers see a complete old or complete new matrix, never a torn mix.
class CellStream {
public:
    CellStream(Mesh& mesh, MaterialField material, double delta_max = 1e-8);

    Mesh& mesh() { return *mesh_; }
    const MaterialField& material() const { return material_; }
    double delta_max() const { return delta_max_; }

    CellMarker& marker(int32_t cell) { return slots_[cell]->marker; }
    const CellMarker& marker(int32_t cell) const { return slots_[cell]->marker; }

    /// n = 1 geometric rediscretisation of the cell, the stream baseline.
    ElementMatrix baseline(int32_t cell) const;

    /// Publish a fine-integration result: encodes the surplus at the chosen
    /// precision, stores the decoded matrix, updates p3 and the epoch.
    /// The caller updates p1 (the marker protocol lives in the assembler).
    void publish_element(int32_t cell, const Mat4& m, int n);

    /// Publish a coarse recompute (Ritz-Galerkin matrix + transfer block) as
    /// one record with a single p3 across A-hat, P-hat, R-hat. Returns false
    /// without republishing when the encoded record matches the stored one,
    /// so epoch stamps track real information flow.
    bool publish_coarse(int32_t cell, const Mat4& m, const TransferBlock& P);

    OperatorSnapshot read_element(int32_t cell) const;
    TransferSnapshot read_transfer(int32_t cell) const;

    /// Stored matrix, or the n=1 baseline while p1 = bottom.
    Mat4 element_or_baseline(int32_t cell) const;
    /// Stored transfer block, or d-linear weights while none is published.
    TransferBlock transfer_or_geometric(int32_t cell) const;

    std::size_t record_bytes(int32_t cell) const;
    std::size_t record_entries(int32_t cell) const;

    /// Cycle bookkeeping for rippling. Publishing a cell's record marks its
    /// parent dirty for the next cycle.
    void begin_cycle(uint32_t cycle);
    uint32_t cycle() const { return cycle_.load(std::memory_order_relaxed); }
    bool take_dirty(int32_t cell);        // test-and-clear for this cycle
    void mark_dirty_now(int32_t cell);    // e.g. after refinement
    bool dirty_pending(int32_t cell) const;

    /// Grow per-cell state after mesh refinement; fresh cells are p1=bottom,
    /// stale ancestors are marked dirty.
    void on_refinement(const RefinementDelta& delta);

    CompressionStats compression_stats() const;
    double max_published_delta() const { return max_delta_published_.load(); }
    int max_sample_count() const { return max_samples_.load(); }

    /// Serialise records in traversal order ("LZMG" magic + version).
    void save(const std::string& path) const;
    /// Restore decoded operators from a stream file written for this mesh.
    void load(const std::string& path);

    static uint64_t checksum_of(const Mat4& m, int32_t n);

private:
    struct OpSlot {
        std::atomic<uint32_t> seq{0};
        std::array<std::atomic<double>, 16> a{};
        std::atomic<int32_t> n{0};
        std::atomic<uint64_t> checksum{0};
        std::atomic<uint32_t> epoch{0};
    };
    struct TransferSlot {
        std::atomic<uint32_t> seq{0};
        std::array<std::atomic<double>, 64> w{};
        std::atomic<uint32_t> epoch{0};
        std::atomic<bool> has_value{false};
    };
    struct Slot {
        CellMarker marker;
        OpSlot op;
        std::unique_ptr<TransferSlot> transfer;
        std::array<std::atomic<bool>, 2> dirty{};
    };

    void ensure_size();
    void mark_parent_dirty(int32_t cell);
    int choose_record_p3(int32_t cell, const Mat4& m, const TransferBlock* P,
                         Mat4& surplus, std::array<double, 64>* p_surplus) const;

    Mesh* mesh_;
    MaterialField material_;
    double delta_max_;
    std::vector<std::unique_ptr<Slot>> slots_;
    std::atomic<uint32_t> cycle_{0};
    std::atomic<double> max_delta_published_{0.0};
    std::atomic<int> max_samples_{0};
};

}  // namespace lazymg
