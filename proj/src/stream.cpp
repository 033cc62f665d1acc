#include "lazymg/stream.hpp"

#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>

namespace lazymg {

namespace {

constexpr uint32_t kMagic = 0x4c5a4d47;  // "LZMG"
constexpr uint32_t kVersion = 1;

// seqlock write/read over relaxed atomic payloads
template <typename Fn>
void seq_write(std::atomic<uint32_t>& seq, Fn&& write_payload) {
    uint32_t s = seq.load(std::memory_order_relaxed);
    seq.store(s + 1, std::memory_order_relaxed);
    std::atomic_thread_fence(std::memory_order_release);
    write_payload();
    seq.store(s + 2, std::memory_order_release);
}

template <typename Fn>
void seq_read(const std::atomic<uint32_t>& seq, Fn&& read_payload) {
    for (;;) {
        uint32_t s1 = seq.load(std::memory_order_acquire);
        if (s1 & 1u) continue;
        read_payload();
        std::atomic_thread_fence(std::memory_order_acquire);
        uint32_t s2 = seq.load(std::memory_order_relaxed);
        if (s1 == s2) return;
    }
}

void fnv_mix(uint64_t& h, uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ull;
}

}  // namespace

uint8_t pack_header(int32_t p1, bool p2, int p3) {
    int cls = p1 == CellMarker::kBottom ? 0 : (p1 == CellMarker::kTop ? 2 : 1);
    return static_cast<uint8_t>((cls << 6) | (p2 ? 0x20 : 0) | (p3 & 0x0f));
}

void unpack_header(uint8_t h, int& p1_class, bool& p2, int& p3) {
    p1_class = (h >> 6) & 0x3;
    p2 = (h & 0x20) != 0;
    p3 = h & 0x0f;
    if (p1_class == 3 || p3 == 1 || p3 > 8)
        throw corrupt_stream_error("invalid record header byte");
}

uint64_t CellStream::checksum_of(const Mat4& m, int32_t n) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (double v : m.a) fnv_mix(h, std::bit_cast<uint64_t>(v));
    fnv_mix(h, static_cast<uint64_t>(static_cast<uint32_t>(n)));
    return h;
}

CellStream::CellStream(Mesh& mesh, MaterialField material, double delta_max)
    : mesh_(&mesh), material_(std::move(material)), delta_max_(delta_max) {
    ensure_size();
}

void CellStream::ensure_size() {
    std::size_t want = mesh_->cell_count();
    while (slots_.size() < want) {
        auto slot = std::make_unique<Slot>();
        int32_t id = static_cast<int32_t>(slots_.size());
        if (mesh_->cell(id).refined) slot->transfer = std::make_unique<TransferSlot>();
        slots_.push_back(std::move(slot));
    }
    for (std::size_t id = 0; id < slots_.size(); ++id)
        if (mesh_->cell(static_cast<int32_t>(id)).refined && !slots_[id]->transfer)
            slots_[id]->transfer = std::make_unique<TransferSlot>();
}

ElementMatrix CellStream::baseline(int32_t cell) const {
    return integrate_element(cell_box(*mesh_, mesh_->cell(cell)), material_, 1);
}

int CellStream::choose_record_p3(int32_t cell, const Mat4& m, const TransferBlock* P,
                                 Mat4& surplus, std::array<double, 64>* p_surplus) const {
    surplus = m - baseline(cell).m;
    if (!P) return codec::choose_precision(std::span(surplus.a), delta_max_);

    const TransferBlock& geo = geometric_prolongation();
    for (int i = 0; i < 64; ++i) (*p_surplus)[i] = P->w[i] - geo.w[i];
    // one p3 for the whole record: A-hat, P-hat and R-hat (the transpose)
    std::array<double, 80> joint{};
    std::memcpy(joint.data(), surplus.a.data(), 16 * sizeof(double));
    std::memcpy(joint.data() + 16, p_surplus->data(), 64 * sizeof(double));
    return codec::choose_precision(std::span(joint), delta_max_);
}

void CellStream::publish_element(int32_t cell, const Mat4& m, int n) {
    Mat4 surplus;
    int p3 = choose_record_p3(cell, m, nullptr, surplus, nullptr);

    // absorb the codec error now: the stored matrix is the decoded one
    Mat4 decoded = baseline(cell).m;
    double delta = 0.0;
    for (int i = 0; i < 16; ++i) {
        double rt = codec::roundtrip(surplus.a[i], p3);
        delta = std::max(delta, std::fabs(rt - surplus.a[i]));
        decoded.a[i] += rt;
    }
    double prev = max_delta_published_.load(std::memory_order_relaxed);
    while (delta > prev &&
           !max_delta_published_.compare_exchange_weak(prev, delta, std::memory_order_relaxed)) {
    }
    int prev_n = max_samples_.load(std::memory_order_relaxed);
    while (n > prev_n &&
           !max_samples_.compare_exchange_weak(prev_n, n, std::memory_order_relaxed)) {
    }

    Slot& s = *slots_[cell];
    uint64_t ck = checksum_of(decoded, n);
    uint32_t ep = cycle_.load(std::memory_order_relaxed);
    seq_write(s.op.seq, [&] {
        for (int i = 0; i < 16; ++i) s.op.a[i].store(decoded.a[i], std::memory_order_relaxed);
        s.op.n.store(n, std::memory_order_relaxed);
        s.op.checksum.store(ck, std::memory_order_relaxed);
        s.op.epoch.store(ep, std::memory_order_relaxed);
    });
    s.marker.p3.store(static_cast<int8_t>(p3), std::memory_order_release);
    mark_parent_dirty(cell);
}

bool CellStream::publish_coarse(int32_t cell, const Mat4& m, const TransferBlock& P) {
    Mat4 surplus;
    std::array<double, 64> p_surplus{};
    int p3 = choose_record_p3(cell, m, &P, surplus, &p_surplus);

    Mat4 decoded = baseline(cell).m;
    TransferBlock p_decoded = geometric_prolongation();
    double delta = 0.0;
    for (int i = 0; i < 16; ++i) {
        double rt = codec::roundtrip(surplus.a[i], p3);
        delta = std::max(delta, std::fabs(rt - surplus.a[i]));
        decoded.a[i] += rt;
    }
    for (int i = 0; i < 64; ++i) {
        double rt = codec::roundtrip(p_surplus[i], p3);
        delta = std::max(delta, std::fabs(rt - p_surplus[i]));
        p_decoded.w[i] += rt;
    }

    if (marker(cell).converged()) {
        OperatorSnapshot cur = read_element(cell);
        TransferSnapshot curP = read_transfer(cell);
        if (cur.valid && curP.valid && cur.m.a == decoded.a && curP.P.w == p_decoded.w)
            return false;
    }

    double prev = max_delta_published_.load(std::memory_order_relaxed);
    while (delta > prev &&
           !max_delta_published_.compare_exchange_weak(prev, delta, std::memory_order_relaxed)) {
    }

    Slot& s = *slots_[cell];
    if (!s.transfer) s.transfer = std::make_unique<TransferSlot>();
    uint32_t ep = cycle_.load(std::memory_order_relaxed);
    uint64_t ck = checksum_of(decoded, 1);
    seq_write(s.op.seq, [&] {
        for (int i = 0; i < 16; ++i) s.op.a[i].store(decoded.a[i], std::memory_order_relaxed);
        s.op.n.store(1, std::memory_order_relaxed);
        s.op.checksum.store(ck, std::memory_order_relaxed);
        s.op.epoch.store(ep, std::memory_order_relaxed);
    });
    seq_write(s.transfer->seq, [&] {
        for (int i = 0; i < 64; ++i) s.transfer->w[i].store(p_decoded.w[i], std::memory_order_relaxed);
        s.transfer->epoch.store(ep, std::memory_order_relaxed);
        s.transfer->has_value.store(true, std::memory_order_relaxed);
    });
    s.marker.p3.store(static_cast<int8_t>(p3), std::memory_order_release);
    s.marker.p1.store(CellMarker::kTop, std::memory_order_release);
    mark_parent_dirty(cell);
    return true;
}

OperatorSnapshot CellStream::read_element(int32_t cell) const {
    const Slot& s = *slots_[cell];
    OperatorSnapshot snap;
    snap.valid = s.marker.has_payload();
    if (!snap.valid) return snap;
    seq_read(s.op.seq, [&] {
        for (int i = 0; i < 16; ++i) snap.m.a[i] = s.op.a[i].load(std::memory_order_relaxed);
        snap.n = s.op.n.load(std::memory_order_relaxed);
        snap.checksum = s.op.checksum.load(std::memory_order_relaxed);
        snap.epoch = s.op.epoch.load(std::memory_order_relaxed);
    });
    return snap;
}

TransferSnapshot CellStream::read_transfer(int32_t cell) const {
    const Slot& s = *slots_[cell];
    TransferSnapshot snap;
    if (!s.transfer || !s.transfer->has_value.load(std::memory_order_acquire)) return snap;
    snap.valid = true;
    seq_read(s.transfer->seq, [&] {
        for (int i = 0; i < 64; ++i) snap.P.w[i] = s.transfer->w[i].load(std::memory_order_relaxed);
        snap.epoch = s.transfer->epoch.load(std::memory_order_relaxed);
    });
    return snap;
}

Mat4 CellStream::element_or_baseline(int32_t cell) const {
    OperatorSnapshot snap = read_element(cell);
    if (snap.valid) return snap.m;
    return baseline(cell).m;
}

TransferBlock CellStream::transfer_or_geometric(int32_t cell) const {
    TransferSnapshot snap = read_transfer(cell);
    if (snap.valid) return snap.P;
    return geometric_prolongation();
}

std::size_t CellStream::record_entries(int32_t cell) const {
    return mesh_->cell(cell).refined ? std::size_t{16 + 64 + 64} : std::size_t{16};
}

std::size_t CellStream::record_bytes(int32_t cell) const {
    const CellMarker& mk = marker(cell);
    if (!mk.has_payload()) return 1;
    return 1 + static_cast<std::size_t>(mk.p3.load(std::memory_order_acquire)) *
                   record_entries(cell);
}

void CellStream::begin_cycle(uint32_t cycle) {
    ensure_size();
    cycle_.store(cycle, std::memory_order_relaxed);
}

void CellStream::mark_parent_dirty(int32_t cell) {
    int32_t p = mesh_->cell(cell).parent;
    if (p < 0) return;
    uint32_t next = (cycle_.load(std::memory_order_relaxed) + 1) & 1u;
    slots_[p]->dirty[next].store(true, std::memory_order_release);
}

bool CellStream::take_dirty(int32_t cell) {
    uint32_t cur = cycle_.load(std::memory_order_relaxed) & 1u;
    return slots_[cell]->dirty[cur].exchange(false, std::memory_order_acq_rel);
}

void CellStream::mark_dirty_now(int32_t cell) {
    slots_[cell]->dirty[0].store(true, std::memory_order_release);
    slots_[cell]->dirty[1].store(true, std::memory_order_release);
}

bool CellStream::dirty_pending(int32_t cell) const {
    return slots_[cell]->dirty[0].load(std::memory_order_acquire) ||
           slots_[cell]->dirty[1].load(std::memory_order_acquire);
}

void CellStream::on_refinement(const RefinementDelta& delta) {
    ensure_size();
    for (int32_t id : delta.stale_ancestors) mark_dirty_now(id);
    for (int32_t id : delta.refine) mark_dirty_now(id);
}

CompressionStats CellStream::compression_stats() const {
    CompressionStats st;
    double ratio_sum = 0.0;
    long double n_sum = 0.0;
    for (std::size_t id = 0; id < slots_.size(); ++id) {
        int32_t cell = static_cast<int32_t>(id);
        std::size_t bytes = record_bytes(cell);
        std::size_t uncompressed = 8 * record_entries(cell);
        st.total_stored_bytes += bytes;
        st.total_uncompressed_bytes += uncompressed;
        if (mesh_->cell(cell).refined) continue;
        int p3 = marker(cell).has_payload() ? marker(cell).p3.load() : 0;
        st.p3_histogram[static_cast<std::size_t>(p3)] += 1;
        st.fine_cells += 1;
        st.fine_stored_bytes += bytes;
        st.fine_uncompressed_bytes += 128;
        ratio_sum += 128.0 / static_cast<double>(bytes);
        int n = read_element(cell).n;
        st.max_n = std::max(st.max_n, n);
        n_sum += n;
    }
    if (st.fine_cells) {
        st.fine_factor_totals = static_cast<double>(st.fine_uncompressed_bytes) /
                                static_cast<double>(st.fine_stored_bytes);
        st.fine_factor_mean = ratio_sum / static_cast<double>(st.fine_cells);
        st.avg_n = static_cast<double>(n_sum / st.fine_cells);
    }
    if (st.total_stored_bytes)
        st.total_factor = static_cast<double>(st.total_uncompressed_bytes) /
                          static_cast<double>(st.total_stored_bytes);
    st.max_delta = max_delta_published_.load();
    st.max_sample_count = max_samples_.load();
    return st;
}

void CellStream::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open stream file for writing: " + path);
    auto put32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    put32(kMagic);
    put32(kVersion);
    std::vector<int32_t> order = mesh_->traverse();
    put32(static_cast<uint32_t>(order.size()));
    std::vector<uint8_t> buf;
    for (int32_t cell : order) {
        const CellMarker& mk = marker(cell);
        int32_t p1 = mk.p1.load(std::memory_order_acquire);
        int p3 = mk.has_payload() ? mk.p3.load(std::memory_order_acquire) : 0;
        uint8_t header = pack_header(p1, mk.p2.load(std::memory_order_acquire), p3);
        out.put(static_cast<char>(header));
        if (p1 == CellMarker::kBottom || p3 == 0) continue;

        OperatorSnapshot op = read_element(cell);
        Mat4 surplus = op.m - baseline(cell).m;
        buf.assign(record_entries(cell) * static_cast<std::size_t>(p3), 0);
        uint8_t* cur = buf.data();
        for (int i = 0; i < 16; ++i, cur += p3) codec::encode_value(surplus.a[i], p3, cur);
        if (mesh_->cell(cell).refined) {
            TransferSnapshot tr = read_transfer(cell);
            const TransferBlock& geo = geometric_prolongation();
            std::array<double, 64> ps{};
            for (int i = 0; i < 64; ++i) ps[i] = tr.P.w[i] - geo.w[i];
            for (int i = 0; i < 64; ++i, cur += p3) codec::encode_value(ps[i], p3, cur);
            // R-hat = P-hat transposed
            for (int L = 0; L < 16; ++L)
                for (int c = 0; c < 4; ++c, cur += p3)
                    codec::encode_value(ps[static_cast<std::size_t>(L) * 4 + c], p3, cur);
        }
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
}

void CellStream::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open stream file: " + path);
    auto get32 = [&]() {
        uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        if (!in) throw corrupt_stream_error("truncated stream file");
        return v;
    };
    if (get32() != kMagic) throw corrupt_stream_error("bad stream magic");
    if (get32() != kVersion) throw corrupt_stream_error("unsupported stream version");
    std::vector<int32_t> order = mesh_->traverse();
    if (get32() != order.size())
        throw corrupt_stream_error("stream cell count does not match the mesh");

    std::vector<uint8_t> buf;
    for (int32_t cell : order) {
        int c = in.get();
        if (c < 0) throw corrupt_stream_error("truncated stream file");
        int p1_class, p3;
        bool p2;
        unpack_header(static_cast<uint8_t>(c), p1_class, p2, p3);
        CellMarker& mk = marker(cell);
        mk.p2.store(p2, std::memory_order_release);
        if (p1_class == 0) {
            mk.p1.store(CellMarker::kBottom, std::memory_order_release);
            continue;
        }
        int32_t p1 = p1_class == 2 ? CellMarker::kTop : 1;
        if (p3 == 0) {
            Mat4 base = baseline(cell).m;
            if (mesh_->cell(cell).refined)
                publish_coarse(cell, base, geometric_prolongation());
            else
                publish_element(cell, base, 1);
        } else {
            std::size_t entries = record_entries(cell);
            buf.assign(entries * static_cast<std::size_t>(p3), 0);
            in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
            if (!in) throw corrupt_stream_error("truncated record payload");
            const uint8_t* cur = buf.data();
            Mat4 m = baseline(cell).m;
            for (int i = 0; i < 16; ++i, cur += p3) m.a[i] += codec::decode_value(cur, p3);
            if (mesh_->cell(cell).refined) {
                TransferBlock P = geometric_prolongation();
                for (int i = 0; i < 64; ++i, cur += p3) P.w[i] += codec::decode_value(cur, p3);
                publish_coarse(cell, m, P);
            } else {
                publish_element(cell, m, 1);
            }
        }
        mk.p1.store(p1, std::memory_order_release);
        mk.p3.store(static_cast<int8_t>(p3), std::memory_order_release);
    }
}

}  // namespace lazymg
