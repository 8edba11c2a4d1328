#include "omniscan/ssm/scan.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

#include "omniscan/numerics/parallel.hpp"

namespace omniscan::ssm {

namespace {

template <typename T>
T zoh_phi(T z, T a, T delta) {
  if (std::abs(static_cast<double>(z)) < kSeriesCutoff) return delta * (T(1) + z / T(2) + z * z / T(6));
  return std::expm1(z) / a;
}


// Steps per discretization block in the channel-vectorized kernels.
constexpr std::size_t kBlockSteps = 256;

// (rows, cols) -> (cols, rows)
template <typename T>
void transpose_into(const T* src, std::size_t rows, std::size_t cols, T* dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// Steps [k0, k1) laid out (k, n, d): alpha = exp(delta a), phi = expm1(delta a) / a.
// dT is (L, D), aT is (N, D).
template <typename T>
void discretize_block(const T* dT, const T* aT, std::size_t k0, std::size_t k1, std::size_t N, std::size_t D,
                      T* alpha, T* phi) {
  const std::size_t m = (k1 - k0) * N * D;
  for (std::size_t k = k0; k < k1; ++k)
    for (std::size_t n = 0; n < N; ++n) {
      T* z = alpha + ((k - k0) * N + n) * D;
      const T* dk = dT + k * D;
      const T* an = aT + n * D;
      for (std::size_t d = 0; d < D; ++d) z[d] = dk[d] * an[d];
    }
  Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> z(alpha, static_cast<Eigen::Index>(m)),
      p(phi, static_cast<Eigen::Index>(m));
  p = z.expm1();
  const T cutoff = static_cast<T>(kSeriesCutoff);
  for (std::size_t k = k0; k < k1; ++k)
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t base = ((k - k0) * N + n) * D;
      const T* dk = dT + k * D;
      const T* an = aT + n * D;
      for (std::size_t d = 0; d < D; ++d) {
        const T zi = alpha[base + d];
        phi[base + d] = std::abs(zi) < cutoff ? dk[d] * (T(1) + zi / T(2) + zi * zi / T(6)) : phi[base + d] / an[d];
      }
    }
  z = z.exp();
}

// Below this |z| the d phi / d a series is used; above it exp(z) - 1 loses at
// most ~1e-12 relative to the numerator.
constexpr double kPhiDaSeriesCutoff = 1e-2;

// d phi / d a = (z e^z - expm1 z) / a^2 over a block, in double (the closed form
// cancels for small |z|). Series: delta^2 sum_{m>=2} (m-1)/m! z^(m-2).
template <typename T>
void phi_da_block(const T* dT, const T* aT, std::size_t k0, std::size_t k1, std::size_t N, std::size_t D,
                  double* zbuf, double* out) {
  const std::size_t m = (k1 - k0) * N * D;
  for (std::size_t k = k0; k < k1; ++k)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t d = 0; d < D; ++d)
        zbuf[((k - k0) * N + n) * D + d] = static_cast<double>(dT[k * D + d]) * static_cast<double>(aT[n * D + d]);
  using ArrayMap = Eigen::Map<Eigen::Array<double, Eigen::Dynamic, 1>>;
  ArrayMap z(zbuf, static_cast<Eigen::Index>(m)), o(out, static_cast<Eigen::Index>(m));
  o = z.exp();
  o = z * o - (o - 1.0);
  for (std::size_t k = k0; k < k1; ++k)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t d = 0; d < D; ++d) {
        const std::size_t i = ((k - k0) * N + n) * D + d;
        const double a = static_cast<double>(aT[n * D + d]), dl = static_cast<double>(dT[k * D + d]);
        const double zi = zbuf[i];
        if (std::abs(zi) < kPhiDaSeriesCutoff) {
          const double poly =
              1.0 / 2 + zi * (1.0 / 3 + zi * (1.0 / 8 + zi * (1.0 / 30 + zi * (1.0 / 144 + zi * (1.0 / 840 + zi / 5760.0)))));
          out[i] = dl * dl * poly;
        } else {
          out[i] /= a * a;
        }
      }
}

// (B, N, L) -> per batch (L, N) so the state loop is contiguous.
template <typename T>
AlignedVector<T> time_major(const Tensor<T>& t, std::size_t batch, std::size_t states, std::size_t length) {
  AlignedVector<T> out(batch * length * states);
  const T* src = t.raw();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t n = 0; n < states; ++n)
      for (std::size_t k = 0; k < length; ++k)
        out[(b * length + k) * states + n] = src[(b * states + n) * length + k];
  return out;
}

struct Dims {
  std::size_t B, D, L, N;
};

template <typename T>
Dims dims_of(const ScanInputs<T>& in) {
  return {in.batch(), in.channels(), in.length(), in.states()};
}

template <typename T>
void prepare_saved(ScanSaved<T>* saved, const Dims& s) {
  if (!saved) return;
  saved->interval = saved->requested_interval ? saved->requested_interval : storage_interval(s.L);
  saved->batch = s.B;
  saved->channels = s.D;
  saved->length = s.L;
  saved->states = s.N;
  const std::size_t per_channel = saved->interval == 1 ? s.L : saved->segments();
  saved->h.assign(s.B * s.D * per_channel * s.N, T(0));
}

// Saved states are laid out (b, slot, n, d); slot is the step for interval 1,
// otherwise the segment whose carry-in the state is.
template <typename T>
std::size_t saved_slot(const ScanSaved<T>& saved, std::size_t k) {
  if (saved.interval == 1) return k;
  if ((k + 1) % saved.interval != 0 || k + 1 >= saved.length) return static_cast<std::size_t>(-1);
  return (k + 1) / saved.interval;
}

template <typename T>
std::size_t saved_slots(const ScanSaved<T>& saved) {
  return saved.interval == 1 ? saved.length : saved.segments();
}

// Saves h (state after step k, one channel d, stride 1 over n) when k ends a stored slot.
template <typename T>
void save_state(ScanSaved<T>* saved, std::size_t b, std::size_t d, std::size_t k, const T* h) {
  if (!saved) return;
  const std::size_t slot = saved_slot(*saved, k);
  if (slot == static_cast<std::size_t>(-1)) return;
  const std::size_t N = saved->states, D = saved->channels;
  T* dst = saved->h.data() + (b * saved_slots(*saved) + slot) * N * D + d;
  for (std::size_t n = 0; n < N; ++n) dst[n * D] = h[n];
}

// Same for all channels at once; h is (N, D).
template <typename T>
void save_states(ScanSaved<T>* saved, std::size_t b, std::size_t k, const T* h) {
  if (!saved) return;
  const std::size_t slot = saved_slot(*saved, k);
  if (slot == static_cast<std::size_t>(-1)) return;
  const std::size_t ND = saved->states * saved->channels;
  std::copy_n(h, ND, saved->h.data() + (b * saved_slots(*saved) + slot) * ND);
}

}  // namespace

template <typename T>
Discretized<T> discretize(T a, T b, T delta) {
  if (!(delta > T(0))) throw NumericError("discretize: step must be positive, got " + std::to_string(delta));
  const T z = delta * a;
  return {std::exp(z), zoh_phi(z, a, delta) * b};
}

template <typename T>
void validate(const ScanInputs<T>& in) {
  auto need_rank = [](const Tensor<T>& t, std::size_t rank, const char* name) {
    if (t.rank() != rank)
      throw ShapeError(std::string("scan: ") + name + " must have rank " + std::to_string(rank) + ", got " +
                       shape_str(t.shape()));
  };
  need_rank(in.x, 3, "x");
  need_rank(in.delta, 3, "delta");
  need_rank(in.a, 2, "A");
  need_rank(in.b, 3, "B");
  need_rank(in.c, 3, "C");
  need_rank(in.d_skip, 1, "D");
  const std::size_t B = in.batch(), D = in.channels(), L = in.length(), N = in.states();
  if (in.delta.shape() != in.x.shape())
    throw ShapeError("scan: delta " + shape_str(in.delta.shape()) + " must match x " + shape_str(in.x.shape()));
  if (in.a.dim(0) != D)
    throw ShapeError("scan: A axis 0 is " + std::to_string(in.a.dim(0)) + ", expected channels " + std::to_string(D));
  for (const auto* t : {&in.b, &in.c}) {
    const char* name = t == &in.b ? "B" : "C";
    if (t->dim(0) != B) throw ShapeError(std::string("scan: ") + name + " axis 0 must equal batch " + std::to_string(B));
    if (t->dim(1) != N) throw ShapeError(std::string("scan: ") + name + " axis 1 must equal states " + std::to_string(N));
    if (t->dim(2) != L) throw ShapeError(std::string("scan: ") + name + " axis 2 must equal length " + std::to_string(L));
  }
  if (in.d_skip.dim(0) != D)
    throw ShapeError("scan: D axis 0 is " + std::to_string(in.d_skip.dim(0)) + ", expected " + std::to_string(D));
  for (T v : in.delta.data())
    if (!(v > T(0))) throw NumericError("scan: step must be positive, got " + std::to_string(v));
}

template <typename T>
bool ScanSaved<T>::matches(const ScanInputs<T>& in) const {
  if (interval == 0 || batch != in.batch() || channels != in.channels() || length != in.length() ||
      states != in.states())
    return false;
  return h.size() == batch * channels * (interval == 1 ? length : segments()) * states;
}

std::size_t storage_interval(std::size_t length) {
  return length <= kFullStorageMaxLength ? 1 : kRecomputeInterval;
}

template <typename T>
Tensor<T> scan_sequential(const ScanInputs<T>& in, ScanSaved<T>* saved) {
  validate(in);
  const Dims s = dims_of(in);
  prepare_saved(saved, s);
  const auto bt = time_major(in.b, s.B, s.N, s.L);
  const auto ct = time_major(in.c, s.B, s.N, s.L);
  Tensor<T> y(in.x.shape());
  AlignedVector<T> h(s.N);
  const T* x = in.x.raw();
  const T* dt = in.delta.raw();
  const T* A = in.a.raw();
  T* out = y.raw();
  for (std::size_t b = 0; b < s.B; ++b) {
    for (std::size_t d = 0; d < s.D; ++d) {
      const std::size_t bd = b * s.D + d;
      const T* ad = A + d * s.N;
      const T skip = in.d_skip[d];
      std::fill(h.begin(), h.end(), T(0));
      for (std::size_t k = 0; k < s.L; ++k) {
        const T xk = x[bd * s.L + k], delta = dt[bd * s.L + k];
        const T* bk = &bt[(b * s.L + k) * s.N];
        const T* ck = &ct[(b * s.L + k) * s.N];
        T acc = T(0);
        for (std::size_t n = 0; n < s.N; ++n) {
          const T z = delta * ad[n];
          h[n] = std::exp(z) * h[n] + zoh_phi(z, ad[n], delta) * bk[n] * xk;
          acc += ck[n] * h[n];
        }
        out[bd * s.L + k] = acc + skip * xk;
        save_state(saved, b, d, k, h.data());
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> scan_vectorized(const ScanInputs<T>& in, ScanSaved<T>* saved) {
  validate(in);
  const Dims s = dims_of(in);
  const std::size_t D = s.D, N = s.N, L = s.L;
  prepare_saved(saved, s);
  Tensor<T> y(in.x.shape());
  AlignedVector<T> aT(N * D), xT(L * D), dT(L * D), yT(L * D), h(N * D);
  AlignedVector<T> alpha(kBlockSteps * N * D), phi(kBlockSteps * N * D);
  transpose_into(in.a.raw(), D, N, aT.data());
  const T* skip = in.d_skip.raw();
  for (std::size_t b = 0; b < s.B; ++b) {
    transpose_into(in.x.raw() + b * D * L, D, L, xT.data());
    transpose_into(in.delta.raw() + b * D * L, D, L, dT.data());
    const T* bb = in.b.raw() + b * N * L;
    const T* cc = in.c.raw() + b * N * L;
    std::fill(h.begin(), h.end(), T(0));
    for (std::size_t k0 = 0; k0 < L; k0 += kBlockSteps) {
      const std::size_t k1 = std::min(L, k0 + kBlockSteps);
      discretize_block(dT.data(), aT.data(), k0, k1, N, D, alpha.data(), phi.data());
      for (std::size_t k = k0; k < k1; ++k) {
        const T* xk = &xT[k * D];
        T* yk = &yT[k * D];
        std::fill_n(yk, D, T(0));
        for (std::size_t n = 0; n < N; ++n) {
          const T bn = bb[n * L + k], cn = cc[n * L + k];
          const T* al = &alpha[((k - k0) * N + n) * D];
          const T* ph = &phi[((k - k0) * N + n) * D];
          T* hn = &h[n * D];
          for (std::size_t d = 0; d < D; ++d) {
            hn[d] = al[d] * hn[d] + ph[d] * bn * xk[d];
            yk[d] += cn * hn[d];
          }
        }
        for (std::size_t d = 0; d < D; ++d) yk[d] += skip[d] * xk[d];
        save_states(saved, b, k, h.data());
      }
    }
    transpose_into(yT.data(), L, D, y.raw() + b * D * L);
  }
  return y;
}

template <typename T>
Tensor<T> scan_parallel(const ScanInputs<T>& in, std::size_t chunk, std::size_t lanes, ScanSaved<T>* saved) {
  if (chunk == 0) throw std::invalid_argument("scan_parallel: chunk must be at least 1");
  validate(in);
  const Dims s = dims_of(in);
  if (chunk >= s.L) return scan_sequential(in, saved);
  if (lanes == 0) lanes = default_lanes();
  prepare_saved(saved, s);
  const std::size_t chunks = (s.L + chunk - 1) / chunk;
  const std::size_t channels = s.B * s.D;
  const auto bt = time_major(in.b, s.B, s.N, s.L);
  const auto ct = time_major(in.c, s.B, s.N, s.L);
  const T* x = in.x.raw();
  const T* dt = in.delta.raw();
  const T* A = in.a.raw();

  // Discretized coefficients, laid out (bd, k, n).
  AlignedVector<T> alpha(channels * s.L * s.N), input(channels * s.L * s.N);
  // Chunk summaries and carries, laid out (bd, chunk, n).
  std::vector<ScanElement<T>> summary(channels * chunks * s.N);
  AlignedVector<T> carry(channels * chunks * s.N);

  // Phase 1: discretize a whole chunk at once, then its local scan from zero.
  parallel_for(lanes, channels * chunks, [&](std::size_t begin, std::size_t end) {
    AlignedVector<T> zsum(s.N);
    for (std::size_t item = begin; item < end; ++item) {
      const std::size_t bd = item / chunks, j = item % chunks, b = bd / s.D, d = bd % s.D;
      const T* ad = A + d * s.N;
      const std::size_t k0 = j * chunk, k1 = std::min(s.L, k0 + chunk), m = (k1 - k0) * s.N;
      T* al = &alpha[(bd * s.L + k0) * s.N];
      T* u = &input[(bd * s.L + k0) * s.N];
      std::fill(zsum.begin(), zsum.end(), T(0));
      for (std::size_t k = k0; k < k1; ++k)
        for (std::size_t n = 0; n < s.N; ++n) {
          al[(k - k0) * s.N + n] = dt[bd * s.L + k] * ad[n];
          zsum[n] += al[(k - k0) * s.N + n];
        }
      Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> z(al, static_cast<Eigen::Index>(m)), em1(u, static_cast<Eigen::Index>(m));
      em1 = z.expm1();
      for (std::size_t k = k0; k < k1; ++k) {
        const T xk = x[bd * s.L + k], delta = dt[bd * s.L + k];
        const T* bk = &bt[(b * s.L + k) * s.N];
        for (std::size_t n = 0; n < s.N; ++n) {
          const std::size_t i = (k - k0) * s.N + n;
          const T zi = al[i];
          const T phi = std::abs(static_cast<double>(zi)) < kSeriesCutoff
                            ? delta * (T(1) + zi / T(2) + zi * zi / T(6))
                            : u[i] / ad[n];
          u[i] = phi * bk[n] * xk;
        }
      }
      z = z.exp();
      ScanElement<T>* e = &summary[item * s.N];
      for (std::size_t n = 0; n < s.N; ++n) e[n] = {std::exp(zsum[n]), T(0)};
      for (std::size_t i = 0; i < m; i += s.N)
        for (std::size_t n = 0; n < s.N; ++n) e[n].offset = al[i + n] * e[n].offset + u[i + n];
    }
  });

  // Fixed left fold per (channel, state); independent of the lane count.
  for (std::size_t bd = 0; bd < channels; ++bd)
    for (std::size_t n = 0; n < s.N; ++n) {
      ScanElement<T> acc{T(1), T(0)};
      for (std::size_t j = 0; j < chunks; ++j) {
        carry[(bd * chunks + j) * s.N + n] = acc.offset;
        acc = combine(summary[(bd * chunks + j) * s.N + n], acc);
      }
    }

  Tensor<T> y(in.x.shape());
  T* out = y.raw();
  parallel_for(lanes, channels * chunks, [&](std::size_t begin, std::size_t end) {
    AlignedVector<T> h(s.N);
    for (std::size_t item = begin; item < end; ++item) {
      const std::size_t bd = item / chunks, j = item % chunks, b = bd / s.D, d = bd % s.D;
      const T skip = in.d_skip[d];
      std::copy_n(&carry[item * s.N], s.N, h.begin());
      const std::size_t k1 = std::min(s.L, (j + 1) * chunk);
      for (std::size_t k = j * chunk; k < k1; ++k) {
        const T* al = &alpha[(bd * s.L + k) * s.N];
        const T* u = &input[(bd * s.L + k) * s.N];
        const T* ck = &ct[(b * s.L + k) * s.N];
        T acc = T(0);
        for (std::size_t n = 0; n < s.N; ++n) {
          h[n] = al[n] * h[n] + u[n];
          acc += ck[n] * h[n];
        }
        out[bd * s.L + k] = acc + skip * x[bd * s.L + k];
        save_state(saved, b, d, k, h.data());
      }
    }
  });
  return y;
}

template <typename T>
ScanGrads<T> scan_backward(const ScanInputs<T>& in, const Tensor<T>& grad_y, const ScanSaved<T>& saved) {
  validate(in);
  if (!saved.matches(in)) throw std::logic_error("scan_backward: missing or mismatched saved forward state");
  if (grad_y.shape() != in.x.shape())
    throw ShapeError("scan_backward: upstream gradient " + shape_str(grad_y.shape()) + " must match x " +
                     shape_str(in.x.shape()));
  const Dims s = dims_of(in);
  const std::size_t D = s.D, N = s.N, L = s.L, ND = N * D;
  ScanGrads<T> g{Tensor<T>(in.x.shape()), Tensor<T>(in.delta.shape()), Tensor<T>(in.a.shape()),
                 Tensor<T>(in.b.shape()), Tensor<T>(in.c.shape()), Tensor<T>(in.d_skip.shape())};
  const std::size_t interval = saved.interval;
  const std::size_t block = interval == 1 ? kBlockSteps : interval;
  const std::size_t slots = saved_slots(saved);
  const T cutoff = static_cast<T>(kSeriesCutoff);

  AlignedVector<T> aT(ND), gaT(ND, T(0)), gh(ND), zeros(ND, T(0));
  AlignedVector<T> xT(L * D), dT(L * D), gyT(L * D), gxT(L * D), gdT(L * D);
  AlignedVector<T> alpha(block * ND), phi(block * ND);
  AlignedVector<double> pda(block * ND), zbuf(block * ND);
  // seg[i] holds h before step (k0 + i) when states are recomputed.
  AlignedVector<T> seg(interval == 1 ? 0 : (block + 1) * ND);
  transpose_into(in.a.raw(), D, N, aT.data());
  const T* skip = in.d_skip.raw();
  T* gskip = g.d_skip.raw();

  for (std::size_t b = 0; b < s.B; ++b) {
    transpose_into(in.x.raw() + b * D * L, D, L, xT.data());
    transpose_into(in.delta.raw() + b * D * L, D, L, dT.data());
    transpose_into(grad_y.raw() + b * D * L, D, L, gyT.data());
    const T* bb = in.b.raw() + b * N * L;
    const T* cc = in.c.raw() + b * N * L;
    T* gb = g.b.raw() + b * N * L;
    T* gc = g.c.raw() + b * N * L;
    const T* hs = saved.h.data() + b * slots * ND;
    std::fill(gh.begin(), gh.end(), T(0));
    const std::size_t blocks = (L + block - 1) / block;
    for (std::size_t j = blocks; j-- > 0;) {
      const std::size_t k0 = j * block, k1 = std::min(L, k0 + block);
      discretize_block(dT.data(), aT.data(), k0, k1, N, D, alpha.data(), phi.data());
      phi_da_block(dT.data(), aT.data(), k0, k1, N, D, zbuf.data(), pda.data());
      if (interval != 1) {
        std::copy_n(hs + j * ND, ND, seg.begin());
        for (std::size_t k = k0; k < k1; ++k) {
          const T* xk = &xT[k * D];
          for (std::size_t n = 0; n < N; ++n) {
            const T bn = bb[n * L + k];
            const std::size_t i = ((k - k0) * N + n) * D;
            const T* prev = &seg[(k - k0) * ND + n * D];
            T* next = &seg[(k - k0 + 1) * ND + n * D];
            for (std::size_t d = 0; d < D; ++d) next[d] = alpha[i + d] * prev[d] + phi[i + d] * bn * xk[d];
          }
        }
      }
      for (std::size_t k = k1; k-- > k0;) {
        const T* before = interval == 1 ? (k == 0 ? zeros.data() : hs + (k - 1) * ND) : &seg[(k - k0) * ND];
        const T* after = interval == 1 ? hs + k * ND : &seg[(k - k0 + 1) * ND];
        const T* gy = &gyT[k * D];
        const T* xk = &xT[k * D];
        const T* dk = &dT[k * D];
        T* gx = &gxT[k * D];
        T* gd = &gdT[k * D];
        for (std::size_t d = 0; d < D; ++d) {
          gx[d] = skip[d] * gy[d];
          gd[d] = T(0);
          gskip[d] += gy[d] * xk[d];
        }
        for (std::size_t n = 0; n < N; ++n) {
          const T bn = bb[n * L + k], cn = cc[n * L + k];
          const std::size_t i = ((k - k0) * N + n) * D;
          const T* al = &alpha[i];
          const T* ph = &phi[i];
          const double* pa = &pda[i];
          const T* prev = before + n * D;
          const T* cur = after + n * D;
          const T* an = &aT[n * D];
          T* ghn = &gh[n * D];
          T* gan = &gaT[n * D];
          T gbn = T(0), gcn = T(0);
          for (std::size_t d = 0; d < D; ++d) {
            ghn[d] += cn * gy[d];
            gcn += gy[d] * cur[d];
            const T g_alpha = ghn[d] * prev[d], g_beta = ghn[d] * xk[d];
            gx[d] += ghn[d] * ph[d] * bn;
            gbn += g_beta * ph[d];
            const T z = dk[d] * an[d];
            const T phi_dd = std::abs(z) < cutoff ? T(1) + z + z * z / T(2) : al[d];
            gd[d] += g_alpha * an[d] * al[d] + g_beta * bn * phi_dd;
            gan[d] += g_alpha * dk[d] * al[d] + g_beta * bn * static_cast<T>(pa[d]);
            ghn[d] *= al[d];
          }
          gb[n * L + k] += gbn;
          gc[n * L + k] += gcn;
        }
      }
    }
    transpose_into(gxT.data(), L, D, g.x.raw() + b * D * L);
    transpose_into(gdT.data(), L, D, g.delta.raw() + b * D * L);
  }
  transpose_into(gaT.data(), N, D, g.a.raw());
  return g;
}

#define OMNISCAN_INSTANTIATE(T)                                                                     \
  template Discretized<T> discretize<T>(T, T, T);                                                   \
  template void validate<T>(const ScanInputs<T>&);                                                  \
  template struct ScanSaved<T>;                                                                     \
  template Tensor<T> scan_sequential<T>(const ScanInputs<T>&, ScanSaved<T>*);                       \
  template Tensor<T> scan_vectorized<T>(const ScanInputs<T>&, ScanSaved<T>*);                       \
  template Tensor<T> scan_parallel<T>(const ScanInputs<T>&, std::size_t, std::size_t, ScanSaved<T>*); \
  template ScanGrads<T> scan_backward<T>(const ScanInputs<T>&, const Tensor<T>&, const ScanSaved<T>&);

OMNISCAN_INSTANTIATE(float)
OMNISCAN_INSTANTIATE(double)
#undef OMNISCAN_INSTANTIATE

}  // namespace omniscan::ssm
