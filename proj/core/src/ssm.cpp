#include "msfmamba/ssm.hpp"

#include <algorithm>
#include <limits>
#include <thread>
#include <vector>

#include "msfmamba/ops.hpp"

namespace msf {

namespace {

struct ScanDims {
  std::size_t P, C, N;
};

template <typename T>
ScanDims check_scan_shapes(const Tensor<T>& a_bar, const Tensor<T>& b_bar, const Tensor<T>& c_mat,
                           const Tensor<T>& D, const Tensor<T>& x) {
  if (x.rank() != 2 || a_bar.rank() != 3) throw DimensionError("scan: x must be [P,C] and a_bar [P,C,N]");
  const std::size_t P = x.dim(0), C = x.dim(1), N = a_bar.dim(2);
  if (a_bar.shape() != Shape{P, C, N} || b_bar.shape() != Shape{P, C, N} || c_mat.shape() != Shape{P, N} ||
      D.shape() != Shape{C}) {
    throw DimensionError("scan: inconsistent shapes x=" + shape_to_string(x.shape()) + " a_bar=" +
                         shape_to_string(a_bar.shape()) + " b_bar=" + shape_to_string(b_bar.shape()) +
                         " C=" + shape_to_string(c_mat.shape()) + " D=" + shape_to_string(D.shape()));
  }
  return {P, C, N};
}

// Runs the recurrence over steps [begin, end) starting from state `h`, which is
// updated in place. Writes y rows and, when non-null, every h[p] into `states`.
template <typename T>
void scan_range(const Tensor<T>& a_bar, const Tensor<T>& b_bar, const Tensor<T>& c_mat, const Tensor<T>& D,
                const Tensor<T>& x, std::size_t begin, std::size_t end, T* h, Tensor<T>& y, Tensor<T>* states) {
  const std::size_t C = x.dim(1), N = a_bar.dim(2), CN = C * N;
  for (std::size_t p = begin; p < end; ++p) {
    const T* a = &a_bar[p * CN];
    const T* b = &b_bar[p * CN];
    const T* xp = &x[p * C];
    const T* cp = &c_mat[p * N];
    T* yp = &y[p * C];
    for (std::size_t c = 0; c < C; ++c) {
      T* hc = &h[c * N];
      const T xc = xp[c];
      T acc = 0;
      for (std::size_t n = 0; n < N; ++n) {
        hc[n] = a[c * N + n] * hc[n] + b[c * N + n] * xc;
        acc += cp[n] * hc[n];
      }
      yp[c] = acc + D[c] * xc;
    }
    if (states) std::copy(h, h + CN, &(*states)[p * CN]);
  }
}

template <typename T>
Tensor<T> run_scan(const Tensor<T>& a_bar, const Tensor<T>& b_bar, const Tensor<T>& c_mat, const Tensor<T>& D,
                   const Tensor<T>& x, Tensor<T>* states) {
  const auto [P, C, N] = check_scan_shapes(a_bar, b_bar, c_mat, D, x);
  Tensor<T> y(Shape{P, C});
  std::vector<T> h(C * N, T(0));
  scan_range(a_bar, b_bar, c_mat, D, x, 0, P, h.data(), y, states);
  return y;
}

}  // namespace

template <typename T>
SelectedParams<T> select_parameters(const Var<T>& seq, const SsmParams<T>& params) {
  if (seq.value().rank() != 2 || seq.dim(1) != params.channels()) {
    throw DimensionError("select_parameters: sequence " + shape_to_string(seq.shape()) + " vs " +
                         std::to_string(params.channels()) + " channels");
  }
  SelectedParams<T> s;
  s.B = linear(seq, params.W_B);
  s.C = linear(seq, params.W_C);
  s.delta = softplus(linear(seq, params.W_dt, params.b_dt));
  return s;
}

template <typename T>
DiscreteParams<T> discretize(const Var<T>& delta, const Var<T>& A, const Var<T>& B) {
  for (T d : delta.value().data()) {
    if (!(d > T(0))) throw ContractError("discretize: timescale must be strictly positive");
  }
  return {exp_outer(delta, A), scale_outer(delta, B)};
}

template <typename T>
Tensor<T> scan_sequential(const Tensor<T>& a_bar, const Tensor<T>& b_bar, const Tensor<T>& c_mat,
                          const Tensor<T>& D, const Tensor<T>& x) {
  return run_scan(a_bar, b_bar, c_mat, D, x, static_cast<Tensor<T>*>(nullptr));
}

template <typename T>
Var<T> scan_sequential(const DiscreteParams<T>& dp, const Var<T>& c_mat, const Var<T>& D, const Var<T>& x) {
  const auto dims = check_scan_shapes(dp.a_bar.value(), dp.b_bar.value(), c_mat.value(), D.value(), x.value());
  const std::size_t P = dims.P, C = dims.C, N = dims.N;
  Tensor<T> states(Shape{P, C, N});
  Tensor<T> y = run_scan(dp.a_bar.value(), dp.b_bar.value(), c_mat.value(), D.value(), x.value(), &states);
  if (!grad_enabled()) states = Tensor<T>();
  return make_op<T>(
      std::move(y), {dp.a_bar, dp.b_bar, c_mat, D, x},
      [P, C, N, states = std::move(states)](const Node<T>& self, const Tensor<T>& gy) {
        const auto& a_bar = self.parents[0]->value;
        const auto& b_bar = self.parents[1]->value;
        const auto& cm = self.parents[2]->value;
        const auto& dv = self.parents[3]->value;
        const auto& xv = self.parents[4]->value;
        const std::size_t CN = C * N;
        Tensor<T> ga(a_bar.shape()), gb(b_bar.shape()), gc(cm.shape()), gd(dv.shape()), gx(xv.shape());
        // gh carries dL/dh[p] backwards through the recurrence.
        std::vector<T> gh(CN, T(0));
        for (std::size_t p = P; p-- > 0;) {
          const T* hp = &states[p * CN];
          const T* hprev = p > 0 ? &states[(p - 1) * CN] : nullptr;
          const T* cp = &cm[p * N];
          T* gcp = &gc[p * N];
          for (std::size_t c = 0; c < C; ++c) {
            const T g = gy[p * C + c];
            const T xc = xv[p * C + c];
            gd[c] += g * xv[p * C + c];
            T gxc = g * dv[c];
            for (std::size_t n = 0; n < N; ++n) {
              const std::size_t k = c * N + n;
              gcp[n] += g * hp[k];
              const T ghk = gh[k] + g * cp[n];
              ga[p * CN + k] = hprev ? ghk * hprev[k] : T(0);
              gb[p * CN + k] = ghk * xc;
              gxc += ghk * b_bar[p * CN + k];
              gh[k] = ghk * a_bar[p * CN + k];
            }
            gx[p * C + c] = gxc;
          }
        }
        return std::vector<Tensor<T>>{std::move(ga), std::move(gb), std::move(gc), std::move(gd), std::move(gx)};
      },
      "scan_sequential");
}

template <typename T>
Tensor<T> scan_chunked(const Tensor<T>& a_bar, const Tensor<T>& b_bar, const Tensor<T>& c_mat, const Tensor<T>& D,
                       const Tensor<T>& x, std::size_t chunk, std::size_t threads) {
  if (chunk == 0) throw ConfigError("scan_chunked: chunk must be at least 1");
  const auto [P, C, N] = check_scan_shapes(a_bar, b_bar, c_mat, D, x);
  const std::size_t CN = C * N;
  const std::size_t n_chunks = (P + chunk - 1) / chunk;
  // agg[k] = (prod a, composed b) of chunk k, so h_out = agg_a * h_in + agg_b.
  std::vector<T> agg_a(n_chunks * CN, T(1)), agg_b(n_chunks * CN, T(0));

  auto reduce_pass = [&](std::size_t k) {
    const std::size_t begin = k * chunk, end = std::min(P, begin + chunk);
    T* ga = &agg_a[k * CN];
    T* gb = &agg_b[k * CN];
    constexpr T tiny = std::numeric_limits<T>::min();
    for (std::size_t p = begin; p < end; ++p) {
      const T* a = &a_bar[p * CN];
      const T* b = &b_bar[p * CN];
      const T* xp = &x[p * C];
      for (std::size_t c = 0; c < C; ++c) {
        const T xc = xp[c];
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t i = c * N + n;
          // Flush the decay product once it leaves the normal range: subnormal
          // arithmetic is very slow and the dropped term is below min() * |h|.
          const T prod = a[i] * ga[i];
          ga[i] = prod < tiny ? T(0) : prod;
          gb[i] = a[i] * gb[i] + b[i] * xc;
        }
      }
    }
  };

  // carry[k] holds the state entering chunk k; combined in fixed chunk order.
  std::vector<T> carry(n_chunks * CN, T(0));
  Tensor<T> y(Shape{P, C});

  auto output_pass = [&](std::size_t k) {
    const std::size_t begin = k * chunk, end = std::min(P, begin + chunk);
    std::vector<T> h(carry.begin() + static_cast<long>(k * CN), carry.begin() + static_cast<long>((k + 1) * CN));
    scan_range(a_bar, b_bar, c_mat, D, x, begin, end, h.data(), y, static_cast<Tensor<T>*>(nullptr));
  };

  auto parallel_over_chunks = [&](auto&& fn, std::size_t count) {
    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, count));
    if (workers == 1) {
      for (std::size_t k = 0; k < count; ++k) fn(k);
      return;
    }
    // Contiguous blocks of chunks per worker keep each thread on its own memory.
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        const std::size_t lo = count * w / workers, hi = count * (w + 1) / workers;
        for (std::size_t k = lo; k < hi; ++k) fn(k);
      });
    }
  };

  // The last chunk's aggregate is never needed.
  if (n_chunks > 1) parallel_over_chunks(reduce_pass, n_chunks - 1);
  for (std::size_t k = 1; k < n_chunks; ++k) {
    const T* ga = &agg_a[(k - 1) * CN];
    const T* gb = &agg_b[(k - 1) * CN];
    const T* prev = &carry[(k - 1) * CN];
    T* cur = &carry[k * CN];
    for (std::size_t i = 0; i < CN; ++i) cur[i] = ga[i] * prev[i] + gb[i];
  }
  parallel_over_chunks(output_pass, n_chunks);
  return y;
}

template <typename T>
Var<T> ssm_conditioned(const Var<T>& seq, const Var<T>& conditioning, const SsmParams<T>& params) {
  if (seq.shape() != conditioning.shape()) {
    throw DimensionError("ssm: processed sequence " + shape_to_string(seq.shape()) +
                         " and conditioning sequence " + shape_to_string(conditioning.shape()) + " differ");
  }
  const auto sel = select_parameters(conditioning, params);
  const auto dp = discretize(sel.delta, params.A, sel.B);
  return scan_sequential(dp, sel.C, params.D, seq);
}

template <typename T>
Var<T> ssm_self(const Var<T>& seq, const SsmParams<T>& params) {
  return ssm_conditioned(seq, seq, params);
}

template <typename T>
std::pair<Var<T>, Var<T>> fus_ssm(const Var<T>& f_h, const Var<T>& f_x, const SsmParams<T>& params_h,
                                  const SsmParams<T>& params_x) {
  if (f_h.shape() != f_x.shape()) {
    throw DimensionError("fus_ssm: modality shapes " + shape_to_string(f_h.shape()) + " and " +
                         shape_to_string(f_x.shape()) + " differ");
  }
  return {ssm_conditioned(f_h, f_x, params_h), ssm_conditioned(f_x, f_h, params_x)};
}

#define MSF_INSTANTIATE_SSM(T)                                                                              \
  template SelectedParams<T> select_parameters(const Var<T>&, const SsmParams<T>&);                         \
  template DiscreteParams<T> discretize(const Var<T>&, const Var<T>&, const Var<T>&);                       \
  template Var<T> scan_sequential(const DiscreteParams<T>&, const Var<T>&, const Var<T>&, const Var<T>&);   \
  template Tensor<T> scan_sequential(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                     const Tensor<T>&);                                                      \
  template Tensor<T> scan_chunked(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                  const Tensor<T>&, std::size_t, std::size_t);                               \
  template Var<T> ssm_conditioned(const Var<T>&, const Var<T>&, const SsmParams<T>&);                       \
  template Var<T> ssm_self(const Var<T>&, const SsmParams<T>&);                                             \
  template std::pair<Var<T>, Var<T>> fus_ssm(const Var<T>&, const Var<T>&, const SsmParams<T>&,             \
                                             const SsmParams<T>&);

MSF_INSTANTIATE_SSM(float)
MSF_INSTANTIATE_SSM(double)

}  // namespace msf
