#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "glimt/tensor.hpp"

namespace glimt {

/// Handle to a node on a Tape. Only meaningful together with the tape that
/// produced it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode accumulation over a recorded operation list. One tape per
/// rollout; never shared across threads. Node ids grow monotonically, so a
/// single reverse sweep visits children before parents.
///
/// Ops that need gradients allocate their adjoint buffer up front; constants
/// (data, noise draws) carry no buffer and are skipped during the sweep.
class Tape {
public:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> backward;
        bool needs_grad = false;
    };

    Var leaf(Tensor value) { return push(std::move(value), true, nullptr); }

    Var constant(Tensor value) { return push(std::move(value), false, nullptr); }

    Var push(Tensor value, bool needs_grad, std::function<void(Tape&)> backward) {
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad;
        if (needs_grad) n.grad = Tensor::zeros(n.value.shape());
        n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor& value(Var v) const { return nodes_[check(v)].value; }
    const Tensor& grad(Var v) const { return nodes_[check(v)].grad; }
    Tensor& grad_ref(Var v) { return nodes_[check(v)].grad; }
    bool wants_grad(Var v) const { return v.valid() && nodes_[check(v)].needs_grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Attach the backward closure of a custom op after its output node (and
    /// therefore its id) exists. The node must not have one yet.
    void set_backward(Var v, std::function<void(Tape&)> fn) {
        Node& n = nodes_[check(v)];
        if (n.backward) throw invalid_argument("Tape::set_backward: node already has a backward");
        n.backward = std::move(fn);
    }

    /// Sweep adjoints back from a scalar root. Single-shot per tape.
    void backward(Var root) {
        if (swept_) throw invalid_argument("Tape::backward: tape already swept");
        const Node& r = nodes_[check(root)];
        if (r.value.size() != 1) throw invalid_argument("Tape::backward: root is not a scalar");
        if (!r.needs_grad) throw invalid_argument("Tape::backward: root does not depend on any leaf");
        swept_ = true;
        nodes_[root.id].grad[0] = 1.0;
        for (int i = root.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.needs_grad && n.backward) n.backward(*this);
        }
    }

    // ---- elementary operations ----

    Var add(Var a, Var b) {
        const Tensor &va = value(a), &vb = value(b);
        require_same_shape(va, vb, "add");
        Tensor out = va;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
        return binary_node(std::move(out), a, b, [](Tape& t, int oid, int aid, int bid) {
            const Tensor& g = t.nodes_[oid].grad;
            if (t.nodes_[aid].needs_grad) {
                Tensor& ga = t.nodes_[aid].grad;
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (t.nodes_[bid].needs_grad) {
                Tensor& gb = t.nodes_[bid].grad;
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }

    Var sub(Var a, Var b) {
        const Tensor &va = value(a), &vb = value(b);
        require_same_shape(va, vb, "sub");
        Tensor out = va;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
        return binary_node(std::move(out), a, b, [](Tape& t, int oid, int aid, int bid) {
            const Tensor& g = t.nodes_[oid].grad;
            if (t.nodes_[aid].needs_grad) {
                Tensor& ga = t.nodes_[aid].grad;
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (t.nodes_[bid].needs_grad) {
                Tensor& gb = t.nodes_[bid].grad;
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
    }

    Var mul(Var a, Var b) {
        const Tensor &va = value(a), &vb = value(b);
        require_same_shape(va, vb, "mul");
        Tensor out = va;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
        return binary_node(std::move(out), a, b, [](Tape& t, int oid, int aid, int bid) {
            const Tensor& g = t.nodes_[oid].grad;
            if (t.nodes_[aid].needs_grad) {
                Tensor& ga = t.nodes_[aid].grad;
                const Tensor& vb2 = t.nodes_[bid].value;
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb2[i];
            }
            if (t.nodes_[bid].needs_grad) {
                Tensor& gb = t.nodes_[bid].grad;
                const Tensor& va2 = t.nodes_[aid].value;
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va2[i];
            }
        });
    }

    /// Multiply every element of `a` by the scalar variable `s`.
    Var smul(Var a, Var s) {
        const Tensor& va = value(a);
        const Tensor& vs = value(s);
        if (vs.size() != 1) throw invalid_argument("smul: s must be a scalar");
        Tensor out = va;
        const double sv = vs[0];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= sv;
        return binary_node(std::move(out), a, s, [](Tape& t, int oid, int aid, int sid) {
            const Tensor& g = t.nodes_[oid].grad;
            const double sval = t.nodes_[sid].value[0];
            if (t.nodes_[aid].needs_grad) {
                Tensor& ga = t.nodes_[aid].grad;
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sval;
            }
            if (t.nodes_[sid].needs_grad) {
                const Tensor& va2 = t.nodes_[aid].value;
                double acc = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * va2[i];
                t.nodes_[sid].grad[0] += acc;
            }
        });
    }

    Var scale(Var a, double k) {
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= k;
        return unary_node(std::move(out), a, [k](Tape& t, int oid, int aid) {
            const Tensor& g = t.nodes_[oid].grad;
            Tensor& ga = t.nodes_[aid].grad;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += k * g[i];
        });
    }

    Var exp(Var a) {
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
        return unary_node(std::move(out), a, [](Tape& t, int oid, int aid) {
            const Tensor& g = t.nodes_[oid].grad;
            const Tensor& o = t.nodes_[oid].value;
            Tensor& ga = t.nodes_[aid].grad;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * o[i];
        });
    }

    Var tanh(Var a) {
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
        return unary_node(std::move(out), a, [](Tape& t, int oid, int aid) {
            const Tensor& g = t.nodes_[oid].grad;
            const Tensor& o = t.nodes_[oid].value;
            Tensor& ga = t.nodes_[aid].grad;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - o[i] * o[i]);
        });
    }

    Var sigmoid(Var a) {
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(out[i]);
        return unary_node(std::move(out), a, [](Tape& t, int oid, int aid) {
            const Tensor& g = t.nodes_[oid].grad;
            const Tensor& o = t.nodes_[oid].value;
            Tensor& ga = t.nodes_[aid].grad;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * o[i] * (1.0 - o[i]);
        });
    }

    /// Clamp to [lo, hi]; gradient passes through strictly inside the interval.
    Var clamp(Var a, double lo, double hi) {
        if (!(lo < hi)) throw invalid_argument("clamp: lo must be < hi");
        Tensor out = value(a);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = out[i] < lo ? lo : (out[i] > hi ? hi : out[i]);
        }
        return unary_node(std::move(out), a, [lo, hi](Tape& t, int oid, int aid) {
            const Tensor& g = t.nodes_[oid].grad;
            const Tensor& va = t.nodes_[aid].value;
            Tensor& ga = t.nodes_[aid].grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (va[i] > lo && va[i] < hi) ga[i] += g[i];
            }
        });
    }

    /// Concatenate rank-1 vectors.
    Var concat(const std::vector<Var>& parts) {
        if (parts.empty()) throw invalid_argument("concat: no inputs");
        std::size_t n = 0;
        bool needs = false;
        for (Var p : parts) {
            if (value(p).rank() != 1) throw invalid_argument("concat: rank-1 inputs only");
            n += value(p).size();
            needs = needs || wants_grad(p);
        }
        Tensor out = Tensor::zeros({n});
        std::size_t off = 0;
        for (Var p : parts) {
            const Tensor& vp = value(p);
            for (std::size_t i = 0; i < vp.size(); ++i) out[off + i] = vp[i];
            off += vp.size();
        }
        std::vector<int> ids;
        ids.reserve(parts.size());
        for (Var p : parts) ids.push_back(p.id);
        if (!needs) return constant(std::move(out));
        Var ov = reserve_node(std::move(out));
        const int oid = ov.id;
        nodes_[oid].backward = [oid, ids](Tape& t) {
            const Tensor& g = t.nodes_[oid].grad;
            std::size_t off2 = 0;
            for (int pid : ids) {
                Node& p = t.nodes_[pid];
                const std::size_t len = p.value.size();
                if (p.needs_grad) {
                    for (std::size_t i = 0; i < len; ++i) p.grad[i] += g[off2 + i];
                }
                off2 += len;
            }
        };
        return ov;
    }

    /// Contiguous slice of a rank-1 vector.
    Var slice(Var a, std::size_t offset, std::size_t length) {
        const Tensor& va = value(a);
        if (va.rank() != 1) throw invalid_argument("slice: rank-1 input only");
        if (offset + length > va.size()) throw invalid_argument("slice: out of range");
        Tensor out = Tensor::zeros({length});
        for (std::size_t i = 0; i < length; ++i) out[i] = va[offset + i];
        return unary_node(std::move(out), a, [offset, length](Tape& t, int oid, int aid) {
            const Tensor& g = t.nodes_[oid].grad;
            Tensor& ga = t.nodes_[aid].grad;
            for (std::size_t i = 0; i < length; ++i) ga[offset + i] += g[i];
        });
    }

    Var reshape(Var a, std::vector<std::size_t> shape) {
        Tensor out = value(a).reshaped(std::move(shape));
        return unary_node(std::move(out), a, [](Tape& t, int oid, int aid) {
            const Tensor& g = t.nodes_[oid].grad;
            Tensor& ga = t.nodes_[aid].grad;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }

    Var sum(Var a) {
        const Tensor& va = value(a);
        double acc = 0.0;
        for (std::size_t i = 0; i < va.size(); ++i) acc += va[i];
        return unary_node(Tensor::scalar(acc), a, [](Tape& t, int oid, int aid) {
            const double g = t.nodes_[oid].grad[0];
            Tensor& ga = t.nodes_[aid].grad;
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        });
    }

    /// C[m,n] = A[m,k] · B[k,n]
    Var matmul(Var a, Var b) {
        const Tensor &va = value(a), &vb = value(b);
        if (va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.rows()) {
            throw invalid_argument("matmul: incompatible shapes " + shape_string(va) + " x " +
                                   shape_string(vb));
        }
        const std::size_t m = va.rows(), k = va.cols(), n = vb.cols();
        Tensor out = Tensor::zeros({m, n});
        {
            const double* A = va.data();
            const double* B = vb.data();
            double* C = out.data();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = A[i * k + p];
                    if (aip == 0.0) continue;
                    const double* Bp = B + p * n;
                    double* Ci = C + i * n;
                    for (std::size_t j = 0; j < n; ++j) Ci[j] += aip * Bp[j];
                }
            }
        }
        return binary_node(std::move(out), a, b, [m, k, n](Tape& t, int oid, int aid, int bid) {
            const double* G = t.nodes_[oid].grad.data();
            if (t.nodes_[aid].needs_grad) {
                double* GA = t.nodes_[aid].grad.data();
                const double* B = t.nodes_[bid].value.data();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        const double* Gi = G + i * n;
                        const double* Bp = B + p * n;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += Gi[j] * Bp[j];
                        GA[i * k + p] += acc;
                    }
                }
            }
            if (t.nodes_[bid].needs_grad) {
                double* GB = t.nodes_[bid].grad.data();
                const double* A = t.nodes_[aid].value.data();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aip = A[i * k + p];
                        if (aip == 0.0) continue;
                        const double* Gi = G + i * n;
                        double* GBp = GB + p * n;
                        for (std::size_t j = 0; j < n; ++j) GBp[j] += aip * Gi[j];
                    }
                }
            }
        });
    }

    /// C[m,n] = A[m,k] · B[n,k]ᵀ
    Var matmul_nt(Var a, Var b) {
        const Tensor &va = value(a), &vb = value(b);
        if (va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.cols()) {
            throw invalid_argument("matmul_nt: incompatible shapes " + shape_string(va) + " x " +
                                   shape_string(vb) + "^T");
        }
        const std::size_t m = va.rows(), k = va.cols(), n = vb.rows();
        Tensor out = Tensor::zeros({m, n});
        {
            const double* A = va.data();
            const double* B = vb.data();
            double* C = out.data();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double* Ai = A + i * k;
                    const double* Bj = B + j * k;
                    double acc = 0.0;
                    for (std::size_t p = 0; p < k; ++p) acc += Ai[p] * Bj[p];
                    C[i * n + j] = acc;
                }
            }
        }
        return binary_node(std::move(out), a, b, [m, k, n](Tape& t, int oid, int aid, int bid) {
            const double* G = t.nodes_[oid].grad.data();
            if (t.nodes_[aid].needs_grad) {
                double* GA = t.nodes_[aid].grad.data();
                const double* B = t.nodes_[bid].value.data();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gij = G[i * n + j];
                        if (gij == 0.0) continue;
                        const double* Bj = B + j * k;
                        double* GAi = GA + i * k;
                        for (std::size_t p = 0; p < k; ++p) GAi[p] += gij * Bj[p];
                    }
                }
            }
            if (t.nodes_[bid].needs_grad) {
                double* GB = t.nodes_[bid].grad.data();
                const double* A = t.nodes_[aid].value.data();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gij = G[i * n + j];
                        if (gij == 0.0) continue;
                        const double* Ai = A + i * k;
                        double* GBj = GB + j * k;
                        for (std::size_t p = 0; p < k; ++p) GBj[p] += gij * Ai[p];
                    }
                }
            }
        });
    }

    /// y[m] = W[m,n] · x[n] + b[m]
    Var affine(Var w, Var x, Var b) {
        const Tensor &vw = value(w), &vx = value(x), &vb = value(b);
        if (vw.rank() != 2 || vx.rank() != 1 || vb.rank() != 1 || vw.cols() != vx.size() ||
            vw.rows() != vb.size()) {
            throw invalid_argument("affine: incompatible shapes " + shape_string(vw) + " * " +
                                   shape_string(vx) + " + " + shape_string(vb));
        }
        const std::size_t m = vw.rows(), n = vw.cols();
        Tensor out = Tensor::zeros({m});
        {
            const double* W = vw.data();
            const double* X = vx.data();
            for (std::size_t i = 0; i < m; ++i) {
                const double* Wi = W + i * n;
                double acc = vb[i];
                for (std::size_t j = 0; j < n; ++j) acc += Wi[j] * X[j];
                out[i] = acc;
            }
        }
        const int wid = w.id, xid = x.id, bid = b.id;
        bool needs = wants_grad(w) || wants_grad(x) || wants_grad(b);
        if (!needs) return constant(std::move(out));
        Var ov = reserve_node(std::move(out));
        const int oid = ov.id;
        nodes_[oid].backward = [oid, wid, xid, bid, m, n](Tape& t) {
            const double* G = t.nodes_[oid].grad.data();
            if (t.nodes_[wid].needs_grad) {
                double* GW = t.nodes_[wid].grad.data();
                const double* X = t.nodes_[xid].value.data();
                for (std::size_t i = 0; i < m; ++i) {
                    const double gi = G[i];
                    if (gi == 0.0) continue;
                    double* GWi = GW + i * n;
                    for (std::size_t j = 0; j < n; ++j) GWi[j] += gi * X[j];
                }
            }
            if (t.nodes_[xid].needs_grad) {
                double* GX = t.nodes_[xid].grad.data();
                const double* W = t.nodes_[wid].value.data();
                for (std::size_t i = 0; i < m; ++i) {
                    const double gi = G[i];
                    if (gi == 0.0) continue;
                    const double* Wi = W + i * n;
                    for (std::size_t j = 0; j < n; ++j) GX[j] += gi * Wi[j];
                }
            }
            if (t.nodes_[bid].needs_grad) {
                double* GB = t.nodes_[bid].grad.data();
                for (std::size_t i = 0; i < m; ++i) GB[i] += G[i];
            }
        };
        return ov;
    }

    /// Reparameterized draw: mean + exp(log_variance / 2) ⊙ noise.
    /// Differentiable in mean and log_variance; noise is data.
    Var gaussian_sample(Var mean, Var log_variance, Var noise) {
        const Tensor &vm = value(mean), &vl = value(log_variance), &ve = value(noise);
        require_same_shape(vm, vl, "gaussian_sample");
        require_same_shape(vm, ve, "gaussian_sample");
        Tensor out = vm;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += std::exp(0.5 * vl[i]) * ve[i];
        const int mid = mean.id, lid = log_variance.id, eid = noise.id;
        bool needs = wants_grad(mean) || wants_grad(log_variance);
        if (!needs) return constant(std::move(out));
        Var ov = reserve_node(std::move(out));
        const int oid = ov.id;
        nodes_[oid].backward = [oid, mid, lid, eid](Tape& t) {
            (void)eid;
            const Tensor& g = t.nodes_[oid].grad;
            const Tensor& o = t.nodes_[oid].value;
            const Tensor& m = t.nodes_[mid].value;
            if (t.nodes_[mid].needs_grad) {
                Tensor& gm = t.nodes_[mid].grad;
                for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
            }
            if (t.nodes_[lid].needs_grad) {
                Tensor& gl = t.nodes_[lid].grad;
                // d out / d logvar = 0.5 · std · eps = 0.5 · (out − mean)
                for (std::size_t i = 0; i < g.size(); ++i) gl[i] += g[i] * 0.5 * (o[i] - m[i]);
            }
        };
        return ov;
    }

    static double sigmoid_scalar(double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    }

private:
    int check(Var v) const {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
            throw invalid_argument("Tape: invalid Var");
        }
        return v.id;
    }

    Var reserve_node(Tensor value) { return push(std::move(value), true, nullptr); }

    template <typename F>
    Var unary_node(Tensor out, Var a, F&& back) {
        if (!wants_grad(a)) return constant(std::move(out));
        Var ov = reserve_node(std::move(out));
        const int oid = ov.id, aid = a.id;
        nodes_[oid].backward = [oid, aid, back](Tape& t) { back(t, oid, aid); };
        return ov;
    }

    template <typename F>
    Var binary_node(Tensor out, Var a, Var b, F&& back) {
        if (!wants_grad(a) && !wants_grad(b)) return constant(std::move(out));
        Var ov = reserve_node(std::move(out));
        const int oid = ov.id, aid = a.id, bid = b.id;
        nodes_[oid].backward = [oid, aid, bid, back](Tape& t) { back(t, oid, aid, bid); };
        return ov;
    }

    // Deque keeps references from value()/grad() stable while later ops are
    // recorded; a vector would invalidate them on reallocation.
    std::deque<Node> nodes_;
    bool swept_ = false;
};

/// Value-level reparameterized draw, mirroring Tape::gaussian_sample.
inline Tensor gaussian_sample(const GaussianParams& params, const Tensor& noise) {
    require_same_shape(params.mean, noise, "gaussian_sample");
    Tensor out = params.mean;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += std::exp(0.5 * params.log_variance[i]) * noise[i];
    }
    return out;
}

}  // namespace glimt
