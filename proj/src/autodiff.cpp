#include "c2f/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace c2f::ag {

namespace {

thread_local bool g_no_grad = false;
thread_local int g_kink_count = 0;
thread_local double g_kink_tol = 1e-4;

NodePtr make_node(Matrix value, std::vector<NodePtr> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool rg = false;
    if (!g_no_grad) {
        for (const auto& p : parents)
            if (p && p->requires_grad) rg = true;
    }
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
        n->ensure_grad();
    }
    return n;
}

void check_same_shape(const NodePtr& a, const NodePtr& b, const char* op) {
    if (!a->value.same_shape(b->value)) {
        std::ostringstream os;
        os << op << ": shape mismatch " << a->value.rows << "x" << a->value.cols << " vs " << b->value.rows << "x"
           << b->value.cols;
        throw ShapeError(os.str());
    }
}

}  // namespace

bool no_grad_active() { return g_no_grad; }
NoGradGuard::NoGradGuard() : prev(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = prev; }

int& kink_count() { return g_kink_count; }
double& kink_tol() { return g_kink_tol; }

NodePtr constant(Matrix v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return n;
}

NodePtr param(Matrix v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = true;
    n->ensure_grad();
    return n;
}

void zero_grad(const std::vector<NodePtr>& params) {
    for (const auto& p : params) {
        p->ensure_grad();
        p->grad.fill(0.0);
    }
}

void backward(const NodePtr& root) {
    if (root->value.rows != 1 || root->value.cols != 1) throw ShapeError("backward: root must be a scalar");
    if (!root->requires_grad) return;

    // Post-order over the graph, iterative to be safe on deep tapes.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p && p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad(0, 0) = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

BatchNormState::BatchNormState(int channels) {
    gamma = param(Matrix(1, channels, 1.0));
    beta = param(Matrix(1, channels, 0.0));
    running_mean.assign(channels, 0.0);
    running_var.assign(channels, 1.0);
}

Matrix upsample_forward(const Matrix& src, int target_len) {
    if (src.rows < 1) throw ShapeError("upsample: empty source");
    if (target_len < 1) throw ShapeError("upsample: target length must be >= 1");
    if (target_len == src.rows) return src;
    Matrix out(target_len, src.cols);
    if (src.rows == 1) {
        for (int t = 0; t < target_len; ++t)
            for (int c = 0; c < src.cols; ++c) out(t, c) = src(0, c);
        return out;
    }
    if (target_len == 1) {
        // Degenerate endpoint alignment: the single output sits on the first frame.
        for (int c = 0; c < src.cols; ++c) out(0, c) = src(0, c);
        return out;
    }
    const double scale = static_cast<double>(src.rows - 1) / (target_len - 1);
    for (int t = 0; t < target_len; ++t) {
        double pos = t * scale;
        int i0 = static_cast<int>(pos);
        if (i0 >= src.rows - 1) i0 = src.rows - 2;
        double frac = pos - i0;
        for (int c = 0; c < src.cols; ++c) out(t, c) = (1.0 - frac) * src(i0, c) + frac * src(i0 + 1, c);
    }
    return out;
}

NodePtr conv1d(const NodePtr& x, const NodePtr& weights, const NodePtr& bias, int cin, int cout, int k, int pad) {
    if (k < 1 || k % 2 == 0) throw ShapeError("conv1d: kernel size must be odd");
    if (pad != (k - 1) / 2) throw ShapeError("conv1d: pad must equal (k-1)/2");
    if (x->value.cols != cin) throw ShapeError("conv1d: input channels mismatch");
    if (weights->value.rows != cout || weights->value.cols != cin * k) throw ShapeError("conv1d: weight shape mismatch");
    if (bias->value.rows != 1 || bias->value.cols != cout) throw ShapeError("conv1d: bias shape mismatch");

    const int T = x->value.rows;
    Matrix out(T, cout);
    const Matrix& xv = x->value;
    const Matrix& wv = weights->value;
    for (int t = 0; t < T; ++t) {
        for (int o = 0; o < cout; ++o) {
            double acc = bias->value(0, o);
            const double* wrow = wv.row(o);
            for (int tap = 0; tap < k; ++tap) {
                int s = t + tap - pad;
                if (s < 0 || s >= T) continue;
                const double* xrow = xv.row(s);
                for (int ci = 0; ci < cin; ++ci) acc += xrow[ci] * wrow[ci * k + tap];
            }
            out(t, o) = acc;
        }
    }

    return make_node(std::move(out), {x, weights, bias}, [x, weights, bias, cin, cout, k, pad](Node& n) {
        const int T = n.value.rows;
        const Matrix& g = n.grad;
        const Matrix& xv = x->value;
        const Matrix& wv = weights->value;
        for (int t = 0; t < T; ++t) {
            for (int o = 0; o < cout; ++o) {
                double go = g(t, o);
                if (go == 0.0) continue;
                if (bias->requires_grad) bias->grad(0, o) += go;
                for (int tap = 0; tap < k; ++tap) {
                    int s = t + tap - pad;
                    if (s < 0 || s >= T) continue;
                    if (weights->requires_grad) {
                        double* wg = weights->grad.row(o);
                        const double* xrow = xv.row(s);
                        for (int ci = 0; ci < cin; ++ci) wg[ci * k + tap] += go * xrow[ci];
                    }
                    if (x->requires_grad) {
                        double* xg = x->grad.row(s);
                        const double* wrow = wv.row(o);
                        for (int ci = 0; ci < cin; ++ci) xg[ci] += go * wrow[ci * k + tap];
                    }
                }
            }
        }
    });
}

NodePtr maxpool1d(const NodePtr& x, int window) {
    if (window < 1) throw ShapeError("maxpool1d: window must be >= 1");
    const int T = x->value.rows, C = x->value.cols;
    const int To = T / window;
    if (To == 0) throw ShapeError("maxpool1d: degenerate output length (window larger than sequence)");

    Matrix out(To, C);
    std::vector<int> arg(static_cast<size_t>(To) * C);
    for (int t = 0; t < To; ++t) {
        for (int c = 0; c < C; ++c) {
            double best = -std::numeric_limits<double>::infinity();
            double second = best;
            int bi = -1;
            for (int s = t * window; s < (t + 1) * window; ++s) {
                double val = x->value(s, c);
                if (val > best) {
                    second = best;
                    best = val;
                    bi = s;
                } else if (val > second) {
                    second = val;
                }
            }
            // Near-ties are kinks; an exact tie at zero is a ReLU plateau
            // (both entries clamped), where the max is locally constant.
            if (window > 1 && best - second < g_kink_tol && !(best == 0.0 && second == 0.0)) ++g_kink_count;
            out(t, c) = best;
            arg[static_cast<size_t>(t) * C + c] = bi;
        }
    }

    return make_node(std::move(out), {x}, [x, C, arg = std::move(arg)](Node& n) {
        if (!x->requires_grad) return;
        for (int t = 0; t < n.value.rows; ++t)
            for (int c = 0; c < C; ++c) x->grad.v[static_cast<size_t>(arg[static_cast<size_t>(t) * C + c]) * C + c] += n.grad(t, c);
    });
}

NodePtr upsample_linear(const NodePtr& x, int target_len) {
    Matrix out = upsample_forward(x->value, target_len);
    const int Ts = x->value.rows;
    return make_node(std::move(out), {x}, [x, Ts, target_len](Node& n) {
        if (!x->requires_grad) return;
        const int C = x->value.cols;
        if (target_len == Ts) {
            for (size_t i = 0; i < n.grad.v.size(); ++i) x->grad.v[i] += n.grad.v[i];
            return;
        }
        if (Ts == 1) {
            for (int t = 0; t < target_len; ++t)
                for (int c = 0; c < C; ++c) x->grad(0, c) += n.grad(t, c);
            return;
        }
        if (target_len == 1) {
            for (int c = 0; c < C; ++c) x->grad(0, c) += n.grad(0, c);
            return;
        }
        const double scale = static_cast<double>(Ts - 1) / (target_len - 1);
        for (int t = 0; t < target_len; ++t) {
            double pos = t * scale;
            int i0 = static_cast<int>(pos);
            if (i0 >= Ts - 1) i0 = Ts - 2;
            double frac = pos - i0;
            for (int c = 0; c < C; ++c) {
                x->grad(i0, c) += (1.0 - frac) * n.grad(t, c);
                x->grad(i0 + 1, c) += frac * n.grad(t, c);
            }
        }
    });
}

NodePtr batchnorm(const NodePtr& x, const Mask& mask, BatchNormState& state, bool training) {
    const int T = x->value.rows, C = x->value.cols;
    if (static_cast<int>(mask.size()) != T) throw ShapeError("batchnorm: mask length mismatch");
    if (state.channels() != C) throw ShapeError("batchnorm: channel count mismatch");
    const int N = mask_count(mask);
    if (N == 0) throw ValidationError("batchnorm: degenerate statistics, all frames masked");

    std::vector<double> mean(C, 0.0), var(C, 0.0);
    if (training) {
        for (int t = 0; t < T; ++t) {
            if (!mask[t]) continue;
            for (int c = 0; c < C; ++c) mean[c] += x->value(t, c);
        }
        for (int c = 0; c < C; ++c) mean[c] /= N;
        for (int t = 0; t < T; ++t) {
            if (!mask[t]) continue;
            for (int c = 0; c < C; ++c) {
                double d = x->value(t, c) - mean[c];
                var[c] += d * d;
            }
        }
        for (int c = 0; c < C; ++c) {
            var[c] /= N;
            if (N > 1 && var[c] < 1e-3) ++g_kink_count;  // near-flat channel, finite differences unreliable
            state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean[c];
            state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * var[c];
        }
    } else {
        mean = state.running_mean;
        var = state.running_var;
    }

    std::vector<double> inv_std(C);
    for (int c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + state.eps);

    Matrix out(T, C);
    Matrix xhat(T, C);
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c) {
            double xh = (x->value(t, c) - mean[c]) * inv_std[c];
            xhat(t, c) = xh;
            out(t, c) = state.gamma->value(0, c) * xh + state.beta->value(0, c);
        }

    NodePtr gamma = state.gamma, beta = state.beta;
    return make_node(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, mask, training, N, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node& n) {
                         const int T = n.value.rows, C = n.value.cols;
                         std::vector<double> s1(C, 0.0), s2(C, 0.0);
                         for (int t = 0; t < T; ++t)
                             for (int c = 0; c < C; ++c) {
                                 s1[c] += n.grad(t, c);
                                 s2[c] += n.grad(t, c) * xhat(t, c);
                             }
                         if (gamma->requires_grad)
                             for (int c = 0; c < C; ++c) gamma->grad(0, c) += s2[c];
                         if (beta->requires_grad)
                             for (int c = 0; c < C; ++c) beta->grad(0, c) += s1[c];
                         if (!x->requires_grad) return;
                         if (training) {
                             for (int t = 0; t < T; ++t)
                                 for (int c = 0; c < C; ++c) {
                                     double g = gamma->value(0, c) * inv_std[c];
                                     double dx = n.grad(t, c);
                                     if (mask[t]) dx -= (s1[c] + xhat(t, c) * s2[c]) / N;
                                     x->grad(t, c) += g * dx;
                                 }
                         } else {
                             for (int t = 0; t < T; ++t)
                                 for (int c = 0; c < C; ++c) x->grad(t, c) += gamma->value(0, c) * inv_std[c] * n.grad(t, c);
                         }
                     });
}

NodePtr relu(const NodePtr& x) {
    Matrix out = x->value;
    for (double& v : out.v) {
        if (std::abs(v) < g_kink_tol) ++g_kink_count;
        if (v < 0.0) v = 0.0;
    }
    return make_node(std::move(out), {x}, [x](Node& n) {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < n.grad.v.size(); ++i)
            if (x->value.v[i] > 0.0) x->grad.v[i] += n.grad.v[i];
    });
}

NodePtr log_floor(const NodePtr& x, double floor) {
    Matrix out = x->value;
    for (double& v : out.v) {
        if (std::abs(v - floor) < g_kink_tol * floor + 1e-12) ++g_kink_count;
        v = std::log(std::max(v, floor));
    }
    return make_node(std::move(out), {x}, [x, floor](Node& n) {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < n.grad.v.size(); ++i)
            if (x->value.v[i] > floor) x->grad.v[i] += n.grad.v[i] / x->value.v[i];
    });
}

NodePtr softmax_rows(const NodePtr& x) {
    const int T = x->value.rows, C = x->value.cols;
    Matrix out(T, C);
    for (int t = 0; t < T; ++t) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < C; ++c) mx = std::max(mx, x->value(t, c));
        double sum = 0.0;
        for (int c = 0; c < C; ++c) {
            double e = std::exp(x->value(t, c) - mx);
            out(t, c) = e;
            sum += e;
        }
        for (int c = 0; c < C; ++c) out(t, c) /= sum;
    }
    return make_node(std::move(out), {x}, [x](Node& n) {
        if (!x->requires_grad) return;
        const int T = n.value.rows, C = n.value.cols;
        for (int t = 0; t < T; ++t) {
            double dot = 0.0;
            for (int c = 0; c < C; ++c) dot += n.grad(t, c) * n.value(t, c);
            for (int c = 0; c < C; ++c) x->grad(t, c) += n.value(t, c) * (n.grad(t, c) - dot);
        }
    });
}

NodePtr concat_cols(const NodePtr& a, const NodePtr& b) {
    if (a->value.rows != b->value.rows) throw ShapeError("concat_cols: row count mismatch");
    const int T = a->value.rows, Ca = a->value.cols, Cb = b->value.cols;
    Matrix out(T, Ca + Cb);
    for (int t = 0; t < T; ++t) {
        for (int c = 0; c < Ca; ++c) out(t, c) = a->value(t, c);
        for (int c = 0; c < Cb; ++c) out(t, Ca + c) = b->value(t, c);
    }
    return make_node(std::move(out), {a, b}, [a, b, Ca, Cb](Node& n) {
        for (int t = 0; t < n.value.rows; ++t) {
            if (a->requires_grad)
                for (int c = 0; c < Ca; ++c) a->grad(t, c) += n.grad(t, c);
            if (b->requires_grad)
                for (int c = 0; c < Cb; ++c) b->grad(t, c) += n.grad(t, Ca + c);
        }
    });
}

NodePtr concat_rows(const std::vector<NodePtr>& xs) {
    if (xs.empty()) throw ShapeError("concat_rows: empty input list");
    const int C = xs[0]->value.cols;
    int T = 0;
    for (const auto& x : xs) {
        if (x->value.cols != C) throw ShapeError("concat_rows: column count mismatch");
        T += x->value.rows;
    }
    Matrix out(T, C);
    int r = 0;
    std::vector<int> offsets;
    for (const auto& x : xs) {
        offsets.push_back(r);
        for (int t = 0; t < x->value.rows; ++t, ++r)
            for (int c = 0; c < C; ++c) out(r, c) = x->value(t, c);
    }
    return make_node(std::move(out), xs, [xs, offsets = std::move(offsets), C](Node& n) {
        for (size_t i = 0; i < xs.size(); ++i) {
            if (!xs[i]->requires_grad) continue;
            int off = offsets[i];
            for (int t = 0; t < xs[i]->value.rows; ++t)
                for (int c = 0; c < C; ++c) xs[i]->grad(t, c) += n.grad(off + t, c);
        }
    });
}

NodePtr slice_rows(const NodePtr& x, int r0, int r1) {
    if (r0 < 0 || r1 > x->value.rows || r0 >= r1) throw ShapeError("slice_rows: invalid range");
    const int C = x->value.cols;
    Matrix out(r1 - r0, C);
    for (int t = r0; t < r1; ++t)
        for (int c = 0; c < C; ++c) out(t - r0, c) = x->value(t, c);
    return make_node(std::move(out), {x}, [x, r0, C](Node& n) {
        if (!x->requires_grad) return;
        for (int t = 0; t < n.value.rows; ++t)
            for (int c = 0; c < C; ++c) x->grad(r0 + t, c) += n.grad(t, c);
    });
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
    check_same_shape(a, b, "add");
    Matrix out = a->value;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += b->value.v[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad)
            for (size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i];
        if (b->requires_grad)
            for (size_t i = 0; i < n.grad.v.size(); ++i) b->grad.v[i] += n.grad.v[i];
    });
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
    check_same_shape(a, b, "sub");
    Matrix out = a->value;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b->value.v[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad)
            for (size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i];
        if (b->requires_grad)
            for (size_t i = 0; i < n.grad.v.size(); ++i) b->grad.v[i] -= n.grad.v[i];
    });
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
    check_same_shape(a, b, "mul");
    Matrix out = a->value;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b->value.v[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad)
            for (size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i] * b->value.v[i];
        if (b->requires_grad)
            for (size_t i = 0; i < n.grad.v.size(); ++i) b->grad.v[i] += n.grad.v[i] * a->value.v[i];
    });
}

NodePtr affine(const NodePtr& x, double scale, double shift) {
    Matrix out = x->value;
    for (double& v : out.v) v = scale * v + shift;
    return make_node(std::move(out), {x}, [x, scale](Node& n) {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < n.grad.v.size(); ++i) x->grad.v[i] += scale * n.grad.v[i];
    });
}

NodePtr clamp_max(const NodePtr& x, double cap) {
    Matrix out = x->value;
    for (double& v : out.v) {
        if (std::abs(v - cap) < g_kink_tol) ++g_kink_count;
        v = std::min(v, cap);
    }
    return make_node(std::move(out), {x}, [x, cap](Node& n) {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < n.grad.v.size(); ++i)
            if (x->value.v[i] < cap) x->grad.v[i] += n.grad.v[i];
    });
}

NodePtr abs_val(const NodePtr& x) {
    Matrix out = x->value;
    for (double& v : out.v) {
        if (std::abs(v) < g_kink_tol) ++g_kink_count;
        v = std::abs(v);
    }
    return make_node(std::move(out), {x}, [x](Node& n) {
        if (!x->requires_grad) return;
        for (size_t i = 0; i < n.grad.v.size(); ++i) {
            if (x->value.v[i] > 0.0)
                x->grad.v[i] += n.grad.v[i];
            else if (x->value.v[i] < 0.0)
                x->grad.v[i] -= n.grad.v[i];
        }
    });
}

NodePtr temporal_max(const NodePtr& x, const Mask& mask) {
    const int T = x->value.rows, C = x->value.cols;
    if (static_cast<int>(mask.size()) != T) throw ShapeError("temporal_max: mask length mismatch");
    if (mask_count(mask) == 0) throw ValidationError("temporal_max: all frames masked");

    Matrix out(1, C);
    std::vector<int> arg(C, -1);
    for (int c = 0; c < C; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        double second = best;
        for (int t = 0; t < T; ++t) {
            if (!mask[t]) continue;
            double v = x->value(t, c);
            if (v > best) {
                second = best;
                best = v;
                arg[c] = t;
            } else if (v > second) {
                second = v;
            }
        }
        if (std::isfinite(second) && best - second < g_kink_tol) ++g_kink_count;
        out(0, c) = best;
    }
    return make_node(std::move(out), {x}, [x, arg = std::move(arg)](Node& n) {
        if (!x->requires_grad) return;
        for (int c = 0; c < n.value.cols; ++c) x->grad(arg[c], c) += n.grad(0, c);
    });
}

NodePtr weighted_sum(const NodePtr& x, const Matrix& w) {
    if (!x->value.same_shape(w)) throw ShapeError("weighted_sum: weight shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < w.v.size(); ++i) acc += x->value.v[i] * w.v[i];
    Matrix out(1, 1);
    out(0, 0) = acc;
    return make_node(std::move(out), {x}, [x, w](Node& n) {
        if (!x->requires_grad) return;
        double g = n.grad(0, 0);
        for (size_t i = 0; i < w.v.size(); ++i) x->grad.v[i] += g * w.v[i];
    });
}

NodePtr mean_all(const NodePtr& x) {
    Matrix w(x->value.rows, x->value.cols, 1.0 / (static_cast<double>(x->value.rows) * x->value.cols));
    return weighted_sum(x, w);
}

GradCheckResult grad_check(const GraphBuilder& build, const std::vector<NodePtr>& params, double step, double threshold,
                           std::uint64_t seed, int max_resamples) {
    for (int attempt = 0; attempt <= max_resamples; ++attempt) {
        const std::uint64_t trial_seed = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(attempt);

        auto run_forward = [&](bool with_grad) {
            std::mt19937_64 rng(trial_seed);
            g_kink_count = 0;
            NodePtr root;
            if (with_grad) {
                root = build(rng);
            } else {
                NoGradGuard ng;
                root = build(rng);
            }
            return root;
        };

        NodePtr root = run_forward(true);
        if (root->value.rows != 1 || root->value.cols != 1) throw ShapeError("grad_check: builder must return a scalar");
        if (!std::isfinite(root->value(0, 0)))
            throw ValidationError("grad_check: non-finite loss value, check aborted");
        if (g_kink_count > 0) continue;

        zero_grad(params);
        backward(root);
        std::vector<Matrix> analytic;
        analytic.reserve(params.size());
        for (const auto& p : params) analytic.push_back(p->grad);

        double max_rel = 0.0;
        bool clean = true;
        for (size_t pi = 0; pi < params.size() && clean; ++pi) {
            Matrix& val = params[pi]->value;
            for (size_t i = 0; i < val.v.size() && clean; ++i) {
                const double orig = val.v[i];
                val.v[i] = orig + step;
                double f_plus = scalar_value(run_forward(false));
                bool kinked = g_kink_count > 0;
                val.v[i] = orig - step;
                double f_minus = scalar_value(run_forward(false));
                kinked = kinked || g_kink_count > 0;
                val.v[i] = orig;
                if (kinked) {
                    clean = false;
                    break;
                }
                double fd = (f_plus - f_minus) / (2.0 * step);
                double an = analytic[pi].v[i];
                double rel = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
                max_rel = std::max(max_rel, rel);
            }
        }
        if (!clean) continue;
        return {max_rel, attempt, max_rel < threshold};
    }
    throw ValidationError("grad_check: exhausted resamples without a kink-free trial");
}

}  // namespace c2f::ag
