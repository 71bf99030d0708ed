#include "stam/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stam {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void check_shape(const Shape& shape) {
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
}

void check_rank(const TensorPtr& t, int rank, const char* what) {
    if (t->ndim() != rank) {
        throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                             ", got " + shape_str(t->shape));
    }
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

TensorPtr make_tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    check_shape(shape);
    if (numel(shape) != values.size()) {
        throw DimensionError("value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
    }
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->values = std::move(values);
    t->requires_grad = requires_grad;
    if (requires_grad) t->ensure_grad();
    return t;
}

TensorPtr make_tensor(Shape shape, double fill, bool requires_grad) {
    check_shape(shape);
    std::vector<double> values(numel(shape), fill);
    return make_tensor(std::move(shape), std::move(values), requires_grad);
}

TensorPtr make_node(Tape& tape, Shape shape, std::vector<double> values,
                    std::vector<TensorPtr> parents) {
    auto t = make_tensor(std::move(shape), std::move(values), false);
    if (tape.grad_enabled()) {
        for (const auto& p : parents) {
            if (p->requires_grad) {
                t->requires_grad = true;
                break;
            }
        }
    }
    if (t->requires_grad) {
        t->ensure_grad();
        t->parents = std::move(parents);
        tape.nodes_.push_back(t);
    }
    return t;
}

void Tape::backward(const TensorPtr& loss) {
    if (!loss || loss->size() != 1) {
        throw ContractError("backward: loss must be a scalar tensor");
    }
    if (!loss->requires_grad) return;  // nothing reachable wants gradients
    loss->ensure_grad();
    loss->grad[0] += 1.0;
    std::size_t start = nodes_.size();
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].get() == loss.get()) {
            start = i + 1;
            break;
        }
    }
    for (std::size_t i = start; i-- > 0;) {
        if (nodes_[i]->backward_fn) nodes_[i]->backward_fn();
    }
}

// --- conv2d -----------------------------------------------------------

TensorPtr conv2d(Tape& tape, const TensorPtr& input, const TensorPtr& kernel,
                 const TensorPtr& bias, int stride, int padding) {
    check_rank(input, 3, "conv2d input");
    check_rank(kernel, 4, "conv2d kernel");
    check_rank(bias, 1, "conv2d bias");
    const int h = input->shape[0], w = input->shape[1], ci = input->shape[2];
    const int k = kernel->shape[0];
    if (kernel->shape[1] != k) throw DimensionError("conv2d: kernel must be square");
    if (kernel->shape[2] != ci) {
        throw DimensionError("conv2d: kernel c_in " + std::to_string(kernel->shape[2]) +
                             " vs input channels " + std::to_string(ci));
    }
    const int co = kernel->shape[3];
    if (bias->shape[0] != co) throw DimensionError("conv2d: bias size vs kernel c_out");
    if (stride < 1) throw ParameterError("conv2d: stride must be >= 1");
    if (padding < 0) throw ParameterError("conv2d: padding must be >= 0");
    if (k > h + 2 * padding || k > w + 2 * padding) {
        throw ParameterError("conv2d: kernel exceeds padded input");
    }
    const int ho = (h + 2 * padding - k) / stride + 1;
    const int wo = (w + 2 * padding - k) / stride + 1;

    std::vector<double> out(static_cast<std::size_t>(ho) * wo * co);
    const double* in = input->values.data();
    const double* ker = kernel->values.data();
    const double* bs = bias->values.data();
    for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
            double* op = out.data() + (static_cast<std::size_t>(oy) * wo + ox) * co;
            for (int c = 0; c < co; ++c) op[c] = bs[c];
            for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * stride + ky - padding;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int ix = ox * stride + kx - padding;
                    if (ix < 0 || ix >= w) continue;
                    const double* ip = in + (static_cast<std::size_t>(iy) * w + ix) * ci;
                    const double* kp = ker + (static_cast<std::size_t>(ky) * k + kx) * ci * co;
                    for (int c = 0; c < ci; ++c) {
                        const double v = ip[c];
                        const double* kc = kp + static_cast<std::size_t>(c) * co;
                        for (int o = 0; o < co; ++o) op[o] += v * kc[o];
                    }
                }
            }
        }
    }

    auto node = make_node(tape, {ho, wo, co}, std::move(out), {input, kernel, bias});
    if (node->requires_grad) {
        Tensor* self = node.get();
        TensorPtr x = input, kn = kernel, b = bias;
        node->backward_fn = [self, x, kn, b, stride, padding, h, w, ci, k, co, ho, wo]() {
            const double* g = self->grad.data();
            const double* in = x->values.data();
            const double* ker = kn->values.data();
            double* dx = nullptr;
            double* dk = nullptr;
            double* db = nullptr;
            if (x->requires_grad) { x->ensure_grad(); dx = x->grad.data(); }
            if (kn->requires_grad) { kn->ensure_grad(); dk = kn->grad.data(); }
            if (b->requires_grad) { b->ensure_grad(); db = b->grad.data(); }
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox) {
                    const double* gp = g + (static_cast<std::size_t>(oy) * wo + ox) * co;
                    if (db) {
                        for (int o = 0; o < co; ++o) db[o] += gp[o];
                    }
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * stride + ky - padding;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * stride + kx - padding;
                            if (ix < 0 || ix >= w) continue;
                            const std::size_t ioff = (static_cast<std::size_t>(iy) * w + ix) * ci;
                            const std::size_t koff = (static_cast<std::size_t>(ky) * k + kx) * ci * co;
                            for (int c = 0; c < ci; ++c) {
                                const double* kc = ker + koff + static_cast<std::size_t>(c) * co;
                                double acc = 0.0;
                                if (dk) {
                                    const double v = in[ioff + c];
                                    double* dkc = dk + koff + static_cast<std::size_t>(c) * co;
                                    for (int o = 0; o < co; ++o) {
                                        dkc[o] += v * gp[o];
                                        acc += kc[o] * gp[o];
                                    }
                                } else {
                                    for (int o = 0; o < co; ++o) acc += kc[o] * gp[o];
                                }
                                if (dx) dx[ioff + c] += acc;
                            }
                        }
                    }
                }
            }
        };
    }
    return node;
}

// --- pooling ----------------------------------------------------------

TensorPtr pool2d(Tape& tape, const TensorPtr& input, int window, int stride, PoolMode mode) {
    check_rank(input, 3, "pool2d input");
    if (window < 1 || stride < 1) throw ParameterError("pool2d: window and stride must be >= 1");
    const int h = input->shape[0], w = input->shape[1], c = input->shape[2];
    if (window > h || window > w) throw ParameterError("pool2d: window exceeds input");
    const int ho = (h - window) / stride + 1;
    const int wo = (w - window) / stride + 1;

    std::vector<double> out(static_cast<std::size_t>(ho) * wo * c);
    std::vector<std::size_t> argmax;
    if (mode == PoolMode::Max) argmax.resize(out.size());
    const double* in = input->values.data();
    const double inv_area = 1.0 / (static_cast<double>(window) * window);
    for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
            for (int ch = 0; ch < c; ++ch) {
                const std::size_t oidx = (static_cast<std::size_t>(oy) * wo + ox) * c + ch;
                if (mode == PoolMode::Max) {
                    double best = -1e300;
                    std::size_t best_idx = 0;
                    for (int wy = 0; wy < window; ++wy) {
                        for (int wx = 0; wx < window; ++wx) {
                            const std::size_t idx =
                                (static_cast<std::size_t>(oy * stride + wy) * w + ox * stride + wx) * c + ch;
                            if (in[idx] > best) {  // strict: first max wins ties
                                best = in[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out[oidx] = best;
                    argmax[oidx] = best_idx;
                } else {
                    double acc = 0.0;
                    for (int wy = 0; wy < window; ++wy) {
                        for (int wx = 0; wx < window; ++wx) {
                            acc += in[(static_cast<std::size_t>(oy * stride + wy) * w + ox * stride + wx) * c + ch];
                        }
                    }
                    out[oidx] = acc * inv_area;
                }
            }
        }
    }

    auto node = make_node(tape, {ho, wo, c}, std::move(out), {input});
    if (node->requires_grad) {
        Tensor* self = node.get();
        TensorPtr x = input;
        if (mode == PoolMode::Max) {
            node->backward_fn = [self, x, argmax = std::move(argmax)]() {
                if (!x->requires_grad) return;
                x->ensure_grad();
                for (std::size_t i = 0; i < self->grad.size(); ++i) {
                    x->grad[argmax[i]] += self->grad[i];
                }
            };
        } else {
            node->backward_fn = [self, x, window, stride, w, c, ho, wo, inv_area]() {
                if (!x->requires_grad) return;
                x->ensure_grad();
                for (int oy = 0; oy < ho; ++oy) {
                    for (int ox = 0; ox < wo; ++ox) {
                        for (int ch = 0; ch < c; ++ch) {
                            const double g =
                                self->grad[(static_cast<std::size_t>(oy) * wo + ox) * c + ch] * inv_area;
                            for (int wy = 0; wy < window; ++wy) {
                                for (int wx = 0; wx < window; ++wx) {
                                    x->grad[(static_cast<std::size_t>(oy * stride + wy) * w + ox * stride + wx) * c +
                                            ch] += g;
                                }
                            }
                        }
                    }
                }
            };
        }
    }
    return node;
}

TensorPtr channel_pool(Tape& tape, const TensorPtr& input, PoolMode mode) {
    check_rank(input, 3, "channel_pool input");
    const int h = input->shape[0], w = input->shape[1], c = input->shape[2];
    std::vector<double> out(static_cast<std::size_t>(h) * w);
    std::vector<int> argmax;
    if (mode == PoolMode::Max) argmax.resize(out.size());
    const double* in = input->values.data();
    for (std::size_t p = 0; p < out.size(); ++p) {
        const double* ip = in + p * c;
        if (mode == PoolMode::Max) {
            double best = ip[0];
            int bi = 0;
            for (int ch = 1; ch < c; ++ch) {
                if (ip[ch] > best) {
                    best = ip[ch];
                    bi = ch;
                }
            }
            out[p] = best;
            argmax[p] = bi;
        } else {
            double acc = 0.0;
            for (int ch = 0; ch < c; ++ch) acc += ip[ch];
            out[p] = acc / c;
        }
    }

    auto node = make_node(tape, {h, w, 1}, std::move(out), {input});
    if (node->requires_grad) {
        Tensor* self = node.get();
        TensorPtr x = input;
        if (mode == PoolMode::Max) {
            node->backward_fn = [self, x, c, argmax = std::move(argmax)]() {
                if (!x->requires_grad) return;
                x->ensure_grad();
                for (std::size_t p = 0; p < self->grad.size(); ++p) {
                    x->grad[p * c + argmax[p]] += self->grad[p];
                }
            };
        } else {
            node->backward_fn = [self, x, c]() {
                if (!x->requires_grad) return;
                x->ensure_grad();
                const double inv = 1.0 / c;
                for (std::size_t p = 0; p < self->grad.size(); ++p) {
                    const double g = self->grad[p] * inv;
                    for (int ch = 0; ch < c; ++ch) x->grad[p * c + ch] += g;
                }
            };
        }
    }
    return node;
}

// --- linear algebra ----------------------------------------------------

TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    check_rank(a, 2, "matmul lhs");
    check_rank(b, 2, "matmul rhs");
    const int p = a->shape[0], q = a->shape[1], r = b->shape[1];
    if (b->shape[0] != q) {
        throw DimensionError("matmul: inner dimensions " + shape_str(a->shape) + " vs " +
                             shape_str(b->shape));
    }
    std::vector<double> out(static_cast<std::size_t>(p) * r, 0.0);
    const double* av = a->values.data();
    const double* bv = b->values.data();
    for (int i = 0; i < p; ++i) {
        double* op = out.data() + static_cast<std::size_t>(i) * r;
        const double* ap = av + static_cast<std::size_t>(i) * q;
        for (int kk = 0; kk < q; ++kk) {
            const double v = ap[kk];
            const double* bp = bv + static_cast<std::size_t>(kk) * r;
            for (int j = 0; j < r; ++j) op[j] += v * bp[j];
        }
    }

    auto node = make_node(tape, {p, r}, std::move(out), {a, b});
    if (node->requires_grad) {
        Tensor* self = node.get();
        TensorPtr ta = a, tb = b;
        node->backward_fn = [self, ta, tb, p, q, r]() {
            const double* g = self->grad.data();
            if (ta->requires_grad) {  // dA = dC * B^T
                ta->ensure_grad();
                const double* bv = tb->values.data();
                for (int i = 0; i < p; ++i) {
                    const double* gp = g + static_cast<std::size_t>(i) * r;
                    double* dp = ta->grad.data() + static_cast<std::size_t>(i) * q;
                    for (int kk = 0; kk < q; ++kk) {
                        const double* bp = bv + static_cast<std::size_t>(kk) * r;
                        double acc = 0.0;
                        for (int j = 0; j < r; ++j) acc += gp[j] * bp[j];
                        dp[kk] += acc;
                    }
                }
            }
            if (tb->requires_grad) {  // dB = A^T * dC
                tb->ensure_grad();
                const double* av = ta->values.data();
                for (int kk = 0; kk < q; ++kk) {
                    double* dp = tb->grad.data() + static_cast<std::size_t>(kk) * r;
                    for (int i = 0; i < p; ++i) {
                        const double v = av[static_cast<std::size_t>(i) * q + kk];
                        const double* gp = g + static_cast<std::size_t>(i) * r;
                        for (int j = 0; j < r; ++j) dp[j] += v * gp[j];
                    }
                }
            }
        };
    }
    return node;
}

TensorPtr transpose(Tape& tape, const TensorPtr& a) {
    check_rank(a, 2, "transpose input");
    const int p = a->shape[0], q = a->shape[1];
    std::vector<double> out(a->size());
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < q; ++j) {
            out[static_cast<std::size_t>(j) * p + i] = a->values[static_cast<std::size_t>(i) * q + j];
        }
    }
    auto node = make_node(tape, {q, p}, std::move(out), {a});
    if (node->requires_grad) {
        Tensor* self = node.get();
        TensorPtr x = a;
        node->backward_fn = [self, x, p, q]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            for (int i = 0; i < p; ++i) {
                for (int j = 0; j < q; ++j) {
                    x->grad[static_cast<std::size_t>(i) * q + j] +=
                        self->grad[static_cast<std::size_t>(j) * p + i];
                }
            }
        };
    }
    return node;
}

TensorPtr softmax_rows(Tape& tape, const TensorPtr& a) {
    check_rank(a, 2, "softmax_rows input");
    const int p = a->shape[0], q = a->shape[1];
    std::vector<double> out(a->size());
    for (int i = 0; i < p; ++i) {
        const double* ip = a->values.data() + static_cast<std::size_t>(i) * q;
        double* op = out.data() + static_cast<std::size_t>(i) * q;
        double mx = ip[0];
        for (int j = 1; j < q; ++j) mx = std::max(mx, ip[j]);
        double denom = 0.0;
        for (int j = 0; j < q; ++j) {
            op[j] = std::exp(ip[j] - mx);
            denom += op[j];
        }
        const double inv = 1.0 / denom;
        for (int j = 0; j < q; ++j) op[j] *= inv;
    }
    auto node = make_node(tape, {p, q}, std::move(out), {a});
    if (node->requires_grad) {
        Tensor* self = node.get();
        TensorPtr x = a;
        node->backward_fn = [self, x, p, q]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            for (int i = 0; i < p; ++i) {
                const double* y = self->values.data() + static_cast<std::size_t>(i) * q;
                const double* g = self->grad.data() + static_cast<std::size_t>(i) * q;
                double dot = 0.0;
                for (int j = 0; j < q; ++j) dot += y[j] * g[j];
                double* dx = x->grad.data() + static_cast<std::size_t>(i) * q;
                for (int j = 0; j < q; ++j) dx[j] += y[j] * (g[j] - dot);
            }
        };
    }
    return node;
}

TensorPtr activation(Tape& tape, const TensorPtr& a, ActKind kind) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < a->size(); ++i) {
        out[i] = (kind == ActKind::Sigmoid) ? stable_sigmoid(a->values[i])
                                            : std::max(0.0, a->values[i]);
    }
    auto node = make_node(tape, a->shape, std::move(out), {a});
    if (node->requires_grad) {
        Tensor* self = node.get();
        TensorPtr x = a;
        node->backward_fn = [self, x, kind]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i) {
                const double y = self->values[i];
                x->grad[i] += (kind == ActKind::Sigmoid) ? self->grad[i] * y * (1.0 - y)
                                                         : (y > 0.0 ? self->grad[i] : 0.0);
            }
        };
    }
    return node;
}

// --- elementwise with the single gate broadcast -------------------------

namespace {

enum class BroadcastKind { None, Channel };

BroadcastKind broadcast_kind(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape == b->shape) return BroadcastKind::None;
    if (a->ndim() == 3 && b->ndim() == 3 && b->shape[0] == a->shape[0] &&
        b->shape[1] == a->shape[1] && b->shape[2] == 1) {
        return BroadcastKind::Channel;
    }
    throw DimensionError("elementwise: shapes " + shape_str(a->shape) + " and " +
                         shape_str(b->shape) + " are not compatible");
}

}  // namespace

TensorPtr mul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    const BroadcastKind bk = broadcast_kind(a, b);
    std::vector<double> out(a->size());
    if (bk == BroadcastKind::None) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] * b->values[i];
    } else {
        const int c = a->shape[2];
        for (std::size_t p = 0; p < b->size(); ++p) {
            const double g = b->values[p];
            for (int ch = 0; ch < c; ++ch) out[p * c + ch] = a->values[p * c + ch] * g;
        }
    }
    auto node = make_node(tape, a->shape, std::move(out), {a, b});
    if (node->requires_grad) {
        Tensor* self = node.get();
        TensorPtr ta = a, tb = b;
        node->backward_fn = [self, ta, tb, bk]() {
            if (bk == BroadcastKind::None) {
                if (ta->requires_grad) {
                    ta->ensure_grad();
                    for (std::size_t i = 0; i < self->grad.size(); ++i)
                        ta->grad[i] += self->grad[i] * tb->values[i];
                }
                if (tb->requires_grad) {
                    tb->ensure_grad();
                    for (std::size_t i = 0; i < self->grad.size(); ++i)
                        tb->grad[i] += self->grad[i] * ta->values[i];
                }
            } else {
                const int c = ta->shape[2];
                if (ta->requires_grad) {
                    ta->ensure_grad();
                    for (std::size_t p = 0; p < tb->size(); ++p) {
                        const double g = tb->values[p];
                        for (int ch = 0; ch < c; ++ch)
                            ta->grad[p * c + ch] += self->grad[p * c + ch] * g;
                    }
                }
                if (tb->requires_grad) {
                    tb->ensure_grad();
                    for (std::size_t p = 0; p < tb->size(); ++p) {
                        double acc = 0.0;
                        for (int ch = 0; ch < c; ++ch)
                            acc += self->grad[p * c + ch] * ta->values[p * c + ch];
                        tb->grad[p] += acc;
                    }
                }
            }
        };
    }
    return node;
}

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    const BroadcastKind bk = broadcast_kind(a, b);
    std::vector<double> out(a->size());
    if (bk == BroadcastKind::None) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] + b->values[i];
    } else {
        const int c = a->shape[2];
        for (std::size_t p = 0; p < b->size(); ++p) {
            const double g = b->values[p];
            for (int ch = 0; ch < c; ++ch) out[p * c + ch] = a->values[p * c + ch] + g;
        }
    }
    auto node = make_node(tape, a->shape, std::move(out), {a, b});
    if (node->requires_grad) {
        Tensor* self = node.get();
        TensorPtr ta = a, tb = b;
        node->backward_fn = [self, ta, tb, bk]() {
            if (ta->requires_grad) {
                ta->ensure_grad();
                for (std::size_t i = 0; i < self->grad.size(); ++i) ta->grad[i] += self->grad[i];
            }
            if (tb->requires_grad) {
                tb->ensure_grad();
                if (bk == BroadcastKind::None) {
                    for (std::size_t i = 0; i < self->grad.size(); ++i) tb->grad[i] += self->grad[i];
                } else {
                    const int c = ta->shape[2];
                    for (std::size_t p = 0; p < tb->size(); ++p) {
                        double acc = 0.0;
                        for (int ch = 0; ch < c; ++ch) acc += self->grad[p * c + ch];
                        tb->grad[p] += acc;
                    }
                }
            }
        };
    }
    return node;
}

// --- layout ------------------------------------------------------------

TensorPtr reshape(Tape& tape, const TensorPtr& a, Shape target) {
    check_shape(target);
    if (numel(target) != a->size()) {
        throw DimensionError("reshape: element count mismatch " + shape_str(a->shape) + " -> " +
                             shape_str(target));
    }
    auto node = make_node(tape, std::move(target), a->values, {a});
    if (node->requires_grad) {
        Tensor* self = node.get();
        TensorPtr x = a;
        node->backward_fn = [self, x]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i) x->grad[i] += self->grad[i];
        };
    }
    return node;
}

TensorPtr concat(Tape& tape, const std::vector<TensorPtr>& parts, int axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    const int rank = parts[0]->ndim();
    if (axis < 0 || axis >= rank) throw DimensionError("concat: axis out of range");
    Shape out_shape = parts[0]->shape;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        if (parts[i]->ndim() != rank) throw DimensionError("concat: rank mismatch");
        for (int d = 0; d < rank; ++d) {
            if (d == axis) continue;
            if (parts[i]->shape[d] != out_shape[d]) {
                throw DimensionError("concat: extent mismatch off the concat axis");
            }
        }
        out_shape[axis] += parts[i]->shape[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(out_shape[d]);
    for (int d = axis + 1; d < rank; ++d) inner *= static_cast<std::size_t>(out_shape[d]);

    std::vector<double> out(numel(out_shape));
    const std::size_t out_row = static_cast<std::size_t>(out_shape[axis]) * inner;
    std::size_t offset = 0;
    for (const auto& part : parts) {
        const std::size_t rows = static_cast<std::size_t>(part->shape[axis]) * inner;
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(part->values.data() + o * rows, rows, out.data() + o * out_row + offset);
        }
        offset += rows;
    }

    auto node = make_node(tape, out_shape, std::move(out), parts);
    if (node->requires_grad) {
        Tensor* self = node.get();
        std::vector<TensorPtr> ps = parts;
        node->backward_fn = [self, ps, outer, inner, out_row, axis]() {
            std::size_t offset = 0;
            for (const auto& part : ps) {
                const std::size_t rows = static_cast<std::size_t>(part->shape[axis]) * inner;
                if (part->requires_grad) {
                    part->ensure_grad();
                    for (std::size_t o = 0; o < outer; ++o) {
                        const double* g = self->grad.data() + o * out_row + offset;
                        double* dst = part->grad.data() + o * rows;
                        for (std::size_t i = 0; i < rows; ++i) dst[i] += g[i];
                    }
                }
                offset += rows;
            }
        };
    }
    return node;
}

// --- reductions & misc ---------------------------------------------------

TensorPtr scale(Tape& tape, const TensorPtr& a, double factor) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] * factor;
    auto node = make_node(tape, a->shape, std::move(out), {a});
    if (node->requires_grad) {
        Tensor* self = node.get();
        TensorPtr x = a;
        node->backward_fn = [self, x, factor]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i) x->grad[i] += self->grad[i] * factor;
        };
    }
    return node;
}

TensorPtr sum(Tape& tape, const TensorPtr& a) {
    double acc = 0.0;
    for (double v : a->values) acc += v;
    auto node = make_node(tape, {1}, {acc}, {a});
    if (node->requires_grad) {
        Tensor* self = node.get();
        TensorPtr x = a;
        node->backward_fn = [self, x]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            const double g = self->grad[0];
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
        };
    }
    return node;
}

TensorPtr pick(Tape& tape, const TensorPtr& a, int index) {
    if (index < 0 || static_cast<std::size_t>(index) >= a->size()) {
        throw ContractError("pick: index out of range");
    }
    auto node = make_node(tape, {1}, {a->values[static_cast<std::size_t>(index)]}, {a});
    if (node->requires_grad) {
        Tensor* self = node.get();
        TensorPtr x = a;
        node->backward_fn = [self, x, index]() {
            if (!x->requires_grad) return;
            x->ensure_grad();
            x->grad[static_cast<std::size_t>(index)] += self->grad[0];
        };
    }
    return node;
}

TensorPtr mean_stack(Tape& tape, const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ContractError("mean_stack: no inputs");
    for (const auto& p : parts) {
        if (p->shape != parts[0]->shape) throw DimensionError("mean_stack: shape mismatch");
    }
    const double inv = 1.0 / static_cast<double>(parts.size());
    // mean as first + mean of deviations: identical inputs stay bit-identical
    std::vector<double> out(parts[0]->values);
    if (parts.size() > 1) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            double dev = 0.0;
            for (std::size_t k = 1; k < parts.size(); ++k) dev += parts[k]->values[i] - out[i];
            out[i] += dev * inv;
        }
    }
    auto node = make_node(tape, parts[0]->shape, std::move(out), parts);
    if (node->requires_grad) {
        Tensor* self = node.get();
        std::vector<TensorPtr> ps = parts;
        node->backward_fn = [self, ps, inv]() {
            for (const auto& p : ps) {
                if (!p->requires_grad) continue;
                p->ensure_grad();
                for (std::size_t i = 0; i < self->grad.size(); ++i) p->grad[i] += self->grad[i] * inv;
            }
        };
    }
    return node;
}

// --- gradient checking ----------------------------------------------------

double finite_difference_check(const std::function<TensorPtr(Tape&)>& f,
                               const TensorPtr& x, double step) {
    if (step <= 0.0) throw ParameterError("finite_difference_check: step must be > 0");
    if (!x->requires_grad) throw ContractError("finite_difference_check: x must require grad");
    x->zero_grad();
    {
        Tape tape;
        auto loss = f(tape);
        tape.backward(loss);
    }
    std::vector<double> analytic = x->grad;
    double worst = 0.0;
    for (std::size_t i = 0; i < x->size(); ++i) {
        const double saved = x->values[i];
        x->values[i] = saved + step;
        double lp;
        {
            Tape tape(false);
            lp = f(tape)->values[0];
        }
        x->values[i] = saved - step;
        double lm;
        {
            Tape tape(false);
            lm = f(tape)->values[0];
        }
        x->values[i] = saved;
        const double central = (lp - lm) / (2.0 * step);
        const double err = std::abs(analytic[i] - central) / std::max(1e-8, std::abs(central));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace stam
