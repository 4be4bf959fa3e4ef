#include "hybridyn/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <thread>

#include "spectral.hpp"
#include "stencil.hpp"

namespace hybridyn {

namespace {

using Block = std::span<cplx>;
using ConstBlock = std::span<const cplx>;

// C += alpha * A * B for column-major d x d blocks.
void gemm_add(ConstBlock a, ConstBlock b, Block c, cplx alpha, std::size_t d) {
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < d; ++k) {
            const cplx bkj = alpha * b[j * d + k];
            if (bkj == cplx{}) continue;
            for (std::size_t i = 0; i < d; ++i) c[j * d + i] += a[k * d + i] * bkj;
        }
    }
}

std::span<const cplx> span_of(const Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

void require_same_grid(const PhaseGrid& a, const PhaseGrid& b, const char* what) {
    if (!(a == b)) throw ShapeMismatch(std::string(what) + ": fields live on different grids");
}

// Precomputed pieces of the hybrid master generator for one Hamiltonian and
// noise model. Evaluating it is allocation-free apart from the gradient cache.
class Generator {
public:
    Generator(const HybridHamiltonian& h, const NoiseModel& noise, const UnitsConfig& units, bool include_noise,
              DerivativeScheme scheme)
        : grid_(h.grid()), d_(static_cast<std::size_t>(h.dim())), block_(d_ * d_), hbar_(units.hbar), scheme_(scheme) {
        h.validate();
        units.validate();
        const std::size_t naxes = grid_.axis_count();
        const std::size_t npts = grid_.size();

        hpoint_.assign(npts * block_, cplx{});
        for (std::size_t pt = 0; pt < npts; ++pt) {
            Eigen::Map<Matrix> m(hpoint_.data() + pt * block_, h.dim(), h.dim());
            m = h.hq;
            for (const auto& c : h.couplings) m += c.phi.values[pt] * c.f;
        }

        // Liouville coefficients of the scalar part: {H_C, rho} = sum_a lc_a d_a rho
        liouville_.assign(naxes, std::vector<double>(npts, 0.0));
        for (std::size_t n = 0; n < grid_.dofs(); ++n) {
            const auto dq = derivative(h.hc, PhaseGrid::q_axis(n));
            const auto dp = derivative(h.hc, PhaseGrid::p_axis(n));
            for (std::size_t pt = 0; pt < npts; ++pt) {
                liouville_[PhaseGrid::p_axis(n)][pt] = dq.values[pt];
                liouville_[PhaseGrid::q_axis(n)][pt] = -dp.values[pt];
            }
        }

        // Hamiltonian vector fields of the coupling fields: {phi_r, X} = sum_a w_ra d_a X
        for (const auto& c : h.couplings) {
            fs_.push_back(c.f);
            std::vector<std::vector<double>> w(naxes, std::vector<double>(npts, 0.0));
            for (std::size_t n = 0; n < grid_.dofs(); ++n) {
                const auto dq = derivative(c.phi, PhaseGrid::q_axis(n));
                const auto dp = derivative(c.phi, PhaseGrid::p_axis(n));
                for (std::size_t pt = 0; pt < npts; ++pt) {
                    w[PhaseGrid::p_axis(n)][pt] = dq.values[pt];
                    w[PhaseGrid::q_axis(n)][pt] = -dp.values[pt];
                }
            }
            coupling_flow_.push_back(std::move(w));
        }

        if (include_noise) {
            noise.validate();
            if (noise.couplings() != h.couplings.size()) {
                throw ShapeMismatch("noise matrices do not match the number of couplings");
            }
            setup_dissipator(noise.dc);
            setup_diffusion(noise.dq);
            if (scheme_ == DerivativeScheme::central) setup_jump_correction(noise, units);
        }
        grad_.assign(naxes, std::vector<cplx>(npts * block_));
        tmp_.assign(block_, cplx{});
        if (scheme_ == DerivativeScheme::spectral) {
            spectral_ = std::make_unique<detail::SpectralDerivative>(grid_, block_);
            flux_.resize(npts * block_);
            dflux_.resize(npts * block_);
        }
    }

    const PhaseGrid& grid() const { return grid_; }

    // out = generator(rho)
    void apply(const MatrixField& rho, MatrixField& out) {
        const std::size_t npts = grid_.size();
        const std::size_t naxes = grid_.axis_count();
        const auto& in = rho.data();
        auto& res = out.data();
        std::fill(res.begin(), res.end(), cplx{});

        for (std::size_t a = 0; a < naxes; ++a) differentiate(a, in, grad_[a]);

        const cplx mi(0.0, -1.0 / hbar_);
        for (std::size_t pt = 0; pt < npts; ++pt) {
            const std::size_t off = pt * block_;
            ConstBlock r(in.data() + off, block_);
            Block y(res.data() + off, block_);
            ConstBlock hp(hpoint_.data() + off, block_);

            // Dirac part
            gemm_add(hp, r, y, mi, d_);
            gemm_add(r, hp, y, -mi, d_);

            // scalar Liouville part
            for (std::size_t a = 0; a < naxes; ++a) {
                const double c = liouville_[a][pt];
                if (c == 0.0) continue;
                const cplx* g = grad_[a].data() + off;
                for (std::size_t b = 0; b < block_; ++b) y[b] += c * g[b];
            }

            // Herm(f {phi, rho}) = (f X + X f) / 2
            for (std::size_t r_ = 0; r_ < fs_.size(); ++r_) {
                std::fill(tmp_.begin(), tmp_.end(), cplx{});
                bool any = false;
                for (std::size_t a = 0; a < naxes; ++a) {
                    const double c = coupling_flow_[r_][a][pt];
                    if (c == 0.0) continue;
                    any = true;
                    const cplx* g = grad_[a].data() + off;
                    for (std::size_t b = 0; b < block_; ++b) tmp_[b] += c * g[b];
                }
                if (!any) continue;
                gemm_add(span_of(fs_[r_]), tmp_, y, 0.5, d_);
                gemm_add(tmp_, span_of(fs_[r_]), y, 0.5, d_);
            }

            // -(1/2hbar^2) (K rho + rho K - 2 sum_k L_k rho L_k)
            if (has_dissipator_) {
                const double s = -0.5 / (hbar_ * hbar_);
                gemm_add(span_of(k_), r, y, s, d_);
                gemm_add(r, span_of(k_), y, s, d_);
                for (const auto& l : lindblad_ops_) {
                    std::fill(tmp_.begin(), tmp_.end(), cplx{});
                    gemm_add(span_of(l), r, tmp_, 1.0, d_);
                    gemm_add(tmp_, span_of(l), y, -2.0 * s, d_);
                }
            }
        }

        // f (h^2 d^2 rho) f / (8 DQ): with it the coupled noise terms form a
        // positive jump generator between neighbouring cells
        if (jump_axis_) {
            const std::size_t a = *jump_axis_;
            const std::size_t n = grid_.axis(a).n;
            const std::size_t s = grid_.stride(a) * block_;
            const auto& f = fs_.front();
            for (std::size_t pt = 0; pt < npts; ++pt) {
                const std::size_t i = grid_.index_along(pt, a);
                const std::size_t off = pt * block_;
                for (std::size_t b = 0; b < block_; ++b) {
                    const cplx up = i + 1 < n ? in[off + b + s] : cplx{};
                    const cplx dn = i > 0 ? in[off + b - s] : cplx{};
                    tmp_[b] = up - 2.0 * in[off + b] + dn;
                }
                std::vector<cplx> ft(block_, cplx{});
                gemm_add(span_of(f), tmp_, ft, 1.0, d_);
                gemm_add(ft, span_of(f), Block(res.data() + off, block_), jump_coef_, d_);
            }
        }

        // (1/2) div(M grad rho)
        if (scheme_ == DerivativeScheme::central) {
            for (const auto& term : diffusion_diag_) {
                detail::add_compact_diffusion<cplx>(grid_, term.axis, block_, term.coef, 0.5, in, res);
            }
        } else {
            for (const auto& term : diffusion_diag_) add_flux_divergence(term.axis, term.axis, term.coef, res);
        }
        for (const auto& term : diffusion_cross_) {
            // d_a (M_ab d_b rho) + d_b (M_ab d_a rho)
            add_flux_divergence(term.a, term.b, term.coef, res);
            add_flux_divergence(term.b, term.a, term.coef, res);
        }
    }

    /// Rough upper bound of the generator's rates, for the dt advisory.
    double max_rate() const {
        double rate = 0.0;
        const std::size_t npts = grid_.size();
        const double kmax = scheme_ == DerivativeScheme::spectral ? std::numbers::pi : 1.0;
        for (std::size_t pt = 0; pt < npts; ++pt) {
            Eigen::Map<const Matrix> m(hpoint_.data() + pt * block_, static_cast<Eigen::Index>(d_),
                                       static_cast<Eigen::Index>(d_));
            const auto ev = hermitian_eigenvalues(m);
            double r = (ev.maxCoeff() - ev.minCoeff()) / hbar_;
            for (std::size_t a = 0; a < grid_.axis_count(); ++a) {
                double v = std::abs(liouville_[a][pt]);
                for (std::size_t c = 0; c < fs_.size(); ++c) {
                    v += std::abs(coupling_flow_[c][a][pt]) * operator_norm(fs_[c]);
                }
                r += v * kmax / grid_.axis(a).spacing();
            }
            rate = std::max(rate, r);
        }
        if (has_dissipator_) rate += 2.0 * operator_norm(k_) / (hbar_ * hbar_);
        for (const auto& term : diffusion_diag_) {
            const double h = grid_.axis(term.axis).spacing();
            rate += 2.0 * kmax * kmax * *std::max_element(term.coef.begin(), term.coef.end()) / (h * h);
        }
        return rate;
    }

private:
    void differentiate(std::size_t axis, std::span<const cplx> in, std::span<cplx> out) {
        if (scheme_ == DerivativeScheme::spectral) {
            spectral_->apply(axis, in, out);
        } else {
            detail::derivative_zero_exterior<cplx>(grid_, axis, block_, in, out);
        }
    }

    // res += (1/2) d_outer (coef d_inner rho), reusing the cached gradient.
    void add_flux_divergence(std::size_t outer, std::size_t inner, const std::vector<double>& coef,
                             std::vector<cplx>& res) {
        const std::size_t npts = grid_.size();
        flux_.resize(npts * block_);
        dflux_.resize(npts * block_);
        const auto& g = grad_[inner];
        for (std::size_t pt = 0; pt < npts; ++pt) {
            for (std::size_t b = 0; b < block_; ++b) flux_[pt * block_ + b] = coef[pt] * g[pt * block_ + b];
        }
        differentiate(outer, flux_, dflux_);
        for (std::size_t i = 0; i < res.size(); ++i) res[i] += 0.5 * dflux_[i];
    }

    struct DiagTerm {
        std::size_t axis;
        std::vector<double> coef;
    };
    struct CrossTerm {
        std::size_t a, b;
        std::vector<double> coef;
    };

    void setup_dissipator(const RealMatrix& dc) {
        if (dc.size() == 0 || dc.cwiseAbs().maxCoeff() == 0.0) return;
        has_dissipator_ = true;
        const auto d = static_cast<Eigen::Index>(d_);
        k_ = Matrix::Zero(d, d);
        for (Eigen::Index r = 0; r < dc.rows(); ++r) {
            for (Eigen::Index s = 0; s < dc.cols(); ++s) k_ += dc(r, s) * fs_[r] * fs_[s];
        }
        Eigen::SelfAdjointEigenSolver<RealMatrix> es(dc);
        for (Eigen::Index k = 0; k < dc.rows(); ++k) {
            const double lam = es.eigenvalues()(k);
            if (lam <= 0.0) continue;
            Matrix l = Matrix::Zero(d, d);
            for (Eigen::Index r = 0; r < dc.rows(); ++r) l += std::sqrt(lam) * es.eigenvectors()(r, k) * fs_[r];
            lindblad_ops_.push_back(std::move(l));
        }
    }

    void setup_diffusion(const RealMatrix& dq) {
        if (dq.size() == 0 || dq.cwiseAbs().maxCoeff() == 0.0) return;
        const std::size_t naxes = grid_.axis_count();
        const std::size_t npts = grid_.size();
        for (std::size_t a = 0; a < naxes; ++a) {
            for (std::size_t b = a; b < naxes; ++b) {
                std::vector<double> coef(npts, 0.0);
                double peak = 0.0;
                for (std::size_t pt = 0; pt < npts; ++pt) {
                    double m = 0.0;
                    for (Eigen::Index r = 0; r < dq.rows(); ++r) {
                        for (Eigen::Index s = 0; s < dq.cols(); ++s) {
                            m += dq(r, s) * coupling_flow_[r][a][pt] * coupling_flow_[s][b][pt];
                        }
                    }
                    coef[pt] = m;
                    peak = std::max(peak, std::abs(m));
                }
                if (peak == 0.0) continue;
                if (a == b) {
                    diffusion_diag_.push_back({a, std::move(coef)});
                } else {
                    diffusion_cross_.push_back({a, b, std::move(coef)});
                }
            }
        }
    }

    // Single coupling whose field depends only on coordinates transverse to its
    // kick axis, with noise at or above the positivity threshold.
    void setup_jump_correction(const NoiseModel& noise, const UnitsConfig& units) {
        if (fs_.size() != 1) return;
        const double dq = noise.dq(0, 0);
        const double dc = noise.dc(0, 0);
        if (dq <= 0.0 || dc * dq < 0.25 * units.hbar * units.hbar) return;
        const auto& w = coupling_flow_.front();
        std::optional<std::size_t> axis;
        for (std::size_t a = 0; a < w.size(); ++a) {
            if (std::any_of(w[a].begin(), w[a].end(), [](double v) { return v != 0.0; })) {
                if (axis) return;
                axis = a;
            }
        }
        if (!axis) return;
        const std::size_t a = *axis;
        const std::size_t n = grid_.axis(a).n;
        const std::size_t s = grid_.stride(a);
        for (std::size_t pt = 0; pt < grid_.size(); ++pt) {
            if (grid_.index_along(pt, a) + 1 < n && w[a][pt + s] != w[a][pt]) return;
        }
        const double h = grid_.axis(a).spacing();
        jump_axis_ = a;
        jump_coef_ = h * h / (8.0 * dq);
    }

    PhaseGrid grid_;
    std::size_t d_;
    std::size_t block_;
    double hbar_;
    std::vector<cplx> hpoint_;
    std::vector<std::vector<double>> liouville_;
    std::vector<Matrix> fs_;
    std::vector<std::vector<std::vector<double>>> coupling_flow_;
    bool has_dissipator_ = false;
    Matrix k_;
    std::vector<Matrix> lindblad_ops_;
    std::vector<DiagTerm> diffusion_diag_;
    std::vector<CrossTerm> diffusion_cross_;
    std::vector<std::vector<cplx>> grad_;
    std::vector<cplx> tmp_;
    DerivativeScheme scheme_;
    std::unique_ptr<detail::SpectralDerivative> spectral_;
    std::vector<cplx> flux_, dflux_;
    std::optional<std::size_t> jump_axis_;
    double jump_coef_ = 0.0;
};

class Rk4 {
public:
    Rk4(Generator& gen, const MatrixField& shape) : gen_(gen), k1_(shape), k2_(shape), k3_(shape), k4_(shape), y_(shape) {}

    void step(MatrixField& x, double dt) {
        gen_.apply(x, k1_);
        stage(x, k1_, 0.5 * dt);
        gen_.apply(y_, k2_);
        stage(x, k2_, 0.5 * dt);
        gen_.apply(y_, k3_);
        stage(x, k3_, dt);
        gen_.apply(y_, k4_);
        auto& xd = x.data();
        const auto& a = k1_.data();
        const auto& b = k2_.data();
        const auto& c = k3_.data();
        const auto& e = k4_.data();
        const double w = dt / 6.0;
        for (std::size_t i = 0; i < xd.size(); ++i) xd[i] += w * (a[i] + 2.0 * (b[i] + c[i]) + e[i]);
    }

private:
    void stage(const MatrixField& x, const MatrixField& k, double h) {
        auto& yd = y_.data();
        const auto& xd = x.data();
        const auto& kd = k.data();
        for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = xd[i] + h * kd[i];
    }

    Generator& gen_;
    MatrixField k1_, k2_, k3_, k4_, y_;
};

double field_trace(const MatrixField& f) {
    double s = 0.0;
    const auto d = static_cast<std::size_t>(f.dim());
    for (std::size_t pt = 0; pt < f.points(); ++pt) {
        const auto b = f.block(pt);
        for (std::size_t i = 0; i < d; ++i) s += b[i * d + i].real();
    }
    return s * f.grid().cell_volume();
}

MonitorSample observe(const MatrixField& x, double t, double trace0, double norm0, const MonitorFlags& flags) {
    MonitorSample s;
    s.t = t;
    s.trace_error = std::abs(field_trace(x) - trace0);
    s.min_spectrum = flags.positivity ? min_spectrum(x) : std::numeric_limits<double>::quiet_NaN();
    s.boundary_mass = flags.boundary ? boundary_mass_ratio(x) : std::numeric_limits<double>::quiet_NaN();
    s.step_norm = x.norm() / norm0;
    return s;
}

void enforce(const MonitorSample& s, const MonitorFlags& flags) {
    if (!std::isfinite(s.step_norm) || s.step_norm > kNormGrowthLimit) {
        throw StepUnstable("state norm grew by " + std::to_string(s.step_norm) + " at t = " + num(s.t));
    }
    if (flags.trace && s.trace_error > kTraceDriftLimit) {
        throw TraceDrift("normalization drift " + num(s.trace_error) + " at t = " + num(s.t));
    }
    if (flags.boundary && s.boundary_mass > kBoundaryLeakRatio) {
        throw BoundaryLeak("boundary density ratio " + num(s.boundary_mass) +
                           " at t = " + num(s.t));
    }
}

// Cubic Lagrange weights for fractional offset u in [0, 1) on nodes -1, 0, 1, 2.
std::array<double, 4> cubic_weights(double u) {
    return {-u * (u - 1.0) * (u - 2.0) / 6.0, (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
            -(u + 1.0) * u * (u - 2.0) / 2.0, (u + 1.0) * u * (u - 1.0) / 6.0};
}

// rho(x) <- rho(x - u(x)) by tensor-product cubic interpolation, zero outside the grid.
void advect(MatrixField& rho, const std::vector<std::vector<double>>& displacement, MatrixField& scratch) {
    const auto& g = rho.grid();
    const std::size_t naxes = g.axis_count();
    const std::size_t block = rho.block_size();
    const auto& src = rho.data();
    auto& dst = scratch.data();
    std::fill(dst.begin(), dst.end(), cplx{});

    std::vector<long> base(naxes);
    std::vector<std::array<double, 4>> wts(naxes);
    std::vector<std::size_t> digit(naxes);
    for (std::size_t pt = 0; pt < g.size(); ++pt) {
        for (std::size_t a = 0; a < naxes; ++a) {
            const double pos = static_cast<double>(g.index_along(pt, a)) - displacement[a][pt] / g.axis(a).spacing();
            const double fl = std::floor(pos);
            base[a] = static_cast<long>(fl);
            wts[a] = cubic_weights(pos - fl);
        }
        cplx* out = dst.data() + pt * block;
        const std::size_t corners = std::size_t{1} << (2 * naxes);
        for (std::size_t c = 0; c < corners; ++c) {
            double w = 1.0;
            std::size_t flat = 0;
            bool inside = true;
            for (std::size_t a = 0; a < naxes; ++a) {
                digit[a] = (c >> (2 * a)) & 3u;
                const long idx = base[a] - 1 + static_cast<long>(digit[a]);
                if (idx < 0 || idx >= static_cast<long>(g.axis(a).n)) {
                    inside = false;
                    break;
                }
                w *= wts[a][digit[a]];
                flat += static_cast<std::size_t>(idx) * g.stride(a);
            }
            if (!inside || w == 0.0) continue;
            const cplx* in = src.data() + flat * block;
            for (std::size_t b = 0; b < block; ++b) out[b] += w * in[b];
        }
    }
    std::swap(rho.data(), scratch.data());
}

}  // namespace

// ---------------------------------------------------------------------------

void HybridHamiltonian::validate() const {
    require_hermitian(hq, "H_Q");
    if (hc.values.size() != hc.grid.size()) throw ShapeMismatch("H_C does not match its grid");
    for (std::size_t r = 0; r < couplings.size(); ++r) {
        require_hermitian(couplings[r].f, "coupling operator " + std::to_string(r));
        if (couplings[r].f.rows() != hq.rows()) throw ShapeMismatch("coupling operator dimension differs from H_Q");
        require_same_grid(couplings[r].phi.grid, hc.grid, "coupling field");
    }
}

void NoiseModel::validate() const {
    for (const RealMatrix* m : {&dc, &dq}) {
        if (m->rows() != m->cols() || m->rows() != dc.rows()) throw ShapeMismatch("noise matrices must be square and equal-sized");
        if (m->size() == 0) continue;
        const double scale = std::max(1.0, m->cwiseAbs().maxCoeff());
        if ((*m - m->transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
            throw InvalidArgument("noise correlation matrix is not symmetric");
        }
        Eigen::SelfAdjointEigenSolver<RealMatrix> es(*m, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-12 * scale) {
            throw InvalidArgument("noise correlation matrix is not positive semidefinite");
        }
    }
}

std::size_t IntegratorParams::steps() const {
    return static_cast<std::size_t>(std::llround(t_final / dt));
}

void IntegratorParams::validate() const {
    if (!(dt > 0.0) || !(t_final > 0.0)) throw InvalidArgument("dt and t_final must be positive");
    if (record_every == 0) throw InvalidArgument("record_every must be positive");
    if (std::abs(static_cast<double>(steps()) * dt - t_final) > 1e-9 * t_final) {
        throw InvalidArgument("t_final must be an integer multiple of dt");
    }
}

double EvolutionResult::worst_min_spectrum() const {
    double w = std::numeric_limits<double>::infinity();
    for (const auto& s : log) w = std::min(w, s.min_spectrum);
    return w;
}

double EvolutionResult::worst_trace_error() const {
    double w = 0.0;
    for (const auto& s : log) w = std::max(w, s.trace_error);
    return w;
}

MatrixField dirac_term(const HybridHamiltonian& h, const MatrixField& rho, const UnitsConfig& units) {
    h.validate();
    require_same_grid(h.grid(), rho.grid(), "dirac_term");
    if (rho.dim() != h.dim()) throw ShapeMismatch("dirac_term: dimension mismatch");
    MatrixField out(rho.grid(), rho.dim());
    const cplx mi(0.0, -1.0 / units.hbar);
    for (std::size_t pt = 0; pt < rho.points(); ++pt) {
        Matrix hp = h.hq;
        for (const auto& c : h.couplings) hp += c.phi.values[pt] * c.f;
        const Matrix r = rho.at(pt);
        out.at(pt) = mi * (hp * r - r * hp);
    }
    return out;
}

ScalarField derivative(const ScalarField& f, std::size_t axis) {
    ScalarField out(f.grid);
    detail::derivative<double>(f.grid, axis, 1, f.values, out.values);
    return out;
}

ScalarField poisson_bracket(const ScalarField& a, const ScalarField& b) {
    require_same_grid(a.grid, b.grid, "poisson_bracket");
    ScalarField out(a.grid);
    for (std::size_t n = 0; n < a.grid.dofs(); ++n) {
        const auto aq = derivative(a, PhaseGrid::q_axis(n));
        const auto ap = derivative(a, PhaseGrid::p_axis(n));
        const auto bq = derivative(b, PhaseGrid::q_axis(n));
        const auto bp = derivative(b, PhaseGrid::p_axis(n));
        for (std::size_t i = 0; i < out.values.size(); ++i) {
            out.values[i] += aq.values[i] * bp.values[i] - bq.values[i] * ap.values[i];
        }
    }
    return out;
}

MatrixField poisson_bracket(const ScalarField& a, const MatrixField& b) {
    require_same_grid(a.grid, b.grid(), "poisson_bracket");
    const auto& g = b.grid();
    const std::size_t block = b.block_size();
    MatrixField out(g, b.dim());
    std::vector<cplx> bq(b.data().size()), bp(b.data().size());
    for (std::size_t n = 0; n < g.dofs(); ++n) {
        const auto aq = derivative(a, PhaseGrid::q_axis(n));
        const auto ap = derivative(a, PhaseGrid::p_axis(n));
        detail::derivative<cplx>(g, PhaseGrid::q_axis(n), block, b.data(), bq);
        detail::derivative<cplx>(g, PhaseGrid::p_axis(n), block, b.data(), bp);
        auto& o = out.data();
        for (std::size_t pt = 0; pt < g.size(); ++pt) {
            for (std::size_t k = 0; k < block; ++k) {
                const std::size_t i = pt * block + k;
                o[i] += aq.values[pt] * bp[i] - bq[i] * ap.values[pt];
            }
        }
    }
    return out;
}

MatrixField poisson_bracket(const MatrixField& a, const ScalarField& b) {
    MatrixField out = poisson_bracket(b, a);
    for (auto& z : out.data()) z = -z;
    return out;
}

MatrixField aleksandrov_rhs(const HybridHamiltonian& h, const MatrixField& rho, const UnitsConfig& units,
                           DerivativeScheme scheme) {
    require_same_grid(h.grid(), rho.grid(), "aleksandrov_rhs");
    if (rho.dim() != h.dim()) throw ShapeMismatch("aleksandrov_rhs: dimension mismatch");
    Generator gen(h, NoiseModel::none(h.couplings.size()), units, false, scheme);
    MatrixField out(rho.grid(), rho.dim());
    gen.apply(rho, out);
    return out;
}

MatrixField hybrid_master_rhs(const HybridHamiltonian& h, const MatrixField& rho, const NoiseModel& noise,
                              const UnitsConfig& units, DerivativeScheme scheme) {
    require_same_grid(h.grid(), rho.grid(), "hybrid_master_rhs");
    if (rho.dim() != h.dim()) throw ShapeMismatch("hybrid_master_rhs: dimension mismatch");
    Generator gen(h, noise, units, true, scheme);
    MatrixField out(rho.grid(), rho.dim());
    gen.apply(rho, out);
    return out;
}

PositivityVerdict positivity_condition_check(const NoiseModel& noise, const UnitsConfig& units) {
    noise.validate();
    const RealMatrix root = psd_sqrt(noise.dc);
    const RealMatrix prod = root * noise.dq * root;
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(0.5 * (prod + prod.transpose()), Eigen::EigenvaluesOnly);
    const double bound = 0.25 * units.hbar * units.hbar;
    PositivityVerdict v;
    v.margin = es.eigenvalues().minCoeff() - bound;
    // Relative slack so that exact saturation (margin 0 up to rounding) passes.
    v.preserves_positivity = v.margin >= -1e-12 * std::max(1.0, bound);
    return v;
}

EvolutionResult evolve(const HybridHamiltonian& h, const HybridDensity& rho0, const NoiseModel& noise,
                       const IntegratorParams& params, const UnitsConfig& units, const StepObserver& observer) {
    params.validate();
    require_same_grid(h.grid(), rho0.grid(), "evolve");
    if (rho0.dim() != h.dim()) throw ShapeMismatch("evolve: dimension mismatch");
    if (params.monitors.boundary) check_boundary(rho0.field(), 0.0);

    Generator gen(h, noise, units, true, params.scheme);
    EvolutionResult result;
    result.stiff_step_warning = params.dt * gen.max_rate() > 0.1 * 2.785;  // RK4 real-axis stability bound
    MatrixField x = rho0.field();
    const double trace0 = field_trace(x);
    const double norm0 = x.norm();
    Rk4 rk(gen, x);

    result.times.push_back(0.0);
    result.states.push_back(HybridDensity::unchecked(x));
    result.log.push_back(observe(x, 0.0, trace0, norm0, params.monitors));
    if (observer) observer(0.0, x);

    const std::size_t steps = params.steps();
    for (std::size_t k = 1; k <= steps; ++k) {
        rk.step(x, params.dt);
        const double t = static_cast<double>(k) * params.dt;
        const auto sample = observe(x, t, trace0, norm0, params.monitors);
        result.log.push_back(sample);
        enforce(sample, params.monitors);
        if (observer) observer(t, x);
        if (k % params.record_every == 0 || k == steps) {
            result.times.push_back(t);
            result.states.push_back(HybridDensity::unchecked(x));
        }
    }
    return result;
}

NoiseIncrements draw_increments(std::uint64_t seed, std::uint64_t trajectory, std::uint64_t step,
                                const RealMatrix& sqrt_dc, const RealMatrix& sqrt_dq, double dt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(trajectory), static_cast<std::uint32_t>(trajectory >> 32),
                      static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
    std::mt19937_64 engine(seq);
    std::normal_distribution<double> normal;
    RealVector z_phi(sqrt_dc.rows());
    RealVector z_f(sqrt_dq.rows());
    for (Eigen::Index i = 0; i < z_phi.size(); ++i) z_phi(i) = normal(engine);
    for (Eigen::Index i = 0; i < z_f.size(); ++i) z_f(i) = normal(engine);
    const double s = std::sqrt(dt);
    return {s * (sqrt_dc * z_phi), s * (sqrt_dq * z_f)};
}

EnsembleResult unravel_ensemble(const HybridHamiltonian& h, const HybridDensity& rho0, const NoiseModel& noise,
                                const IntegratorParams& params, const TrajectoryEnsemble& ensemble,
                                const UnitsConfig& units) {
    if (!ensemble.seed) throw NonReproducibleSeed("unravel_ensemble needs an explicit seed");
    if (ensemble.n_traj == 0) throw InvalidArgument("n_traj must be positive");
    params.validate();
    noise.validate();
    require_same_grid(h.grid(), rho0.grid(), "unravel_ensemble");
    if (rho0.dim() != h.dim()) throw ShapeMismatch("unravel_ensemble: dimension mismatch");
    if (noise.couplings() != h.couplings.size()) throw ShapeMismatch("noise matrices do not match the couplings");
    if (params.monitors.boundary) check_boundary(rho0.field(), 0.0);

    const auto& g = h.grid();
    const std::size_t naxes = g.axis_count();
    const std::size_t steps = params.steps();
    const RealMatrix sqrt_dc = psd_sqrt(noise.dc);
    const RealMatrix sqrt_dq = psd_sqrt(noise.dq);

    // Hamiltonian vector fields of the coupling fields: displacement per unit dW_f.
    std::vector<std::vector<std::vector<double>>> flows;
    for (const auto& c : h.couplings) {
        std::vector<std::vector<double>> u(naxes, std::vector<double>(g.size(), 0.0));
        for (std::size_t n = 0; n < g.dofs(); ++n) {
            const auto dq = derivative(c.phi, PhaseGrid::q_axis(n));
            const auto dp = derivative(c.phi, PhaseGrid::p_axis(n));
            for (std::size_t pt = 0; pt < g.size(); ++pt) {
                u[PhaseGrid::q_axis(n)][pt] = dp.values[pt];
                u[PhaseGrid::p_axis(n)][pt] = -dq.values[pt];
            }
        }
        flows.push_back(std::move(u));
    }
    const bool diffusive = sqrt_dq.size() > 0 && sqrt_dq.cwiseAbs().maxCoeff() > 0.0;

    std::vector<double> times{0.0};
    for (std::size_t k = 1; k <= steps; ++k) {
        if (k % params.record_every == 0 || k == steps) times.push_back(static_cast<double>(k) * params.dt);
    }
    const std::size_t nrec = times.size();

    // Fixed-size chunks summed in index order keep the average independent of
    // the thread count.
    constexpr std::size_t kChunk = 8;
    const std::size_t nchunks = (ensemble.n_traj + kChunk - 1) / kChunk;
    std::vector<std::vector<MatrixField>> chunk_sums(nchunks);
    std::vector<std::vector<Matrix>> marginals(ensemble.n_traj);
    std::vector<double> chunk_min(nchunks, std::numeric_limits<double>::infinity());
    std::vector<std::exception_ptr> errors(nchunks);

    // single trajectories carry interpolation ringing; leaks are judged on the mean
    MonitorFlags traj_flags = params.monitors;
    traj_flags.boundary = false;

    auto run_chunk = [&](std::size_t chunk) {
        try {
            Generator gen(h, noise, units, false, params.scheme);
            MatrixField x = rho0.field();
            MatrixField scratch = x;
            Rk4 rk(gen, x);
            const double trace0 = field_trace(x);
            const double norm0 = x.norm();
            std::vector<MatrixField> sums(nrec, MatrixField(g, rho0.dim()));
            std::vector<std::vector<double>> disp(naxes, std::vector<double>(g.size()));
            const std::size_t first = chunk * kChunk;
            const std::size_t last = std::min(ensemble.n_traj, first + kChunk);
            for (std::size_t traj = first; traj < last; ++traj) {
                x = rho0.field();
                std::size_t rec = 0;
                auto record = [&](double t) {
                    sums[rec].axpy(1.0, x);
                    marginals[traj].push_back(quantum_marginal(HybridDensity::unchecked(x)).matrix());
                    const auto sample = observe(x, t, trace0, norm0, traj_flags);
                    chunk_min[chunk] = std::min(chunk_min[chunk], sample.min_spectrum);
                    enforce(sample, traj_flags);
                    ++rec;
                };
                record(0.0);
                for (std::size_t k = 1; k <= steps; ++k) {
                    rk.step(x, params.dt);
                    const auto inc = draw_increments(*ensemble.seed, traj, k, sqrt_dc, sqrt_dq, params.dt);
                    if (inc.dw_phi.size() > 0) {
                        Matrix gen_q = Matrix::Zero(rho0.dim(), rho0.dim());
                        for (std::size_t r = 0; r < h.couplings.size(); ++r) {
                            gen_q += inc.dw_phi(static_cast<Eigen::Index>(r)) * h.couplings[r].f;
                        }
                        const Matrix u = unitary_exp(gen_q, 1.0 / units.hbar);
                        const Matrix ud = u.adjoint();
                        for (std::size_t pt = 0; pt < x.points(); ++pt) {
                            auto m = x.at(pt);
                            m = u * m * ud;
                        }
                    }
                    if (diffusive) {
                        for (std::size_t a = 0; a < naxes; ++a) {
                            std::fill(disp[a].begin(), disp[a].end(), 0.0);
                            for (std::size_t r = 0; r < flows.size(); ++r) {
                                const double w = inc.dw_f(static_cast<Eigen::Index>(r));
                                for (std::size_t pt = 0; pt < g.size(); ++pt) disp[a][pt] += w * flows[r][a][pt];
                            }
                        }
                        advect(x, disp, scratch);
                    }
                    if (k % params.record_every == 0 || k == steps) record(static_cast<double>(k) * params.dt);
                }
            }
            chunk_sums[chunk] = std::move(sums);
        } catch (...) {
            errors[chunk] = std::current_exception();
        }
    };

    const std::size_t nthreads = std::max<std::size_t>(1, std::min(ensemble.threads, nchunks));
    if (nthreads == 1) {
        for (std::size_t c = 0; c < nchunks; ++c) run_chunk(c);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < nthreads; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t c = t; c < nchunks; c += nthreads) run_chunk(c);
            });
        }
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    EnsembleResult result;
    result.times = times;
    result.trajectory_marginals = std::move(marginals);
    result.worst_min_spectrum = *std::min_element(chunk_min.begin(), chunk_min.end());
    const double inv = 1.0 / static_cast<double>(ensemble.n_traj);
    for (std::size_t r = 0; r < nrec; ++r) {
        MatrixField mean(g, rho0.dim());
        for (std::size_t c = 0; c < nchunks; ++c) mean.axpy(inv, chunk_sums[c][r]);
        if (params.monitors.boundary) check_boundary(mean, times[r]);
        result.mean_states.push_back(HybridDensity::unchecked(std::move(mean)));
    }
    return result;
}

void write_csv(std::ostream& os, const std::vector<MonitorSample>& log) {
    os.precision(17);
    os << "t,trace_error,min_spectrum,boundary_mass,step_norm\n";
    for (const auto& s : log) {
        os << s.t << ',' << s.trace_error << ',' << s.min_spectrum << ',' << s.boundary_mass << ',' << s.step_norm << '\n';
    }
}

}  // namespace hybridyn
