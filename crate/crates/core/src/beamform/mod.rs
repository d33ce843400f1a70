//! Joint communication-beamforming and sensing-waveform design.
//!
//! The sensing-centric path minimizes the position-domain CRB trace subject
//! to per-satellite power budgets and per-UE rate floors; the
//! communication-centric path maximizes the worst-case rate under a CRB cap.
//! Both lift the design vectors to PSD matrices, drive them back to rank one
//! with an exterior penalty on `tr - lambda_max`, linearize the concave rate
//! part at the running anchor, and extract the final vectors by EVD.

pub mod conic;
pub mod lift;

use crate::beamform::conic::{conic_solve, AffineExpr, ConicProblem, ConicStatus};
use crate::beamform::lift::{assemble_fim_linear_maps, FimLinearMaps, HermitianVar, SymVar};
use crate::crb::{crb_trace, fim_blocks, fim_omega, steering_derivatives, SensingStructure};
use crate::error::{Error, Result};
use crate::geometry::angle_jacobian;
use crate::scene::SceneSnapshot;
use crate::signal_model::{ue_rate, ue_rate_lifted, BeamformingSolution};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

const LN2: f64 = std::f64::consts::LN_2;

/// Which problem the solver runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveMode {
    SensingCentric,
    CommCentric,
}

/// Optimizer parameters; defaults follow the simulation table.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Required rate per UE (bps/Hz).
    pub eta_rate_bps_hz: f64,
    /// Per-satellite power budget (dBm); applied when building scenes.
    pub p_max_dbm: f64,
    /// Initial penalty factor.
    pub rho0: f64,
    /// Penalty amplification factor (> 1).
    pub iota: f64,
    /// Penalty accuracy: exit residual threshold.
    pub delta: f64,
    pub max_outer_iters: usize,
    pub solver_tol: f64,
    pub objective_mode: ObjectiveMode,
    /// CRB-trace cap (m^2) for the communication-centric problem; `None`
    /// disables the sensing constraint entirely.
    pub eta_crb_m2: Option<f64>,
    /// Relative Frobenius change of `(W, R)` that counts as converged.
    pub convergence_rel: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            eta_rate_bps_hz: 2.0,
            p_max_dbm: 30.0,
            rho0: 10.0,
            iota: 1.5,
            delta: 1e-4,
            max_outer_iters: 40,
            solver_tol: 1e-8,
            objective_mode: ObjectiveMode::SensingCentric,
            eta_crb_m2: None,
            convergence_rel: 1e-3,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rho0 <= 0.0 {
            return Err(Error::Config("rho0 must be positive".into()));
        }
        if self.iota <= 1.0 {
            return Err(Error::Config("iota must exceed 1".into()));
        }
        if self.delta <= 0.0 {
            return Err(Error::Config("delta must be positive".into()));
        }
        if self.eta_rate_bps_hz < 0.0 {
            return Err(Error::Config("eta must be non-negative".into()));
        }
        Ok(())
    }
}

/// One outer iteration of the penalty loop.
#[derive(Debug, Clone)]
pub struct OuterIteration {
    /// Solved penalized objective.
    pub objective: f64,
    /// CRB epigraph value `tr(T)` (m^2); zero when the sensing constraint
    /// is absent.
    pub crb_epigraph_m2: f64,
    /// Rank-one penalty residual `sum |tr - lambda_max|` at the iterate.
    pub penalty_residual: f64,
    pub rho: f64,
    /// Relative Frobenius change of `(W, R)` against the previous iterate.
    pub rel_change: f64,
}

/// Optimization outcome: extracted vectors plus the iteration trace.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: BeamformingSolution,
    pub iterations: Vec<OuterIteration>,
    pub converged: bool,
    /// Lifted CRB trace (m^2) at the final iterate (sensing-constrained runs).
    pub lifted_crb_trace_m2: Option<f64>,
    /// Worst-case achieved rate `Upsilon` (comm-centric runs).
    pub upsilon: Option<f64>,
    /// Final lifted iterate, before rank-one extraction.
    pub final_w_lifted: Vec<DMatrix<Complex64>>,
    pub final_r_lifted: DMatrix<Complex64>,
    pub warnings: Vec<String>,
}

/// Post-hoc metrics of a concrete beamforming solution on a scene.
#[derive(Debug, Clone)]
pub struct SolutionMetrics {
    pub rcrb_m: f64,
    pub trace_crb_km2: f64,
    pub per_axis_crb_km2: [f64; 3],
    pub per_sat_power_w: Vec<f64>,
    pub rates_bps_hz: Vec<f64>,
    pub min_rate_bps_hz: f64,
    pub crb_regularized: bool,
}

/// Evaluate CRB, power and rates of a solution through the closed-form
/// modules.
pub fn evaluate_solution(
    scene: &SceneSnapshot,
    sol: &BeamformingSolution,
) -> Result<SolutionMetrics> {
    let structure = steering_derivatives(scene);
    let blocks = fim_blocks(&structure, sol, scene.target.reflection_coeff, scene.sigma_n_w);
    let f_omega = fim_omega(&blocks)?;
    let jac = angle_jacobian(&scene.sat_positions(), &scene.target.position_ecef_km)?;
    let report = crb_trace(&f_omega, &jac)?;
    let n = scene.n();
    let per_sat_power_w = (0..scene.k())
        .map(|k| crate::signal_model::transmit_power(sol, k, n))
        .collect();
    let mut rates = Vec::with_capacity(scene.m());
    for i in 0..scene.m() {
        rates.push(ue_rate(sol, &scene.channels, i, scene.sigma_ue_w)?);
    }
    let min_rate = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(SolutionMetrics {
        rcrb_m: report.rcrb_km * 1e3,
        trace_crb_km2: report.trace_km2,
        per_axis_crb_km2: [report.c[(0, 0)], report.c[(1, 1)], report.c[(2, 2)]],
        per_sat_power_w,
        rates_bps_hz: rates,
        min_rate_bps_hz: if min_rate.is_finite() { min_rate } else { f64::NAN },
        crb_regularized: report.regularized,
    })
}

/// Dominant eigenpair of a Hermitian matrix with a deterministic phase:
/// the largest-magnitude entry of the eigenvector is rotated to the
/// positive real axis.
pub fn dominant_eigenpair(m: &DMatrix<Complex64>) -> (f64, DVector<Complex64>) {
    let eig = m.clone().symmetric_eigen();
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let mut v: DVector<Complex64> = eig.eigenvectors.column(best).into_owned();
    let mut anchor = 0;
    for i in 1..v.len() {
        if v[i].norm() > v[anchor].norm() {
            anchor = i;
        }
    }
    if v[anchor].norm() > 0.0 {
        let phase = v[anchor].conj() / Complex64::new(v[anchor].norm(), 0.0);
        v *= phase;
    }
    (eig.eigenvalues[best], v)
}

/// Rank-one penalty residual `sum_m |tr W_m - lmax(W_m)| + |tr R - lmax(R)|`.
pub fn penalty_residual(w: &[DMatrix<Complex64>], r: &DMatrix<Complex64>) -> f64 {
    let one = |m: &DMatrix<Complex64>| -> f64 {
        let (lmax, _) = dominant_eigenpair(m);
        (m.trace().re - lmax).abs()
    };
    w.iter().map(one).sum::<f64>() + one(r)
}

/// Zero-forcing baseline: pseudo-inverse communication beams scaled to meet
/// the rate floor exactly, plus a sensing waveform along the dominant
/// direction of the angle-information map inside the null space of all UE
/// channels, scaled to the tightest per-satellite residual budget.
pub fn zfbf_baseline(scene: &SceneSnapshot, eta_rate_bps_hz: f64) -> Result<BeamformingSolution> {
    let nk = scene.nk();
    let m = scene.m();
    let n = scene.n();
    if nk < m {
        return Err(Error::BaselineUnavailable(format!(
            "need NK >= M for zero forcing (NK = {nk}, M = {m})"
        )));
    }

    let mut w_tilde = Vec::with_capacity(m);
    let mut projector = DMatrix::<Complex64>::identity(nk, nk);
    if m > 0 {
        let mut h = DMatrix::<Complex64>::zeros(nk, m);
        for (col, hv) in scene.channels.iter().enumerate() {
            h.column_mut(col).copy_from(hv);
        }
        let gram = h.adjoint() * &h;
        let gram_inv = gram.clone().try_inverse().ok_or_else(|| {
            Error::BaselineUnavailable("stacked channel matrix is rank deficient".into())
        })?;
        let z = &h * &gram_inv;
        let amp = ((2f64.powf(eta_rate_bps_hz) - 1.0) * scene.sigma_ue_w).sqrt();
        for col in 0..m {
            let zc: DVector<Complex64> = z.column(col).into_owned();
            // z_m^H h_i = delta_im, so scaling each column sets the SINR
            // exactly.
            let gain = zc.norm_squared();
            if gain == 0.0 {
                return Err(Error::BaselineUnavailable(
                    "zero pseudo-inverse column".into(),
                ));
            }
            w_tilde.push(&zc * Complex64::new(amp, 0.0));
        }
        projector -= &h * gram_inv * h.adjoint();
    }

    // Residual per-satellite budgets after the communication beams.
    let mut residual = scene.p_max_w.clone();
    for (k, res) in residual.iter_mut().enumerate() {
        for w in &w_tilde {
            *res -= w.rows(k * n, n).norm_squared();
        }
        if *res < -1e-9 {
            return Err(Error::Infeasible(format!(
                "zero-forcing rate power exceeds the budget of satellite {k}"
            )));
        }
        *res = res.max(0.0);
    }

    // Angle-information map restricted to the channel null space.
    let structure = steering_derivatives(scene);
    let mut q = DMatrix::<Complex64>::zeros(nk, nk);
    for d in &structure.d_omega {
        q += d.adjoint() * d;
    }
    let q_perp = lift::herm_part(&(&projector * q * &projector));
    let (lmax, v) = dominant_eigenpair(&q_perp);
    let mut r_tilde = DVector::zeros(nk);
    if lmax > 1e-12 * q_perp.norm().max(1.0) {
        let mut scale = f64::INFINITY;
        for (k, res) in residual.iter().enumerate() {
            let vk2 = v.rows(k * n, n).norm_squared();
            if vk2 > 1e-15 {
                scale = scale.min((res / vk2).sqrt());
            }
        }
        if scale.is_finite() && scale > 0.0 {
            r_tilde = &v * Complex64::new(scale, 0.0);
        }
    }
    Ok(BeamformingSolution { w_tilde, r_tilde })
}

/// Fixed per-scene data shared by every outer iteration.
struct OptContext<'a> {
    scene: &'a SceneSnapshot,
    maps: FimLinearMaps,
    /// Combined Hermitian data of `[J^T F_OO J]_rc` per (r, c), r <= c.
    schur_tl_data: Vec<DMatrix<Complex64>>,
    /// Combined Hermitian data of `[J^T F_Oa]_r` per r.
    schur_tr_data: Vec<DMatrix<Complex64>>,
    /// Congruence scale applied to the nuisance row/column of the LMI.
    nuisance_scale: f64,
    /// Normalized channel outer products `H_i / c_h^2`.
    h_norm: Vec<DMatrix<Complex64>>,
    sigma_norm: Vec<f64>,
    /// CRB-trace magnitude estimate (m^2) used to scale `U` and `T`.
    crb_scale: f64,
    /// Per-satellite block selectors (diagonal Hermitian data).
    selectors: Vec<DMatrix<Complex64>>,
}

impl<'a> OptContext<'a> {
    fn build(
        scene: &'a SceneSnapshot,
        structure: &SensingStructure,
        anchor: &BeamformingSolution,
    ) -> Result<Self> {
        let alpha = scene.target.reflection_coeff;
        let maps = assemble_fim_linear_maps(structure, alpha, scene.sigma_n_w);
        let jac_km = angle_jacobian(&scene.sat_positions(), &scene.target.position_ecef_km)?;
        // Meters inside the optimizer so the CRB epigraph lands near the
        // penalty scale of the simulation table.
        let jac = jac_km / 1000.0;
        let dk = 2 * scene.k();

        let mut schur_tl_data = Vec::with_capacity(6);
        for c in 0..3 {
            for r in 0..=c {
                let mut g = DMatrix::<Complex64>::zeros(scene.nk(), scene.nk());
                for i in 0..dk {
                    for j in 0..dk {
                        let w = jac[(i, r)] * jac[(j, c)];
                        if w != 0.0 {
                            g += maps.data_oo(i, j) * Complex64::new(w, 0.0);
                        }
                    }
                }
                schur_tl_data.push(g);
            }
        }
        let schur_tr_data = (0..3)
            .map(|r| {
                let mut g = DMatrix::<Complex64>::zeros(scene.nk(), scene.nk());
                for i in 0..dk {
                    let w = jac[(i, r)];
                    if w != 0.0 {
                        g += maps.data_oa(i) * Complex64::new(w, 0.0);
                    }
                }
                g
            })
            .collect();

        // Scale estimate for the CRB epigraph from the anchor point; the
        // scaled variables U' = g U, T' = T / g keep the epigraph and Schur
        // blocks near unit magnitude (exact congruences, not relaxations).
        let crb_scale = evaluate_solution(scene, anchor)
            .map(|m| (m.trace_crb_km2 * 1e6).max(1e-12))
            .unwrap_or(1.0);

        // Congruence scaling of the nuisance row/column; any positive value
        // preserves the LMI exactly.
        let p_total: f64 = scene.p_max_w.iter().sum();
        let faa_anchor = fim_blocks(structure, anchor, alpha, scene.sigma_n_w).f_alpha_alpha;
        let faa_budget =
            maps.scale_aa * maps.data_aa().trace().re * p_total / scene.nk().max(1) as f64;
        let faa_ref = faa_anchor.max(faa_budget * 1e-3).max(1e-300);
        let nuisance_scale = 1.0 / (crb_scale * faa_ref).sqrt();

        // Per-UE channel normalization: each rate constraint works with
        // H_i / ||h_i||^2 so every exponential-cone block is conditioned
        // independently of the absolute gain spread across UEs.
        let nk = scene.nk();
        let mut h_norm = Vec::with_capacity(scene.m());
        let mut sigma_norm = Vec::with_capacity(scene.m());
        for h in &scene.channels {
            let g2 = h.norm_squared();
            if g2 <= 0.0 {
                return Err(Error::Numerical("a UE channel is identically zero".into()));
            }
            h_norm.push(DMatrix::from_fn(nk, nk, |r, c| {
                h[r] * h[c].conj() / Complex64::new(g2, 0.0)
            }));
            sigma_norm.push(scene.sigma_ue_w / g2);
        }
        let n = scene.n();
        let selectors = (0..scene.k())
            .map(|k| {
                DMatrix::from_fn(nk, nk, |r, c| {
                    if r == c && r / n == k {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
            })
            .collect();

        Ok(OptContext {
            scene,
            maps,
            schur_tl_data,
            schur_tr_data,
            nuisance_scale,
            h_norm,
            sigma_norm,
            crb_scale,
            selectors,
        })
    }

    fn tl_index(r: usize, c: usize) -> usize {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        c * (c + 1) / 2 + r
    }
}

/// Variables of one lifted subproblem.
struct ProblemVars {
    w: Vec<HermitianVar>,
    r: HermitianVar,
    t: Option<SymVar>,
    upsilon: Option<usize>,
}

struct AnchorState {
    w_lifted: Vec<DMatrix<Complex64>>,
    r_lifted: DMatrix<Complex64>,
    v_w: Vec<DVector<Complex64>>,
    v_r: DVector<Complex64>,
}

impl AnchorState {
    fn from_solution(sol: &BeamformingSolution) -> Self {
        Self::from_lifted(sol.lifted_w(), sol.lifted_r())
    }

    fn from_lifted(w_lifted: Vec<DMatrix<Complex64>>, r_lifted: DMatrix<Complex64>) -> Self {
        let v_w = w_lifted.iter().map(|w| dominant_eigenpair(w).1).collect();
        let v_r = dominant_eigenpair(&r_lifted).1;
        AnchorState {
            w_lifted,
            r_lifted,
            v_w,
            v_r,
        }
    }
}

/// Build one convex subproblem at the given anchor and penalty factor.
fn build_subproblem(
    ctx: &OptContext,
    anchor: &AnchorState,
    rho: f64,
    cfg: &OptimizerConfig,
    sensing_objective: bool,
    upsilon_mode: bool,
) -> (ConicProblem, ProblemVars) {
    let scene = ctx.scene;
    let nk = scene.nk();
    let m = scene.m();
    let mut p = ConicProblem::new();

    let w_vars: Vec<HermitianVar> = (0..m).map(|_| HermitianVar::alloc(&mut p, nk)).collect();
    let r_var = HermitianVar::alloc(&mut p, nk);
    let with_sensing_blocks = sensing_objective || cfg.eta_crb_m2.is_some();
    let (u_var, t_var) = if with_sensing_blocks {
        (
            Some(SymVar::alloc(&mut p, 3)),
            Some(SymVar::alloc(&mut p, 3)),
        )
    } else {
        (None, None)
    };
    let upsilon = if upsilon_mode {
        Some(p.add_vars(1))
    } else {
        None
    };

    for w in &w_vars {
        w.constrain_psd(&mut p);
    }
    r_var.constrain_psd(&mut p);

    // The solver works with the scaled pair U' = g U, T' = T / g with
    // g = ctx.crb_scale; both congruences are exact, so the epigraph block
    // and the Schur LMI keep their meaning at unit magnitudes.
    let g_crb = ctx.crb_scale;
    if let (Some(u), Some(t)) = (u_var, t_var) {
        // Epigraph of tr(U^{-1}): [[T', I], [I, U']] >= 0 (congruence by
        // diag(I/sqrt(g), I*sqrt(g))).
        let mut tri = Vec::new();
        for col in 0..6 {
            for row in 0..=col {
                let expr = if col < 3 {
                    t.entry(row, col)
                } else if row < 3 {
                    AffineExpr::constant(if row == col - 3 { 1.0 } else { 0.0 })
                } else {
                    u.entry(row - 3, col - 3)
                };
                tri.push(expr);
            }
        }
        p.constrain_psd(6, tri);

        // Schur LMI scaled by g:
        // [[g J^T F_OO J - U', g t J^T F_Oa], [g t F_Oa^T J, g t^2 F_aa]].
        let ns = ctx.nuisance_scale;
        let mut tri = Vec::new();
        for col in 0..4 {
            for row in 0..=col {
                let expr = if col < 3 {
                    let mut e = AffineExpr::default();
                    let g_data = &ctx.schur_tl_data[OptContext::tl_index(row, col)];
                    let scale = ctx.maps.scale_oo * g_crb;
                    e.add(&r_var.trace_with(g_data, scale), 1.0);
                    for w in &w_vars {
                        e.add(&w.trace_with(g_data, scale), 1.0);
                    }
                    e.add(&u.entry(row, col), -1.0);
                    e
                } else if row < 3 {
                    let g_data = &ctx.schur_tr_data[row];
                    let scale = ctx.maps.scale_oa * ns * g_crb;
                    let mut e = r_var.trace_with(g_data, scale);
                    for w in &w_vars {
                        e.add(&w.trace_with(g_data, scale), 1.0);
                    }
                    e
                } else {
                    let scale = ctx.maps.scale_aa * ns * ns * g_crb;
                    let mut e = r_var.trace_with(ctx.maps.data_aa(), scale);
                    for w in &w_vars {
                        e.add(&w.trace_with(ctx.maps.data_aa(), scale), 1.0);
                    }
                    e
                };
                tri.push(expr);
            }
        }
        p.constrain_psd(4, tri);
    }

    // Per-satellite power budgets.
    for (k, sel) in ctx.selectors.iter().enumerate() {
        let mut e = AffineExpr::constant(scene.p_max_w[k]);
        e.add(&r_var.trace_with(sel, 1.0), -1.0);
        for w in &w_vars {
            e.add(&w.trace_with(sel, 1.0), -1.0);
        }
        p.constrain_nonneg(e);
    }

    // Rate floors through the exponential cone, concave part linearized at
    // the anchor: total received power S_i >= 2^(eta - Z''~). Each row pair
    // is scaled by the anchor's received power so one cone never spans the
    // full dynamic range of the instance.
    let p_total: f64 = scene.p_max_w.iter().sum();
    for i in 0..m {
        let h = &ctx.h_norm[i];
        let sigma_i = ctx.sigma_norm[i];
        let mut anchor_interf = sigma_i;
        for (mm, wa) in anchor.w_lifted.iter().enumerate() {
            if mm != i {
                anchor_interf += lift::trace_product(wa, h);
            }
        }
        anchor_interf += lift::trace_product(&anchor.r_lifted, h);
        // anchor_interf >= sigma_i > 0, so the tangent point is always valid.
        let anchored = anchor_interf;
        let anchor_signal = lift::trace_product(&anchor.w_lifted[i], h);
        let s0 = (anchor_signal + anchor_interf).max(1e-2 * p_total).max(sigma_i);

        // x_e = ln2 * eta(/Upsilon) + ln(anchored / s0) + (I(x) - I#) / anchored.
        let mut x_e = AffineExpr::constant((anchored / s0).ln());
        match upsilon {
            Some(up) => x_e.push(up, LN2),
            None => x_e.constant += LN2 * cfg.eta_rate_bps_hz,
        }
        let inv = 1.0 / anchored;
        let mut delta_interf = AffineExpr::constant(-(anchor_interf - sigma_i) * inv);
        for (mm, w) in w_vars.iter().enumerate() {
            if mm != i {
                delta_interf.add(&w.trace_with(h, inv), 1.0);
            }
        }
        delta_interf.add(&r_var.trace_with(h, inv), 1.0);
        x_e.add(&delta_interf, 1.0);

        let mut z_e = AffineExpr::constant(sigma_i / s0);
        for w in &w_vars {
            z_e.add(&w.trace_with(h, 1.0 / s0), 1.0);
        }
        z_e.add(&r_var.trace_with(h, 1.0 / s0), 1.0);

        p.constrain_exp(x_e, AffineExpr::constant(1.0), z_e);
    }

    // CRB cap for the communication-centric problem (in scaled T' units).
    if let (Some(cap), Some(t)) = (cfg.eta_crb_m2, t_var) {
        let mut e = AffineExpr::constant(cap / g_crb);
        e.add(&t.trace(1.0), -1.0);
        p.constrain_nonneg(e);
    }

    // Objective: CRB epigraph or -Upsilon, plus the linearized rank-one
    // penalty tr(W) - v^H W v >= tr(W) - lmax(W) >= 0. The epigraph enters
    // in anchor-normalized units (tr T' = tr T / g), which keeps the
    // penalty factor's meaning consistent across instances whose absolute
    // CRB scale varies by orders of magnitude.
    if sensing_objective {
        if let Some(t) = t_var {
            p.add_objective_expr(&t.trace(1.0), 1.0);
        }
    }
    if let Some(up) = upsilon {
        p.add_objective_term(up, -1.0);
    }
    for (w, v) in w_vars.iter().zip(anchor.v_w.iter()) {
        p.add_objective_expr(&w.trace(1.0), rho);
        p.add_objective_expr(&w.quad_form(v, 1.0), -rho);
    }
    p.add_objective_expr(&r_var.trace(1.0), rho);
    p.add_objective_expr(&r_var.quad_form(&anchor.v_r, 1.0), -rho);

    (
        p,
        ProblemVars {
            w: w_vars,
            r: r_var,
            t: t_var,
            upsilon,
        },
    )
}

/// Extract rank-one vectors from lifted matrices by EVD, taking the
/// dominant eigenpair of each block, then clamp to the power budgets so
/// solver tolerance can never leave a (tiny) budget violation behind.
fn extract_solution(
    w_lifted: &[DMatrix<Complex64>],
    r_lifted: &DMatrix<Complex64>,
    scene: &SceneSnapshot,
) -> BeamformingSolution {
    let take = |m: &DMatrix<Complex64>| -> DVector<Complex64> {
        let (lmax, v) = dominant_eigenpair(m);
        &v * Complex64::new(lmax.max(0.0).sqrt(), 0.0)
    };
    let mut sol = BeamformingSolution {
        w_tilde: w_lifted.iter().map(take).collect(),
        r_tilde: take(r_lifted),
    };
    let n = scene.n();
    let mut shrink = 1.0f64;
    for (k, budget) in scene.p_max_w.iter().enumerate() {
        let p = crate::signal_model::transmit_power(&sol, k, n);
        if p > *budget && p > 0.0 {
            shrink = shrink.min((budget / p).sqrt());
        }
    }
    if shrink < 1.0 {
        sol = sol.scaled(shrink);
    }
    sol
}

fn relative_change(
    w_new: &[DMatrix<Complex64>],
    r_new: &DMatrix<Complex64>,
    w_old: &[DMatrix<Complex64>],
    r_old: &DMatrix<Complex64>,
) -> f64 {
    let mut num = (r_new - r_old).norm_squared();
    let mut den = r_old.norm_squared();
    for (a, b) in w_new.iter().zip(w_old) {
        num += (a - b).norm_squared();
        den += b.norm_squared();
    }
    (num / den.max(1e-30)).sqrt()
}

/// The shared outer penalty loop of both objective modes.
fn penalty_loop(
    ctx: &OptContext,
    cfg: &OptimizerConfig,
    initial_anchor: AnchorState,
    sensing_objective: bool,
    upsilon_mode: bool,
) -> Result<SolveReport> {
    let mut anchor = initial_anchor;
    let mut rho = cfg.rho0;
    let mut iterations: Vec<OuterIteration> = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut final_upsilon = None;
    let mut final_epigraph = None;
    // Escalate the penalty after at most this many iterations above the
    // accuracy target, even while the iterate is still drifting; waiting for
    // full settling can stall the whole ladder on rate-bound instances.
    const RHO_PATIENCE: usize = 5;
    let mut since_bump = 0usize;
    let mut prev_objective = f64::INFINITY;

    for outer in 0..cfg.max_outer_iters {
        let (problem, vars) =
            build_subproblem(ctx, &anchor, rho, cfg, sensing_objective, upsilon_mode);
        let sol = conic_solve(&problem, cfg.solver_tol)?;
        match sol.status {
            ConicStatus::Optimal | ConicStatus::NearOptimal => {}
            ConicStatus::Infeasible => {
                if outer == 0 {
                    return Err(diagnose_infeasibility(ctx.scene, cfg));
                }
                warnings.push(format!(
                    "subproblem infeasible at outer iteration {outer}; keeping previous iterate"
                ));
                break;
            }
            ConicStatus::Unbounded => {
                return Err(Error::Numerical("subproblem certified unbounded".into()));
            }
            ConicStatus::Failed(msg) => {
                if outer == 0 {
                    return Err(Error::Numerical(format!("conic solver failed: {msg}")));
                }
                warnings.push(format!(
                    "conic solver stalled at outer iteration {outer} ({msg}); keeping previous iterate"
                ));
                break;
            }
        }

        let w_lifted: Vec<DMatrix<Complex64>> = vars.w.iter().map(|w| w.extract(&sol.x)).collect();
        let r_lifted = vars.r.extract(&sol.x);
        let residual = penalty_residual(&w_lifted, &r_lifted);
        let rel = relative_change(&w_lifted, &r_lifted, &anchor.w_lifted, &anchor.r_lifted);
        // T is solved in scaled units; undo the congruence for reporting.
        let epigraph = vars.t.map(|t| t.extract(&sol.x).trace() * ctx.crb_scale);
        final_epigraph = epigraph;
        final_upsilon = vars.upsilon.map(|u| sol.x[u]);

        iterations.push(OuterIteration {
            objective: sol.objective,
            crb_epigraph_m2: epigraph.unwrap_or(0.0),
            penalty_residual: residual,
            rho,
            rel_change: rel,
        });

        // Settled when the iterate stops moving or the objective change is
        // negligible; either way the surrogate has nothing left to give at
        // this penalty level.
        let plateau = (prev_objective - sol.objective).abs()
            <= 1e-4 * sol.objective.abs().max(1.0);
        prev_objective = sol.objective;
        let wr_converged = rel <= cfg.convergence_rel || plateau;
        anchor = AnchorState::from_lifted(w_lifted, r_lifted);
        since_bump += 1;

        if residual <= cfg.delta {
            if wr_converged {
                converged = true;
                break;
            }
        } else if wr_converged || since_bump >= RHO_PATIENCE {
            rho *= cfg.iota;
            since_bump = 0;
        }
    }

    if !converged {
        let residual = iterations.last().map(|i| i.penalty_residual).unwrap_or(f64::NAN);
        if residual <= cfg.delta {
            warnings.push(format!(
                "iterate still improving after {} outer iterations (penalty accuracy already met); returning last iterate",
                cfg.max_outer_iters
            ));
        } else {
            warnings.push(format!(
                "outer loop did not meet the penalty accuracy within {} iterations (residual {residual:.3e}); returning last iterate",
                cfg.max_outer_iters
            ));
        }
    }
    if iterations.is_empty() {
        return Err(Error::Numerical("no successful outer iteration".into()));
    }

    let solution = extract_solution(&anchor.w_lifted, &anchor.r_lifted, ctx.scene);
    Ok(SolveReport {
        solution,
        iterations,
        converged,
        lifted_crb_trace_m2: final_epigraph,
        upsilon: final_upsilon,
        final_w_lifted: anchor.w_lifted,
        final_r_lifted: anchor.r_lifted,
        warnings,
    })
}

/// Anchor for the penalty loop: the zero-forcing baseline when it is power
/// feasible, otherwise a max-min-rate phase-1 solve.
fn initial_anchor(scene: &SceneSnapshot, cfg: &OptimizerConfig) -> Result<BeamformingSolution> {
    if scene.m() == 0 {
        return zfbf_baseline(scene, 0.0);
    }
    match zfbf_baseline(scene, cfg.eta_rate_bps_hz) {
        Ok(sol) => Ok(sol),
        Err(Error::Infeasible(_)) | Err(Error::BaselineUnavailable(_)) => {
            let report = max_min_rate_solve(scene, cfg)?;
            let upsilon = report.upsilon.unwrap_or(f64::NEG_INFINITY);
            if upsilon < cfg.eta_rate_bps_hz - 1e-6 {
                return Err(Error::Infeasible(format!(
                    "rate targets unattainable under the power budgets: \
                     max-min achievable rate {upsilon:.4} bps/Hz < eta {}",
                    cfg.eta_rate_bps_hz
                )));
            }
            Ok(report.solution)
        }
        Err(e) => Err(e),
    }
}

/// Sensing-centric design: minimize the CRB-trace epigraph under power and
/// rate constraints, driving the lifted matrices to rank one.
pub fn solve_sensing_centric(scene: &SceneSnapshot, cfg: &OptimizerConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let anchor_sol = initial_anchor(scene, cfg)?;
    let structure = steering_derivatives(scene);
    let ctx = OptContext::build(scene, &structure, &anchor_sol)?;
    penalty_loop(&ctx, cfg, AnchorState::from_solution(&anchor_sol), true, false)
}

/// Communication-centric design: maximize the worst-case UE rate, optionally
/// capping the CRB trace at `eta_crb_m2`.
pub fn solve_comm_centric(scene: &SceneSnapshot, cfg: &OptimizerConfig) -> Result<SolveReport> {
    cfg.validate()?;
    if scene.m() == 0 {
        return Err(Error::Config(
            "communication-centric mode needs at least one UE".into(),
        ));
    }
    let anchor_sol = match zfbf_baseline(scene, cfg.eta_rate_bps_hz) {
        Ok(sol) => sol,
        Err(_) => BeamformingSolution::zeros(scene.nk(), scene.m()),
    };
    let structure = steering_derivatives(scene);
    let ctx = OptContext::build(scene, &structure, &anchor_sol)?;
    penalty_loop(&ctx, cfg, AnchorState::from_solution(&anchor_sol), false, true)
}

/// Phase-1: maximize the worst-case rate with no sensing constraint.
fn max_min_rate_solve(scene: &SceneSnapshot, cfg: &OptimizerConfig) -> Result<SolveReport> {
    let mut relaxed = cfg.clone();
    relaxed.eta_crb_m2 = None;
    relaxed.objective_mode = ObjectiveMode::CommCentric;
    let anchor_sol = BeamformingSolution::zeros(scene.nk(), scene.m());
    let structure = steering_derivatives(scene);
    let ctx = OptContext::build(scene, &structure, &anchor_sol)?;
    penalty_loop(&ctx, &relaxed, AnchorState::from_solution(&anchor_sol), false, true)
}

/// Classify an infeasible instance as rate-binding or power-binding.
fn diagnose_infeasibility(scene: &SceneSnapshot, cfg: &OptimizerConfig) -> Error {
    match max_min_rate_solve(scene, cfg) {
        Ok(report) => {
            let upsilon = report.upsilon.unwrap_or(f64::NEG_INFINITY);
            if upsilon < cfg.eta_rate_bps_hz {
                Error::Infeasible(format!(
                    "rate-binding: max-min achievable rate {upsilon:.4} bps/Hz < eta {}",
                    cfg.eta_rate_bps_hz
                ))
            } else {
                Error::Infeasible(
                    "power-binding or numerically marginal instance (rates attainable alone)"
                        .into(),
                )
            }
        }
        Err(e) => Error::Infeasible(format!("infeasible; phase-1 diagnosis also failed: {e}")),
    }
}

/// Lifted worst-case rate of an iterate (trace form with the raw channels).
pub fn lifted_min_rate(
    scene: &SceneSnapshot,
    w_lifted: &[DMatrix<Complex64>],
    r_lifted: &DMatrix<Complex64>,
) -> Result<f64> {
    let mut min_rate = f64::INFINITY;
    for i in 0..scene.m() {
        let r = ue_rate_lifted(w_lifted, r_lifted, &scene.channels[i], i, scene.sigma_ue_w)?;
        min_rate = min_rate.min(r);
    }
    Ok(min_rate)
}
