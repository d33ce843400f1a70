//! Dual-function transmit model: per-satellite power, UE rates, and the
//! aggregated sensing observation at the central satellite.

use crate::channel::complex_gaussian;
use crate::error::{Error, Result};
use crate::scene::SceneSnapshot;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

/// Cooperative communication beams and sensing waveform, stacked over the
/// serving group: `w_tilde[m]` and `r_tilde` have length `N*K`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSolution {
    pub w_tilde: Vec<DVector<Complex64>>,
    pub r_tilde: DVector<Complex64>,
}

impl BeamformingSolution {
    pub fn zeros(nk: usize, m: usize) -> Self {
        BeamformingSolution {
            w_tilde: vec![DVector::zeros(nk); m],
            r_tilde: DVector::zeros(nk),
        }
    }

    pub fn nk(&self) -> usize {
        self.r_tilde.len()
    }

    pub fn num_ues(&self) -> usize {
        self.w_tilde.len()
    }

    /// `V = [w_tilde_1, ..., w_tilde_M]`, so column m stacks `w_{k,m}` over
    /// the group.
    pub fn v_matrix(&self) -> DMatrix<Complex64> {
        let nk = self.nk();
        let m = self.num_ues();
        let mut v = DMatrix::zeros(nk, m);
        for (col, w) in self.w_tilde.iter().enumerate() {
            v.column_mut(col).copy_from(w);
        }
        v
    }

    /// Probing vector `V s + r_tilde`.
    pub fn probe(&self, s: &SymbolBlock) -> DVector<Complex64> {
        let mut x = self.r_tilde.clone();
        for (m, w) in self.w_tilde.iter().enumerate() {
            x += w * s.s[m];
        }
        x
    }

    /// Lifted matrices `W_m = w w^H` for each beam.
    pub fn lifted_w(&self) -> Vec<DMatrix<Complex64>> {
        self.w_tilde.iter().map(outer).collect()
    }

    /// Lifted matrix `R = r r^H`.
    pub fn lifted_r(&self) -> DMatrix<Complex64> {
        outer(&self.r_tilde)
    }

    /// Uniform scaling of all beams and the waveform.
    pub fn scaled(&self, factor: f64) -> Self {
        let f = Complex64::new(factor, 0.0);
        BeamformingSolution {
            w_tilde: self.w_tilde.iter().map(|w| w * f).collect(),
            r_tilde: &self.r_tilde * f,
        }
    }
}

fn outer(v: &DVector<Complex64>) -> DMatrix<Complex64> {
    let n = v.len();
    DMatrix::from_fn(n, n, |r, c| v[r] * v[c].conj())
}

/// Unit-power data symbols for one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub s: DVector<Complex64>,
    pub constellation: &'static str,
}

impl SymbolBlock {
    /// Draw M symbols from the 4-phase unit-modulus constellation
    /// `{1, j, -1, -j}`.
    pub fn draw_qpsk<R: Rng>(m: usize, rng: &mut R) -> Self {
        let s = DVector::from_fn(m, |_, _| match rng.random_range(0..4u8) {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        });
        SymbolBlock {
            s,
            constellation: "qpsk",
        }
    }

    /// All-ones block, handy for deterministic tests.
    pub fn ones(m: usize) -> Self {
        SymbolBlock {
            s: DVector::from_element(m, Complex64::new(1.0, 0.0)),
            constellation: "ones",
        }
    }
}

/// Aggregated sensing observation at the central satellite.
#[derive(Debug, Clone)]
pub struct SensingObservation {
    pub y: DVector<Complex64>,
    pub noise_power: f64,
}

/// Transmit power of satellite `k`: `sum_m ||w_{k,m}||^2 + ||r_k||^2`.
pub fn transmit_power(sol: &BeamformingSolution, k: usize, n: usize) -> f64 {
    let mut p = sol.r_tilde.rows(k * n, n).norm_squared();
    for w in &sol.w_tilde {
        p += w.rows(k * n, n).norm_squared();
    }
    p
}

/// Same power through the lifted block-trace form, used as the algebraic
/// cross-check of the selector identity.
pub fn transmit_power_lifted(
    w_lifted: &[DMatrix<Complex64>],
    r_lifted: &DMatrix<Complex64>,
    k: usize,
    n: usize,
) -> f64 {
    let block_trace = |mat: &DMatrix<Complex64>| -> f64 {
        (0..n).map(|i| mat[(k * n + i, k * n + i)].re).sum::<f64>()
    };
    w_lifted.iter().map(block_trace).sum::<f64>() + block_trace(r_lifted)
}

/// Achievable rate of UE `i` (bits/s/Hz): desired beam against inter-UE
/// interference, sensing-waveform leakage and noise.
pub fn ue_rate(
    sol: &BeamformingSolution,
    channels: &[DVector<Complex64>],
    i: usize,
    sigma2_w: f64,
) -> Result<f64> {
    if sigma2_w <= 0.0 {
        return Err(Error::Parameter("noise power must be positive".into()));
    }
    let h = &channels[i];
    let signal = sol.w_tilde[i].dotc(h).norm_sqr();
    let mut interference = sol.r_tilde.dotc(h).norm_sqr();
    for (m, w) in sol.w_tilde.iter().enumerate() {
        if m != i {
            interference += w.dotc(h).norm_sqr();
        }
    }
    Ok((1.0 + signal / (interference + sigma2_w)).log2())
}

/// Rate of UE `i` in the lifted trace form over `W_m = w w^H`, `R = r r^H`.
pub fn ue_rate_lifted(
    w_lifted: &[DMatrix<Complex64>],
    r_lifted: &DMatrix<Complex64>,
    h: &DVector<Complex64>,
    i: usize,
    sigma2_w: f64,
) -> Result<f64> {
    if sigma2_w <= 0.0 {
        return Err(Error::Parameter("noise power must be positive".into()));
    }
    let quad = |mat: &DMatrix<Complex64>| -> f64 {
        // tr(M h h^H) = h^H M h
        let mh = mat * h;
        h.dotc(&mh).re
    };
    let signal = quad(&w_lifted[i]);
    let mut interference = quad(r_lifted);
    for (m, w) in w_lifted.iter().enumerate() {
        if m != i {
            interference += quad(w);
        }
    }
    Ok((1.0 + signal / (interference + sigma2_w)).log2())
}

/// Apply the multistatic map `(A .* B) x` through its block structure:
/// `y_u = a_r(u) * sum_k beta[k,u] * (a_t(k)^H x_k)`.
pub fn apply_sensing(scene: &SceneSnapshot, x: &DVector<Complex64>) -> DVector<Complex64> {
    let n = scene.n();
    let k = scene.k();
    let mut t = vec![Complex64::new(0.0, 0.0); k];
    for (ki, tk) in t.iter_mut().enumerate() {
        *tk = scene.target_steering[ki].dotc(&x.rows(ki * n, n));
    }
    let mut y = DVector::zeros(n * k);
    for u in 0..k {
        let mut c = Complex64::new(0.0, 0.0);
        for (ki, tk) in t.iter().enumerate() {
            c += scene.gains.beta[(ki, u)] * tk;
        }
        let block = &scene.target_steering[u] * c;
        y.rows_mut(u * n, n).copy_from(&block);
    }
    y
}

/// Noise-free mean of the aggregated observation,
/// `u = alpha (A .* B)(V s + r_tilde)`.
pub fn mean_vector(
    scene: &SceneSnapshot,
    sol: &BeamformingSolution,
    s: &SymbolBlock,
    alpha: f64,
) -> DVector<Complex64> {
    apply_sensing(scene, &sol.probe(s)) * Complex64::new(alpha, 0.0)
}

/// Synthesize the received aggregated observation, optionally noiseless.
pub fn synthesize_received<R: Rng>(
    scene: &SceneSnapshot,
    sol: &BeamformingSolution,
    s: &SymbolBlock,
    alpha: f64,
    rng: &mut R,
    noiseless: bool,
) -> SensingObservation {
    let mut y = mean_vector(scene, sol, s, alpha);
    if !noiseless {
        let std = scene.sigma_n_w.sqrt();
        for yi in y.iter_mut() {
            *yi += complex_gaussian(rng) * Complex64::new(std, 0.0);
        }
    }
    SensingObservation {
        y,
        noise_power: scene.sigma_n_w,
    }
}

/// Small shared test scene: `k_total` satellites with an `nx * nz` array and
/// `m` UEs, rain disabled, unit sensing gains. UEs sit inside the 3-dB
/// footprint and the UE noise uses the normalized convention (the receive
/// figure of merit inside the channel gain already absorbs kTB).
#[cfg(test)]
pub(crate) fn toy_scene(k_total: usize, nx: usize, nz: usize, m: usize) -> SceneSnapshot {
    use crate::channel::{ArrayGeometry, RainModel, SensingGains};
    use crate::geometry::{
        build_walker_delta, select_serving_group, CollaborationType, ConstellationConfig,
        TargetState, EARTH_RADIUS_KM,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    let cfg = ConstellationConfig {
        orbital_altitude_km: 550.0,
        num_planes: 6,
        sats_per_plane: 8,
        inclination_deg: 53.0,
        phase_factor: 1,
        earth_radius_km: EARTH_RADIUS_KM,
    };
    let sats = build_walker_delta(&cfg).unwrap();
    let ty = if k_total <= 3 {
        CollaborationType::TypeI
    } else {
        CollaborationType::TypeII
    };
    let group = select_serving_group(&sats, 10, ty, k_total).unwrap();
    let arr = ArrayGeometry::new(nx, nz, 0.5, 3e8 / 35e9).unwrap();
    let mut params = crate::channel::table2_params();
    params.rain_model = RainModel::Disabled;
    let sub =
        crate::geometry::sub_satellite_point(&group.central_sat.position_ecef_km, EARTH_RADIUS_KM);
    let target = TargetState {
        position_ecef_km: crate::geometry::offset_on_sphere(&sub, 1.5, -1.0, EARTH_RADIUS_KM),
        reflection_coeff: 1.0,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let ues =
        crate::geometry::place_ues(&group.central_sat, m, 3.0, EARTH_RADIUS_KM, &mut rng).unwrap();
    let k = group.len();
    SceneSnapshot::assemble(
        group,
        arr,
        target,
        ues,
        &params,
        SensingGains::uniform(k, 1.0),
        1.0,
        1e-14,
        vec![1.0; k],
        &mut rng,
    )
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sensing_matrices;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    use super::toy_scene;

    fn random_solution(nk: usize, m: usize, seed: u64) -> BeamformingSolution {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        BeamformingSolution {
            w_tilde: (0..m)
                .map(|_| DVector::from_fn(nk, |_, _| complex_gaussian(&mut rng)))
                .collect(),
            r_tilde: DVector::from_fn(nk, |_, _| complex_gaussian(&mut rng)),
        }
    }

    #[test]
    fn zero_solution_zero_power() {
        let sol = BeamformingSolution::zeros(8, 3);
        assert_eq!(transmit_power(&sol, 0, 4), 0.0);
        assert_eq!(transmit_power(&sol, 1, 4), 0.0);
    }

    #[test]
    fn power_budget_saturation_example() {
        // 10 UEs, each beam puts 0.1 W on satellite k, no sensing waveform:
        // P_k = 1 W = 30 dBm.
        let n = 4;
        let k = 2;
        let mut sol = BeamformingSolution::zeros(n * k, 10);
        for w in sol.w_tilde.iter_mut() {
            w[0] = Complex64::new(0.1f64.sqrt(), 0.0);
        }
        assert_relative_eq!(transmit_power(&sol, 0, n), 1.0, epsilon = 1e-12);
        assert_relative_eq!(transmit_power(&sol, 1, n), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn power_matches_lifted_trace_form() {
        let n = 4;
        let k = 3;
        let sol = random_solution(n * k, 2, 5);
        let wl = sol.lifted_w();
        let rl = sol.lifted_r();
        for ki in 0..k {
            let direct = transmit_power(&sol, ki, n);
            let lifted = transmit_power_lifted(&wl, &rl, ki, n);
            assert_relative_eq!(direct, lifted, max_relative = 1e-12);
        }
    }

    #[test]
    fn rate_simple_snr() {
        // Single UE, no sensing waveform, |w^H h|^2 / sigma^2 = 3 -> 2 bps/Hz.
        let h = DVector::from_vec(vec![Complex64::new(1.0, 0.0)]);
        let sol = BeamformingSolution {
            w_tilde: vec![DVector::from_vec(vec![Complex64::new(3f64.sqrt(), 0.0)])],
            r_tilde: DVector::zeros(1),
        };
        let r = ue_rate(&sol, &[h], 0, 1.0).unwrap();
        assert_relative_eq!(r, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rate_zero_when_beam_orthogonal() {
        let h = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let w = DVector::from_vec(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]);
        let sol = BeamformingSolution {
            w_tilde: vec![w],
            r_tilde: DVector::zeros(2),
        };
        let r = ue_rate(&sol, &[h], 0, 1e-14).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn rate_rejects_nonpositive_noise() {
        let h = DVector::from_vec(vec![Complex64::new(1.0, 0.0)]);
        let sol = BeamformingSolution::zeros(1, 1);
        assert!(matches!(
            ue_rate(&sol, &[h], 0, 0.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn rate_vector_form_equals_trace_form() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..20 {
            let nk = 6;
            let m = 3;
            let sol = random_solution(nk, m, rng.random());
            let channels: Vec<DVector<Complex64>> = (0..m)
                .map(|_| DVector::from_fn(nk, |_, _| complex_gaussian(&mut rng)))
                .collect();
            let wl = sol.lifted_w();
            let rl = sol.lifted_r();
            for i in 0..m {
                let direct = ue_rate(&sol, &channels, i, 1e-3).unwrap();
                let lifted = ue_rate_lifted(&wl, &rl, &channels[i], i, 1e-3).unwrap();
                assert_relative_eq!(direct, lifted, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn mean_vector_linearity_and_zero() {
        let scene = toy_scene(3, 2, 2, 2);
        let sol = random_solution(scene.nk(), scene.m(), 3);
        let s = SymbolBlock::ones(scene.m());
        let u0 = mean_vector(&scene, &sol, &s, 0.0);
        assert_eq!(u0.norm(), 0.0);
        let u1 = mean_vector(&scene, &sol, &s, 1.0);
        let u3 = mean_vector(&scene, &sol, &s, 3.0);
        assert_relative_eq!((u3 - &u1 * Complex64::new(3.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn blockwise_apply_matches_full_matrix() {
        let scene = toy_scene(3, 2, 2, 2);
        let (a, b) = sensing_matrices(
            &scene.sat_positions(),
            &scene.target.position_ecef_km,
            &scene.arr,
            &scene.gains,
        )
        .unwrap();
        let ab = a.component_mul(&b);
        let sol = random_solution(scene.nk(), scene.m(), 4);
        let s = SymbolBlock::ones(scene.m());
        let x = sol.probe(&s);
        let fast = apply_sensing(&scene, &x);
        let full = &ab * &x;
        assert_relative_eq!((fast - full).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn scalar_collapse_hand_evaluation() {
        // K = 1, N = 1: u = alpha * beta * a_r * conj(a_t) * (w s + r).
        let scene = toy_scene(1, 1, 1, 1);
        let sol = random_solution(1, 1, 6);
        let s = SymbolBlock::ones(1);
        let alpha = 0.8;
        let u = mean_vector(&scene, &sol, &s, alpha);
        let ar = scene.target_steering[0][0];
        let beta = scene.gains.beta[(0, 0)];
        let expected =
            Complex64::new(alpha, 0.0) * beta * ar * ar.conj() * (sol.w_tilde[0][0] * s.s[0] + sol.r_tilde[0]);
        assert_relative_eq!(u[0].re, expected.re, max_relative = 1e-12);
        assert_relative_eq!(u[0].im, expected.im, max_relative = 1e-12);
    }

    #[test]
    fn noiseless_observation_equals_mean() {
        let scene = toy_scene(3, 2, 2, 2);
        let sol = random_solution(scene.nk(), scene.m(), 7);
        let s = SymbolBlock::ones(scene.m());
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let obs = synthesize_received(&scene, &sol, &s, 1.0, &mut rng, true);
        let u = mean_vector(&scene, &sol, &s, 1.0);
        assert_eq!((obs.y - u).norm(), 0.0);
    }

    #[test]
    fn noise_covariance_empirical() {
        let scene = toy_scene(2, 1, 2, 1);
        let sol = BeamformingSolution::zeros(scene.nk(), scene.m());
        let s = SymbolBlock::ones(scene.m());
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let nk = scene.nk();
        let draws = 10_000;
        let mut cov = DMatrix::<Complex64>::zeros(nk, nk);
        for _ in 0..draws {
            let obs = synthesize_received(&scene, &sol, &s, 1.0, &mut rng, false);
            for r in 0..nk {
                for c in 0..nk {
                    cov[(r, c)] += obs.y[r] * obs.y[c].conj();
                }
            }
        }
        cov /= Complex64::new(draws as f64, 0.0);
        let sigma = scene.sigma_n_w;
        for r in 0..nk {
            for c in 0..nk {
                if r == c {
                    assert!(
                        (cov[(r, r)].re - sigma).abs() / sigma < 0.05,
                        "diagonal {r}: {}",
                        cov[(r, r)].re
                    );
                } else {
                    assert!(
                        cov[(r, c)].norm() < 0.05 * sigma,
                        "off-diagonal ({r},{c}): {}",
                        cov[(r, c)].norm()
                    );
                }
            }
        }
    }

    #[test]
    fn qpsk_symbols_are_unit_modulus() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let s = SymbolBlock::draw_qpsk(64, &mut rng);
        for x in s.s.iter() {
            assert_relative_eq!(x.norm(), 1.0, epsilon = 1e-15);
        }
    }
}
