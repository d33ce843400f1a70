//! Frozen per-experiment state: serving group, target, UEs, drawn channels
//! and sensing gains. Everything downstream (rates, observations, CRB,
//! beamforming) reads from a [`SceneSnapshot`] and never mutates it.

use crate::channel::{sample_channel, steering_vector, ArrayGeometry, ChannelParams, SensingGains};
use crate::error::Result;
use crate::geometry::{AngleSet, ServingGroup, TargetState};
use nalgebra::{DVector, Vector3};
use num_complex::Complex64;
use rand::Rng;

/// Immutable snapshot of one simulated scene.
#[derive(Debug, Clone)]
pub struct SceneSnapshot {
    pub group: ServingGroup,
    pub arr: ArrayGeometry,
    pub target: TargetState,
    pub ue_positions: Vec<Vector3<f64>>,
    /// Stacked multiple-satellite channel per UE, length `N*K`.
    pub channels: Vec<DVector<Complex64>>,
    pub gains: SensingGains,
    /// UE receiver noise power (W).
    pub sigma_ue_w: f64,
    /// Satellite sensing noise power (W).
    pub sigma_n_w: f64,
    /// Target angles per satellite.
    pub angles: AngleSet,
    /// Cached unit-norm steering vectors toward the target, one per satellite.
    pub target_steering: Vec<DVector<Complex64>>,
    /// Per-satellite transmit power budgets (W).
    pub p_max_w: Vec<f64>,
    /// Validity warnings accumulated while drawing the scene.
    pub warnings: Vec<String>,
}

impl SceneSnapshot {
    /// Draw channels and assemble a snapshot from prepared geometry.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble<R: Rng>(
        group: ServingGroup,
        arr: ArrayGeometry,
        target: TargetState,
        ue_positions: Vec<Vector3<f64>>,
        params: &ChannelParams,
        gains: SensingGains,
        sigma_ue_w: f64,
        sigma_n_w: f64,
        p_max_w: Vec<f64>,
        rng: &mut R,
    ) -> Result<Self> {
        target.validate()?;
        arr.validate()?;
        params.validate()?;
        let n = arr.n();
        let k = group.len();
        let sats = group.positions();
        let mut warnings = Vec::new();

        let mut channels = Vec::with_capacity(ue_positions.len());
        for ue in &ue_positions {
            let mut h = DVector::<Complex64>::zeros(n * k);
            for (ki, q) in sats.iter().enumerate() {
                let c = sample_channel(q, ue, &arr, params, rng)?;
                if let Some(w) = c.warning {
                    warnings.push(w);
                }
                h.rows_mut(ki * n, n).copy_from(&c.h);
            }
            channels.push(h);
        }

        let angles = AngleSet::for_scene(&sats, &target.position_ecef_km)?;
        let target_steering = (0..k)
            .map(|i| steering_vector(angles.elevations[i], angles.azimuths[i], &arr))
            .collect();

        Ok(SceneSnapshot {
            group,
            arr,
            target,
            ue_positions,
            channels,
            gains,
            sigma_ue_w,
            sigma_n_w,
            angles,
            target_steering,
            p_max_w,
            warnings,
        })
    }

    /// Satellites in the group.
    pub fn k(&self) -> usize {
        self.group.len()
    }

    /// Antenna elements per satellite.
    pub fn n(&self) -> usize {
        self.arr.n()
    }

    /// Stacked dimension `N*K`.
    pub fn nk(&self) -> usize {
        self.n() * self.k()
    }

    /// Served UEs.
    pub fn m(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn sat_positions(&self) -> Vec<Vector3<f64>> {
        self.group.positions()
    }
}
