//! Experiment configuration: structured-text blocks keyed by the simulation
//! tables' symbols, with documented defaults for every missing key and hard
//! errors on unknown keys.

use crate::beamform::{ObjectiveMode, OptimizerConfig};
use crate::channel::{ArrayGeometry, ChannelParams, RainModel, SensingGains};
use crate::error::{Error, Result};
use crate::geometry::{
    build_walker_delta, find_satellite, offset_on_sphere, place_ues, select_serving_group,
    sub_satellite_point, CollaborationType, ConstellationConfig, TargetState,
};
use crate::localization::{PsoConfig, SearchBox};
use crate::rng::{stream, Domain};
use crate::scene::SceneSnapshot;
use serde::{Deserialize, Serialize};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ConstellationBlock {
    pub orbital_altitude_km: f64,
    pub num_planes: u32,
    pub sats_per_plane: u32,
    pub inclination_deg: f64,
    pub phase_factor: u32,
    pub earth_radius_km: f64,
}

impl Default for ConstellationBlock {
    fn default() -> Self {
        ConstellationBlock {
            orbital_altitude_km: 550.0,
            num_planes: 72,
            sats_per_plane: 22,
            inclination_deg: 53.0,
            phase_factor: 1,
            earth_radius_km: 6371.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayBlock {
    pub nx: usize,
    pub nz: usize,
    pub spacing_over_wavelength: f64,
}

impl Default for ArrayBlock {
    fn default() -> Self {
        ArrayBlock {
            nx: 4,
            nz: 4,
            spacing_over_wavelength: 0.5,
        }
    }
}

/// UE receiver noise convention. The receive figure of merit inside the
/// channel gain already divides by kTB, so `normalized` (unit noise) is the
/// self-consistent default; `table` applies the tabulated dBm value as-is.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum UeNoiseModel {
    Normalized,
    Table,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum RainModelChoice {
    DbLognormal,
    LnLognormal,
    Disabled,
}

impl From<RainModelChoice> for RainModel {
    fn from(c: RainModelChoice) -> RainModel {
        match c {
            RainModelChoice::DbLognormal => RainModel::DbLognormal,
            RainModelChoice::LnLognormal => RainModel::LnLognormal,
            RainModelChoice::Disabled => RainModel::Disabled,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelBlock {
    pub rician_factor_db: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub g_over_t_db_per_k: f64,
    pub boltzmann: f64,
    pub speed_of_light: f64,
    pub noise_power_dbm: f64,
    pub rain_mu_db: f64,
    pub rain_sigma2_db: f64,
    pub antenna_max_gain_dbi: f64,
    pub half_power_angle_deg: f64,
    pub rain_model: RainModelChoice,
    pub distance_band_km: [f64; 2],
    pub ue_noise_model: UeNoiseModel,
}

impl Default for ChannelBlock {
    fn default() -> Self {
        ChannelBlock {
            rician_factor_db: 10.0,
            carrier_hz: 35e9,
            bandwidth_hz: 20e6,
            g_over_t_db_per_k: 34.0,
            boltzmann: 1.38e-23,
            speed_of_light: 3e8,
            noise_power_dbm: -110.0,
            rain_mu_db: -2.6,
            rain_sigma2_db: 1.63,
            antenna_max_gain_dbi: 16.0,
            half_power_angle_deg: 0.4,
            rain_model: RainModelChoice::DbLognormal,
            distance_band_km: [550.0, 2700.0],
            ue_noise_model: UeNoiseModel::Normalized,
        }
    }
}

impl ChannelBlock {
    pub fn to_params(&self) -> ChannelParams {
        ChannelParams {
            rician_factor_linear: db_to_linear(self.rician_factor_db),
            carrier_hz: self.carrier_hz,
            bandwidth_hz: self.bandwidth_hz,
            g_over_t_linear: db_to_linear(self.g_over_t_db_per_k),
            boltzmann: self.boltzmann,
            speed_of_light: self.speed_of_light,
            rain_model: self.rain_model.into(),
            rain_mu_db: self.rain_mu_db,
            rain_sigma2_db: self.rain_sigma2_db,
            antenna_max_gain_linear: db_to_linear(self.antenna_max_gain_dbi),
            half_power_angle_rad: self.half_power_angle_deg.to_radians(),
            distance_band_km: (self.distance_band_km[0], self.distance_band_km[1]),
        }
    }

    pub fn wavelength_m(&self) -> f64 {
        self.speed_of_light / self.carrier_hz
    }

    pub fn sigma_ue_w(&self) -> f64 {
        match self.ue_noise_model {
            UeNoiseModel::Normalized => 1.0,
            UeNoiseModel::Table => dbm_to_watts(self.noise_power_dbm),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GroupBlock {
    pub central_plane: u32,
    pub central_slot: u32,
    pub collaboration_type: String,
    pub k_total: usize,
}

impl Default for GroupBlock {
    fn default() -> Self {
        GroupBlock {
            central_plane: 36,
            central_slot: 11,
            collaboration_type: "II".into(),
            k_total: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct UeBlock {
    pub num_ues: usize,
    pub footprint_radius_km: f64,
}

impl Default for UeBlock {
    fn default() -> Self {
        UeBlock {
            num_ues: 10,
            footprint_radius_km: 50.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TargetBlock {
    pub offset_east_km: f64,
    pub offset_north_km: f64,
    pub altitude_km: f64,
    pub reflection_coeff: f64,
}

impl Default for TargetBlock {
    fn default() -> Self {
        TargetBlock {
            offset_east_km: 1.5,
            offset_north_km: -1.0,
            altitude_km: 0.0,
            reflection_coeff: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum BetaModel {
    /// Constant magnitude `beta_scale`, zero phase, known to the estimator.
    Uniform,
    /// Two-hop free-space magnitudes scaled by `beta_scale`.
    TwoHop,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SensingBlock {
    pub beta_model: BetaModel,
    pub beta_scale: f64,
    pub noise_power_dbm: f64,
}

impl Default for SensingBlock {
    fn default() -> Self {
        SensingBlock {
            beta_model: BetaModel::Uniform,
            beta_scale: 1.0,
            noise_power_dbm: -110.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PsoBlock {
    pub num_particles: usize,
    pub max_iters: usize,
    pub c1: f64,
    pub c2: f64,
    pub w_max: f64,
    pub w_min: f64,
    pub box_side_km: f64,
    pub velocity_clamp: f64,
    pub freeze_random_factors: bool,
}

impl Default for PsoBlock {
    fn default() -> Self {
        PsoBlock {
            num_particles: 50,
            max_iters: 40,
            c1: 1.5,
            c2: 1.5,
            w_max: 0.8,
            w_min: 0.4,
            box_side_km: 20.0,
            velocity_clamp: 0.2,
            freeze_random_factors: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerBlock {
    pub eta_rate_bps_hz: f64,
    pub p_max_dbm: f64,
    pub rho0: f64,
    pub iota: f64,
    pub delta: f64,
    pub max_outer_iters: usize,
    pub solver_tol: f64,
    pub objective_mode: String,
    pub eta_crb_m2: Option<f64>,
    pub convergence_rel: f64,
}

impl Default for OptimizerBlock {
    fn default() -> Self {
        OptimizerBlock {
            eta_rate_bps_hz: 2.0,
            p_max_dbm: 30.0,
            rho0: 10.0,
            iota: 1.5,
            delta: 1e-4,
            max_outer_iters: 40,
            solver_tol: 1e-8,
            objective_mode: "sensing".into(),
            eta_crb_m2: None,
            convergence_rel: 1e-3,
        }
    }
}

impl OptimizerBlock {
    pub fn to_config(&self) -> Result<OptimizerConfig> {
        let objective_mode = match self.objective_mode.as_str() {
            "sensing" | "sensing_centric" => ObjectiveMode::SensingCentric,
            "comm" | "comm_centric" => ObjectiveMode::CommCentric,
            other => {
                return Err(Error::Config(format!(
                    "unknown objective_mode '{other}' (expected 'sensing' or 'comm')"
                )))
            }
        };
        let mut solver_tol = self.solver_tol;
        if let Ok(v) = std::env::var("LEOISAC_SOLVER_TOL") {
            solver_tol = v
                .parse::<f64>()
                .map_err(|_| Error::Config("LEOISAC_SOLVER_TOL must be a float".into()))?;
        }
        let cfg = OptimizerConfig {
            eta_rate_bps_hz: self.eta_rate_bps_hz,
            p_max_dbm: self.p_max_dbm,
            rho0: self.rho0,
            iota: self.iota,
            delta: self.delta,
            max_outer_iters: self.max_outer_iters,
            solver_tol,
            objective_mode,
            eta_crb_m2: self.eta_crb_m2,
            convergence_rel: self.convergence_rel,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RedrawBlock {
    pub noise: bool,
    pub nlos: bool,
    pub symbols: bool,
    pub ue_positions: bool,
}

impl Default for RedrawBlock {
    fn default() -> Self {
        RedrawBlock {
            noise: true,
            nlos: true,
            symbols: true,
            ue_positions: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SolutionSource {
    /// Run the joint design before the trials.
    Optimize,
    /// Use the zero-forcing baseline.
    Zfbf,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloBlock {
    pub solution: SolutionSource,
    pub noiseless: bool,
}

impl Default for MonteCarloBlock {
    fn default() -> Self {
        MonteCarloBlock {
            solution: SolutionSource::Optimize,
            noiseless: false,
        }
    }
}

/// Parameter-sweep axes matching the reported figure trends.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PmaxDbm,
    Eta,
    CollabType,
    ArraySize,
    SatsPerPlane,
    NumPlanes,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum SweepValue {
    Number(f64),
    Text(String),
}

impl std::fmt::Display for SweepValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepValue::Number(x) => write!(f, "{x}"),
            SweepValue::Text(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    pub axis: Option<SweepAxis>,
    pub values: Vec<SweepValue>,
    /// Run localization trials (RMSE) at every sweep point.
    pub with_rmse: bool,
}

impl Default for SweepBlock {
    fn default() -> Self {
        SweepBlock {
            axis: None,
            values: Vec::new(),
            with_rmse: false,
        }
    }
}

/// Top-level experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub num_trials: usize,
    pub workers: usize,
    pub constellation: ConstellationBlock,
    pub array: ArrayBlock,
    pub channel: ChannelBlock,
    pub group: GroupBlock,
    pub ue: UeBlock,
    pub target: TargetBlock,
    pub sensing: SensingBlock,
    pub pso: PsoBlock,
    pub optimizer: OptimizerBlock,
    pub redraw: RedrawBlock,
    pub montecarlo: MonteCarloBlock,
    pub sweep: SweepBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 1,
            num_trials: 100,
            workers: 0,
            constellation: ConstellationBlock::default(),
            array: ArrayBlock::default(),
            channel: ChannelBlock::default(),
            group: GroupBlock::default(),
            ue: UeBlock::default(),
            target: TargetBlock::default(),
            sensing: SensingBlock::default(),
            pso: PsoBlock::default(),
            optimizer: OptimizerBlock::default(),
            redraw: RedrawBlock::default(),
            montecarlo: MonteCarloBlock::default(),
            sweep: SweepBlock::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_trials < 1 {
            return Err(Error::Config("num_trials must be >= 1".into()));
        }
        self.constellation_config().validate()?;
        self.array_geometry()?.validate()?;
        self.channel.to_params().validate()?;
        self.optimizer.to_config()?;
        self.collaboration_type()?;
        if self.pso.num_particles < 1 || self.pso.box_side_km <= 0.0 {
            return Err(Error::Config("invalid pso block".into()));
        }
        if self.sensing.beta_scale <= 0.0 {
            return Err(Error::Config("beta_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn constellation_config(&self) -> ConstellationConfig {
        ConstellationConfig {
            orbital_altitude_km: self.constellation.orbital_altitude_km,
            num_planes: self.constellation.num_planes,
            sats_per_plane: self.constellation.sats_per_plane,
            inclination_deg: self.constellation.inclination_deg,
            phase_factor: self.constellation.phase_factor,
            earth_radius_km: self.constellation.earth_radius_km,
        }
    }

    pub fn array_geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::new(
            self.array.nx,
            self.array.nz,
            self.array.spacing_over_wavelength,
            self.channel.wavelength_m(),
        )
    }

    pub fn collaboration_type(&self) -> Result<CollaborationType> {
        self.group.collaboration_type.parse()
    }

    pub fn pso_config(&self, box_center: nalgebra::Vector3<f64>) -> PsoConfig {
        PsoConfig {
            num_particles: self.pso.num_particles,
            max_iters: self.pso.max_iters,
            c1: self.pso.c1,
            c2: self.pso.c2,
            w_max: self.pso.w_max,
            w_min: self.pso.w_min,
            search_box: SearchBox::cube(box_center, self.pso.box_side_km),
            velocity_clamp: self.pso.velocity_clamp,
            freeze_random_factors: self.pso.freeze_random_factors,
        }
    }

    /// Build the frozen scene for this configuration. `channel_draw` selects
    /// the channel realization stream (0 is the base scene; Monte Carlo
    /// trials that redraw NLOS use `trial + 1`).
    pub fn build_scene(&self, channel_draw: u64) -> Result<SceneSnapshot> {
        let cons = self.constellation_config();
        let sats = build_walker_delta(&cons)?;
        let central = find_satellite(&sats, self.group.central_plane, self.group.central_slot)?;
        let group = select_serving_group(
            &sats,
            central,
            self.collaboration_type()?,
            self.group.k_total,
        )?;
        let arr = self.array_geometry()?;
        let params = self.channel.to_params();
        let earth = self.constellation.earth_radius_km;

        let sub = sub_satellite_point(&group.central_sat.position_ecef_km, earth);
        let surface = offset_on_sphere(
            &sub,
            self.target.offset_east_km,
            self.target.offset_north_km,
            earth,
        );
        let target = TargetState {
            position_ecef_km: surface * ((earth + self.target.altitude_km) / earth),
            reflection_coeff: self.target.reflection_coeff,
        };

        let mut ue_rng = stream(self.master_seed, Domain::UePlacement, 0);
        let ues = place_ues(
            &group.central_sat,
            self.ue.num_ues,
            self.ue.footprint_radius_km,
            earth,
            &mut ue_rng,
        )?;

        let k = group.len();
        let gains = match self.sensing.beta_model {
            BetaModel::Uniform => SensingGains::uniform(k, self.sensing.beta_scale),
            BetaModel::TwoHop => SensingGains::two_hop(
                &group.positions(),
                &target.position_ecef_km,
                self.channel.wavelength_m(),
                self.sensing.beta_scale,
            ),
        };

        let p_max_w = vec![dbm_to_watts(self.optimizer.p_max_dbm); k];
        let mut chan_rng = stream(self.master_seed, Domain::Channel, channel_draw);
        SceneSnapshot::assemble(
            group,
            arr,
            target,
            ues,
            &params,
            gains,
            self.channel.sigma_ue_w(),
            dbm_to_watts(self.sensing.noise_power_dbm),
            p_max_w,
            &mut chan_rng,
        )
    }

    /// Apply one sweep-axis value, returning the modified configuration.
    pub fn with_sweep_value(&self, axis: SweepAxis, value: &SweepValue) -> Result<ExperimentConfig> {
        let mut cfg = self.clone();
        let num = |v: &SweepValue| -> Result<f64> {
            match v {
                SweepValue::Number(x) => Ok(*x),
                SweepValue::Text(t) => t
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("sweep value '{t}' is not numeric"))),
            }
        };
        match axis {
            SweepAxis::PmaxDbm => cfg.optimizer.p_max_dbm = num(value)?,
            SweepAxis::Eta => cfg.optimizer.eta_rate_bps_hz = num(value)?,
            SweepAxis::CollabType => {
                let text = match value {
                    SweepValue::Text(t) => t.clone(),
                    SweepValue::Number(x) => format!("{x}"),
                };
                let ty: CollaborationType = text.parse()?;
                cfg.group.collaboration_type = ty.to_string();
                // Fixed growth rule: I -> 3, II -> 5, III -> 7 satellites.
                cfg.group.k_total = match ty {
                    CollaborationType::TypeI => 3,
                    CollaborationType::TypeII => 5,
                    CollaborationType::TypeIII => 7,
                };
            }
            SweepAxis::ArraySize => {
                let n = num(value)? as usize;
                if n < 1 {
                    return Err(Error::Config("array_size sweep value must be >= 1".into()));
                }
                cfg.array.nx = n;
                cfg.array.nz = n;
            }
            SweepAxis::SatsPerPlane => cfg.constellation.sats_per_plane = num(value)? as u32,
            SweepAxis::NumPlanes => cfg.constellation.num_planes = num(value)? as u32,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_yields_table_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.constellation.num_planes, 72);
        assert_eq!(cfg.array.nx * cfg.array.nz, 16);
        assert_eq!(cfg.group.k_total, 5);
        assert_eq!(cfg.ue.num_ues, 10);
        assert_eq!(cfg.pso.num_particles, 50);
        assert_eq!(cfg.pso.max_iters, 40);
        assert_eq!(cfg.optimizer.rho0, 10.0);
        assert_eq!(cfg.optimizer.iota, 1.5);
        assert_eq!(cfg.optimizer.delta, 1e-4);
        assert_eq!(cfg.optimizer.p_max_dbm, 30.0);
        assert_eq!(cfg.optimizer.eta_rate_bps_hz, 2.0);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let err = ExperimentConfig::from_toml_str("pmax_dbmm = 30.0").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err =
            ExperimentConfig::from_toml_str("[optimizer]\ntypo_field = 1.0\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn roundtrip_of_explicit_value() {
        let cfg =
            ExperimentConfig::from_toml_str("[optimizer]\np_max_dbm = 33.0\n").unwrap();
        assert_eq!(cfg.optimizer.p_max_dbm, 33.0);
        // Unmentioned keys stay at defaults.
        assert_eq!(cfg.optimizer.rho0, 10.0);
    }

    #[test]
    fn sweep_value_application() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        let swept = cfg
            .with_sweep_value(SweepAxis::PmaxDbm, &SweepValue::Number(40.0))
            .unwrap();
        assert_eq!(swept.optimizer.p_max_dbm, 40.0);

        let swept = cfg
            .with_sweep_value(SweepAxis::CollabType, &SweepValue::Text("III".into()))
            .unwrap();
        assert_eq!(swept.group.k_total, 7);
        assert_eq!(swept.group.collaboration_type, "III");

        let swept = cfg
            .with_sweep_value(SweepAxis::ArraySize, &SweepValue::Number(2.0))
            .unwrap();
        assert_eq!((swept.array.nx, swept.array.nz), (2, 2));
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((dbm_to_watts(-110.0) - 1e-14).abs() < 1e-26);
    }
}
