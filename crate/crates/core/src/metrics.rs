//! SINR, secrecy rate and beampattern evaluation, the polar (magnitude and
//! phase) expansion of the array factor, and feasibility checking of a full
//! trajectory and beam plan.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, quad_form};
use crate::scalar::lit;
use crate::scenario::{Link, Node};
use crate::{
    CMatrix, CVector, ComplexMatrix, ComplexVector, Error, Position, Real, Result, ScenarioConfig,
    Trajectory,
};

/// Relative asymmetry above which an input matrix is rejected.
pub const HERMITIAN_TOL: f64 = 1e-8;

/// Transmit covariances of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotBeam {
    /// Information covariance `B = b b^H` (or its relaxation).
    pub info: ComplexMatrix,
    /// Sensing covariance, which doubles as artificial noise.
    pub sense: ComplexMatrix,
    /// Information beam, when `info` is rank one.
    pub info_vector: Option<ComplexVector>,
}

impl SlotBeam {
    pub fn zero(m: usize) -> Self {
        Self {
            info: linalg::zeros(m),
            sense: linalg::zeros(m),
            info_vector: None,
        }
    }

    pub fn from_vector(b: ComplexVector, sense: ComplexMatrix) -> Self {
        Self {
            info: linalg::outer(&b),
            sense,
            info_vector: Some(b),
        }
    }

    pub fn dim(&self) -> usize {
        self.info.nrows()
    }

    /// `E = B + A_s`.
    pub fn total(&self) -> ComplexMatrix {
        &self.info + &self.sense
    }

    pub fn info_power(&self) -> f64 {
        linalg::trace_re(&self.info)
    }

    pub fn sense_power(&self) -> f64 {
        linalg::trace_re(&self.sense)
    }

    /// Symmetrized copy; fails if either covariance is visibly non-Hermitian.
    pub fn checked(&self) -> Result<Self> {
        Ok(Self {
            info: linalg::symmetrize_checked(&self.info, HERMITIAN_TOL)?,
            sense: linalg::symmetrize_checked(&self.sense, HERMITIAN_TOL)?,
            info_vector: self.info_vector.clone(),
        })
    }

    /// Signal power delivered along `v`: `|v^H b|^2` if the beam vector is
    /// known, else `v^H B v`.
    fn info_gain(&self, v: &ComplexVector) -> f64 {
        match &self.info_vector {
            Some(b) => v.dotc(b).norm_sqr(),
            None => quad_form(&self.info, v),
        }
    }
}

/// Per-slot beams for a whole flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamPlan {
    pub slots: Vec<SlotBeam>,
}

impl BeamPlan {
    pub fn zero(n: usize, m: usize) -> Self {
        Self {
            slots: vec![SlotBeam::zero(m); n],
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// `|X_ij|`, `arg X_ij` of the strict upper triangle plus the real diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPolar<T> {
    pub diag: Vec<T>,
    pub upper: Vec<PolarEntry<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarEntry<T> {
    pub i: usize,
    pub j: usize,
    pub magnitude: T,
    pub phase: T,
}

impl<T: Real> MatrixPolar<T> {
    pub fn from_matrix(x: &CMatrix<T>) -> Self {
        let m = x.nrows();
        let diag = (0..m).map(|p| x[(p, p)].re).collect();
        let mut upper = Vec::with_capacity(m * m.saturating_sub(1) / 2);
        for i in 0..m {
            for j in i + 1..m {
                let z = x[(i, j)];
                upper.push(PolarEntry {
                    i,
                    j,
                    magnitude: z.re.hypot(z.im),
                    phase: z.im.atan2(z.re),
                });
            }
        }
        Self { diag, upper }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_matrix(&self) -> CMatrix<T> {
        let m = self.dim();
        let mut x = linalg::zeros::<T>(m);
        for (p, d) in self.diag.iter().enumerate() {
            x[(p, p)] = Complex::new(*d, T::zero());
        }
        for e in &self.upper {
            let z = Complex::new(e.magnitude * e.phase.cos(), e.magnitude * e.phase.sin());
            x[(e.i, e.j)] = z;
            x[(e.j, e.i)] = z.conj();
        }
        x
    }

    /// `Phi^H X Phi` written out as
    /// `sum_p X_pp + 2 sum_{i<j} |X_ij| cos(theta_ij + pi (j-i) c)`.
    pub fn array_factor(&self, cosine: T) -> T {
        let two = lit::<T>(2.0);
        let diag = self.diag.iter().fold(T::zero(), |a, d| a + *d);
        self.upper.iter().fold(diag, |acc, e| {
            let lag = lit::<T>((e.j - e.i) as f64);
            acc + two * e.magnitude * (e.phase + T::pi() * lag * cosine).cos()
        })
    }

    /// `sum_{i<j} 2 pi |X_ij| sin(theta_ij + pi (j-i) D/d) (j-i) D / d^3`,
    /// the coefficient such that the gradient of the array factor with
    /// respect to the UAV position is this value times `(rho - s)`.
    pub fn array_factor_slope(&self, altitude: T, d: T) -> T {
        let two_pi = lit::<T>(2.0) * T::pi();
        let c = altitude / d;
        let d3 = d * d * d;
        self.upper.iter().fold(T::zero(), |acc, e| {
            let lag = lit::<T>((e.j - e.i) as f64);
            acc + two_pi * e.magnitude * (e.phase + T::pi() * lag * c).sin() * lag * altitude / d3
        })
    }
}

/// `eta_o` (with `E`) or `xi_o` (with `A_s`): the array factor plus the
/// noise floor `(sigma2 / beta0) d^2`.
pub fn eta_from_polar<T: Real>(polar: &MatrixPolar<T>, cosine: T, noise_floor: T) -> T {
    polar.array_factor(cosine) + noise_floor
}

/// `eta_o(E, rho)` for a node at `s`.
pub fn eta_closed_form(polar: &MatrixPolar<f64>, rho: &Position, s: &Position, cfg: &ScenarioConfig) -> f64 {
    let d = crate::scenario::distance(rho, s, cfg.altitude);
    eta_from_polar(polar, cfg.altitude / d, cfg.noise_floor(d))
}

/// `xi_o(A_s, rho)`; the same expansion applied to the sensing covariance.
pub fn xi_closed_form(
    sense_polar: &MatrixPolar<f64>,
    rho: &Position,
    s: &Position,
    cfg: &ScenarioConfig,
) -> f64 {
    eta_closed_form(sense_polar, rho, s, cfg)
}

/// `Xi_o = eta_o - (sigma2/beta0) d^2`, the pure beampattern gain.
pub fn big_xi_closed_form(polar: &MatrixPolar<f64>, rho: &Position, s: &Position, cfg: &ScenarioConfig) -> f64 {
    let d = crate::scenario::distance(rho, s, cfg.altitude);
    polar.array_factor(cfg.altitude / d)
}

/// `|g^H b|^2 / (g^H A_s g + sigma2)` for an explicit channel.
pub fn sinr_with_channel<T: Real>(
    g: &CVector<T>,
    info: &CMatrix<T>,
    sense: &CMatrix<T>,
    sigma2: T,
) -> T {
    let signal = quad_form(info, g).max(T::zero());
    let interference = quad_form(sense, g).max(T::zero());
    signal / (interference + sigma2)
}

/// Received SINR at `node` for one slot.
pub fn sinr(rho: &Position, slot: &SlotBeam, node: Node, cfg: &ScenarioConfig) -> Result<f64> {
    if node == Node::Target {
        return Err(Error::Config("SINR is defined for the user and eavesdropper only".into()));
    }
    let slot = slot.checked()?;
    let link = Link::new(rho, node, cfg);
    let g = link.channel(cfg.beta0);
    let signal = slot.info_gain(&g).max(0.0);
    let interference = quad_form(&slot.sense, &g).max(0.0);
    Ok(signal / (interference + cfg.sigma2))
}

/// Secrecy rate with and without the `[.]^+` clamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecrecyRate {
    pub clamped: f64,
    pub unclamped: f64,
}

impl SecrecyRate {
    pub fn from_sinrs(gamma_u: f64, gamma_e: f64) -> Self {
        let unclamped = (1.0 + gamma_u).log2() - (1.0 + gamma_e).log2();
        Self {
            clamped: unclamped.max(0.0),
            unclamped,
        }
    }
}

pub fn secrecy_rate(rho: &Position, slot: &SlotBeam, cfg: &ScenarioConfig) -> Result<SecrecyRate> {
    let gu = sinr(rho, slot, Node::User, cfg)?;
    let ge = sinr(rho, slot, Node::Eve, cfg)?;
    Ok(SecrecyRate::from_sinrs(gu, ge))
}

/// `zeta = Phi^H (B + A_s) Phi` toward a ground point.
pub fn beampattern_gain(rho: &Position, slot: &SlotBeam, s_node: &Position, cfg: &ScenarioConfig) -> Result<f64> {
    let slot = slot.checked()?;
    let phi = crate::scenario::steering_vector(rho, s_node, cfg.altitude, slot.dim());
    Ok(beampattern_with_steering(&phi, &slot.total()))
}

pub fn beampattern_with_steering<T: Real>(phi: &CVector<T>, e: &CMatrix<T>) -> T {
    quad_form(e, phi).max(T::zero())
}

/// Every per-slot quantity the optimizers and reports need, evaluated from
/// the normalized (steering-vector) form of the link budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotMetrics {
    pub sinr_user: f64,
    pub sinr_eve: f64,
    pub secrecy: SecrecyRate,
    pub zeta_target: f64,
    pub zeta_eve: f64,
    pub zeta_user: f64,
    pub threshold_target: f64,
    pub threshold_eve: f64,
    pub power: f64,
}

pub fn slot_metrics(rho: &Position, slot: &SlotBeam, cfg: &ScenarioConfig) -> SlotMetrics {
    let u = Link::new(rho, Node::User, cfg);
    let e = Link::new(rho, Node::Eve, cfg);
    let t = Link::new(rho, Node::Target, cfg);
    let total = slot.total();
    let sig_u = slot.info_gain(&u.steering).max(0.0);
    let sig_e = slot.info_gain(&e.steering).max(0.0);
    let an_u = quad_form(&slot.sense, &u.steering).max(0.0);
    let an_e = quad_form(&slot.sense, &e.steering).max(0.0);
    let sinr_user = sig_u / (an_u + u.noise);
    let sinr_eve = sig_e / (an_e + e.noise);
    SlotMetrics {
        sinr_user,
        sinr_eve,
        secrecy: SecrecyRate::from_sinrs(sinr_user, sinr_eve),
        zeta_target: quad_form(&total, &t.steering).max(0.0),
        zeta_eve: quad_form(&total, &e.steering).max(0.0),
        zeta_user: quad_form(&total, &u.steering).max(0.0),
        threshold_target: cfg.gamma_t * t.distance * t.distance,
        threshold_eve: cfg.gamma_e * e.distance * e.distance,
        power: slot.info_power() + slot.sense_power(),
    }
}

/// Average secrecy rate over all slots.
pub fn average_secrecy(traj: &Trajectory, plan: &BeamPlan, cfg: &ScenarioConfig) -> SecrecyRate {
    let n = traj.len().max(1) as f64;
    let (c, u) = traj
        .positions
        .iter()
        .zip(&plan.slots)
        .map(|(rho, slot)| slot_metrics(rho, slot, cfg).secrecy)
        .fold((0.0, 0.0), |(c, u), r| (c + r.clamped, u + r.unclamped));
    SecrecyRate {
        clamped: c / n,
        unclamped: u / n,
    }
}

/// Outcome of checking one slot against the constraints of the joint problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotFeasibility {
    pub endpoint: bool,
    pub displacement: bool,
    pub sensing: bool,
    pub security: bool,
    pub power: bool,
    pub psd: bool,
}

impl SlotFeasibility {
    pub fn all(&self) -> bool {
        self.endpoint && self.displacement && self.sensing && self.security && self.power && self.psd
    }
}

/// Worst violation of each constraint family (zero when satisfied).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub endpoint: f64,
    pub displacement: f64,
    pub sensing: f64,
    pub security: f64,
    pub power: f64,
    pub psd: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        [
            self.endpoint,
            self.displacement,
            self.sensing,
            self.security,
            self.power,
            self.psd,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub slots: Vec<SlotFeasibility>,
    pub worst: Residuals,
    pub tol: f64,
}

impl FeasibilityReport {
    pub fn passes(&self) -> bool {
        self.slots.iter().all(SlotFeasibility::all)
    }

    pub fn flight_ok(&self) -> bool {
        self.slots.iter().all(|s| s.endpoint && s.displacement)
    }

    /// Slots whose sensing or security constraint fails.
    pub fn failing_slots(&self) -> Vec<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.all())
            .map(|(k, _)| k)
            .collect()
    }
}

/// Check endpoints, displacement, target floor, eavesdropper ceiling, power
/// budget and PSD-ness of every slot.
pub fn check_feasibility(
    traj: &Trajectory,
    plan: &BeamPlan,
    cfg: &ScenarioConfig,
    tol: f64,
) -> Result<FeasibilityReport> {
    let n = traj.len();
    if plan.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: plan.len(),
        });
    }
    let vmax = cfg.max_displacement();
    let mut worst = Residuals::default();
    let mut slots = Vec::with_capacity(n);
    for (k, (rho, slot)) in traj.positions.iter().zip(&plan.slots).enumerate() {
        let slot = slot.checked()?;
        let m = slot_metrics(rho, &slot, cfg);
        let endpoint = if k == 0 {
            (rho - cfg.rho_init_pos()).norm()
        } else if k + 1 == n {
            (rho - cfg.rho_final_pos()).norm()
        } else {
            0.0
        };
        let endpoint = if n == 1 {
            endpoint.max((rho - cfg.rho_final_pos()).norm())
        } else {
            endpoint
        };
        let displacement = if k + 1 < n {
            ((traj.positions[k + 1] - rho).norm() - vmax).max(0.0)
        } else {
            0.0
        };
        let sensing = (m.threshold_target - m.zeta_target).max(0.0);
        let security = if cfg.has_eve_ceiling() {
            (m.zeta_eve - m.threshold_eve).max(0.0)
        } else {
            0.0
        };
        let power = (m.power - cfg.p_max).max(0.0);
        let scale = m.power.max(f64::MIN_POSITIVE);
        let psd = (-linalg::min_eigenvalue(&slot.info))
            .max(-linalg::min_eigenvalue(&slot.sense))
            .max(0.0)
            / scale;
        worst.endpoint = worst.endpoint.max(endpoint);
        worst.displacement = worst.displacement.max(displacement);
        worst.sensing = worst.sensing.max(sensing);
        worst.security = worst.security.max(security);
        worst.power = worst.power.max(power);
        worst.psd = worst.psd.max(psd);
        slots.push(SlotFeasibility {
            endpoint: endpoint <= tol,
            displacement: displacement <= tol,
            sensing: sensing <= tol,
            security: security <= tol,
            power: power <= tol,
            psd: psd <= 1e-9_f64.max(tol),
        });
    }
    Ok(FeasibilityReport { slots, worst, tol })
}
