//! Scenario configuration, flight constraints and the line-of-sight channel.
//!
//! The UAV hovers at altitude `D` above the horizontal plane; ground nodes sit
//! at altitude zero. The ULA has half-wavelength spacing, so the phase of
//! element `m` (zero-based) toward a node at elevation cosine `c` is `pi*m*c`.

use num_complex::Complex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::lit;
use crate::{CVector, Error, Position, Real, Result, Vec2};

/// Ground node a channel is evaluated toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    User,
    Eve,
    Target,
}

/// Physical constants, node positions, flight limits and thresholds.
///
/// JSON keys mirror the field names; `gamma_e` may be `null` to disable the
/// eavesdropper beampattern ceiling. Missing keys take the reference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub rho_init: [f64; 2],
    pub rho_final: [f64; 2],
    pub s_user: [f64; 2],
    pub s_target: [f64; 2],
    pub s_eve: [f64; 2],
    #[serde(rename = "altitude_D")]
    pub altitude: f64,
    #[serde(rename = "T_total")]
    pub total_time: f64,
    pub slot_len_ts: f64,
    #[serde(rename = "N_slots")]
    pub n_slots: usize,
    pub v_max: f64,
    #[serde(rename = "M_antennas")]
    pub n_antennas: usize,
    pub gamma_t: f64,
    #[serde(serialize_with = "ser_threshold", deserialize_with = "de_threshold")]
    pub gamma_e: f64,
    #[serde(rename = "P_max")]
    pub p_max: f64,
    pub beta0: f64,
    pub sigma2: f64,
    #[serde(default = "half")]
    pub antenna_spacing_ratio: f64,
}

fn half() -> f64 {
    0.5
}

fn ser_threshold<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_threshold<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            rho_init: [300.0, 400.0],
            rho_final: [300.0, 600.0],
            s_user: [250.0, 520.0],
            s_target: [250.0, 480.0],
            s_eve: [350.0, 500.0],
            altitude: 200.0,
            total_time: 12.0,
            slot_len_ts: 0.5,
            n_slots: 24,
            v_max: 25.0,
            n_antennas: 4,
            gamma_t: 1e-6,
            gamma_e: 1e-6,
            p_max: 1.0,
            // -30 dB reference gain and -90 dBm noise
            beta0: 1e-3,
            sigma2: 1e-12,
            antenna_spacing_ratio: 0.5,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let ratio = self.total_time / self.slot_len_ts;
        if !(self.total_time > 0.0 && self.slot_len_ts > 0.0) {
            return bad("T_total and slot_len_ts must be positive".into());
        }
        if (ratio - self.n_slots as f64).abs() > 1e-9 * ratio.max(1.0) {
            return bad(format!(
                "N_slots = {} but T_total / slot_len_ts = {ratio}",
                self.n_slots
            ));
        }
        if self.n_slots < 2 {
            return bad("N_slots must be at least 2".into());
        }
        if !(self.altitude > 0.0) {
            return bad("altitude_D must be positive".into());
        }
        if !(self.v_max > 0.0) {
            return bad("v_max must be positive".into());
        }
        if !(self.p_max > 0.0 && self.sigma2 > 0.0 && self.beta0 > 0.0) {
            return bad("P_max, sigma2 and beta0 must be positive".into());
        }
        if !(self.gamma_t >= 0.0 && self.gamma_t.is_finite()) || !(self.gamma_e >= 0.0) {
            return bad("beampattern thresholds must be nonnegative".into());
        }
        if self.n_antennas < 1 {
            return bad("M_antennas must be at least 1".into());
        }
        if (self.antenna_spacing_ratio - 0.5).abs() > 1e-12 {
            return bad("only half-wavelength spacing is supported".into());
        }
        let positions = [
            self.rho_init,
            self.rho_final,
            self.s_user,
            self.s_target,
            self.s_eve,
        ];
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return bad("positions must be finite".into());
        }
        let span = (self.rho_final_pos() - self.rho_init_pos()).norm();
        let reach = (self.n_slots - 1) as f64 * self.max_displacement();
        if span > reach * (1.0 + 1e-12) {
            return bad(format!(
                "endpoints {span:.3} m apart but at most {reach:.3} m reachable"
            ));
        }
        Ok(())
    }

    /// `V_max = v_max * t_s`.
    pub fn max_displacement(&self) -> f64 {
        self.v_max * self.slot_len_ts
    }

    pub fn rho_init_pos(&self) -> Position {
        Position::new(self.rho_init[0], self.rho_init[1])
    }

    pub fn rho_final_pos(&self) -> Position {
        Position::new(self.rho_final[0], self.rho_final[1])
    }

    pub fn node_pos(&self, node: Node) -> Position {
        let p = match node {
            Node::User => self.s_user,
            Node::Eve => self.s_eve,
            Node::Target => self.s_target,
        };
        Position::new(p[0], p[1])
    }

    /// Noise floor expressed in array-factor units, `sigma2 * d^2 / beta0`.
    pub fn noise_floor(&self, d: f64) -> f64 {
        self.sigma2 / self.beta0 * d * d
    }

    pub fn has_eve_ceiling(&self) -> bool {
        self.gamma_e.is_finite()
    }

    pub fn with_antennas(&self, m: usize) -> Self {
        Self {
            n_antennas: m,
            ..self.clone()
        }
    }
}

/// Horizontal UAV positions, one per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub positions: Vec<Position>,
}

impl Trajectory {
    pub fn new(positions: Vec<Position>) -> Self {
        Self { positions }
    }

    /// Uniform-speed straight flight from `rho_init` to `rho_final`.
    pub fn straight_line(cfg: &ScenarioConfig) -> Self {
        let a = cfg.rho_init_pos();
        let b = cfg.rho_final_pos();
        let n = cfg.n_slots;
        let positions = (0..n)
            .map(|k| {
                if k + 1 == n {
                    b
                } else {
                    a + (b - a) * (k as f64 / (n - 1) as f64)
                }
            })
            .collect();
        Self { positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Largest violation of the flight constraints: endpoint mismatch and
    /// per-slot displacement above `V_max`.
    pub fn flight_residual(&self, cfg: &ScenarioConfig) -> (f64, f64) {
        let n = self.positions.len();
        if n == 0 {
            return (f64::INFINITY, f64::INFINITY);
        }
        let endpoint = (self.positions[0] - cfg.rho_init_pos())
            .norm()
            .max((self.positions[n - 1] - cfg.rho_final_pos()).norm());
        let vmax = cfg.max_displacement();
        let disp = self
            .positions
            .windows(2)
            .map(|w| (w[1] - w[0]).norm() - vmax)
            .fold(f64::NEG_INFINITY, f64::max);
        (endpoint, disp.max(0.0))
    }

    pub fn validate(&self, cfg: &ScenarioConfig, tol: f64) -> Result<()> {
        if self.positions.len() != cfg.n_slots {
            return Err(Error::LengthMismatch {
                expected: cfg.n_slots,
                got: self.positions.len(),
            });
        }
        let (endpoint, disp) = self.flight_residual(cfg);
        if endpoint > tol {
            return Err(Error::Trajectory(format!("endpoint off by {endpoint:.3e} m")));
        }
        if disp > tol {
            return Err(Error::Trajectory(format!(
                "per-slot displacement exceeds V_max by {disp:.3e} m"
            )));
        }
        Ok(())
    }

    pub fn min_distance_to(&self, s: &Position, altitude: f64) -> f64 {
        self.positions
            .iter()
            .map(|p| distance(p, s, altitude))
            .fold(f64::INFINITY, f64::min)
    }
}

/// UAV-to-node distance `sqrt(|rho - s|^2 + D^2)`.
pub fn distance<T: Real>(rho: &Vec2<T>, s: &Vec2<T>, altitude: T) -> T {
    ((rho - s).norm_squared() + altitude * altitude).sqrt()
}

/// Cosine of the angle of departure, `D / d`.
pub fn aod_cosine<T: Real>(rho: &Vec2<T>, s: &Vec2<T>, altitude: T) -> T {
    altitude / distance(rho, s, altitude)
}

/// ULA steering vector toward elevation cosine `c`.
pub fn steering_from_cosine<T: Real>(cosine: T, m: usize) -> CVector<T> {
    CVector::from_fn(m, |k, _| {
        if k == 0 {
            Complex::new(T::one(), T::zero())
        } else {
            let phase = T::pi() * lit::<T>(k as f64) * cosine;
            Complex::new(phase.cos(), phase.sin())
        }
    })
}

pub fn steering_vector<T: Real>(rho: &Vec2<T>, s: &Vec2<T>, altitude: T, m: usize) -> CVector<T> {
    steering_from_cosine(aod_cosine(rho, s, altitude), m)
}

/// LoS channel `sqrt(beta0) / d * steering`.
pub fn channel_vector<T: Real>(
    rho: &Vec2<T>,
    s: &Vec2<T>,
    altitude: T,
    m: usize,
    beta0: T,
) -> CVector<T> {
    let d = distance(rho, s, altitude);
    let gain = beta0.sqrt() / d;
    steering_vector(rho, s, altitude, m) * Complex::new(gain, T::zero())
}

/// Per-slot link geometry toward one node, evaluated once and reused.
#[derive(Debug, Clone)]
pub struct Link {
    pub distance: f64,
    pub cosine: f64,
    pub steering: CVector<f64>,
    /// `sigma2 d^2 / beta0`.
    pub noise: f64,
}

impl Link {
    pub fn new(rho: &Position, node: Node, cfg: &ScenarioConfig) -> Self {
        let s = cfg.node_pos(node);
        let d = distance(rho, &s, cfg.altitude);
        let cosine = cfg.altitude / d;
        Self {
            distance: d,
            cosine,
            steering: steering_from_cosine(cosine, cfg.n_antennas),
            noise: cfg.noise_floor(d),
        }
    }

    pub fn channel(&self, beta0: f64) -> CVector<f64> {
        &self.steering * Complex::new(beta0.sqrt() / self.distance, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vec_norm;

    fn p(x: f64, y: f64) -> Position {
        Position::new(x, y)
    }

    #[test]
    fn distance_examples() {
        let d = distance(&p(300.0, 400.0), &p(250.0, 480.0), 200.0);
        assert!((d - 48900f64.sqrt()).abs() < 1e-12);
        assert!((d - 221.133).abs() < 1e-3);
        assert_eq!(distance(&p(3.0, 4.0), &p(3.0, 4.0), 200.0), 200.0);
        let near = distance(&p(0.0, 0.0), &p(3.0, 4.0), 1e-9);
        assert!((near - 5.0).abs() < 1e-12);
    }

    #[test]
    fn aod_examples() {
        assert_eq!(aod_cosine(&p(1.0, 2.0), &p(1.0, 2.0), 200.0), 1.0);
        let c = aod_cosine(&p(300.0, 400.0), &p(250.0, 480.0), 200.0);
        assert!((c - 200.0 / 48900f64.sqrt()).abs() < 1e-15);
        assert!((c - 0.90443).abs() < 1e-5);
        assert!(aod_cosine(&p(1e9, 0.0), &p(0.0, 0.0), 200.0) < 1e-6);
    }

    #[test]
    fn steering_examples() {
        let s = steering_vector(&p(5.0, 5.0), &p(5.0, 5.0), 200.0, 4);
        let expect = [1.0, -1.0, 1.0, -1.0];
        for (z, e) in s.iter().zip(expect) {
            assert!((z.re - e).abs() < 1e-12 && z.im.abs() < 1e-12);
        }
        assert_eq!(s[0], Complex::new(1.0, 0.0));
        let one = steering_vector(&p(0.0, 0.0), &p(77.0, -3.0), 200.0, 1);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], Complex::new(1.0, 0.0));
        let two = steering_vector(&p(300.0, 400.0), &p(250.0, 480.0), 200.0, 2);
        let c = 200.0 / 48900f64.sqrt();
        let want = Complex::from_polar(1.0, std::f64::consts::PI * c);
        assert!((two[1] - want).norm() < 1e-15);
    }

    #[test]
    fn channel_examples() {
        let g = channel_vector(&p(0.0, 0.0), &p(0.0, 0.0), 200.0, 4, 1e-3);
        assert!((vec_norm(&g) - 4e-3f64.sqrt() / 200.0).abs() < 1e-18);
        assert!((vec_norm(&g) - 3.1623e-4).abs() < 1e-8);
        // unit gain at unit distance
        let g1 = channel_vector(&p(0.0, 0.0), &p(0.0, 0.0), 1.0, 3, 1.0);
        let s1 = steering_vector(&p(0.0, 0.0), &p(0.0, 0.0), 1.0, 3);
        assert_eq!(g1, s1);
        let g2 = channel_vector(&p(10.0, -4.0), &p(250.0, 520.0), 200.0, 6, 1e-3);
        let m0 = g2[0].norm();
        assert!(g2.iter().all(|z| (z.norm() - m0).abs() < 1e-18));
    }

    #[test]
    fn generic_over_f32() {
        let rho = Vec2::<f32>::new(300.0, 400.0);
        let s = Vec2::<f32>::new(250.0, 480.0);
        let d = distance(&rho, &s, 200.0f32);
        assert!((d - 221.133).abs() < 1e-2);
        let v = steering_vector(&rho, &s, 200.0f32, 3);
        assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-6));
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        assert!((cfg.max_displacement() - 12.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_unreachable_endpoints() {
        let cfg = ScenarioConfig {
            v_max: 10.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_inconsistent_slot_count() {
        let cfg = ScenarioConfig {
            n_slots: 23,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let one = ScenarioConfig {
            total_time: 0.5,
            n_slots: 1,
            ..Default::default()
        };
        assert!(one.validate().is_err());
    }

    #[test]
    fn json_roundtrip_with_disabled_ceiling() {
        let cfg = ScenarioConfig {
            gamma_e: f64::INFINITY,
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"gamma_e\":null"));
        assert!(text.contains("\"altitude_D\":200"));
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn straight_line_matches_reference_spacing() {
        let cfg = ScenarioConfig::default();
        let traj = Trajectory::straight_line(&cfg);
        assert_eq!(traj.len(), 24);
        assert_eq!(traj.positions[0], p(300.0, 400.0));
        assert_eq!(traj.positions[23], p(300.0, 600.0));
        let step = (traj.positions[1] - traj.positions[0]).norm();
        assert!((step - 200.0 / 23.0).abs() < 1e-12);
        assert!((step - 8.70).abs() < 5e-3);
        traj.validate(&cfg, 0.0).unwrap();
    }

    #[test]
    fn stationary_straight_line() {
        let cfg = ScenarioConfig {
            rho_final: [300.0, 400.0],
            ..Default::default()
        };
        let traj = Trajectory::straight_line(&cfg);
        assert!(traj.positions.iter().all(|q| *q == p(300.0, 400.0)));
    }

    #[test]
    fn trajectory_validation_catches_speeding() {
        let cfg = ScenarioConfig::default();
        let mut traj = Trajectory::straight_line(&cfg);
        traj.positions[5].x += 20.0;
        assert!(traj.validate(&cfg, 1e-9).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn steering_entries_unit_modulus(x in -1e3f64..1e3, y in -1e3f64..1e3, m in 1usize..9) {
                let v = steering_vector(&p(x, y), &p(250.0, 520.0), 200.0, m);
                for z in v.iter() {
                    prop_assert!((z.norm() - 1.0).abs() < 1e-12);
                }
            }

            #[test]
            fn distance_symmetric_and_translation_invariant(
                ax in -1e3f64..1e3, ay in -1e3f64..1e3,
                bx in -1e3f64..1e3, by in -1e3f64..1e3,
                tx in -1e3f64..1e3, ty in -1e3f64..1e3,
            ) {
                let a = p(ax, ay);
                let b = p(bx, by);
                let t = p(tx, ty);
                let d = distance(&a, &b, 200.0);
                prop_assert!((d - distance(&b, &a, 200.0)).abs() < 1e-12 * d);
                prop_assert!((d - distance(&(a + t), &(b + t), 200.0)).abs() < 1e-9 * d);
                prop_assert!(d >= 200.0);
            }

            #[test]
            fn channel_rescales_to_steering(x in -1e3f64..1e3, y in -1e3f64..1e3, m in 1usize..9) {
                let rho = p(x, y);
                let s = p(350.0, 500.0);
                let g = channel_vector(&rho, &s, 200.0, m, 1e-3);
                let sv = steering_vector(&rho, &s, 200.0, m);
                let d = distance(&rho, &s, 200.0);
                for (a, b) in g.iter().zip(sv.iter()) {
                    prop_assert!((a * (d / 1e-3f64.sqrt()) - b).norm() < 1e-12);
                }
            }
        }
    }
}
