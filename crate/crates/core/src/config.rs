//! Scenario configuration.
//!
//! Configs are TOML files. Every key is optional; omitted keys take the
//! values of the reference scenario (N = L = K = 8, BS at (0, 10), RIS at
//! (40, 10), user at (80, 10), P = 10 dBm, noise -94 dBm).
//!
//! ```toml
//! [dims]
//! n = 8
//! l = 8
//! k = 8
//!
//! [geometry]
//! bs = [0.0, 10.0]
//! ris = [40.0, 10.0]
//! user = [80.0, 10.0]
//!
//! [power]
//! p_dbm = 10.0
//! noise_dbm = -94.0
//! bandwidth_hz = 1e7
//! budget = "per_antenna"   # tr Q <= N P; "total" gives tr Q <= P
//!
//! [arrays.link0.rx]
//! ds = 1.0
//! eta_deg = 0.0
//! delta_deg = 30.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DimsSection {
    pub n: usize,
    pub l: usize,
    pub k: usize,
}

impl Default for DimsSection {
    fn default() -> Self {
        DimsSection { n: 8, l: 8, k: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub bs: [f64; 2],
    pub ris: [f64; 2],
    pub user: [f64; 2],
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection {
            bs: [0.0, 10.0],
            ris: [40.0, 10.0],
            user: [80.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    /// `tr Q <= N P`
    PerAntenna,
    /// `tr Q <= P`
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerSection {
    pub p_dbm: f64,
    pub noise_dbm: f64,
    /// Carried for bookkeeping; rates are per channel use.
    pub bandwidth_hz: f64,
    pub budget: BudgetMode,
}

impl Default for PowerSection {
    fn default() -> Self {
        PowerSection {
            p_dbm: 10.0,
            noise_dbm: -94.0,
            bandwidth_hz: 10e6,
            budget: BudgetMode::PerAntenna,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsSection {
    pub gt_dbi: f64,
    pub gr_dbi: f64,
}

impl Default for GainsSection {
    fn default() -> Self {
        GainsSection {
            gt_dbi: 5.0,
            gr_dbi: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RicianSection {
    pub kappa0: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

impl Default for RicianSection {
    fn default() -> Self {
        RicianSection {
            kappa0: 1.0,
            kappa1: 1.0,
            kappa2: 1.0,
        }
    }
}

/// Uniform linear array statistics for one link end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    /// Relative element spacing in wavelengths.
    pub ds: f64,
    /// Mean angle in degrees.
    pub eta_deg: f64,
    /// RMS angle spread in degrees.
    pub delta_deg: f64,
}

impl ArrayGeometry {
    pub fn new(ds: f64, eta_deg: f64, delta_deg: f64) -> Self {
        ArrayGeometry { ds, eta_deg, delta_deg }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkArrays {
    pub tx: ArrayGeometry,
    pub rx: ArrayGeometry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "ArraysOverride")]
pub struct ArraysSection {
    pub link0: LinkArrays,
    pub link1: LinkArrays,
    pub link2: LinkArrays,
}

impl Default for ArraysSection {
    fn default() -> Self {
        let g = ArrayGeometry::new;
        ArraysSection {
            link0: LinkArrays {
                rx: g(1.0, 0.0, 30.0),
                tx: g(1.0, 10.0, 5.0),
            },
            link1: LinkArrays {
                rx: g(1.0, 0.0, 20.0),
                tx: g(1.0, 0.0, 5.0),
            },
            link2: LinkArrays {
                rx: g(1.0, 0.0, 5.0),
                tx: g(1.0, 0.0, 30.0),
            },
        }
    }
}

// Array entries may be given partially; omitted fields keep the per-link
// defaults, which differ between links and ends.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct GeometryOverride {
    ds: Option<f64>,
    eta_deg: Option<f64>,
    delta_deg: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct LinkOverride {
    tx: Option<GeometryOverride>,
    rx: Option<GeometryOverride>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ArraysOverride {
    link0: Option<LinkOverride>,
    link1: Option<LinkOverride>,
    link2: Option<LinkOverride>,
}

impl From<ArraysOverride> for ArraysSection {
    fn from(o: ArraysOverride) -> Self {
        fn geom(base: ArrayGeometry, o: Option<GeometryOverride>) -> ArrayGeometry {
            let o = o.unwrap_or_default();
            ArrayGeometry {
                ds: o.ds.unwrap_or(base.ds),
                eta_deg: o.eta_deg.unwrap_or(base.eta_deg),
                delta_deg: o.delta_deg.unwrap_or(base.delta_deg),
            }
        }
        fn link(base: LinkArrays, o: Option<LinkOverride>) -> LinkArrays {
            let o = o.unwrap_or_default();
            LinkArrays {
                tx: geom(base.tx, o.tx),
                rx: geom(base.rx, o.rx),
            }
        }
        let d = ArraysSection::default();
        ArraysSection {
            link0: link(d.link0, o.link0),
            link1: link(d.link1, o.link1),
            link2: link(d.link2, o.link2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub trials: usize,
    pub seed: u64,
}

impl Default for McSection {
    fn default() -> Self {
        McSection { trials: 2000, seed: 1 }
    }
}

/// Switches for the reduced systems (single-hop, RIS-only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinksSection {
    pub direct: bool,
    pub ris: bool,
}

impl Default for LinksSection {
    fn default() -> Self {
        LinksSection {
            direct: true,
            ris: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub epsilon: f64,
    pub phase_step: f64,
    pub restarts: usize,
    pub max_outer: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            epsilon: 1e-5,
            phase_step: 0.1,
            restarts: 3,
            max_outer: 100,
        }
    }
}

/// Fault injection used to exercise the validator's negative paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultsSection {
    /// Multiplies every receive correlation matrix after normalization.
    pub receive_trace_scale: f64,
}

impl Default for FaultsSection {
    fn default() -> Self {
        FaultsSection {
            receive_trace_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub dims: DimsSection,
    pub geometry: GeometrySection,
    pub power: PowerSection,
    pub gains: GainsSection,
    pub rician: RicianSection,
    pub arrays: ArraysSection,
    pub mc: McSection,
    pub links: LinksSection,
    pub optimizer: OptimizerSection,
    pub faults: FaultsSection,
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s).map_err(|e| Error::Config {
            key: toml_error_key(&e),
            reason: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            key: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Checks value ranges, reporting the dotted key of the first offender.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| {
            Err(Error::Config {
                key: key.to_string(),
                reason: reason.to_string(),
            })
        };
        for (key, v) in [
            ("dims.n", self.dims.n),
            ("dims.l", self.dims.l),
            ("dims.k", self.dims.k),
        ] {
            if v < 1 {
                return bad(key, "must be at least 1");
            }
        }
        let g = &self.geometry;
        for (key, a, b) in [
            ("geometry.ris", g.bs, g.ris),
            ("geometry.user", g.bs, g.user),
            ("geometry.user", g.ris, g.user),
        ] {
            if a == b {
                return bad(key, "positions must be pairwise distinct");
            }
        }
        for (key, v) in [
            ("geometry.bs", g.bs),
            ("geometry.ris", g.ris),
            ("geometry.user", g.user),
        ] {
            if !v.iter().all(|x| x.is_finite()) {
                return bad(key, "coordinates must be finite");
            }
        }
        for (key, v) in [
            ("power.p_dbm", self.power.p_dbm),
            ("power.noise_dbm", self.power.noise_dbm),
            ("gains.gt_dbi", self.gains.gt_dbi),
            ("gains.gr_dbi", self.gains.gr_dbi),
        ] {
            if !v.is_finite() {
                return bad(key, "must be finite");
            }
        }
        for (key, v) in [
            ("rician.kappa0", self.rician.kappa0),
            ("rician.kappa1", self.rician.kappa1),
            ("rician.kappa2", self.rician.kappa2),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(key, "must be finite and >= 0");
            }
        }
        let arrays = [
            ("arrays.link0", &self.arrays.link0),
            ("arrays.link1", &self.arrays.link1),
            ("arrays.link2", &self.arrays.link2),
        ];
        for (prefix, link) in arrays {
            for (side, a) in [("tx", &link.tx), ("rx", &link.rx)] {
                if !(a.ds > 0.0) {
                    return bad(&format!("{prefix}.{side}.ds"), "must be > 0");
                }
                if !(a.delta_deg > 0.0) {
                    return bad(&format!("{prefix}.{side}.delta_deg"), "must be > 0");
                }
                if !(-180.0..=180.0).contains(&a.eta_deg) {
                    return bad(&format!("{prefix}.{side}.eta_deg"), "must lie in [-180, 180]");
                }
            }
        }
        if self.mc.trials < 1 {
            return bad("mc.trials", "must be at least 1");
        }
        if !(self.optimizer.epsilon > 0.0) {
            return bad("optimizer.epsilon", "must be > 0");
        }
        if !(self.optimizer.phase_step > 0.0) {
            return bad("optimizer.phase_step", "must be > 0");
        }
        if self.optimizer.restarts < 1 {
            return bad("optimizer.restarts", "must be at least 1");
        }
        if !(self.faults.receive_trace_scale > 0.0) {
            return bad("faults.receive_trace_scale", "must be > 0");
        }
        Ok(())
    }

    pub fn transmit_power_watts(&self) -> f64 {
        dbm_to_watts(self.power.p_dbm)
    }

    pub fn noise_power_watts(&self) -> f64 {
        dbm_to_watts(self.power.noise_dbm)
    }

    /// Upper bound on `tr Q`.
    pub fn power_budget(&self) -> f64 {
        let p = self.transmit_power_watts();
        match self.power.budget {
            BudgetMode::PerAntenna => self.dims.n as f64 * p,
            BudgetMode::Total => p,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Best-effort dotted key path for a TOML deserialization error.
fn toml_error_key(e: &toml::de::Error) -> String {
    let msg = e.message();
    // Unknown fields and missing/invalid values name the key in backticks.
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            return msg[start + 1..start + 1 + len].to_string();
        }
    }
    "<document>".to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_reference_scenario() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.dims.n, 8);
        assert_eq!(cfg.power.noise_dbm, -94.0);
        assert_eq!(cfg.arrays.link0.tx.eta_deg, 10.0);
        assert_eq!(cfg.arrays.link2.tx.delta_deg, 30.0);
    }

    #[test]
    fn partial_override() {
        let cfg = ScenarioConfig::from_toml_str(
            "[power]\np_dbm = 20\n[arrays.link1.rx]\nds = 0.5\neta_deg = 3\ndelta_deg = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.power.p_dbm, 20.0);
        assert_eq!(cfg.power.noise_dbm, -94.0);
        assert_eq!(cfg.arrays.link1.rx, ArrayGeometry::new(0.5, 3.0, 7.0));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ScenarioConfig::default();
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn range_errors_name_the_key() {
        let err = ScenarioConfig::from_toml_str("[dims]\nn = 0\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "dims.n"), "{err}");
        let err = ScenarioConfig::from_toml_str("[arrays.link2.tx]\ndelta_deg = -1\n").unwrap_err();
        assert!(
            matches!(err, Error::Config { ref key, .. } if key == "arrays.link2.tx.delta_deg"),
            "{err}"
        );
        let err = ScenarioConfig::from_toml_str("[geometry]\nris = [0.0, 10.0]\n").unwrap_err();
        assert!(
            matches!(err, Error::Config { ref key, .. } if key == "geometry.ris"),
            "{err}"
        );
    }

    #[test]
    fn parse_errors_name_the_key() {
        let err = ScenarioConfig::from_toml_str("[power]\np_dbm = \"loud\"\n").unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
        let err = ScenarioConfig::from_toml_str("[power]\nbogus = 1\n").unwrap_err();
        assert!(
            matches!(err, Error::Config { ref key, .. } if key.contains("bogus")),
            "{err}"
        );
    }

    #[test]
    fn budget_modes() {
        let mut cfg = ScenarioConfig::default();
        let p = cfg.transmit_power_watts();
        assert!((p - 0.01).abs() < 1e-15);
        assert!((cfg.power_budget() - 8.0 * p).abs() < 1e-15);
        cfg.power.budget = BudgetMode::Total;
        assert!((cfg.power_budget() - p).abs() < 1e-15);
    }
}
