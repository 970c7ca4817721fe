//! Statistical channel state (correlations, LoS components, path loss) and
//! the Kronecker-Rician channel sampler.
//!
//! Link 0 is BS -> user (`K x N`), link 1 is BS -> RIS (`L x N`) and link 2 is
//! RIS -> user (`K x L`). Each realization is
//! `H_i = R_i^{1/2} X_i T_i^{1/2} + Hbar_i` where `X_0`, `X_1` have i.i.d.
//! `CN(0, 1/N)` entries and `X_2` has `CN(0, 1/L)` entries. Large-scale gains
//! and Rician factors are folded into `T_i` and `Hbar_i`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{ArrayGeometry, ScenarioConfig};
use crate::error::{Error, Result};
use crate::linalg::{cplx, zeros, CMatrix, Complex64, HermitianPsd};

/// Number of trapezoid nodes used for the angular integral.
pub const QUADRATURE_NODES: usize = 4096;
/// Half-width of the integration window, in angle spreads.
const QUADRATURE_WINDOW_SPREADS: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemDims {
    /// BS antennas.
    pub n: usize,
    /// RIS elements.
    pub l: usize,
    /// User antennas.
    pub k: usize,
}

impl SystemDims {
    pub fn new(n: usize, l: usize, k: usize) -> Result<Self> {
        if n == 0 || l == 0 || k == 0 {
            return Err(Error::invalid("dims", "N, L and K must all be at least 1"));
        }
        Ok(SystemDims { n, l, k })
    }
}

/// Statistical CSIT for one link.
#[derive(Debug, Clone)]
pub struct LinkStatistics {
    /// Receive correlation.
    pub r: HermitianPsd,
    /// Transmit correlation, including the large-scale gain and Rician scaling.
    pub t: HermitianPsd,
    /// LoS component, including the large-scale gain and Rician scaling.
    pub los: CMatrix,
    pub kappa: f64,
    /// Linear large-scale gain.
    pub gain: f64,
}

impl LinkStatistics {
    /// Link with zero scattered and LoS power (receive correlation kept).
    fn silenced(&self) -> Self {
        LinkStatistics {
            r: self.r.clone(),
            t: HermitianPsd::zeros(self.t.dim()),
            los: zeros(self.los.nrows(), self.los.ncols()),
            kappa: self.kappa,
            gain: 0.0,
        }
    }

    fn without_los(&self) -> Self {
        LinkStatistics {
            los: zeros(self.los.nrows(), self.los.ncols()),
            ..self.clone()
        }
    }

    pub fn los_power(&self) -> f64 {
        self.los.iter().map(|z| z.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone)]
pub struct SystemStatistics {
    pub dims: SystemDims,
    /// Link 0: BS -> user.
    pub direct: LinkStatistics,
    /// Link 1: BS -> RIS.
    pub bs_ris: LinkStatistics,
    /// Link 2: RIS -> user.
    pub ris_user: LinkStatistics,
    /// Noise variance `sigma^2` (linear).
    pub noise_power: f64,
    /// Bound on `tr Q` (linear).
    pub power_budget: f64,
}

impl SystemStatistics {
    /// Assembles statistics and checks every matrix shape against `dims`.
    pub fn new(
        dims: SystemDims,
        direct: LinkStatistics,
        bs_ris: LinkStatistics,
        ris_user: LinkStatistics,
        noise_power: f64,
        power_budget: f64,
    ) -> Result<Self> {
        let stats = SystemStatistics {
            dims,
            direct,
            bs_ris,
            ris_user,
            noise_power,
            power_budget,
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        let SystemDims { n, l, k } = self.dims;
        let check = |what: &str, rows: usize, cols: usize, m: &CMatrix| {
            if m.nrows() != rows || m.ncols() != cols {
                Err(Error::dims(
                    what,
                    format!("{rows}x{cols}"),
                    format!("{}x{}", m.nrows(), m.ncols()),
                ))
            } else {
                Ok(())
            }
        };
        check("R0", k, k, self.direct.r.matrix())?;
        check("T0", n, n, self.direct.t.matrix())?;
        check("Hbar0", k, n, &self.direct.los)?;
        check("R1", l, l, self.bs_ris.r.matrix())?;
        check("T1", n, n, self.bs_ris.t.matrix())?;
        check("Hbar1", l, n, &self.bs_ris.los)?;
        check("R2", k, k, self.ris_user.r.matrix())?;
        check("T2", l, l, self.ris_user.t.matrix())?;
        check("Hbar2", k, l, &self.ris_user.los)?;
        if !(self.noise_power > 0.0) {
            return Err(Error::invalid("noise_power", "must be > 0"));
        }
        if !(self.power_budget > 0.0) {
            return Err(Error::invalid("power_budget", "must be > 0"));
        }
        Ok(())
    }

    pub fn links(&self) -> [&LinkStatistics; 3] {
        [&self.direct, &self.bs_ris, &self.ris_user]
    }

    /// `H_1 = H_2 = 0`: the single-hop BS -> user channel.
    pub fn without_ris(&self) -> Self {
        SystemStatistics {
            bs_ris: self.bs_ris.silenced(),
            ris_user: self.ris_user.silenced(),
            ..self.clone()
        }
    }

    /// `H_0 = 0`: only the reflected path.
    pub fn without_direct(&self) -> Self {
        SystemStatistics {
            direct: self.direct.silenced(),
            ..self.clone()
        }
    }

    /// All LoS components removed.
    pub fn rayleigh(&self) -> Self {
        SystemStatistics {
            direct: self.direct.without_los(),
            bs_ris: self.bs_ris.without_los(),
            ris_user: self.ris_user.without_los(),
            ..self.clone()
        }
    }

    pub fn has_direct_link(&self) -> bool {
        self.direct.t.trace() > 0.0 || self.direct.los_power() > 0.0
    }

    pub fn has_ris_link(&self) -> bool {
        let hop = |s: &LinkStatistics| s.t.trace() > 0.0 || s.los_power() > 0.0;
        hop(&self.bs_ris) && hop(&self.ris_user)
    }
}

/// Spatial correlation of a uniform linear array under a truncated Gaussian
/// power-angle profile:
/// `[C]_{m,n} = int_{-180}^{180} exp(2 pi j d_s (m-n) sin(pi phi / 180)
/// - (phi - eta)^2 / (2 delta^2)) dphi / sqrt(2 pi delta^2)`.
///
/// The integral is a composite trapezoid rule with [`QUADRATURE_NODES`] nodes
/// over `[-180, 180]` intersected with `eta +- 12 delta`, so narrow spreads are
/// still resolved. The result is projected onto the PSD cone.
pub fn correlation_from_angles(size: usize, geom: &ArrayGeometry) -> Result<HermitianPsd> {
    if size == 0 {
        return Err(Error::invalid("size", "must be at least 1"));
    }
    if !(geom.delta_deg > 0.0) {
        return Err(Error::invalid("delta_deg", "angle spread must be > 0"));
    }
    if !(geom.ds > 0.0) {
        return Err(Error::invalid("ds", "antenna spacing must be > 0"));
    }
    let lo = (geom.eta_deg - QUADRATURE_WINDOW_SPREADS * geom.delta_deg).max(-180.0);
    let hi = (geom.eta_deg + QUADRATURE_WINDOW_SPREADS * geom.delta_deg).min(180.0);
    let lags = angular_lags(size, geom, lo, hi, QUADRATURE_NODES);
    let m = CMatrix::from_fn(size, size, |i, j| if i >= j { lags[i - j] } else { lags[j - i].conj() });
    HermitianPsd::clamped(&m)
}

/// Entries `c(d)` for lags `d = 0..size` of the Toeplitz correlation,
/// integrated over `[lo, hi]` with `nodes` trapezoid nodes.
pub(crate) fn angular_lags(size: usize, geom: &ArrayGeometry, lo: f64, hi: f64, nodes: usize) -> Vec<Complex64> {
    use std::f64::consts::PI;
    let mut lags = vec![cplx(0.0, 0.0); size];
    if hi <= lo {
        return lags;
    }
    let h = (hi - lo) / (nodes - 1) as f64;
    let norm = 1.0 / (2.0 * PI * geom.delta_deg * geom.delta_deg).sqrt();
    for node in 0..nodes {
        let phi = lo + h * node as f64;
        let w = if node == 0 || node == nodes - 1 { 0.5 * h } else { h };
        let gauss = (-(phi - geom.eta_deg).powi(2) / (2.0 * geom.delta_deg.powi(2))).exp();
        let phase = 2.0 * PI * geom.ds * (PI * phi / 180.0).sin();
        let weight = w * norm * gauss;
        for (d, lag) in lags.iter_mut().enumerate() {
            *lag += cplx(0.0, phase * d as f64).exp() * weight;
        }
    }
    lags
}

/// Path-loss gain `Gamma[dB] = G_t + G_r - 37.5 - 22 log10(d / 1 m)`, in dB.
pub fn path_loss_db(distance_m: f64, gt_dbi: f64, gr_dbi: f64) -> Result<f64> {
    if !(distance_m >= 1.0) {
        return Err(Error::invalid(
            "distance_m",
            format!("path-loss model needs d >= 1 m, got {distance_m}"),
        ));
    }
    Ok(gt_dbi + gr_dbi - 37.5 - 22.0 * distance_m.log10())
}

pub fn path_loss_linear(distance_m: f64, gt_dbi: f64, gr_dbi: f64) -> Result<f64> {
    Ok(10f64.powf(path_loss_db(distance_m, gt_dbi, gr_dbi)? / 10.0))
}

/// All-one LoS direction scaled so that `tr(Hbar Hbar^H) = target_trace`.
pub fn los_allones(rows: usize, cols: usize, target_trace: f64) -> Result<CMatrix> {
    if !(target_trace > 0.0) {
        return Err(Error::invalid("target_trace", "must be > 0"));
    }
    let c = (target_trace / (rows * cols) as f64).sqrt();
    Ok(CMatrix::from_element(rows, cols, cplx(c, 0.0)))
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Builds one link: `tr R = rx`, `tr T = tx^2 Gamma / (kappa + 1)` and
/// `tr(Hbar Hbar^H) = kappa / (kappa + 1) * tx * rx * Gamma`.
fn build_link(
    rx: usize,
    tx: usize,
    rx_geom: &ArrayGeometry,
    tx_geom: &ArrayGeometry,
    kappa: f64,
    gain: f64,
) -> Result<LinkStatistics> {
    let r = correlation_from_angles(rx, rx_geom)?.with_trace(rx as f64)?;
    let t = correlation_from_angles(tx, tx_geom)?.with_trace((tx * tx) as f64 * gain / (kappa + 1.0))?;
    let los_trace = kappa / (kappa + 1.0) * (tx * rx) as f64 * gain;
    let los = if los_trace > 0.0 {
        los_allones(rx, tx, los_trace)?
    } else {
        zeros(rx, tx)
    };
    Ok(LinkStatistics { r, t, los, kappa, gain })
}

/// Statistical CSIT for a scenario: correlations from the array geometries,
/// path-loss gains from the node coordinates, all-one LoS directions, and
/// dBm powers converted to watts.
pub fn build_statistics(cfg: &ScenarioConfig) -> Result<SystemStatistics> {
    cfg.validate()?;
    let dims = SystemDims::new(cfg.dims.n, cfg.dims.l, cfg.dims.k)?;
    let g = &cfg.geometry;
    let (gt, gr) = (cfg.gains.gt_dbi, cfg.gains.gr_dbi);
    let gains = [
        path_loss_linear(distance(g.bs, g.user), gt, gr)?,
        path_loss_linear(distance(g.bs, g.ris), gt, gr)?,
        path_loss_linear(distance(g.ris, g.user), gt, gr)?,
    ];
    let a = &cfg.arrays;
    let mut direct = build_link(dims.k, dims.n, &a.link0.rx, &a.link0.tx, cfg.rician.kappa0, gains[0])?;
    let mut bs_ris = build_link(dims.l, dims.n, &a.link1.rx, &a.link1.tx, cfg.rician.kappa1, gains[1])?;
    let mut ris_user = build_link(dims.k, dims.l, &a.link2.rx, &a.link2.tx, cfg.rician.kappa2, gains[2])?;
    let fault = cfg.faults.receive_trace_scale;
    if fault != 1.0 {
        for link in [&mut direct, &mut bs_ris, &mut ris_user] {
            link.r = link.r.scaled(fault);
        }
    }
    let stats = SystemStatistics::new(
        dims,
        direct,
        bs_ris,
        ris_user,
        cfg.noise_power_watts(),
        cfg.power_budget(),
    )?;
    let stats = if cfg.links.direct {
        stats
    } else {
        stats.without_direct()
    };
    Ok(if cfg.links.ris { stats } else { stats.without_ris() })
}

/// Relative deviations from the six trace normalizations, in link order
/// `[tr R0, tr T0, tr Hbar0 Hbar0^H, tr R1, ...]`.
pub fn normalization_errors(stats: &SystemStatistics) -> [f64; 9] {
    let SystemDims { n, l, k } = stats.dims;
    let rel = |actual: f64, target: f64| {
        if target == 0.0 {
            actual.abs()
        } else {
            (actual - target).abs() / target.abs()
        }
    };
    let mut out = [0.0; 9];
    for (i, (link, rx, tx)) in [(&stats.direct, k, n), (&stats.bs_ris, l, n), (&stats.ris_user, k, l)]
        .into_iter()
        .enumerate()
    {
        let kp = link.kappa;
        out[3 * i] = rel(link.r.trace(), rx as f64);
        out[3 * i + 1] = rel(link.t.trace(), (tx * tx) as f64 * link.gain / (kp + 1.0));
        out[3 * i + 2] = rel(link.los_power(), kp / (kp + 1.0) * (tx * rx) as f64 * link.gain);
    }
    out
}

/// Draws `H = R^1/2 X T^1/2 + Hbar` for one link, with `X` i.i.d.
/// `CN(0, 1/cols)`.
#[derive(Debug, Clone)]
pub struct LinkSampler {
    sqrt_r: CMatrix,
    sqrt_t: CMatrix,
    los: CMatrix,
}

impl LinkSampler {
    pub fn new(link: &LinkStatistics) -> Self {
        LinkSampler {
            sqrt_r: link.r.sqrt(),
            sqrt_t: link.t.sqrt(),
            los: link.los.clone(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CMatrix {
        let (rows, cols) = self.los.shape();
        let scale = (0.5 / cols as f64).sqrt();
        let x = CMatrix::from_fn(rows, cols, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            cplx(re * scale, im * scale)
        });
        &self.sqrt_r * x * &self.sqrt_t + &self.los
    }
}

/// Draws channel triples `(H0, H1, H2)` for fixed statistics.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    links: [LinkSampler; 3],
}

impl ChannelSampler {
    pub fn new(stats: &SystemStatistics) -> Self {
        ChannelSampler {
            links: stats.links().map(LinkSampler::new),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [CMatrix; 3] {
        let [a, b, c] = &self.links;
        [a.sample(rng), b.sample(rng), c.sample(rng)]
    }
}

/// One channel triple drawn from `rng`.
pub fn sample_channels<R: Rng + ?Sized>(stats: &SystemStatistics, rng: &mut R) -> [CMatrix; 3] {
    ChannelSampler::new(stats).sample(rng)
}
