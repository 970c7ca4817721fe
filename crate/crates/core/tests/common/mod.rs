#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ris_mimo::channel::{LinkStatistics, SystemDims, SystemStatistics};
use ris_mimo::linalg::{cplx, identity, CMatrix, HermitianPsd};
use ris_mimo::rate::{PhaseVector, TransmitCovariance};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        cplx(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
    })
}

pub fn random_psd(rng: &mut impl Rng, n: usize, trace: f64) -> HermitianPsd {
    let b = random_matrix(rng, n, n);
    let m = &b * b.adjoint() + identity(n) * cplx(0.05, 0.0);
    HermitianPsd::clamped(&m).unwrap().with_trace(trace).unwrap()
}

fn link(rng: &mut impl Rng, rx: usize, tx: usize, kappa: f64) -> LinkStatistics {
    let t = random_psd(rng, tx, tx as f64 / (1.0 + kappa));
    let los = random_matrix(rng, rx, tx) * cplx((kappa / (1.0 + kappa) / rx as f64).sqrt(), 0.0);
    LinkStatistics {
        r: random_psd(rng, rx, rx as f64),
        t,
        los,
        kappa,
        gain: 1.0,
    }
}

/// Random correlated Rician statistics with O(1) link powers.
pub fn random_stats(rng: &mut impl Rng, n: usize, l: usize, k: usize) -> SystemStatistics {
    SystemStatistics::new(
        SystemDims::new(n, l, k).unwrap(),
        link(rng, k, n, 0.8),
        link(rng, l, n, 1.5),
        link(rng, k, l, 0.6),
        0.5,
        n as f64,
    )
    .unwrap()
}

pub fn random_q(rng: &mut impl Rng, n: usize, budget: f64) -> TransmitCovariance {
    TransmitCovariance::new(random_psd(rng, n, budget), budget).unwrap()
}

pub fn random_theta(rng: &mut impl Rng, l: usize) -> PhaseVector {
    PhaseVector::random(l, rng)
}
