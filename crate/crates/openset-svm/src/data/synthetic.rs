//! Deterministic 2D synthetic datasets, normalized to the unit square.
//!
//! These reconstruct the classical toy layouts by simple parametric
//! constructions; what matters downstream is the geometry (surrounded
//! classes, enclosing rings, overlapping clusters), not exact point sets.

use super::sparse::SparseSample;
use crate::rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Central blob (class 1) enclosed by an annulus (class 2).
    ConeTorus,
    /// Three elongated, overlapping clusters.
    Boat,
    /// Four Gaussian blobs at the corners of a square.
    FourGauss,
    /// 4x4 grid of blobs, 16 classes.
    Regular,
    /// Two clusters (classes 1, 2) inside a surrounding ring (class 3).
    NestedRings,
}

impl SyntheticKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "cone_torus" | "cone-torus" => Some(Self::ConeTorus),
            "boat" => Some(Self::Boat),
            "four_gauss" | "four-gauss" => Some(Self::FourGauss),
            "regular" => Some(Self::Regular),
            "nested_rings" | "nested-rings" => Some(Self::NestedRings),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ConeTorus => "cone_torus",
            Self::Boat => "boat",
            Self::FourGauss => "four_gauss",
            Self::Regular => "regular",
            Self::NestedRings => "nested_rings",
        }
    }
}

/// Gaussian blob point, resampled until it falls inside the unit square.
fn blob_point(rng: &mut ChaCha8Rng, cx: f64, cy: f64, sigma: f64) -> (f64, f64) {
    let normal = Normal::new(0.0, sigma).expect("sigma > 0");
    loop {
        let x = cx + normal.sample(rng);
        let y = cy + normal.sample(rng);
        if (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y) {
            return (x, y);
        }
    }
}

/// Point on an annulus around (cx, cy) with radius in [r_lo, r_hi].
fn ring_point(rng: &mut ChaCha8Rng, cx: f64, cy: f64, r_lo: f64, r_hi: f64) -> (f64, f64) {
    let angle = rng.gen_range(0.0..TAU);
    let radius = rng.gen_range(r_lo..=r_hi);
    (cx + radius * angle.cos(), cy + radius * angle.sin())
}

/// Anisotropic blob: sigma_major along (ux, uy), sigma_minor across it.
fn elongated_point(
    rng: &mut ChaCha8Rng,
    cx: f64,
    cy: f64,
    angle: f64,
    sigma_major: f64,
    sigma_minor: f64,
) -> (f64, f64) {
    let major = Normal::new(0.0, sigma_major).expect("sigma > 0");
    let minor = Normal::new(0.0, sigma_minor).expect("sigma > 0");
    let (ux, uy) = (angle.cos(), angle.sin());
    loop {
        let a = major.sample(rng);
        let b = minor.sample(rng);
        let x = cx + a * ux - b * uy;
        let y = cy + a * uy + b * ux;
        if (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y) {
            return (x, y);
        }
    }
}

/// Generate `n_per_class` samples per class for one of the named layouts.
pub fn gen_synthetic(kind: SyntheticKind, n_per_class: usize, seed: u64) -> Vec<SparseSample> {
    assert!(n_per_class >= 1, "n_per_class must be >= 1");
    let mut rng = rng::stream(seed, &format!("synthetic/{}", kind.name()));
    let mut out = Vec::new();
    let push = |out: &mut Vec<SparseSample>, label: i32, (x, y): (f64, f64)| {
        out.push(SparseSample::from_xy(label, x, y));
    };
    match kind {
        SyntheticKind::ConeTorus => {
            for _ in 0..n_per_class {
                push(&mut out, 1, blob_point(&mut rng, 0.5, 0.5, 0.07));
            }
            for _ in 0..n_per_class {
                push(&mut out, 2, ring_point(&mut rng, 0.5, 0.5, 0.30, 0.42));
            }
        }
        SyntheticKind::Boat => {
            let hulls = [
                (0.30, 0.35, 0.20, 0.16, 0.035),
                (0.50, 0.50, -0.35, 0.16, 0.035),
                (0.68, 0.62, 0.55, 0.16, 0.035),
            ];
            for (k, &(cx, cy, angle, s_maj, s_min)) in hulls.iter().enumerate() {
                for _ in 0..n_per_class {
                    push(
                        &mut out,
                        (k + 1) as i32,
                        elongated_point(&mut rng, cx, cy, angle, s_maj, s_min),
                    );
                }
            }
        }
        SyntheticKind::FourGauss => {
            let centers = [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)];
            for (k, &(cx, cy)) in centers.iter().enumerate() {
                for _ in 0..n_per_class {
                    push(&mut out, (k + 1) as i32, blob_point(&mut rng, cx, cy, 0.06));
                }
            }
        }
        SyntheticKind::Regular => {
            for row in 0..4 {
                for col in 0..4 {
                    let label = row * 4 + col + 1;
                    let cx = 0.125 + 0.25 * col as f64;
                    let cy = 0.125 + 0.25 * row as f64;
                    for _ in 0..n_per_class {
                        push(&mut out, label, blob_point(&mut rng, cx, cy, 0.035));
                    }
                }
            }
        }
        SyntheticKind::NestedRings => {
            // Inner clusters stay within radius 0.18 of (0.5, 0.5); the
            // ring starts at 0.30, so class 3 is always strictly outside.
            for _ in 0..n_per_class {
                let (x, y) = loop {
                    let p = blob_point(&mut rng, 0.42, 0.5, 0.04);
                    if dist(p, (0.5, 0.5)) <= 0.18 {
                        break p;
                    }
                };
                push(&mut out, 1, (x, y));
            }
            for _ in 0..n_per_class {
                let (x, y) = loop {
                    let p = blob_point(&mut rng, 0.58, 0.5, 0.04);
                    if dist(p, (0.5, 0.5)) <= 0.18 {
                        break p;
                    }
                };
                push(&mut out, 2, (x, y));
            }
            for _ in 0..n_per_class {
                push(&mut out, 3, ring_point(&mut rng, 0.5, 0.5, 0.30, 0.42));
            }
        }
    }
    out
}

/// Mixture of `n_classes` Gaussian blobs laid out on a square grid; used by
/// the experiment protocol, which needs class counts beyond the named
/// layouts (e.g. 15).
pub fn gen_blob_mixture(n_classes: usize, n_per_class: usize, seed: u64) -> Vec<SparseSample> {
    assert!(n_classes >= 1 && n_per_class >= 1);
    let side = (n_classes as f64).sqrt().ceil() as usize;
    let spacing = 1.0 / side as f64;
    let sigma = spacing / 7.0;
    let mut rng = rng::stream(seed, &format!("synthetic/blobs/{n_classes}"));
    let mut out = Vec::new();
    for k in 0..n_classes {
        let (row, col) = (k / side, k % side);
        let cx = spacing * (col as f64 + 0.5);
        let cy = spacing * (row as f64 + 0.5);
        for _ in 0..n_per_class {
            let (x, y) = blob_point(&mut rng, cx, cy, sigma);
            out.push(SparseSample::from_xy((k + 1) as i32, x, y));
        }
    }
    out
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}
