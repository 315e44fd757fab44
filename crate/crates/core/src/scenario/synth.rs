//! Seeded synthetic load and price days.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::PriceSeries;

use super::io::{write_loads, write_prices};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LoadProfile {
    /// Midday solar trough and a steep evening ramp.
    Duck,
    /// Morning and evening humps.
    Typical,
    /// First half of the customers duck, the rest typical.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PriceShape {
    /// Wholesale price follows the aggregate load.
    Conforming,
    /// Wholesale price runs against the retail tariff.
    Conflicting,
}

pub const TOU_OFF_PEAK: f64 = 0.12;
pub const TOU_PARTIAL_PEAK: f64 = 0.18;
pub const TOU_PEAK: f64 = 0.30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDay {
    pub customer_load: Vec<Vec<f64>>,
    pub prices: PriceSeries,
}

fn bump(h: f64, centre: f64, width: f64) -> f64 {
    // distance on the 24 h circle
    let d = (h - centre).rem_euclid(24.0);
    let d = d.min(24.0 - d);
    (-0.5 * (d / width).powi(2)).exp()
}

/// Three-tier tariff: peak 16-21 h, partial peak 7-16 h and 21-23 h.
pub fn tou_tier(hour: f64) -> f64 {
    match hour {
        h if (16.0..21.0).contains(&h) => TOU_PEAK,
        h if (7.0..16.0).contains(&h) || (21.0..23.0).contains(&h) => TOU_PARTIAL_PEAK,
        _ => TOU_OFF_PEAK,
    }
}

fn shape(profile: LoadProfile, h: f64) -> f64 {
    match profile {
        // mixed is resolved per customer before this point
        LoadProfile::Duck | LoadProfile::Mixed => {
            (0.55 + 0.25 * bump(h, 7.5, 1.5) - 0.45 * bump(h, 13.0, 2.5) + 1.0 * bump(h, 19.0, 1.8))
                .max(0.05)
        }
        LoadProfile::Typical => 0.45 + 0.6 * bump(h, 8.0, 1.5) + 0.85 * bump(h, 19.0, 2.0),
    }
}

/// Generates `customers` load rows over `slots` equal slots of a day, with
/// prices of the requested shape. The same arguments always give the same
/// numbers.
pub fn generate(
    profile: LoadProfile,
    price_shape: PriceShape,
    customers: usize,
    slots: usize,
    seed: u64,
) -> Result<SyntheticDay> {
    if customers == 0 || slots == 0 {
        return Err(Error::InvalidArgument(
            "synthetic data needs at least one customer and one slot".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hours: Vec<f64> = (0..slots)
        .map(|t| (t as f64 + 0.5) * 24.0 / slots as f64)
        .collect();
    let customer_load: Vec<Vec<f64>> = (0..customers)
        .map(|n| {
            let profile = match profile {
                LoadProfile::Mixed if n < customers.div_ceil(2) => LoadProfile::Duck,
                LoadProfile::Mixed => LoadProfile::Typical,
                p => p,
            };
            let scale = rng.random_range(1.6..2.4);
            let shift = rng.random_range(-0.75..0.75);
            hours
                .iter()
                .map(|&h| {
                    let noise = 1.0 + rng.random_range(-0.05..0.05);
                    round4(scale * shape(profile, h + shift) * noise)
                })
                .collect()
        })
        .collect();
    let tou: Vec<f64> = hours.iter().map(|&h| tou_tier(h)).collect();
    let aggregate: Vec<f64> = (0..slots)
        .map(|t| customer_load.iter().map(|row| row[t]).sum())
        .collect();
    let peak = aggregate.iter().copied().fold(f64::MIN, f64::max);
    let lmp = hours
        .iter()
        .enumerate()
        .map(|(t, &h)| {
            let noise = rng.random_range(-0.003..0.003);
            let base = match price_shape {
                PriceShape::Conforming => 0.03 + 0.07 * aggregate[t] / peak,
                PriceShape::Conflicting => {
                    0.08 - 0.3 * (tou[t] - TOU_PARTIAL_PEAK)
                        + 0.01 * (std::f64::consts::TAU * h / 24.0).sin()
                }
            };
            round4((base + noise).max(0.005))
        })
        .collect();
    Ok(SyntheticDay {
        customer_load,
        prices: PriceSeries { lmp, tou },
    })
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

/// Writes `loads.csv` and `prices.csv` for a generated day into `dir`.
pub fn gen_synthetic(
    profile: LoadProfile,
    price_shape: PriceShape,
    customers: usize,
    slots: usize,
    seed: u64,
    dir: &Path,
) -> Result<SyntheticDay> {
    let day = generate(profile, price_shape, customers, slots, seed)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_loads(&dir.join("loads.csv"), &day.customer_load)?;
    write_prices(&dir.join("prices.csv"), &day.prices)?;
    Ok(day)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate(LoadProfile::Duck, PriceShape::Conflicting, 3, 24, 7).unwrap();
        let b = generate(LoadProfile::Duck, PriceShape::Conflicting, 3, 24, 7).unwrap();
        let c = generate(LoadProfile::Duck, PriceShape::Conflicting, 3, 24, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn price_correlations() {
        for seed in 0..20 {
            for slots in [12, 24, 48] {
                for profile in [LoadProfile::Duck, LoadProfile::Typical, LoadProfile::Mixed] {
                    let d = generate(profile, PriceShape::Conforming, 4, slots, seed).unwrap();
                    let agg: Vec<f64> = (0..slots)
                        .map(|t| d.customer_load.iter().map(|r| r[t]).sum())
                        .collect();
                    assert!(pearson(&d.prices.lmp, &agg) > 0.5);
                    let d = generate(profile, PriceShape::Conflicting, 4, slots, seed).unwrap();
                    assert!(pearson(&d.prices.lmp, &d.prices.tou) < -0.3);
                }
            }
        }
    }

    #[test]
    fn three_tiers_and_duck_shape() {
        let d = generate(LoadProfile::Duck, PriceShape::Conforming, 1, 24, 1).unwrap();
        let mut tiers = d.prices.tou.clone();
        tiers.sort_by(f64::total_cmp);
        tiers.dedup();
        assert_eq!(tiers, vec![TOU_OFF_PEAK, TOU_PARTIAL_PEAK, TOU_PEAK]);
        let l = &d.customer_load[0];
        assert!(l[13] < l[8] && l[13] < l[19]);
        assert!(l.iter().all(|&v| v > 0.0));
    }
}
