//! Timing and operation-count measurements.

use std::io::Write;
use std::time::Instant;

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::paillier::{prime, Keypair, PaillierError, PublicKey};
use crate::routing::traverse;
use crate::synth::random_social_snapshot;
use crate::VehicleId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub samples: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

impl TimingStats {
    pub fn from_ms(mut samples: Vec<f64>) -> Self {
        if samples.is_empty() {
            return TimingStats {
                samples: 0,
                mean_ms: 0.0,
                p95_ms: 0.0,
            };
        }
        samples.sort_by(f64::total_cmp);
        let mean_ms = samples.iter().sum::<f64>() / samples.len() as f64;
        let rank = ((samples.len() as f64) * 0.95).ceil() as usize;
        TimingStats {
            samples: samples.len(),
            mean_ms,
            p95_ms: samples[rank.clamp(1, samples.len()) - 1],
        }
    }
}

fn time_ms<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CryptoBenchRow {
    pub key_bits: u64,
    pub operation: String,
    pub samples: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

/// Mean time of one `r^n mod n^2` with random `r`, the exponentiation that
/// dominates encryption.
pub fn exponentiation_stats(pk: &PublicKey, samples: usize, seed: u64) -> TimingStats {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let times = (0..samples)
        .map(|_| {
            let base = prime::random_below(&mut rng, pk.n());
            time_ms(|| base.modpow(pk.n(), pk.n_squared())).1
        })
        .collect();
    TimingStats::from_ms(times)
}

/// Encrypt, decrypt, homomorphic add and single exponentiation timings at
/// each key size.
pub fn crypto_bench(
    key_sizes: &[u64],
    samples: usize,
    seed: u64,
) -> Result<Vec<CryptoBenchRow>, PaillierError> {
    let mut rows = Vec::new();
    for &bits in key_sizes {
        let kp = Keypair::generate(bits, seed)?;
        let pk = &kp.public;
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ bits);
        let mut enc = Vec::with_capacity(samples);
        let mut dec = Vec::with_capacity(samples);
        let mut add = Vec::with_capacity(samples);
        let mut previous = pk.zero();
        for i in 0..samples {
            let m = BigUint::from(i as u64 * 7 + 1);
            let (c, t) = time_ms(|| pk.encrypt(&m, &mut rng));
            let c = c?;
            enc.push(t);
            let (plain, t) = time_ms(|| kp.private.decrypt(pk, &c));
            if plain? != m {
                return Err(PaillierError::Generation("decryption mismatch".into()));
            }
            dec.push(t);
            let (sum, t) = time_ms(|| pk.add(&previous, &c));
            previous = sum?;
            add.push(t);
        }
        let exp = exponentiation_stats(pk, samples, seed);
        for (operation, stats) in [
            ("encrypt", TimingStats::from_ms(enc)),
            ("decrypt", TimingStats::from_ms(dec)),
            ("hom_add", TimingStats::from_ms(add)),
            ("exponentiation", exp),
        ] {
            rows.push(CryptoBenchRow {
                key_bits: bits,
                operation: operation.into(),
                samples: stats.samples,
                mean_ms: stats.mean_ms,
                p95_ms: stats.p95_ms,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DijkstraBenchRow {
    pub vertices: usize,
    pub edges: usize,
    pub extractions: u64,
    pub relaxations: u64,
    pub comparisons: u64,
    pub elementary: u64,
    pub wall_ms: f64,
    /// `elementary / ((edges + vertices) * log2(vertices))`.
    pub ratio: f64,
}

/// Full traversals from vehicle 0 over the nested random graph family.
pub fn dijkstra_bench(sizes: &[u32], mean_degree: f64, seed: u64, psi_l: f64) -> Vec<DijkstraBenchRow> {
    sizes
        .iter()
        .map(|&n| {
            let snap = random_social_snapshot(n, mean_degree, seed).expect("synthetic snapshot");
            let edges = snap.established_edges().count();
            let (t, wall_ms) = time_ms(|| traverse(&snap, VehicleId(0), psi_l).expect("known source"));
            let c = t.counts;
            let v = n as f64;
            DijkstraBenchRow {
                vertices: n as usize,
                edges,
                extractions: c.extractions,
                relaxations: c.relaxations,
                comparisons: c.comparisons,
                elementary: c.elementary(),
                wall_ms,
                ratio: c.elementary() as f64 / ((edges as f64 + v) * v.log2().max(1.0)),
            }
        })
        .collect()
}

pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_and_mean() {
        let s = TimingStats::from_ms((1..=20).map(f64::from).collect());
        assert_eq!(s.mean_ms, 10.5);
        assert_eq!(s.p95_ms, 19.0);
        assert_eq!(TimingStats::from_ms(vec![]).samples, 0);
    }

    #[test]
    fn crypto_rows_cover_every_operation() {
        let rows = crypto_bench(&[128], 3, 1).unwrap();
        let ops: Vec<_> = rows.iter().map(|r| r.operation.as_str()).collect();
        assert_eq!(ops, ["encrypt", "decrypt", "hom_add", "exponentiation"]);
        assert!(rows.iter().all(|r| r.samples == 3 && r.mean_ms >= 0.0));
    }

    #[test]
    fn dijkstra_rows_grow() {
        let rows = dijkstra_bench(&[50, 100, 200], 4.0, 2, 12.0);
        assert!(rows.windows(2).all(|w| w[1].elementary >= w[0].elementary));
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("vertices,edges,extractions"));
        assert!(text.lines().next().unwrap().ends_with("ratio"));
    }
}
