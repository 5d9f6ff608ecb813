// Copyright 2026 The fluxq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Seeded Born-rule sampling.
//!
//! Every shot draws from its own ChaCha stream keyed by `(seed, stream, shot)`,
//! so histograms do not depend on how shots are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{FluxError, Result};

const SHOT_CHUNK: u64 = 4096;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one shot of one sampling task.
pub fn shot_rng(seed: u64, stream: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(stream)));
    rng.set_stream(shot);
    rng
}

/// Derive a child seed, e.g. one per measurement setting.
pub fn child_seed(seed: u64, tag: u64) -> u64 {
    splitmix(seed.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ splitmix(tag))
}

/// Cumulative distribution over basis outcomes.
#[derive(Debug, Clone)]
pub struct Categorical {
    cdf: Vec<f64>,
}

impl Categorical {
    pub fn new(probs: &[f64]) -> Result<Self> {
        let mut acc = 0.0;
        let mut cdf = Vec::with_capacity(probs.len());
        for (j, &p) in probs.iter().enumerate() {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(FluxError::Invariant(format!(
                    "probability {p} at outcome {j} is not a finite non-negative number"
                )));
            }
            acc += p;
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(FluxError::Invariant("distribution has zero total weight".into()));
        }
        Ok(Categorical { cdf })
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().unwrap();
        let u = rng.gen::<f64>() * total;
        let k = self.cdf.partition_point(|&c| c <= u);
        // zero-probability tail entries share the final cdf value
        k.min(self.cdf.len() - 1)
    }

    /// Histogram of `n_shots` independent draws.
    pub fn histogram(&self, n_shots: u64, seed: u64, stream: u64) -> Vec<u64> {
        let n_chunks = n_shots.div_ceil(SHOT_CHUNK);
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut counts = vec![0u64; self.cdf.len()];
                let end = ((c + 1) * SHOT_CHUNK).min(n_shots);
                for shot in c * SHOT_CHUNK..end {
                    let mut rng = shot_rng(seed, stream, shot);
                    counts[self.sample(&mut rng)] += 1;
                }
                counts
            })
            .reduce(
                || vec![0u64; self.cdf.len()],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    }
}

/// Multinomial resample of an observed histogram, used for bootstrap errors.
pub fn resample_counts(counts: &[u64], seed: u64, stream: u64) -> Vec<u64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    Categorical::new(&probs)
        .expect("non-empty histogram")
        .histogram(total, seed, stream)
}
