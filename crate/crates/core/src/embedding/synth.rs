use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::Dataset;
use crate::error::{invalid, Result};

/// Parameters of the synthetic identity model.
///
/// Every subject draws a random unit-norm class center; each of its images is
/// the L2-normalized sum of the center and isotropic Gaussian noise. Poorly
/// aligned images use twice the noise scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_subjects: usize,
    pub images_per_subject: usize,
    pub dim: usize,
    pub within_class_noise: f64,
    pub poorly_aligned_fraction: f64,
    pub seed: u64,
    /// Id of the first generated record; later records count upward.
    pub id_offset: u64,
    /// Subject labels are `{subject_prefix}{index}`.
    pub subject_prefix: String,
}

impl SyntheticConfig {
    pub fn new(
        num_subjects: usize,
        images_per_subject: usize,
        dim: usize,
        within_class_noise: f64,
        poorly_aligned_fraction: f64,
        seed: u64,
    ) -> Self {
        Self {
            num_subjects,
            images_per_subject,
            dim,
            within_class_noise,
            poorly_aligned_fraction,
            seed,
            id_offset: 0,
            subject_prefix: "s".to_owned(),
        }
    }

    pub fn with_ids_from(mut self, id_offset: u64) -> Self {
        self.id_offset = id_offset;
        self
    }

    pub fn with_prefix(mut self, prefix: impl Into<String>) -> Self {
        self.subject_prefix = prefix.into();
        self
    }

    fn validate(&self) -> Result<()> {
        if self.num_subjects == 0 {
            return Err(invalid("num_subjects must be at least 1"));
        }
        if self.images_per_subject == 0 {
            return Err(invalid("images_per_subject must be at least 1"));
        }
        if self.dim < 2 {
            return Err(invalid("dim must be at least 2"));
        }
        if !(self.within_class_noise >= 0.0 && self.within_class_noise.is_finite()) {
            return Err(invalid(
                "within_class_noise must be a nonnegative finite number",
            ));
        }
        if !(0.0..=1.0).contains(&self.poorly_aligned_fraction) {
            return Err(invalid("poorly_aligned_fraction must lie in [0, 1]"));
        }
        let total = (self.num_subjects as u64)
            .checked_mul(self.images_per_subject as u64)
            .ok_or_else(|| invalid("record count overflows"))?;
        if self.id_offset.checked_add(total).is_none() {
            return Err(invalid("id range overflows u64"));
        }
        Ok(())
    }
}

/// Generate a labelled dataset from the synthetic identity model.
///
/// Each subject owns an independent ChaCha stream, so the output does not
/// depend on the thread count and the first `n` subjects of a larger run are
/// identical to a run with `num_subjects = n`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let dim = config.dim;
    let per = config.images_per_subject;
    let total = config.num_subjects * per;

    let mut vectors = vec![0f32; total * dim];
    let mut well_aligned = vec![true; total];
    vectors
        .par_chunks_mut(per * dim)
        .zip(well_aligned.par_chunks_mut(per))
        .enumerate()
        .for_each(|(subject, (rows, flags))| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(subject as u64);
            fill_subject(&mut rng, config, rows, flags);
        });

    let ids = (0..total as u64).map(|i| config.id_offset + i).collect();
    let subjects = (0..total)
        .map(|row| Some(format!("{}{}", config.subject_prefix, row / per)))
        .collect();
    Dataset::from_parts(dim, ids, subjects, well_aligned, vectors)
}

fn fill_subject(
    rng: &mut ChaCha8Rng,
    config: &SyntheticConfig,
    rows: &mut [f32],
    flags: &mut [bool],
) {
    let dim = config.dim;
    let center = loop {
        let raw: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            break raw.into_iter().map(|v| v / norm).collect::<Vec<f64>>();
        }
    };
    let center32: Vec<f32> = center.iter().map(|&v| v as f32).collect();

    let mut scratch = vec![0f64; dim];
    for (row, flag) in rows.chunks_exact_mut(dim).zip(flags.iter_mut()) {
        let poorly_aligned = rng.random::<f64>() < config.poorly_aligned_fraction;
        *flag = !poorly_aligned;
        let scale = if poorly_aligned {
            2.0 * config.within_class_noise
        } else {
            config.within_class_noise
        };
        if scale == 0.0 {
            row.copy_from_slice(&center32);
            continue;
        }
        for (s, c) in scratch.iter_mut().zip(&center) {
            let noise: f64 = rng.sample(StandardNormal);
            *s = c + scale * noise;
        }
        let norm = scratch.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (out, s) in row.iter_mut().zip(&scratch) {
            *out = (s / norm) as f32;
        }
    }
}
