//! Classifier-based feature importance under repeated two-fold
//! cross-validation.

pub mod gbt;
pub mod logreg;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gbt::{fit_gbt, gbt_importance, GbtConfig, GbtModel};
pub use logreg::{fit_logreg, LogregConfig, LogregModel};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::likelihood::LIKELIHOOD_COLUMN;
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gbt,
    Logreg,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gbt => "gbt",
            ModelKind::Logreg => "logreg",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub repetitions: usize,
    pub gbt: GbtConfig,
    pub logreg: LogregConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            repetitions: 10,
            gbt: GbtConfig::default(),
            logreg: LogregConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceResult {
    pub names: Vec<String>,
    /// Mean over every fold fit.
    pub scores: Vec<f64>,
    pub model_kind: ModelKind,
    /// Number of fits averaged.
    pub folds: usize,
    /// Mean of the two fold fits of each repetition.
    pub per_repetition: Vec<Vec<f64>>,
}

impl ImportanceResult {
    pub fn named_scores(&self) -> Vec<(String, f64)> {
        self.names.iter().cloned().zip(self.scores.iter().copied()).collect()
    }
}

fn fit_importance(
    x: &nalgebra::DMatrix<f64>,
    y: &[u8],
    kind: ModelKind,
    cfg: &CvConfig,
) -> Result<Vec<f64>> {
    match kind {
        ModelKind::Gbt => Ok(gbt_importance(&fit_gbt(x, y, &cfg.gbt)?)),
        ModelKind::Logreg => Ok(fit_logreg(x, y, &cfg.logreg)?.importance()),
    }
}

/// Stratified halves: each class is shuffled and dealt alternately.
fn stratified_halves<R: rand::Rng>(y: &[u8], rng: &mut R) -> [Vec<usize>; 2] {
    let mut halves = [Vec::new(), Vec::new()];
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(rng);
        for (k, i) in idx.into_iter().enumerate() {
            halves[k % 2].push(i);
        }
    }
    for h in &mut halves {
        h.sort_unstable();
    }
    halves
}

/// Ten repetitions of stratified 2-fold splitting by default; each half is
/// fitted separately and the importances of all fits are averaged. The
/// likelihood column, when present, is not a predictor.
pub fn cross_validated_importance(
    ds: &Dataset,
    kind: ModelKind,
    cfg: &CvConfig,
    seed: u64,
) -> Result<ImportanceResult> {
    let ds = if ds.column_index(LIKELIHOOD_COLUMN).is_some() {
        ds.without_column(LIKELIHOOD_COLUMN)?
    } else {
        ds.clone()
    };
    if ds.rows() == 0 {
        return Err(Error::EmptyCohort);
    }
    let stream = match kind {
        ModelKind::Gbt => Stream::GbtImportance,
        ModelKind::Logreg => Stream::LogregImportance,
    };
    let mut rng = stream_rng(seed, stream);
    let mut splits = Vec::with_capacity(cfg.repetitions);
    for _ in 0..cfg.repetitions {
        let mut attempt = 0;
        loop {
            let halves = stratified_halves(&ds.target, &mut rng);
            let ok = halves.iter().all(|h| {
                let pos = h.iter().filter(|&&i| ds.target[i] == 1).count();
                pos > 0 && pos < h.len()
            });
            if ok {
                splits.push(halves);
                break;
            }
            attempt += 1;
            if attempt >= 20 {
                return Err(Error::Split);
            }
        }
    }

    let jobs: Vec<(usize, usize)> = (0..splits.len()).flat_map(|r| [(r, 0), (r, 1)]).collect();
    let fits: Vec<Result<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(r, h)| {
            let part = ds.select_rows(&splits[r][h]);
            fit_importance(&part.values, &part.target, kind, cfg)
        })
        .collect();
    let fits: Vec<Vec<f64>> = fits.into_iter().collect::<Result<_>>()?;

    let n = ds.vars();
    let per_repetition: Vec<Vec<f64>> = fits
        .chunks(2)
        .map(|pair| (0..n).map(|j| (pair[0][j] + pair[1][j]) / 2.0).collect())
        .collect();
    let scores = (0..n)
        .map(|j| fits.iter().map(|f| f[j]).sum::<f64>() / fits.len() as f64)
        .collect();
    Ok(ImportanceResult {
        names: ds.names(),
        scores,
        model_kind: kind,
        folds: fits.len(),
        per_repetition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn single_driver(seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(400, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<u8> = (0..400)
            .map(|i| (rng.random::<f64>() < crate::mlp::sigmoid(3.0 * x[(i, 0)])) as u8)
            .collect();
        let names: Vec<String> = ["drv", "n1", "n2", "n3"].iter().map(|s| s.to_string()).collect();
        Dataset::from_matrix(&names, x, y, "y").unwrap()
    }

    #[test]
    fn driver_beats_noise_in_most_repetitions() {
        let ds = single_driver(1);
        for kind in [ModelKind::Gbt, ModelKind::Logreg] {
            let res = cross_validated_importance(&ds, kind, &CvConfig::default(), 4).unwrap();
            assert_eq!(res.folds, 20);
            assert_eq!(res.scores.len(), 4);
            let wins = res
                .per_repetition
                .iter()
                .filter(|r| r[1..].iter().all(|&v| v < r[0]))
                .count();
            assert!(wins >= 9, "{kind:?}: {wins}");
            assert!(res.scores.iter().all(|&v| v.is_finite() && v >= 0.0));
        }
    }

    #[test]
    fn deterministic_and_drops_likelihood_column() {
        let ds = single_driver(2);
        let mut names = ds.names();
        names.push(LIKELIHOOD_COLUMN.to_string());
        let values = ds.values.clone().insert_column(4, 0.5);
        let aug = Dataset::from_matrix(&names, values, ds.target.clone(), "y").unwrap();
        let a = cross_validated_importance(&aug, ModelKind::Gbt, &CvConfig::default(), 7).unwrap();
        let b = cross_validated_importance(&aug, ModelKind::Gbt, &CvConfig::default(), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.names, ds.names());
    }

    #[test]
    fn halves_are_stratified() {
        let y: Vec<u8> = (0..21).map(|i| (i % 3 == 0) as u8).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let [a, b] = stratified_halves(&y, &mut rng);
        assert_eq!(a.len() + b.len(), 21);
        let pos = |h: &[usize]| h.iter().filter(|&&i| y[i] == 1).count() as i64;
        assert!((pos(&a) - pos(&b)).abs() <= 1);
    }
}
