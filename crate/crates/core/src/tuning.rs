//! Grid search over the LFS-LC-D weights using source-language data only.

use serde::{Deserialize, Serialize};

use crate::acquisition::{self, AcquisitionConfig, SelectionContext, Strategy};
use crate::campaign::{CampaignError, Result};
use crate::corpus::{self, Corpus, Example, SplitSpec};
use crate::features::NgramEmbedder;
use crate::parser::ParserAdapter;

fn default_alphas() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}
fn default_betas() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75]
}
fn default_rate() -> f64 {
    16.0
}
fn default_dev_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningGrid {
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    /// Percentage of the source training split selected per grid point.
    #[serde(default = "default_rate")]
    pub tuning_rate: f64,
    #[serde(default = "default_dev_fraction")]
    pub dev_fraction: f64,
    /// Train on the whole source training split instead of the subset.
    #[serde(default)]
    pub train_on_union: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TuningGrid {
    fn default() -> Self {
        TuningGrid {
            alphas: default_alphas(),
            betas: default_betas(),
            tuning_rate: default_rate(),
            dev_fraction: default_dev_fraction(),
            train_on_union: false,
            seed: 0,
        }
    }
}

impl TuningGrid {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CampaignError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.betas.is_empty() {
            return Err(CampaignError::Config("tuning grid is empty".into()));
        }
        if !(self.tuning_rate > 0.0 && self.tuning_rate <= 100.0) {
            return Err(CampaignError::Config("tuning_rate must lie in (0, 100]".into()));
        }
        for &b in &self.betas {
            AcquisitionConfig {
                beta: b,
                ..AcquisitionConfig::new(Strategy::LfsLcD)
            }
            .validate()?;
        }
        for &a in &self.alphas {
            AcquisitionConfig {
                alpha: a,
                ..AcquisitionConfig::new(Strategy::LfsLcD)
            }
            .validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningCell {
    pub alpha: f64,
    pub beta: f64,
    pub dev_accuracy: f64,
    pub selected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub alpha: f64,
    pub beta: f64,
    pub table: Vec<TuningCell>,
    /// Train/evaluate cycles run.
    pub cycles: usize,
}

/// Selects `tuning_rate`% of the source training split with LFS-LC-D for
/// every (alpha, beta), trains a fresh parser on it and scores the source
/// dev split. Ties go to the larger alpha, then the larger beta.
pub fn tune_hyperparameters(
    source: &Corpus,
    grid: &TuningGrid,
    base: &AcquisitionConfig,
    new_parser: &mut dyn FnMut() -> Result<Box<dyn ParserAdapter>>,
) -> Result<TuningResult> {
    grid.validate()?;
    let source = source.source_only();
    let (train, dev) = corpus::split(
        &source,
        SplitSpec {
            dev_fraction: grid.dev_fraction,
            seed: grid.seed,
        },
    )?;
    let k = ((grid.tuning_rate * train.len() as f64 / 100.0).round() as usize).clamp(1, train.len());
    let embedder = NgramEmbedder;
    let mut table = Vec::new();
    let mut cycles = 0;
    for &alpha in &grid.alphas {
        for &beta in &grid.betas {
            let config = AcquisitionConfig {
                strategy: Strategy::LfsLcD,
                alpha,
                beta,
                seed: base.seed ^ grid.seed,
                ..base.clone()
            };
            let ctx = SelectionContext {
                candidates: train.examples().iter().collect(),
                translated: Vec::new(),
                source_lang: train.source_lang(),
                round: 1,
                parser: None,
                target_distribution: None,
                translator: None,
                embedder: &embedder,
            };
            let selected = acquisition::select(&config, &ctx, k)?.ids();
            let data: Vec<Example> = if grid.train_on_union {
                train.examples().to_vec()
            } else {
                train.subset(selected.iter().map(String::as_str)).examples().to_vec()
            };
            let mut parser = new_parser()?;
            parser.train(&data)?;
            let dev_accuracy = parser.evaluate(dev.examples())?;
            cycles += 1;
            log::info!("alpha {alpha} beta {beta}: dev accuracy {dev_accuracy:.4}");
            table.push(TuningCell {
                alpha,
                beta,
                dev_accuracy,
                selected,
            });
        }
    }
    let best = table
        .iter()
        .max_by(|a, b| {
            a.dev_accuracy
                .total_cmp(&b.dev_accuracy)
                .then(a.alpha.total_cmp(&b.alpha))
                .then(a.beta.total_cmp(&b.beta))
        })
        .expect("non-empty grid");
    Ok(TuningResult {
        alpha: best.alpha,
        beta: best.beta,
        cycles,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::SurrogateParser;
    use crate::testutil::toy4;

    fn surrogate() -> Result<Box<dyn ParserAdapter>> {
        Ok(Box::new(SurrogateParser::new()))
    }

    #[test]
    fn single_cell_grid() {
        let grid = TuningGrid {
            alphas: vec![0.5],
            betas: vec![0.25],
            ..TuningGrid::default()
        };
        let r = tune_hyperparameters(&toy4(), &grid, &AcquisitionConfig::new(Strategy::LfsLcD), &mut surrogate).unwrap();
        assert_eq!((r.alpha, r.beta, r.cycles), (0.5, 0.25, 1));
    }

    #[test]
    fn ties_prefer_larger_weights() {
        let grid = TuningGrid {
            alphas: vec![0.25, 1.0],
            betas: vec![0.0, 0.5],
            train_on_union: true,
            ..TuningGrid::default()
        };
        let c = toy4();
        let r = tune_hyperparameters(&c, &grid, &AcquisitionConfig::new(Strategy::LfsLcD), &mut surrogate).unwrap();
        // Every cell trains on the same data.
        assert_eq!((r.alpha, r.beta), (1.0, 0.5));
        assert_eq!(r.cycles, 4);
        assert_eq!(c.target_reads(), 0);
    }

    #[test]
    fn rejects_bad_grids() {
        let c = toy4();
        let base = AcquisitionConfig::new(Strategy::LfsLcD);
        for grid in [
            TuningGrid {
                alphas: vec![],
                ..TuningGrid::default()
            },
            TuningGrid {
                betas: vec![1.0],
                ..TuningGrid::default()
            },
        ] {
            assert!(tune_hyperparameters(&c, &grid, &base, &mut surrogate).is_err());
        }
        let parsed = TuningGrid::from_toml("alphas = [0.5]\nbetas = [0.0, 0.5]\n").unwrap();
        assert_eq!(parsed.tuning_rate, 16.0);
    }
}
