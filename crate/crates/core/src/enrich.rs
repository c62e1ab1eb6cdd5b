//! Enrichment transformations: derivatives, curvature, radius of curvature,
//! and elasticity of fitted curves, assembled into the N x 6S block feature
//! matrix used by all classifiers.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

use crate::basis::{make_basis, BasisError, BasisSystem, CoefficientVector, RidgeFitter};

#[derive(Error, Debug)]
pub enum EnrichError {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("need at least 4 time points for a cubic basis, got {0}")]
    TooFewPoints(usize),
    #[error("singularity floor must be positive, got {0}")]
    InvalidFloor(f64),
    #[error("curve set invariant violated: {0}")]
    InvalidCurveSet(String),
    #[error("expected {expected} time points, got {got}")]
    GridMismatch { expected: usize, got: usize },
}

/// N discretely sampled curves on a shared time grid, with class labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveSet {
    pub time_grid: Vec<f64>,
    /// N x T sample values.
    pub values: Array2<f64>,
    /// Class labels in 0..n_classes.
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub name: String,
}

impl CurveSet {
    pub fn new(
        time_grid: Vec<f64>,
        values: Array2<f64>,
        labels: Vec<usize>,
        name: impl Into<String>,
    ) -> Result<Self, EnrichError> {
        if values.nrows() != labels.len() {
            return Err(EnrichError::InvalidCurveSet(format!(
                "{} rows vs {} labels",
                values.nrows(),
                labels.len()
            )));
        }
        if values.ncols() != time_grid.len() {
            return Err(EnrichError::InvalidCurveSet(format!(
                "{} columns vs {} grid points",
                values.ncols(),
                time_grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EnrichError::InvalidCurveSet("non-finite sample".into()));
        }
        let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        Ok(Self {
            time_grid,
            values,
            labels,
            n_classes,
            name: name.into(),
        })
    }

    pub fn n_curves(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.values.ncols()
    }
}

/// The six feature blocks, in their fixed concatenation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockTag {
    Orig,
    D1,
    D2,
    Curv,
    Radius,
    Elast,
}

impl BlockTag {
    pub const ALL: [BlockTag; 6] = [
        BlockTag::Orig,
        BlockTag::D1,
        BlockTag::D2,
        BlockTag::Curv,
        BlockTag::Radius,
        BlockTag::Elast,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BlockTag::Orig => "ORIG",
            BlockTag::D1 => "D1",
            BlockTag::D2 => "D2",
            BlockTag::Curv => "CURV",
            BlockTag::Radius => "RADIUS",
            BlockTag::Elast => "ELAST",
        }
    }

    pub fn parse(s: &str) -> Option<BlockTag> {
        match s.to_ascii_uppercase().as_str() {
            "ORIG" => Some(BlockTag::Orig),
            "D1" => Some(BlockTag::D1),
            "D2" => Some(BlockTag::D2),
            "CURV" => Some(BlockTag::Curv),
            "RADIUS" => Some(BlockTag::Radius),
            "ELAST" => Some(BlockTag::Elast),
            _ => None,
        }
    }
}

/// Column layout of an enriched matrix: each requested block owns S
/// consecutive columns, in canonical block order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    entries: Vec<(BlockTag, Range<usize>)>,
    basis_size: usize,
}

impl BlockLayout {
    pub fn new(blocks: &[BlockTag], basis_size: usize) -> Self {
        let mut ordered: Vec<BlockTag> = BlockTag::ALL
            .iter()
            .copied()
            .filter(|b| blocks.contains(b))
            .collect();
        if ordered.is_empty() {
            ordered.push(BlockTag::Orig);
        }
        let entries = ordered
            .iter()
            .enumerate()
            .map(|(i, &b)| (b, i * basis_size..(i + 1) * basis_size))
            .collect();
        Self {
            entries,
            basis_size,
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = BlockTag> + '_ {
        self.entries.iter().map(|(b, _)| *b)
    }

    pub fn entries(&self) -> &[(BlockTag, Range<usize>)] {
        &self.entries
    }

    pub fn basis_size(&self) -> usize {
        self.basis_size
    }

    pub fn n_columns(&self) -> usize {
        self.entries.len() * self.basis_size
    }

    pub fn range_of(&self, block: BlockTag) -> Option<Range<usize>> {
        self.entries
            .iter()
            .find(|(b, _)| *b == block)
            .map(|(_, r)| r.clone())
    }

    /// Block tag and 0-based basis index of a flat column index.
    pub fn locate(&self, column: usize) -> Option<(BlockTag, usize)> {
        self.entries
            .iter()
            .find(|(_, r)| r.contains(&column))
            .map(|(b, r)| (*b, column - r.start))
    }
}

/// N x P coefficient feature matrix with its block layout and the basis the
/// coefficients live in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrichedMatrix {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub layout: BlockLayout,
    pub basis: Option<BasisSystem>,
}

impl EnrichedMatrix {
    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).to_vec()
    }

    /// Copy of the matrix restricted to the given columns (used by the
    /// conditional-importance retraining loop).
    pub fn select_columns(&self, columns: &[usize]) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((self.n_rows(), columns.len()));
        for (new_j, &j) in columns.iter().enumerate() {
            for i in 0..self.n_rows() {
                out[[i, new_j]] = self.features[[i, j]];
            }
        }
        out
    }
}

/// Options controlling the enrichment pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrichConfig {
    pub blocks: Vec<BlockTag>,
    /// Curvature floor for the radius reciprocal.
    pub kappa_min: f64,
    /// Magnitude floor for the elasticity denominator.
    pub x_min: f64,
    pub standardize: bool,
    /// Fit penalty passed through to the basis fitter.
    pub lambda: f64,
}

impl Default for EnrichConfig {
    fn default() -> Self {
        Self {
            blocks: BlockTag::ALL.to_vec(),
            kappa_min: 1e-6,
            x_min: 1e-6,
            standardize: false,
            lambda: crate::basis::DEFAULT_RIDGE,
        }
    }
}

impl EnrichConfig {
    pub fn original_only() -> Self {
        Self {
            blocks: vec![BlockTag::Orig],
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), EnrichError> {
        if !(self.kappa_min > 0.0) {
            return Err(EnrichError::InvalidFloor(self.kappa_min));
        }
        if !(self.x_min > 0.0) {
            return Err(EnrichError::InvalidFloor(self.x_min));
        }
        Ok(())
    }
}

/// Curvature kappa(t) = |x''(t)| / (1 + x'(t)^2)^(3/2) on a grid.
pub fn pointwise_curvature(
    basis: &BasisSystem,
    coeffs: &CoefficientVector,
    t_grid: &[f64],
) -> Result<Vec<f64>, EnrichError> {
    t_grid
        .iter()
        .map(|&t| {
            let d1 = basis.eval_coeffs_at(coeffs, t, 1)?;
            let d2 = basis.eval_coeffs_at(coeffs, t, 2)?;
            Ok(d2.abs() / (1.0 + d1 * d1).powf(1.5))
        })
        .collect()
}

/// Radius of curvature R(t) = 1 / max(kappa(t), kappa_min).
pub fn pointwise_radius(curvature: &[f64], kappa_min: f64) -> Result<Vec<f64>, EnrichError> {
    if !(kappa_min > 0.0) {
        return Err(EnrichError::InvalidFloor(kappa_min));
    }
    Ok(curvature.iter().map(|&k| 1.0 / k.max(kappa_min)).collect())
}

fn sgn_clamp(x: f64, x_min: f64) -> f64 {
    if x >= 0.0 {
        x.max(x_min)
    } else {
        x.min(-x_min)
    }
}

/// Elasticity E(t) = x'(t) * t / x(t), with |x| clamped away from zero.
pub fn pointwise_elasticity(
    basis: &BasisSystem,
    coeffs: &CoefficientVector,
    t_grid: &[f64],
    x_min: f64,
) -> Result<Vec<f64>, EnrichError> {
    if !(x_min > 0.0) {
        return Err(EnrichError::InvalidFloor(x_min));
    }
    t_grid
        .iter()
        .map(|&t| {
            let x = basis.eval_coeffs_at(coeffs, t, 0)?;
            let d1 = basis.eval_coeffs_at(coeffs, t, 1)?;
            Ok(d1 * t / sgn_clamp(x, x_min))
        })
        .collect()
}

/// Ridge-fits each row of a pointwise feature matrix back into the shared
/// basis, one coefficient row per curve.
pub fn refit_block(
    fitter: &RidgeFitter,
    pointwise_values: &Array2<f64>,
) -> Result<Array2<f64>, EnrichError> {
    Ok(fitter.fit_rows(pointwise_values)?)
}

/// Per-column standardization statistics fitted on training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnScaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ColumnScaler {
    fn fit(features: &Array2<f64>) -> Self {
        let n = features.nrows() as f64;
        let p = features.ncols();
        let mut means = vec![0.0; p];
        let mut stds = vec![0.0; p];
        for j in 0..p {
            let col = features.column(j);
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            means[j] = m;
            let sd = var.sqrt();
            stds[j] = if sd > 0.0 { sd } else { 1.0 };
        }
        Self { means, stds }
    }

    fn apply(&self, features: &mut Array2<f64>) {
        for j in 0..features.ncols() {
            for i in 0..features.nrows() {
                features[[i, j]] = (features[[i, j]] - self.means[j]) / self.stds[j];
            }
        }
    }
}

/// A fitted enrichment pipeline: the fixed basis (built from the training
/// grid), the configuration, and optional training-set column statistics.
/// Applying it to test curves on the same grid yields columns directly
/// comparable to the training columns.
pub struct Enricher {
    basis: BasisSystem,
    config: EnrichConfig,
    scaler: Option<ColumnScaler>,
    grid: Vec<f64>,
}

impl Enricher {
    pub fn basis(&self) -> &BasisSystem {
        &self.basis
    }

    pub fn layout(&self) -> BlockLayout {
        BlockLayout::new(&self.config.blocks, self.basis.size())
    }

    /// Enriches further curves with the stored basis and training statistics.
    pub fn apply(&self, curves: &CurveSet) -> Result<EnrichedMatrix, EnrichError> {
        if curves.n_points() != self.grid.len() {
            return Err(EnrichError::GridMismatch {
                expected: self.grid.len(),
                got: curves.n_points(),
            });
        }
        let mut m = enrich_with_basis(&self.basis, curves, &self.config)?;
        if let Some(scaler) = &self.scaler {
            scaler.apply(&mut m.features);
        }
        Ok(m)
    }
}

fn enrich_with_basis(
    basis: &BasisSystem,
    curves: &CurveSet,
    config: &EnrichConfig,
) -> Result<EnrichedMatrix, EnrichError> {
    config.validate()?;
    let grid = &curves.time_grid;
    let fitter = RidgeFitter::new(basis, grid, config.lambda)?;
    let layout = BlockLayout::new(&config.blocks, basis.size());
    let n = curves.n_curves();
    let t = curves.n_points();
    let s = basis.size();

    let rows: Vec<Result<Vec<f64>, EnrichError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let samples: Vec<f64> = curves.values.row(i).to_vec();
            let coeffs = fitter.fit(&samples)?;
            let mut row = vec![0.0; layout.n_columns()];
            for (block, range) in layout.entries() {
                let block_coeffs: Vec<f64> = match block {
                    BlockTag::Orig => coeffs.values.clone(),
                    BlockTag::D1 | BlockTag::D2 => {
                        let r = if *block == BlockTag::D1 { 1 } else { 2 };
                        let mut vals = Vec::with_capacity(t);
                        for &tj in grid {
                            vals.push(basis.eval_coeffs_at(&coeffs, tj, r)?);
                        }
                        fitter.fit(&vals)?.values
                    }
                    BlockTag::Curv => {
                        let kappa = pointwise_curvature(basis, &coeffs, grid)?;
                        fitter.fit(&kappa)?.values
                    }
                    BlockTag::Radius => {
                        let kappa = pointwise_curvature(basis, &coeffs, grid)?;
                        let radius = pointwise_radius(&kappa, config.kappa_min)?;
                        fitter.fit(&radius)?.values
                    }
                    BlockTag::Elast => {
                        let elast = pointwise_elasticity(basis, &coeffs, grid, config.x_min)?;
                        fitter.fit(&elast)?.values
                    }
                };
                debug_assert_eq!(block_coeffs.len(), s);
                row[range.clone()].copy_from_slice(&block_coeffs);
            }
            Ok(row)
        })
        .collect();

    let mut features = Array2::<f64>::zeros((n, layout.n_columns()));
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        features.row_mut(i).assign(&Array1::from_vec(row));
    }
    Ok(EnrichedMatrix {
        features,
        labels: curves.labels.clone(),
        n_classes: curves.n_classes,
        layout,
        basis: Some(basis.clone()),
    })
}

/// Builds the basis from the curve grid, enriches the curves, and returns
/// the matrix together with the fitted pipeline for reuse on test data.
pub fn build_enriched(
    curves: &CurveSet,
    config: &EnrichConfig,
) -> Result<(EnrichedMatrix, Enricher), EnrichError> {
    if curves.n_points() < 4 {
        return Err(EnrichError::TooFewPoints(curves.n_points()));
    }
    config.validate()?;
    let basis = make_basis(&curves.time_grid, 4)?;
    let mut matrix = enrich_with_basis(&basis, curves, config)?;
    let scaler = if config.standardize {
        let scaler = ColumnScaler::fit(&matrix.features);
        scaler.apply(&mut matrix.features);
        Some(scaler)
    } else {
        None
    };
    let enricher = Enricher {
        basis,
        config: config.clone(),
        scaler,
        grid: curves.time_grid.clone(),
    };
    Ok((matrix, enricher))
}
