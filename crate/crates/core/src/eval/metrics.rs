use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalError, HeightGrid};

/// Completeness threshold in meters.
pub const DEFAULT_THRESHOLD: f64 = 1.0;
pub const DEFAULT_SEARCH_CELLS: usize = 10;

/// Correction applied to the reconstruction: the corrected height at ground
/// truth cell `(i, j)` is `recon(i - dx, j - dy) + dz`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub dx: i64,
    pub dy: i64,
    pub dz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Percent of ground-truth cells reconstructed within the threshold.
    pub completeness: f64,
    /// Median absolute error over cells valid in both grids, meters.
    pub median_error: f64,
    pub threshold: f64,
    pub offset: Alignment,
    /// Cells valid in both grids (the ME population).
    pub evaluated_cells: usize,
    pub gt_cells: usize,
    /// Ground-truth cells without a reconstructed height.
    pub missing_cells: usize,
}

impl EvalReport {
    pub fn to_toml_string(&self) -> Result<String, EvalError> {
        toml::to_string(self).map_err(|e| EvalError::Sidecar(e.to_string()))
    }
}

/// Median with the midpoint rule for even counts; NaN when empty.
/// Reorders `values`.
pub fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    let (left, &mut mid, _) = values.select_nth_unstable_by(n / 2, f64::total_cmp);
    if n % 2 == 1 {
        mid
    } else {
        let below = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + mid)
    }
}

/// Integer cell offset of `recon`'s origin relative to `gt`'s.
fn origin_offset(recon: &HeightGrid, gt: &HeightGrid) -> Result<(i64, i64), EvalError> {
    let (r, g) = (recon.spec(), gt.spec());
    if (r.cell - g.cell).abs() > 1e-9 * g.cell {
        return Err(EvalError::Incompatible(format!("cell sizes {} and {}", r.cell, g.cell)));
    }
    let ox = (r.origin_e - g.origin_e) / g.cell;
    let oy = (r.origin_n - g.origin_n) / g.cell;
    if (ox - ox.round()).abs() > 1e-6 || (oy - oy.round()).abs() > 1e-6 {
        return Err(EvalError::Incompatible("origins are not a whole number of cells apart".into()));
    }
    Ok((ox.round() as i64, oy.round() as i64))
}

fn check_threshold(threshold: f64) -> Result<(), EvalError> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(EvalError::InvalidParameter(format!("threshold must be positive, got {threshold}")));
    }
    Ok(())
}

/// `gt - recon` over co-valid cells for a horizontal shift, plus the number of
/// valid ground-truth cells.
fn differences(recon: &HeightGrid, gt: &HeightGrid, origin: (i64, i64), dx: i64, dy: i64) -> (Vec<f64>, usize) {
    let g = gt.spec();
    let mut diffs = Vec::new();
    let mut gt_cells = 0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let Some(h) = gt.get(i, j) else { continue };
            gt_cells += 1;
            if let Some(r) = recon.get_signed(i as i64 - dx - origin.0, j as i64 - dy - origin.1) {
                diffs.push(f64::from(h) - f64::from(r));
            }
        }
    }
    (diffs, gt_cells)
}

/// Metrics for a fixed alignment.
pub fn evaluate_at(
    recon: &HeightGrid,
    gt: &HeightGrid,
    alignment: Alignment,
    threshold: f64,
) -> Result<EvalReport, EvalError> {
    check_threshold(threshold)?;
    let origin = origin_offset(recon, gt)?;
    let (diffs, gt_cells) = differences(recon, gt, origin, alignment.dx, alignment.dy);
    if gt_cells == 0 {
        return Err(EvalError::EmptyGroundTruth);
    }
    if diffs.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    // error = recon + dz - gt = dz - (gt - recon)
    let mut errors: Vec<f64> = diffs.iter().map(|d| (alignment.dz - d).abs()).collect();
    let complete = errors.iter().filter(|&&e| e < threshold).count();
    Ok(EvalReport {
        completeness: 100.0 * complete as f64 / gt_cells as f64,
        median_error: median(&mut errors),
        threshold,
        offset: alignment,
        evaluated_cells: diffs.len(),
        gt_cells,
        missing_cells: gt_cells - diffs.len(),
    })
}

/// Exhaustive search over integer shifts in `[-search_cells, search_cells]^2`.
/// Each shift takes `dz = median(gt - recon)`; the winner maximizes
/// completeness, then minimizes median error, then `|dx| + |dy|`.
pub fn refine_alignment(
    recon: &HeightGrid,
    gt: &HeightGrid,
    search_cells: usize,
    threshold: f64,
) -> Result<Alignment, EvalError> {
    check_threshold(threshold)?;
    let origin = origin_offset(recon, gt)?;
    let s = search_cells as i64;
    let shifts: Vec<(i64, i64)> = (-s..=s).flat_map(|dy| (-s..=s).map(move |dx| (dx, dy))).collect();
    let scored: Vec<Option<(usize, f64, Alignment)>> = shifts
        .par_iter()
        .map(|&(dx, dy)| {
            let (mut diffs, _) = differences(recon, gt, origin, dx, dy);
            if diffs.is_empty() {
                return None;
            }
            let dz = median(&mut diffs);
            let mut errors: Vec<f64> = diffs.iter().map(|d| (dz - d).abs()).collect();
            let complete = errors.iter().filter(|&&e| e < threshold).count();
            Some((complete, median(&mut errors), Alignment { dx, dy, dz }))
        })
        .collect();
    let mut best: Option<(usize, f64, Alignment)> = None;
    for cand in scored.into_iter().flatten() {
        let better = match &best {
            None => true,
            Some((c, me, a)) => {
                let (l1, best_l1) = (cand.2.dx.abs() + cand.2.dy.abs(), a.dx.abs() + a.dy.abs());
                cand.0 > *c || (cand.0 == *c && (cand.1 < *me || (cand.1 == *me && l1 < best_l1)))
            }
        };
        if better {
            best = Some(cand);
        }
    }
    best.map(|b| b.2).ok_or(EvalError::AlignmentFailure(search_cells))
}

/// CP and ME of `recon` against `gt`, optionally after [`refine_alignment`]
/// with the default search window.
pub fn compute_metrics(recon: &HeightGrid, gt: &HeightGrid, threshold: f64, align: bool) -> Result<EvalReport, EvalError> {
    if gt.valid_count() == 0 {
        return Err(EvalError::EmptyGroundTruth);
    }
    let alignment = if align {
        refine_alignment(recon, gt, DEFAULT_SEARCH_CELLS, threshold)?
    } else {
        Alignment::default()
    };
    evaluate_at(recon, gt, alignment, threshold)
}

/// Signed per-cell error `recon + dz - gt` on the ground-truth grid, for
/// visualization. Cells without both heights are empty.
pub fn error_grid(recon: &HeightGrid, gt: &HeightGrid, alignment: Alignment) -> Result<HeightGrid, EvalError> {
    let origin = origin_offset(recon, gt)?;
    let g = *gt.spec();
    let mut out = vec![f32::NAN; g.len()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let r = recon.get_signed(i as i64 - alignment.dx - origin.0, j as i64 - alignment.dy - origin.1);
            if let (Some(h), Some(r)) = (gt.get(i, j), r) {
                out[j * g.nx + i] = (f64::from(r) + alignment.dz - f64::from(h)) as f32;
            }
        }
    }
    HeightGrid::new(g, out)
}
