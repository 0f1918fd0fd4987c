//! Pareto-front quality indicators: hypervolume and covered size of space.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("point {0:?} lies beyond the reference point")]
    PointBeyondReference(Vec<u64>),
    #[error("front points must share the reference point's dimension")]
    DimensionMismatch,
    #[error("CSS is undefined for an empty Y front")]
    EmptyY,
}

fn check_dims(points: &[Vec<f64>], reference: &[f64]) -> Result<(), MetricsError> {
    if points.iter().any(|p| p.len() != reference.len()) {
        return Err(MetricsError::DimensionMismatch);
    }
    Ok(())
}

/// Lebesgue measure of the union of boxes `[point, reference]` under
/// minimization. Dominated points contribute nothing; higher is better.
///
/// Dimension-sweep recursion over exclusive volumes: points are processed in
/// order of their first coordinate, each contributing the volume of its box
/// minus the part covered by the boxes of later points clipped to it.
pub fn hypervolume(front: &[Vec<f64>], reference: &[f64]) -> Result<f64, MetricsError> {
    check_dims(front, reference)?;
    for p in front {
        if p.iter().zip(reference).any(|(&v, &r)| v > r) {
            return Err(MetricsError::PointBeyondReference(
                p.iter().map(|&v| v as u64).collect(),
            ));
        }
    }
    Ok(hv_recursive(&mut front.to_vec(), reference))
}

fn box_volume(p: &[f64], reference: &[f64]) -> f64 {
    p.iter()
        .zip(reference)
        .map(|(&v, &r)| (r - v).max(0.0))
        .product()
}

fn clip_max(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| x.max(y)).collect()
}

fn hv_recursive(points: &mut Vec<Vec<f64>>, reference: &[f64]) -> f64 {
    match points.len() {
        0 => 0.0,
        1 => box_volume(&points[0], reference),
        2 => {
            box_volume(&points[0], reference) + box_volume(&points[1], reference)
                - box_volume(&clip_max(&points[0], &points[1]), reference)
        }
        _ => {
            points.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
            (0..points.len())
                .map(|i| exclusive_volume(i, points, reference))
                .sum()
        }
    }
}

fn exclusive_volume(i: usize, points: &[Vec<f64>], reference: &[f64]) -> f64 {
    let p = &points[i];
    // Later points clipped up to p; dominated clips collapse to p's corner.
    let mut clipped: Vec<Vec<f64>> = points[i + 1..].iter().map(|q| clip_max(p, q)).collect();
    // Keep only mutually non-dominated clips; dominated ones add nothing.
    clipped = pareto_filter(clipped);
    box_volume(p, reference) - hv_recursive(&mut clipped, reference)
}

fn weakly_dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(&x, &y)| x <= y)
}

fn pareto_filter(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if kept.iter().any(|k| weakly_dominates(k, &p)) {
            continue;
        }
        kept.retain(|k| !weakly_dominates(&p, k));
        kept.push(p);
    }
    kept
}

/// Covered size of space: the fraction of `y` weakly dominated
/// (componentwise <=) by at least one point of `x`.
pub fn css(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64, MetricsError> {
    if y.is_empty() {
        return Err(MetricsError::EmptyY);
    }
    if let Some(first) = x.first() {
        if x.iter().chain(y.iter()).any(|p| p.len() != first.len()) {
            return Err(MetricsError::DimensionMismatch);
        }
    }
    let covered = y
        .iter()
        .filter(|p| x.iter().any(|q| weakly_dominates(q, p)))
        .count();
    Ok(covered as f64 / y.len() as f64)
}

/// Componentwise maximum over all fronts, scaled by `factor` (> 1 keeps
/// every point strictly inside the reference box).
pub fn reference_point(fronts: &[&[Vec<f64>]], factor: f64) -> Option<Vec<f64>> {
    let dim = fronts.iter().flat_map(|f| f.iter()).next()?.len();
    let mut r = vec![f64::MIN; dim];
    for front in fronts {
        for p in front.iter() {
            for (slot, &v) in r.iter_mut().zip(p) {
                *slot = slot.max(v);
            }
        }
    }
    Some(r.into_iter().map(|v| v * factor).collect())
}
