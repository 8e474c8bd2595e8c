//! Turns hyper-rectangles into axis-aligned ellipsoid packs.
//!
//! Each rectangle is refined by solving a slack-penalized discrimination
//! program over a grid of penalty pairs: anomalies inside the rectangle and
//! in its vicinity should score at least +1, normal points at most -1. With
//! the quadratic coefficients restricted to a diagonal (every `u_z <= -1`)
//! the program is linear in the coefficients and is handed to the LP solver.
//! Survivors are reduced to their (mass, impurity) Pareto frontier.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::density::{grid_spacing, Interval};
use crate::error::{Error, Result};
use crate::lattice::HyperRectangle;
use crate::lp::{solve_boxed_hinge, BoxedHingeProblem, IncrementalHinge};

/// Coefficient magnitudes are capped to keep the program bounded when one
/// side of the data is empty; any zero-slack solution is acceptable there.
pub const COEFFICIENT_BOUND: f64 = 1e6;

/// Coefficients of the discriminating function
/// `h(x) = sum_z quad_z x_z^2 + linear_z x_z + offset` over a feature subspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryParams {
    /// Ambient feature indices, strictly increasing.
    pub subspace: Vec<usize>,
    /// Diagonal quadratic coefficients; every entry is at most -1.
    pub quad: Vec<f64>,
    pub linear: Vec<f64>,
    pub offset: f64,
}

impl BoundaryParams {
    /// Evaluates `h` at a point given by its subspace coordinates.
    pub fn eval(&self, coords: &[f64]) -> f64 {
        debug_assert_eq!(coords.len(), self.quad.len());
        let mut h = self.offset;
        for z in 0..coords.len() {
            h += self.quad[z] * coords[z] * coords[z] + self.linear[z] * coords[z];
        }
        h
    }

    /// Evaluates `h` at a full-dimensional point by projecting onto the
    /// subspace.
    pub fn eval_full(&self, point: ndarray::ArrayView1<'_, f64>) -> f64 {
        let mut h = self.offset;
        for (z, &f) in self.subspace.iter().enumerate() {
            let x = point[f];
            h += self.quad[z] * x * x + self.linear[z] * x;
        }
        h
    }
}

/// An axis-aligned hyper-ellipsoid enclosing a group of anomalies.
#[derive(Clone, Debug)]
pub struct Pack {
    pub params: BoundaryParams,
    pub center: Vec<f64>,
    /// Diagonal of the inverse shape matrix; all entries positive.
    pub inv_shape: Vec<f64>,
    pub radii: Vec<f64>,
    /// IDs of anomalies with `h(x) >= 0`, over the full dataset.
    pub covered_anomalies: Vec<usize>,
    /// IDs of normal points with `h(x) >= 0`, over the full dataset.
    pub enclosed_normals: Vec<usize>,
    pub provenance: Provenance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub rectangle: usize,
    pub alpha: f64,
    pub lambda: f64,
}

impl Pack {
    pub fn mass(&self) -> usize {
        self.covered_anomalies.len()
    }

    pub fn impurity(&self) -> usize {
        self.enclosed_normals.len()
    }

    pub fn subspace_dim(&self) -> usize {
        self.params.subspace.len()
    }

    /// Membership test: inside or on the boundary.
    pub fn contains(&self, point: ndarray::ArrayView1<'_, f64>) -> bool {
        self.params.eval_full(point) >= 0.0
    }

    /// Recomputes the covered/enclosed ID sets against the full dataset.
    pub fn recount(&mut self, dataset: &LabeledDataset) {
        self.covered_anomalies.clear();
        self.enclosed_normals.clear();
        for id in 0..dataset.num_points() {
            if self.contains(dataset.point(id)) {
                if dataset.is_anomaly(id) {
                    self.covered_anomalies.push(id);
                } else {
                    self.enclosed_normals.push(id);
                }
            }
        }
    }
}

/// Point IDs split by the rectangle and its margin-expanded box.
#[derive(Clone, Debug, Default)]
pub struct Vicinity {
    /// Anomalies enclosed by the rectangle itself.
    pub inside_anomalies: Vec<usize>,
    /// Anomalies in the expanded box but outside the rectangle.
    pub nearby_anomalies: Vec<usize>,
    /// All normal points in the expanded box.
    pub nearby_normals: Vec<usize>,
}

/// Partitions points around a rectangle. Every side is expanded by
/// `margin * width` in both directions (clipped to [0, 1]); points outside
/// the expanded box are dropped from the solve entirely.
pub fn filter_vicinity(
    rect: &HyperRectangle,
    dataset: &LabeledDataset,
    margin: f64,
) -> Vicinity {
    let expanded: Vec<(usize, Interval)> = rect
        .sides()
        .iter()
        .map(|&(f, iv)| {
            let pad = margin * iv.width();
            (
                f,
                Interval::new((iv.lb - pad).max(0.0), (iv.ub + pad).min(1.0)),
            )
        })
        .collect();
    let mut out = Vicinity::default();
    'point: for id in 0..dataset.num_points() {
        let row = dataset.point(id);
        for &(f, iv) in &expanded {
            if !iv.contains(row[f]) {
                continue 'point;
            }
        }
        if dataset.is_anomaly(id) {
            if rect.contains(row) {
                out.inside_anomalies.push(id);
            } else {
                out.nearby_anomalies.push(id);
            }
        } else {
            out.nearby_normals.push(id);
        }
    }
    out
}

/// A solved boundary along with the per-point slack values.
#[derive(Clone, Debug)]
pub struct FittedBoundary {
    pub params: BoundaryParams,
    pub slack_inside: Vec<f64>,
    pub slack_nearby: Vec<f64>,
    pub slack_normals: Vec<f64>,
    pub objective: f64,
    /// True when a coefficient landed on the +-1e6 safety bound.
    pub coefficient_bound_hit: bool,
}

/// Solves the discrimination program for one penalty pair. `inside`,
/// `nearby` and `normals` hold subspace coordinates; inside points carry
/// penalty 1, nearby anomalies `alpha`, normal points `lambda`.
pub fn fit_boundary(
    subspace: &[usize],
    inside: &[Vec<f64>],
    nearby: &[Vec<f64>],
    normals: &[Vec<f64>],
    alpha: f64,
    lambda: f64,
) -> Result<FittedBoundary> {
    if inside.is_empty() {
        return Err(Error::input("no anomalies inside the rectangle"));
    }
    if !(alpha > 0.0) || !(lambda > 0.0) {
        return Err(Error::input("penalties must be positive"));
    }
    let d = subspace.len();
    let k = 2 * d + 1;

    // Merge coinciding points on the same side of the boundary; the LP is
    // identical with their penalties summed.
    let mut merged: std::collections::HashMap<(Vec<u64>, bool), f64> =
        std::collections::HashMap::new();
    let mut order: Vec<(Vec<u64>, bool)> = Vec::new();
    let mut push = |coords: &[f64], anomalous: bool, penalty: f64| {
        let key = (
            coords.iter().map(|v| v.to_bits()).collect::<Vec<u64>>(),
            anomalous,
        );
        match merged.entry(key.clone()) {
            std::collections::hash_map::Entry::Occupied(mut e) => *e.get_mut() += penalty,
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(penalty);
                order.push(key);
            }
        }
    };
    for p in inside {
        push(p, true, 1.0);
    }
    for p in nearby {
        push(p, true, alpha);
    }
    for p in normals {
        push(p, false, lambda);
    }

    let n = order.len();
    let mut phi = Vec::with_capacity(n * k);
    let mut sign = Vec::with_capacity(n);
    let mut penalty = Vec::with_capacity(n);
    for key in &order {
        let coords: Vec<f64> = key.0.iter().map(|&b| f64::from_bits(b)).collect();
        for &c in &coords {
            phi.push(c * c);
        }
        for &c in &coords {
            phi.push(c);
        }
        phi.push(1.0);
        sign.push(if key.1 { 1.0 } else { -1.0 });
        penalty.push(merged[key]);
    }
    let mut lower = vec![-COEFFICIENT_BOUND; k];
    let mut upper = vec![COEFFICIENT_BOUND; k];
    for z in 0..d {
        upper[z] = -1.0;
    }
    let _ = &mut lower;

    let sol = solve_boxed_hinge(&BoxedHingeProblem {
        phi: &phi,
        sign: &sign,
        penalty: &penalty,
        lower: &lower,
        upper: &upper,
    })
    .map_err(|detail| Error::Solver {
        alpha,
        lambda,
        detail,
    })?;

    let params = BoundaryParams {
        subspace: subspace.to_vec(),
        quad: sol.theta[..d].to_vec(),
        linear: sol.theta[d..2 * d].to_vec(),
        offset: sol.theta[k - 1],
    };
    let bound_hit = sol
        .theta
        .iter()
        .any(|t| t.abs() >= COEFFICIENT_BOUND * (1.0 - 1e-9));
    if bound_hit {
        log::debug!("boundary coefficient at safety bound (alpha={alpha:.0e}, lambda={lambda:.0e})");
    }
    let slack_pos = |p: &Vec<f64>| (1.0 - params.eval(p)).max(0.0);
    let slack_neg = |p: &Vec<f64>| (1.0 + params.eval(p)).max(0.0);
    Ok(FittedBoundary {
        slack_inside: inside.iter().map(slack_pos).collect(),
        slack_nearby: nearby.iter().map(slack_pos).collect(),
        slack_normals: normals.iter().map(slack_neg).collect(),
        objective: sol.objective,
        coefficient_bound_hit: bound_hit,
        params,
    })
}

/// Solves the boundary program against every normal point, activating
/// normals lazily: the LP starts with the anomalies alone, and any normal
/// with nonzero hinge at the current solution (`h > -1`) is appended for a
/// warm-started re-solve. When no inactive normal violates, the solution
/// is optimal for the full program, since the skipped terms contribute
/// nothing at it.
fn fit_with_lazy_normals(
    subspace: &[usize],
    inside: &[Vec<f64>],
    nearby: &[Vec<f64>],
    all_normals: &[Vec<f64>],
    alpha: f64,
    lambda: f64,
) -> Result<FittedBoundary> {
    if inside.is_empty() {
        return Err(Error::input("no anomalies inside the rectangle"));
    }
    let d = subspace.len();
    let k = 2 * d + 1;
    let mut lower = vec![-COEFFICIENT_BOUND; k];
    let mut upper = vec![COEFFICIENT_BOUND; k];
    for z in 0..d {
        upper[z] = -1.0;
    }
    let _ = &mut lower;
    let to_solver = |e: String| Error::Solver {
        alpha,
        lambda,
        detail: e,
    };

    let mut solver = IncrementalHinge::new(lower, upper).map_err(to_solver)?;
    let mut phi = vec![0.0; k];
    let fill_phi = |coords: &[f64], phi: &mut [f64]| {
        for z in 0..coords.len() {
            phi[z] = coords[z] * coords[z];
            phi[coords.len() + z] = coords[z];
        }
        phi[2 * coords.len()] = 1.0;
    };
    for (points, penalty) in [(inside, 1.0), (nearby, alpha)] {
        for p in points {
            fill_phi(p, &mut phi);
            solver.push(&phi, 1.0, penalty).map_err(to_solver)?;
        }
    }

    let mut active = vec![false; all_normals.len()];
    let mut rounds = 0usize;
    let mut lp_iterations = 0usize;
    let params = loop {
        rounds += 1;
        let sol = solver.solve().map_err(to_solver)?;
        lp_iterations += sol.iterations;
        let params = BoundaryParams {
            subspace: subspace.to_vec(),
            quad: sol.theta[..d].to_vec(),
            linear: sol.theta[d..2 * d].to_vec(),
            offset: sol.theta[k - 1],
        };
        let mut grew = false;
        for (i, point) in all_normals.iter().enumerate() {
            if !active[i] && params.eval(point) > -1.0 + 1e-9 {
                active[i] = true;
                fill_phi(point, &mut phi);
                solver.push(&phi, -1.0, lambda).map_err(to_solver)?;
                grew = true;
            }
        }
        if !grew {
            break params;
        }
    };
    log::trace!(
        "cell a={alpha:.0e} l={lambda:.0e}: {rounds} rounds, {} active of {}, {lp_iterations} lp iterations",
        active.iter().filter(|&&a| a).count(),
        all_normals.len(),
    );

    let bound_hit = params
        .quad
        .iter()
        .chain(&params.linear)
        .chain(std::iter::once(&params.offset))
        .any(|t| t.abs() >= COEFFICIENT_BOUND * (1.0 - 1e-9));
    if bound_hit {
        log::debug!("boundary coefficient at safety bound (alpha={alpha:.0e}, lambda={lambda:.0e})");
    }
    let slack_pos = |p: &Vec<f64>| (1.0 - params.eval(p)).max(0.0);
    let slack_neg = |p: &Vec<f64>| (1.0 + params.eval(p)).max(0.0);
    Ok(FittedBoundary {
        slack_inside: inside.iter().map(slack_pos).collect(),
        slack_nearby: nearby.iter().map(slack_pos).collect(),
        slack_normals: all_normals.iter().map(slack_neg).collect(),
        objective: solver.objective_at(
            &params
                .quad
                .iter()
                .chain(&params.linear)
                .chain(std::iter::once(&params.offset))
                .cloned()
                .collect::<Vec<f64>>(),
        ),
        coefficient_bound_hit: bound_hit,
        params,
    })
}

/// Center, inverse shape diagonal, and radii of the ellipsoid `h(x) >= 0`.
/// Fails when the positive region is empty.
pub fn to_ellipsoid(params: &BoundaryParams) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let d = params.quad.len();
    let mut center = Vec::with_capacity(d);
    for z in 0..d {
        debug_assert!(params.quad[z] <= -1.0 + 1e-12);
        center.push(-params.linear[z] / (2.0 * params.quad[z]));
    }
    // h(x) = sum_z quad_z (x_z - c_z)^2 + scale; positive interior needs scale > 0.
    let scale = params.offset
        - params
            .quad
            .iter()
            .zip(&center)
            .map(|(&u, &c)| u * c * c)
            .sum::<f64>();
    if !(scale > 0.0) {
        return Err(Error::EmptyEllipsoid { scale });
    }
    let inv_shape: Vec<f64> = params.quad.iter().map(|&u| -u / scale).collect();
    let radii: Vec<f64> = params.quad.iter().map(|&u| (scale / -u).sqrt()).collect();
    Ok((center, inv_shape, radii))
}

/// Per-rectangle refinement accounting.
#[derive(Clone, Copy, Debug, Default)]
pub struct RefineStats {
    pub cells: usize,
    pub solver_failures: usize,
    pub empty_ellipsoids: usize,
    /// Cells whose refined pack enclosed more normals than the purity cap.
    pub impure: usize,
}

/// Refines one rectangle over the full penalty grid and returns the
/// (mass, impurity) Pareto frontier of the surviving packs. Coverage is
/// recomputed against the whole dataset, not just the vicinity.
///
/// Anomalies outside the expanded box stay out of the solve (the boundary
/// should not grow to chase them), but every normal point participates:
/// dropping far normals would let small-lambda cells grow boundaries far
/// beyond the rectangle and cover the dataset wholesale.
pub fn refine_rectangle(
    rect_index: usize,
    rect: &HyperRectangle,
    dataset: &LabeledDataset,
    alphas: &[f64],
    lambdas: &[f64],
    margin: f64,
) -> Vec<Pack> {
    refine_rectangle_with_stats(rect_index, rect, dataset, alphas, lambdas, margin, usize::MAX).0
}

/// Same as [`refine_rectangle`], also reporting how many grid cells failed
/// in the solver versus producing an empty or over-impure ellipsoid.
/// A refined pack is admitted only while its exceptions stay in check:
/// impurity may not exceed `max(purity_cap, mass)`, so a candidate is
/// either within the lattice purity allowance or at least half anomalous.
pub fn refine_rectangle_with_stats(
    rect_index: usize,
    rect: &HyperRectangle,
    dataset: &LabeledDataset,
    alphas: &[f64],
    lambdas: &[f64],
    margin: f64,
    purity_cap: usize,
) -> (Vec<Pack>, RefineStats) {
    let subspace: Vec<usize> = rect.sides().iter().map(|s| s.0).collect();
    let vicinity = filter_vicinity(rect, dataset, margin);
    let project = |id: &usize| -> Vec<f64> {
        subspace.iter().map(|&f| dataset.point(*id)[f]).collect()
    };
    let inside: Vec<Vec<f64>> = vicinity.inside_anomalies.iter().map(project).collect();
    let nearby: Vec<Vec<f64>> = vicinity.nearby_anomalies.iter().map(project).collect();
    let all_normals: Vec<Vec<f64>> = dataset.normal_ids().iter().map(project).collect();

    let cells: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| lambdas.iter().map(move |&l| (a, l)))
        .collect();
    enum Cell {
        Pack(Pack),
        SolverFailure,
        Empty,
        Impure,
    }
    let candidates: Vec<Cell> = cells
        .par_iter()
        .map(|&(alpha, lambda)| {
            let fitted = match fit_with_lazy_normals(
                &subspace,
                &inside,
                &nearby,
                &all_normals,
                alpha,
                lambda,
            ) {
                Ok(f) => f,
                Err(e) => {
                    log::debug!("rectangle {rect_index}: {e}");
                    return Cell::SolverFailure;
                }
            };
            let (center, inv_shape, radii) = match to_ellipsoid(&fitted.params) {
                Ok(e) => e,
                Err(_) => return Cell::Empty,
            };
            let mut pack = Pack {
                params: fitted.params,
                center,
                inv_shape,
                radii,
                covered_anomalies: Vec::new(),
                enclosed_normals: Vec::new(),
                provenance: Provenance {
                    rectangle: rect_index,
                    alpha,
                    lambda,
                },
            };
            pack.recount(dataset);
            if pack.impurity() > purity_cap.max(pack.mass()) {
                return Cell::Impure;
            }
            Cell::Pack(pack)
        })
        .collect();
    let mut stats = RefineStats {
        cells: cells.len(),
        ..Default::default()
    };
    let mut survivors = Vec::new();
    for c in candidates {
        match c {
            Cell::Pack(pack) => survivors.push(pack),
            Cell::SolverFailure => stats.solver_failures += 1,
            Cell::Empty => stats.empty_ellipsoids += 1,
            Cell::Impure => stats.impure += 1,
        }
    }
    if survivors.is_empty() {
        log::debug!("rectangle {rect_index}: no grid cell produced a pack");
    }
    (pareto_frontier(survivors), stats)
}

/// Drops every pack strictly dominated in (mass, impurity); exact ties keep
/// the earliest pack in provenance order.
pub fn pareto_frontier(packs: Vec<Pack>) -> Vec<Pack> {
    let stats: Vec<(usize, usize)> = packs.iter().map(|p| (p.mass(), p.impurity())).collect();
    packs
        .into_iter()
        .enumerate()
        .filter(|(i, _)| {
            let (mass, imp) = stats[*i];
            !stats.iter().enumerate().any(|(j, &(m2, i2))| {
                if j == *i {
                    return false;
                }
                let dominates =
                    (m2 >= mass && i2 <= imp) && (m2 > mass || i2 < imp);
                let earlier_tie = m2 == mass && i2 == imp && j < *i;
                dominates || earlier_tie
            })
        })
        .map(|(_, p)| p)
        .collect()
}

/// One per-feature interval rule of a pack's signature.
#[derive(Clone, Debug, Serialize)]
pub struct FeatureRule {
    pub feature_index: usize,
    pub feature: String,
    pub center: f64,
    pub radius: f64,
    /// center +- radius, clipped to the normalized range.
    pub interval: Interval,
    /// The same interval mapped back to raw units.
    pub raw_interval: (f64, f64),
    /// Radius below one grid step: the rule pins a single value.
    pub degenerate: bool,
}

/// The conjunction of feature rules describing one pack.
#[derive(Clone, Debug, Serialize)]
pub struct Signature {
    pub rules: Vec<FeatureRule>,
    pub mass: usize,
    pub impurity: usize,
}

/// Renders a pack as interval rules, both normalized and in raw units.
pub fn feature_rules(pack: &Pack, dataset: &LabeledDataset) -> Signature {
    let record = dataset
        .normalization_record()
        .expect("feature rules need a normalized dataset");
    let names = dataset.feature_names();
    let rules = pack
        .params
        .subspace
        .iter()
        .enumerate()
        .map(|(z, &feature)| {
            let center = pack.center[z];
            let radius = pack.radii[z];
            let interval =
                Interval::new((center - radius).max(0.0), (center + radius).min(1.0));
            let degenerate = radius < grid_spacing();
            if degenerate {
                log::warn!(
                    "degenerate rule on feature {}: radius {radius:.3e} below grid resolution",
                    names[feature]
                );
            }
            let scale = record[feature];
            FeatureRule {
                feature_index: feature,
                feature: names[feature].clone(),
                center,
                radius,
                interval,
                raw_interval: (
                    scale.denormalize(interval.lb),
                    scale.denormalize(interval.ub),
                ),
                degenerate,
            }
        })
        .collect();
    Signature {
        rules,
        mass: pack.mass(),
        impurity: pack.impurity(),
    }
}
