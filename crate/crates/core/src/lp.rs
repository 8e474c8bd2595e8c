//! Dense bounded-variable simplex for the boundary-fitting program.
//!
//! The program being solved is, for box-bounded coefficients `theta`:
//!
//! ```text
//! minimize  sum_p  c_p * max(0, 1 - sign_p * <theta, phi_p>)
//! ```
//!
//! which is the slack (hinge) form of "score points above/below +-1". Each
//! point contributes one constraint with its own slack, so the natural LP
//! has one row per point. We solve its dual instead, which has only
//! `K = dim(theta)` equality rows:
//!
//! ```text
//! min  -sum_p y_p + sum_k hi_k g+_k - sum_k lo_k g-_k
//! s.t. sum_p (sign_p * phi_p)_k y_p - g+_k + g-_k = 0      for k = 1..K
//!      0 <= y_p <= c_p,   g+_k, g-_k >= 0
//! ```
//!
//! The basis is a K-by-K matrix (K <= 13 for packs), so iterations stay
//! cheap no matter how many points enter the solve. At optimality the row
//! multipliers recover the primal coefficients (`theta = -pi`), and strong
//! duality gives the primal objective; both are cross-checked before the
//! solution is accepted.
//!
//! Points can be appended after a solve: new dual columns start at their
//! lower bound, so the existing basis stays feasible and the next solve
//! warm-starts from it. The refinement stage leans on this to activate
//! far-away normal points lazily.

#[derive(Clone, Debug)]
pub struct HingeSolution {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

const RC_TOL: f64 = 1e-9;
const RATIO_EPS: f64 = 1e-11;
const GAP_TOL: f64 = 1e-6;

/// One hinge-loss fitting problem over a fixed point set. `phi` is
/// row-major `n x k`.
#[derive(Debug)]
pub struct BoxedHingeProblem<'a> {
    pub phi: &'a [f64],
    pub sign: &'a [f64],
    pub penalty: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

pub fn solve_boxed_hinge(p: &BoxedHingeProblem) -> Result<HingeSolution, String> {
    let k = p.lower.len();
    let n = p.sign.len();
    if p.upper.len() != k || p.phi.len() != n * k || p.penalty.len() != n {
        return Err("inconsistent problem dimensions".into());
    }
    let mut solver = IncrementalHinge::new(p.lower.to_vec(), p.upper.to_vec())?;
    for j in 0..n {
        solver.push(&p.phi[j * k..(j + 1) * k], p.sign[j], p.penalty[j])?;
    }
    solver.solve()
}

/// Objective of the primal program at a given coefficient vector.
pub fn hinge_objective(p: &BoxedHingeProblem, theta: &[f64]) -> f64 {
    let k = theta.len();
    let mut total = 0.0;
    for j in 0..p.sign.len() {
        let row = &p.phi[j * k..(j + 1) * k];
        let mut h = 0.0;
        for z in 0..k {
            h += theta[z] * row[z];
        }
        total += p.penalty[j] * (1.0 - p.sign[j] * h).max(0.0);
    }
    total
}

/// A hinge program that accepts appended points between solves and
/// warm-starts each solve from the previous optimal basis.
///
/// Column layout: `0..k` are `g+`, `k..2k` are `g-`, and column `2k + p`
/// is the dual of point `p`, so appending points never renumbers existing
/// columns.
pub struct IncrementalHinge {
    k: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    phi: Vec<f64>,
    sign: Vec<f64>,
    penalty: Vec<f64>,
    cost: Vec<f64>,
    ub: Vec<f64>,
    basis: Vec<usize>,
    basic_pos: Vec<usize>, // column -> row + 1, 0 = nonbasic
    at_upper: Vec<bool>,
    x: Vec<f64>,
    pi: Vec<f64>,
    /// Cached `-sum(A_j ub_j)` over nonbasic-at-upper columns, maintained
    /// incrementally so a simplex iteration never rescans all columns.
    rhs: Vec<f64>,
}

impl IncrementalHinge {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, String> {
        let k = lower.len();
        if k == 0 {
            return Err("empty coefficient vector".into());
        }
        if upper.len() != k {
            return Err("bound vectors differ in length".into());
        }
        for z in 0..k {
            if !(lower[z] < upper[z]) {
                return Err(format!("bound {z} is not a proper interval"));
            }
        }
        // Costs and bounds for the g columns; initial basis is g+ (B = -I).
        let mut cost: Vec<f64> = upper.clone();
        cost.extend(lower.iter().map(|l| -l));
        let ub = vec![f64::INFINITY; 2 * k];
        let basis: Vec<usize> = (0..k).collect();
        let mut basic_pos = vec![0usize; 2 * k];
        for (row, &c) in basis.iter().enumerate() {
            basic_pos[c] = row + 1;
        }
        Ok(Self {
            k,
            lower,
            upper,
            phi: Vec::new(),
            sign: Vec::new(),
            penalty: Vec::new(),
            cost,
            ub,
            basis,
            basic_pos,
            at_upper: vec![false; 2 * k],
            x: vec![0.0; 2 * k],
            pi: vec![0.0; k],
            rhs: vec![0.0; k],
        })
    }

    pub fn num_points(&self) -> usize {
        self.sign.len()
    }

    /// Appends one point; the current basis remains feasible because the
    /// new dual column enters at its lower bound of zero. The sign is
    /// folded into the stored feature row.
    pub fn push(&mut self, phi: &[f64], sign: f64, penalty: f64) -> Result<(), String> {
        if phi.len() != self.k {
            return Err("point dimension mismatch".into());
        }
        if !(penalty > 0.0) || !penalty.is_finite() {
            return Err("penalties must be positive and finite".into());
        }
        self.phi.extend(phi.iter().map(|v| v * sign));
        self.sign.push(sign);
        self.penalty.push(penalty);
        self.cost.push(-1.0);
        self.ub.push(penalty);
        self.basic_pos.push(0);
        self.at_upper.push(false);
        self.x.push(0.0);
        Ok(())
    }

    fn ncols(&self) -> usize {
        2 * self.k + self.sign.len()
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        out.fill(0.0);
        if j < self.k {
            out[j] = -1.0;
        } else if j < 2 * self.k {
            out[j - self.k] = 1.0;
        } else {
            let p = j - 2 * self.k;
            out.copy_from_slice(&self.phi[p * self.k..(p + 1) * self.k]);
        }
    }

    fn dot_column_pi(&self, j: usize) -> f64 {
        if j < self.k {
            -self.pi[j]
        } else if j < 2 * self.k {
            self.pi[j - self.k]
        } else {
            let p = j - 2 * self.k;
            let row = &self.phi[p * self.k..(p + 1) * self.k];
            let mut acc = 0.0;
            for z in 0..self.k {
                acc += self.pi[z] * row[z];
            }
            acc
        }
    }

    fn factorize(&self) -> Result<Lu, String> {
        let k = self.k;
        let mut m = vec![0.0; k * k];
        let mut col = vec![0.0; k];
        for (row, &c) in self.basis.iter().enumerate() {
            self.column(c, &mut col);
            for z in 0..k {
                m[z * k + row] = col[z];
            }
        }
        Lu::factor(m, k).ok_or_else(|| "singular basis".to_string())
    }

    /// Recomputes the basic values from the nonbasic bounds: with b = 0,
    /// x_B = -B^-1 (sum of nonbasic-at-upper columns times their bound).
    /// Rebuilds the cached right-hand side `-sum(A_j ub_j)` over the
    /// nonbasic-at-upper columns from scratch.
    fn rebuild_rhs(&mut self) {
        let mut rhs = vec![0.0; self.k];
        let mut col = vec![0.0; self.k];
        for j in 2 * self.k..self.ncols() {
            if self.basic_pos[j] == 0 && self.at_upper[j] {
                self.column(j, &mut col);
                let v = self.ub[j];
                for z in 0..self.k {
                    rhs[z] -= col[z] * v;
                }
            }
        }
        self.rhs = rhs;
    }

    /// Adds `scale * ub_j * A_j` to the cached right-hand side; called when
    /// column `j` enters (+1) or leaves (-1) the nonbasic-at-upper state.
    fn bump_rhs(&mut self, j: usize, scale: f64) {
        let mut col = vec![0.0; self.k];
        self.column(j, &mut col);
        let v = scale * self.ub[j];
        for z in 0..self.k {
            self.rhs[z] -= col[z] * v;
        }
    }

    fn refresh_basics(&mut self, lu: &Lu) {
        let mut rhs = self.rhs.clone();
        lu.solve(&mut rhs);
        for (row, &c) in self.basis.iter().enumerate() {
            self.x[c] = rhs[row];
        }
    }

    fn compute_pi(&mut self, lu: &Lu) {
        let mut cb: Vec<f64> = self.basis.iter().map(|&c| self.cost[c]).collect();
        lu.solve_transposed(&mut cb);
        self.pi.copy_from_slice(&cb);
    }

    /// Ratio test for entering column `q` moving from its current bound:
    /// returns the step and the blocking basic row, if any. `d` solves
    /// `B d = A_q`.
    fn ratio_test(&self, q: usize, step_sign: f64, d: &[f64]) -> (f64, Option<(usize, bool)>) {
        let mut t_max = self.ub[q]; // lower bounds are all zero
        let mut blocking: Option<(usize, bool)> = None; // (row, leaves_at_upper)
        for (row, &c) in self.basis.iter().enumerate() {
            let delta = -step_sign * d[row];
            if delta > RATIO_EPS {
                if self.ub[c].is_finite() {
                    let t = (self.ub[c] - self.x[c]) / delta;
                    if t < t_max - RATIO_EPS {
                        t_max = t;
                        blocking = Some((row, true));
                    }
                }
            } else if delta < -RATIO_EPS {
                let t = -self.x[c] / delta; // distance to lower bound 0
                if t < t_max - RATIO_EPS {
                    t_max = t;
                    blocking = Some((row, false));
                }
            }
        }
        (t_max, blocking)
    }

    fn apply_step(&mut self, q: usize, from_lower: bool, d: &[f64], t: f64, blocking: Option<(usize, bool)>) {
        let step_sign = if from_lower { 1.0 } else { -1.0 };
        for (row, &c) in self.basis.iter().enumerate() {
            self.x[c] -= step_sign * t * d[row];
        }
        if !from_lower {
            // q leaves the nonbasic-at-upper set whatever happens next.
            self.bump_rhs(q, -1.0);
        }
        match blocking {
            None => {
                // Bound flip: q runs to its opposite bound.
                self.at_upper[q] = from_lower;
                self.x[q] = if from_lower { self.ub[q] } else { 0.0 };
                if from_lower {
                    self.bump_rhs(q, 1.0);
                }
            }
            Some((row, leaves_at_upper)) => {
                let leaving = self.basis[row];
                self.x[leaving] = if leaves_at_upper { self.ub[leaving] } else { 0.0 };
                self.at_upper[leaving] = leaves_at_upper;
                self.basic_pos[leaving] = 0;
                if leaves_at_upper {
                    self.bump_rhs(leaving, 1.0);
                }
                self.basis[row] = q;
                self.basic_pos[q] = row + 1;
                self.at_upper[q] = false;
                self.x[q] = if from_lower { t } else { self.ub[q] - t };
            }
        }
    }

    /// Runs the simplex from the current state to optimality.
    ///
    /// Each pass prices every nonbasic column once, applies *all* pure
    /// bound flips it finds (flips leave the basis and the multipliers
    /// untouched, so one pass can absorb thousands of newly appended
    /// columns), and then performs one basis exchange.
    pub fn solve(&mut self) -> Result<HingeSolution, String> {
        if self.sign.is_empty() {
            return Err("no points to fit".into());
        }
        let max_iter = 5000 + 2 * self.ncols();
        let bland_after = 500 + self.ncols() / 2;
        let mut col = vec![0.0; self.k];
        let mut iterations = 0usize;
        self.rebuild_rhs();
        loop {
            if iterations > max_iter {
                return Err(format!("iteration cap {max_iter} exceeded"));
            }
            iterations += 1;
            if iterations % 512 == 0 {
                self.rebuild_rhs(); // chase accumulated roundoff
            }
            let lu = self.factorize()?;
            self.refresh_basics(&lu);
            self.compute_pi(&lu);

            let bland = iterations > bland_after;
            let mut eligible: Vec<(f64, usize, bool)> = Vec::new(); // (score, col, from_lower)
            for j in 0..self.ncols() {
                if self.basic_pos[j] != 0 {
                    continue;
                }
                let rc = self.cost[j] - self.dot_column_pi(j);
                let tol = RC_TOL * (1.0 + self.cost[j].abs());
                let (ok, from_lower, score) = if self.at_upper[j] {
                    (rc > tol, false, rc)
                } else {
                    (rc < -tol, true, -rc)
                };
                if ok {
                    eligible.push((score, j, from_lower));
                    if bland {
                        break; // first eligible index only
                    }
                }
            }
            if eligible.is_empty() {
                return self.extract(iterations);
            }
            eligible.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));

            // Flip sweep, remembering the best column that needs a pivot.
            let mut pivot: Option<(usize, bool)> = None;
            for &(_, j, from_lower) in &eligible {
                self.column(j, &mut col);
                let mut d = col.clone();
                lu.solve(&mut d);
                let step_sign = if from_lower { 1.0 } else { -1.0 };
                let (t, blocking) = self.ratio_test(j, step_sign, &d);
                if blocking.is_none() {
                    if t.is_infinite() {
                        return Err("dual unbounded (primal infeasible)".into());
                    }
                    self.apply_step(j, from_lower, &d, t, None);
                } else if pivot.is_none() {
                    pivot = Some((j, from_lower));
                }
            }
            if let Some((q, from_lower)) = pivot {
                // Re-test against the post-flip basic values.
                self.column(q, &mut col);
                let mut d = col.clone();
                lu.solve(&mut d);
                let step_sign = if from_lower { 1.0 } else { -1.0 };
                let (t, blocking) = self.ratio_test(q, step_sign, &d);
                self.apply_step(q, from_lower, &d, t.max(0.0), blocking);
            }
        }
    }

    /// Primal objective at a coefficient vector, over the points pushed so
    /// far. The stored rows already carry the point's sign.
    pub fn objective_at(&self, theta: &[f64]) -> f64 {
        let mut total = 0.0;
        for p in 0..self.sign.len() {
            let row = &self.phi[p * self.k..(p + 1) * self.k];
            let mut sh = 0.0;
            for z in 0..self.k {
                sh += theta[z] * row[z];
            }
            total += self.penalty[p] * (1.0 - sh).max(0.0);
        }
        total
    }

    fn extract(&self, iterations: usize) -> Result<HingeSolution, String> {
        // theta = -pi, clamped into the box against roundoff.
        let theta: Vec<f64> = (0..self.k)
            .map(|z| (-self.pi[z]).clamp(self.lower[z], self.upper[z]))
            .collect();
        let primal = self.objective_at(&theta);
        let dual: f64 = -(0..self.ncols())
            .map(|j| self.cost[j] * self.x[j])
            .sum::<f64>();
        let scale = 1.0 + primal.abs().max(dual.abs());
        if (primal - dual).abs() > GAP_TOL * scale {
            return Err(format!(
                "duality gap {:.3e} above tolerance (primal {primal:.6e}, dual {dual:.6e})",
                (primal - dual).abs()
            ));
        }
        Ok(HingeSolution {
            theta,
            objective: primal,
            iterations,
        })
    }
}

/// Dense LU with partial pivoting, sized for the tiny bases used here.
struct Lu {
    m: Vec<f64>,
    perm: Vec<usize>,
    k: usize,
}

impl Lu {
    fn factor(mut m: Vec<f64>, k: usize) -> Option<Self> {
        let mut perm: Vec<usize> = (0..k).collect();
        for col in 0..k {
            let mut pivot = col;
            let mut best = m[perm[col] * k + col].abs();
            for r in col + 1..k {
                let v = m[perm[r] * k + col].abs();
                if v > best {
                    best = v;
                    pivot = r;
                }
            }
            if best < 1e-12 {
                return None;
            }
            perm.swap(col, pivot);
            let prow = perm[col];
            let pv = m[prow * k + col];
            for r in col + 1..k {
                let row = perm[r];
                let factor = m[row * k + col] / pv;
                m[row * k + col] = factor;
                for c in col + 1..k {
                    m[row * k + c] -= factor * m[prow * k + c];
                }
            }
        }
        Some(Self { m, perm, k })
    }

    /// Solves `A x = b` in place.
    fn solve(&self, b: &mut [f64]) {
        let k = self.k;
        let mut y = vec![0.0; k];
        for i in 0..k {
            let mut acc = b[self.perm[i]];
            for j in 0..i {
                acc -= self.m[self.perm[i] * k + j] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..k).rev() {
            let mut acc = y[i];
            for j in i + 1..k {
                acc -= self.m[self.perm[i] * k + j] * b[j];
            }
            b[i] = acc / self.m[self.perm[i] * k + i];
        }
    }

    /// Solves `A^T x = b` in place.
    fn solve_transposed(&self, b: &mut [f64]) {
        let k = self.k;
        // A^T = U^T L^T P; forward solve U^T z = b, then L^T v = z, x = P^T v.
        let mut z = vec![0.0; k];
        for i in 0..k {
            let mut acc = b[i];
            for j in 0..i {
                acc -= self.m[self.perm[j] * k + i] * z[j];
            }
            z[i] = acc / self.m[self.perm[i] * k + i];
        }
        let mut v = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = z[i];
            for j in i + 1..k {
                acc -= self.m[self.perm[j] * k + i] * v[j];
            }
            v[i] = acc;
        }
        for i in 0..k {
            b[self.perm[i]] = v[i];
        }
    }
}
